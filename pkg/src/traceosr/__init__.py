"""Open-set recognition for DRAM workload command traces."""

from .bundle import Bundle, FeatureSet, load_bundle, load_features, save_bundle, save_features
from .dataset import SplitIndices, SplitSpec, split
from .detectors import (
    ClassDetector,
    DetectorBank,
    NaiveDetector,
    calibrate,
    decide,
    decide_naive,
    fit_detector,
    fit_detector_bank,
    fit_naive_detector,
    naive_rejection,
    recon_error,
    recon_errors,
)
from .features import (
    NgramVocabulary,
    Standardizer,
    address_vector,
    bank_vector,
    build_vocab,
    cmd_vector,
    count_ngrams,
    feature_length,
    featurize,
    fit_standardizer,
    layout_hash,
)
from .mlp import MlpModel, TrainConfig, train
from .openset import OpenSetReport, run_naive_svd, run_openset, run_softmax_rejection
from .synth import (
    HotBlock,
    SequentialSweep,
    Strided,
    UniformRandom,
    WorkloadProfile,
    benchmark_v1,
    check_protocol,
    generate_workload,
)
from .trace import (
    Command,
    DramGeometry,
    Subsequence,
    TraceRecord,
    WorkloadSequence,
    bank_linear_index,
    parse_trace,
    partition,
    read_trace,
    serialize_trace,
    write_trace,
)

__version__ = "0.1.0"
