"""Command-line pipeline: gen, ingest, vocab, train, fit-detectors, evaluate, predict.

Exit codes: 0 on success, 1 on data errors (bad files, mismatched layouts,
protocol violations), 2 on usage errors (argparse).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import bundle as bundle_io
from . import dataset, detectors, features, mlp, openset, report, synth, trace
from .errors import TraceOsrError

logger = logging.getLogger("traceosr")

DEFAULT_SUBSEQ_LEN = 100_000


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _parse_labels(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _load_geometry(path: str | None) -> trace.DramGeometry:
    if path is None:
        return trace.DramGeometry()
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise TraceOsrError(f"{path}: geometry file must be a mapping")
    defaults = trace.DramGeometry().to_dict()
    defaults.update(data)
    return trace.DramGeometry.from_dict(defaults)


def _sorted_trace_paths(paths) -> list[Path]:
    resolved = [Path(p) for p in paths]
    return sorted(resolved, key=lambda p: (trace.trace_label_from_path(p), p.name))


def _iter_subsequences(paths, geometry, l_s):
    """Parse and partition traces in canonical (label, file, block) order."""
    for path in _sorted_trace_paths(paths):
        seq = trace.read_trace(path, geometry)
        subs = trace.partition(seq, l_s)
        dropped = len(seq) - len(subs) * l_s
        logger.info(
            "%s: %d records -> %d subsequences of %d (%d dropped)",
            path.name, len(seq), len(subs), l_s, dropped,
        )
        yield from subs


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args) -> int:
    geometry = _load_geometry(args.geometry)
    if args.preset:
        preset = synth.PRESETS.get(args.preset)
        if preset is None:
            raise TraceOsrError(f"unknown preset {args.preset!r}; available: {sorted(synth.PRESETS)}")
        profiles = list(preset().profiles)
    else:
        profiles = synth.load_catalog(args.catalog)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    synth.save_catalog(out_dir / "catalog.yaml", profiles)
    suffix = ".csv.gz" if args.gzip else ".csv"
    for profile in profiles:
        seq = synth.generate_workload(profile, args.length, geometry)
        path = out_dir / f"{profile.name}{suffix}"
        trace.write_trace(path, seq)
        logger.info("wrote %s (%d records)", path, len(seq))
    return 0


def cmd_vocab(args) -> int:
    geometry = _load_geometry(args.geometry)
    l_s = args.subseq_len or DEFAULT_SUBSEQ_LEN
    known = _parse_labels(args.known)
    paths = [p for p in _sorted_trace_paths(args.traces) if trace.trace_label_from_path(p) in known]
    found = {trace.trace_label_from_path(p) for p in paths}
    missing = set(known) - found
    if missing:
        raise TraceOsrError(f"no trace files for known labels: {sorted(missing)}")

    subs = list(_iter_subsequences(paths, geometry, l_s))
    labels = [s.label for s in subs]
    spec = dataset.SplitSpec(known=known, train_fraction=args.train_fraction, seed=args.seed)
    idx = dataset.split(labels, spec)
    groups: dict[str, list] = {label: [] for label in known}
    for i in idx.train.tolist():
        groups[labels[i]].append(subs[i].cmd)
    vocab = features.build_vocab(groups, n_values=_parse_ints(args.n_values), m=args.m)
    features.save_vocab(args.out, vocab)
    sizes = {n: vocab.size(n) for n in vocab.n_values}
    logger.info("vocabulary sizes %s -> %s", sizes, args.out)
    return 0


def cmd_ingest(args) -> int:
    geometry = _load_geometry(args.geometry)
    l_s = args.subseq_len or DEFAULT_SUBSEQ_LEN
    vocab = features.load_vocab(args.vocab)
    layout = features.layout_hash(vocab, geometry)
    x, labels, blocks, orphans = features.featurize_many(
        _iter_subsequences(args.traces, geometry, l_s), vocab, geometry
    )
    meta = {"subseq_len": l_s, "orphans": orphans}
    bundle_io.save_features(args.out, x, labels, layout, blocks=blocks, meta=meta)
    logger.info("wrote %s: %d samples x %d features, %d orphan reads/writes", args.out, *x.shape, orphans)
    return 0


def _split_from_features(fs: bundle_io.FeatureSet, known, train_fraction, seed):
    present = set(fs.labels)
    unknown = tuple(sorted(present - set(known)))
    spec = dataset.SplitSpec(known=tuple(known), unknown=unknown, train_fraction=train_fraction, seed=seed)
    return dataset.split(fs.labels, spec), spec


def cmd_train(args) -> int:
    geometry = _load_geometry(args.geometry)
    vocab = features.load_vocab(args.vocab)
    layout = features.layout_hash(vocab, geometry)
    fs = bundle_io.load_features(args.features, expected_layout=layout)
    known = _parse_labels(args.known)
    idx, spec = _split_from_features(fs, known, args.train_fraction, args.seed)

    x_train = fs.x[idx.train]
    train_labels = [fs.labels[i] for i in idx.train.tolist()]
    standardizer = features.fit_standardizer(x_train, enabled=not args.no_standardize)
    config = mlp.TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        hidden=args.hidden,
        seed=args.seed,
    )
    model, losses = mlp.train(standardizer.apply(x_train), train_labels, config, classes=sorted(known))
    logger.info("training losses: %s", ", ".join(f"{l:.4f}" for l in losses))

    extra = {
        "split": {
            "known": list(spec.known),
            "unknown": list(spec.unknown),
            "train_fraction": spec.train_fraction,
            "seed": spec.seed,
        },
        "train_config": config.to_dict(),
        "epoch_losses": losses,
        "subseq_len": fs.meta.get("subseq_len"),
    }
    b = bundle_io.Bundle(
        geometry=geometry, vocab=vocab, standardizer=standardizer, model=model,
    )
    bundle_io.save_bundle(args.out, b, extra=extra)
    logger.info("wrote %s", args.out)
    return 0


def cmd_fit_detectors(args) -> int:
    b = bundle_io.load_bundle(args.bundle)
    fs = bundle_io.load_features(args.features, expected_layout=b.layout_hash)
    split_info = b.manifest["extra"]["split"]
    idx, _ = _split_from_features(
        fs, split_info["known"], split_info["train_fraction"], split_info["seed"]
    )
    x_train = b.standardizer.apply(fs.x[idx.train])
    train_labels = [fs.labels[i] for i in idx.train.tolist()]
    alpha_grid = _parse_floats(args.alpha_grid)
    b.bank = detectors.fit_detector_bank(x_train, train_labels, energy=args.energy, alpha_grid=alpha_grid)
    b.naive = detectors.fit_naive_detector(x_train, energy=args.energy)
    out = args.out or args.bundle
    bundle_io.save_bundle(out, b, extra=b.manifest.get("extra"))
    logger.info("wrote %s (%d class detectors + pooled baseline)", out, len(b.bank.detectors))
    return 0


def _softmax_thresholds(top_probs: np.ndarray, limit: int = 81) -> list[float]:
    """Midpoints between achievable max-softmax values, subsampled to ``limit``."""
    uniq = np.unique(top_probs)
    if uniq.size < 2:
        return [float(np.clip(uniq[0], 1e-9, 1 - 1e-9))]
    mids = (uniq[1:] + uniq[:-1]) / 2.0
    lo = max(uniq[0] * 0.5, 1e-9)
    hi = min((uniq[-1] + 1.0) / 2.0, 1.0 - 1e-9)
    cand = np.concatenate([[lo], mids, [hi]])
    if cand.size > limit:
        pick = np.linspace(0, cand.size - 1, limit).round().astype(int)
        cand = cand[np.unique(pick)]
    return [float(t) for t in np.clip(cand, 1e-9, 1 - 1e-9)]


def cmd_evaluate(args) -> int:
    b = bundle_io.load_bundle(args.bundle)
    if b.bank is None or b.naive is None:
        raise TraceOsrError("bundle has no detectors; run fit-detectors first")
    fs = bundle_io.load_features(args.features, expected_layout=b.layout_hash)
    split_info = b.manifest["extra"]["split"]
    idx, spec = _split_from_features(
        fs, split_info["known"], split_info["train_fraction"], split_info["seed"]
    )
    test_idx = np.concatenate([idx.test_known, idx.test_unknown])
    x_test = fs.x[test_idx]
    test_labels = [fs.labels[i] for i in test_idx.tolist()]
    timing = not args.no_timing

    alpha_grid = _parse_floats(args.alpha_grid) if args.alpha_grid else b.bank.alpha_grid
    bank_reports = []
    naive_reports = []
    for alpha in alpha_grid:
        rep, _ = openset.run_openset(
            x_test, test_labels, b.model, b.bank, alpha, standardizer=b.standardizer, timing=timing
        )
        bank_reports.append(rep)
        nrep, _ = openset.run_naive_svd(
            x_test, test_labels, b.model, b.naive, alpha, standardizer=b.standardizer, timing=timing
        )
        naive_reports.append(nrep)

    if args.softmax_thresholds:
        thresholds = list(_parse_floats(args.softmax_thresholds))
    else:
        _, probs = b.model.predict_batch(b.standardizer.apply(x_test))
        thresholds = _softmax_thresholds(probs.max(axis=1))
    softmax_reports = []
    for t in thresholds:
        srep, _ = openset.run_softmax_rejection(
            x_test, test_labels, b.model, t, standardizer=b.standardizer, timing=timing
        )
        softmax_reports.append(srep)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    context = {
        "bundle": Path(args.bundle).name,
        "features": Path(args.features).name,
        "known": split_info["known"],
        "unknown": sorted(set(fs.labels) - set(split_info["known"])),
        "n_train": int(idx.train.size),
    }
    report.write_report_csv(out_dir / "report.csv", bank_reports)
    report.write_report_json(out_dir / "report.json", bank_reports, context=context)
    report.write_report_csv(out_dir / "naive_svd.csv", naive_reports)
    report.write_report_json(out_dir / "naive_svd.json", naive_reports, context=context)
    report.write_threshold_csv(out_dir / "softmax_rejection.csv", softmax_reports)
    report.write_report_json(out_dir / "softmax_rejection.json", softmax_reports, context=context)
    report.plot_alpha_tradeoff(out_dir / "tradeoff_alpha.png", bank_reports, naive_reports)
    report.plot_operating_curve(
        out_dir / "operating_curve.png", bank_reports, naive_reports, softmax_reports
    )
    print("per-class SVD detector bank:")
    print(report.format_table(bank_reports))
    print("pooled single-SVD baseline:")
    print(report.format_table(naive_reports))
    logger.info("reports written to %s", out_dir)
    return 0


def cmd_predict(args) -> int:
    b = bundle_io.load_bundle(args.bundle)
    if b.bank is None:
        raise TraceOsrError("bundle has no detectors; run fit-detectors first")
    l_s = args.subseq_len or b.manifest["extra"].get("subseq_len") or DEFAULT_SUBSEQ_LEN
    seq = trace.read_trace(args.trace, b.geometry)
    subs = trace.partition(seq, l_s)
    if not subs:
        print(f"error: no complete subsequence ({len(seq)} records < l_s={l_s})", file=sys.stderr)
        return 1
    for sub in subs:
        vec = b.standardizer.apply(features.featurize(sub, b.vocab, b.geometry))
        ci, probs = b.model.predict(vec)
        label = b.model.classes[ci]
        det = b.bank.detectors[label]
        err = detectors.recon_error(det.basis, vec)
        threshold = det.threshold(args.alpha)
        verdict = label if err < threshold else "UNKNOWN"
        print(
            f"block {sub.source_block}\t{verdict}\tpredicted={label} "
            f"p={probs[ci]:.4f} err={err:.4f} threshold={threshold:.4f}"
        )
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="traceosr",
        description="Open-set recognition pipeline for DRAM workload command traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--geometry", help="YAML/JSON file overriding DRAM geometry fields")
    common.add_argument("--seed", type=int, default=0, help="split/shuffle seed (default 0)")
    common.add_argument(
        "--subseq-len", type=int, default=None,
        help=f"subsequence length l_s (default {DEFAULT_SUBSEQ_LEN}; predict defaults to the bundle's value)",
    )

    p = sub.add_parser("gen", parents=[common], help="generate synthetic traces")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", help="named preset (e.g. benchmark-v1)")
    group.add_argument("--catalog", help="profile catalog YAML")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--length", type=int, default=2_000_000, help="records per workload")
    p.add_argument("--gzip", action="store_true", help="write .csv.gz instead of .csv")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("vocab", parents=[common], help="build the n-gram vocabulary")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--known", required=True, help="comma-separated known workload labels")
    p.add_argument("--train-fraction", type=float, default=2.0 / 3.0)
    p.add_argument("--n-values", default="7,11,15")
    p.add_argument("--m", type=int, default=25, help="top-m grams per class per n")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("ingest", parents=[common], help="featurize traces to a feature file")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common], help="train the MLP classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--known", required=True)
    p.add_argument("--train-fraction", type=float, default=2.0 / 3.0)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit-detectors", parents=[common], help="fit per-class + pooled SVD detectors")
    p.add_argument("--features", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--energy", type=float, default=detectors.DEFAULT_ENERGY)
    p.add_argument("--alpha-grid", default="1,1.5,2,2.5,3")
    p.add_argument("--out", help="output bundle (default: overwrite --bundle)")
    p.set_defaults(func=cmd_fit_detectors)

    p = sub.add_parser("evaluate", parents=[common], help="alpha-sweep open-set evaluation")
    p.add_argument("--features", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--alpha-grid", default="1,1.5,2,2.5,3")
    p.add_argument("--softmax-thresholds", help="explicit thresholds for the rejection baseline")
    p.add_argument("--no-timing", action="store_true", help="write 0.0 inference_seconds (reproducible)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="classify one trace file")
    p.add_argument("--bundle", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--alpha", type=float, default=3.0)
    p.set_defaults(func=cmd_predict)

    # `predict` is the only place --subseq-len should default to the bundle's value.
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TraceOsrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
