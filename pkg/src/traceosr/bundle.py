"""Persistence: feature matrix files and the model bundle archive.

Feature file: an 8-byte magic, a little-endian uint32 header length, a JSON
header (shape, dtype, layout hash, per-row labels/blocks, free-form meta),
then the raw little-endian float64 matrix.

Model bundle: a zip archive holding ``manifest.json`` plus named binary
arrays (little-endian float64, shapes in the manifest). The manifest records
format version, vocabulary, geometry, standardizer, MLP and detector
metadata, per-array sha256 digests and a whole-bundle content checksum. Zip
entries are written with fixed metadata (stored, epoch timestamp) so
identical inputs produce byte-identical bundles.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .detectors import ClassDetector, DetectorBank, NaiveDetector
from .errors import CorruptBundle, LayoutMismatch, VersionMismatch
from .features import NgramVocabulary, Standardizer, layout_hash
from .mlp import MlpModel
from .trace import DramGeometry

FEATURES_MAGIC = b"TOSRFT01"
BUNDLE_FORMAT_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def _canonical_json(data) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")


# ---------------------------------------------------------------------------
# Feature files


@dataclass
class FeatureSet:
    x: np.ndarray
    labels: list[str]
    blocks: list[int]
    layout_hash: str
    meta: dict = field(default_factory=dict)


def save_features(
    path: str | Path,
    x: np.ndarray,
    labels: Sequence[str],
    layout: str,
    blocks: Sequence[int] | None = None,
    meta: dict | None = None,
) -> None:
    x = np.ascontiguousarray(x, dtype="<f8")
    if x.ndim != 2 or x.shape[0] != len(labels):
        raise ValueError("feature matrix must be 2-D with one label per row")
    header = {
        "shape": list(x.shape),
        "dtype": "<f8",
        "layout_hash": layout,
        "labels": list(labels),
        "blocks": list(blocks) if blocks is not None else [-1] * x.shape[0],
        "meta": meta or {},
    }
    blob = _canonical_json(header)
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(x.tobytes())


def load_features(path: str | Path, expected_layout: str | None = None) -> FeatureSet:
    raw = Path(path).read_bytes()
    if len(raw) < len(FEATURES_MAGIC) + 4 or not raw.startswith(FEATURES_MAGIC):
        raise CorruptBundle(f"{path}: not a feature file")
    offset = len(FEATURES_MAGIC)
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptBundle(f"{path}: bad feature header: {exc}") from None
    offset += header_len
    shape = tuple(header["shape"])
    expected_bytes = int(np.prod(shape)) * 8
    data = raw[offset:]
    if len(data) != expected_bytes:
        raise CorruptBundle(f"{path}: expected {expected_bytes} data bytes, found {len(data)}")
    x = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    fs = FeatureSet(
        x=x,
        labels=list(header["labels"]),
        blocks=list(header["blocks"]),
        layout_hash=header["layout_hash"],
        meta=header.get("meta", {}),
    )
    if expected_layout is not None and fs.layout_hash != expected_layout:
        raise LayoutMismatch(
            f"{path}: features built with layout {fs.layout_hash[:12]}…, expected {expected_layout[:12]}…"
        )
    return fs


# ---------------------------------------------------------------------------
# Model bundles


@dataclass
class Bundle:
    geometry: DramGeometry
    vocab: NgramVocabulary
    standardizer: Standardizer
    model: MlpModel
    bank: DetectorBank | None = None
    naive: NaiveDetector | None = None
    manifest: dict = field(default_factory=dict)

    @property
    def layout_hash(self) -> str:
        return self.manifest["layout_hash"]

    def check_layout(self, other_hash: str, what: str = "features") -> None:
        if other_hash != self.layout_hash:
            raise LayoutMismatch(
                f"{what} layout {other_hash[:12]}… does not match bundle layout {self.layout_hash[:12]}…"
            )


def _array_entries(bundle: Bundle) -> dict[str, np.ndarray]:
    arrays = {
        "std/mean": bundle.standardizer.mean,
        "std/scale": bundle.standardizer.scale,
        "mlp/w1": bundle.model.w1,
        "mlp/b1": bundle.model.b1,
        "mlp/w2": bundle.model.w2,
        "mlp/b2": bundle.model.b2,
    }
    if bundle.bank is not None:
        for i, label in enumerate(sorted(bundle.bank.detectors)):
            arrays[f"det/{i}/basis"] = bundle.bank.detectors[label].basis
    if bundle.naive is not None:
        arrays["naive/basis"] = bundle.naive.basis
    return {name: np.ascontiguousarray(a, dtype="<f8") for name, a in arrays.items()}


def save_bundle(path: str | Path, bundle: Bundle, extra: dict | None = None) -> None:
    arrays = _array_entries(bundle)
    manifest: dict = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "layout_hash": layout_hash(bundle.vocab, bundle.geometry),
        "geometry": bundle.geometry.to_dict(),
        "vocab": bundle.vocab.to_dict(),
        "standardizer": {"enabled": bundle.standardizer.enabled},
        "mlp": {"classes": list(bundle.model.classes)},
        "detectors": None,
        "naive": None,
        "extra": extra if extra is not None else bundle.manifest.get("extra", {}),
        "arrays": {
            name: {"shape": list(a.shape), "sha256": hashlib.sha256(a.tobytes()).hexdigest()}
            for name, a in arrays.items()
        },
    }
    if bundle.bank is not None:
        manifest["detectors"] = {
            "alpha_grid": list(bundle.bank.alpha_grid),
            "classes": [
                {
                    "label": label,
                    "rank": bundle.bank.detectors[label].rank,
                    "energy": bundle.bank.detectors[label].energy,
                    "mu": bundle.bank.detectors[label].mu,
                    "sigma": bundle.bank.detectors[label].sigma,
                }
                for label in sorted(bundle.bank.detectors)
            ],
        }
    if bundle.naive is not None:
        manifest["naive"] = {
            "rank": bundle.naive.rank,
            "energy": bundle.naive.energy,
            "mu": bundle.naive.mu,
            "sigma": bundle.naive.sigma,
        }

    digest = hashlib.sha256(_canonical_json(manifest))
    for name in sorted(arrays):
        digest.update(name.encode("utf-8"))
        digest.update(b"\0")
        digest.update(arrays[name].tobytes())
    manifest["content_checksum"] = digest.hexdigest()

    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=_ZIP_EPOCH)
        zf.writestr(info, json.dumps(manifest, indent=2, sort_keys=True))
        for name in sorted(arrays):
            info = zipfile.ZipInfo(f"arrays/{name}", date_time=_ZIP_EPOCH)
            zf.writestr(info, arrays[name].tobytes())


def load_bundle(path: str | Path) -> Bundle:
    try:
        zf = zipfile.ZipFile(path, "r")
    except (zipfile.BadZipFile, OSError) as exc:
        raise CorruptBundle(f"{path}: {exc}") from None
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json").decode("utf-8"))
        except KeyError:
            raise CorruptBundle(f"{path}: missing manifest.json") from None
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptBundle(f"{path}: bad manifest: {exc}") from None

        version = manifest.get("format_version")
        if version != BUNDLE_FORMAT_VERSION:
            raise VersionMismatch(f"{path}: bundle format {version!r}, expected {BUNDLE_FORMAT_VERSION}")

        arrays: dict[str, np.ndarray] = {}
        for name, info in manifest["arrays"].items():
            try:
                data = zf.read(f"arrays/{name}")
            except KeyError:
                raise CorruptBundle(f"{path}: missing array {name!r}") from None
            if hashlib.sha256(data).hexdigest() != info["sha256"]:
                raise CorruptBundle(f"{path}: checksum mismatch for array {name!r}")
            arrays[name] = np.frombuffer(data, dtype="<f8").reshape(info["shape"]).copy()

        stored = manifest.pop("content_checksum", None)
        digest = hashlib.sha256(_canonical_json(manifest))
        for name in sorted(arrays):
            digest.update(name.encode("utf-8"))
            digest.update(b"\0")
            digest.update(np.ascontiguousarray(arrays[name]).tobytes())
        if stored != digest.hexdigest():
            raise CorruptBundle(f"{path}: whole-bundle checksum mismatch")
        manifest["content_checksum"] = stored

    geometry = DramGeometry.from_dict(manifest["geometry"])
    vocab = NgramVocabulary.from_dict(manifest["vocab"])
    expected = layout_hash(vocab, geometry)
    if manifest["layout_hash"] != expected:
        raise CorruptBundle(f"{path}: stored layout hash does not match vocab/geometry")

    standardizer = Standardizer(
        mean=arrays["std/mean"],
        scale=arrays["std/scale"],
        enabled=bool(manifest["standardizer"]["enabled"]),
    )
    model = MlpModel(
        w1=arrays["mlp/w1"],
        b1=arrays["mlp/b1"],
        w2=arrays["mlp/w2"],
        b2=arrays["mlp/b2"],
        classes=tuple(manifest["mlp"]["classes"]),
    )

    bank = None
    if manifest.get("detectors") is not None:
        detectors = {}
        for i, entry in enumerate(manifest["detectors"]["classes"]):
            detectors[entry["label"]] = ClassDetector(
                label=entry["label"],
                basis=arrays[f"det/{i}/basis"],
                rank=int(entry["rank"]),
                energy=float(entry["energy"]),
                mu=entry["mu"],
                sigma=entry["sigma"],
            )
        bank = DetectorBank(detectors=detectors, alpha_grid=tuple(manifest["detectors"]["alpha_grid"]))

    naive = None
    if manifest.get("naive") is not None:
        naive = NaiveDetector(
            basis=arrays["naive/basis"],
            rank=int(manifest["naive"]["rank"]),
            energy=float(manifest["naive"]["energy"]),
            mu=float(manifest["naive"]["mu"]),
            sigma=float(manifest["naive"]["sigma"]),
        )

    return Bundle(
        geometry=geometry,
        vocab=vocab,
        standardizer=standardizer,
        model=model,
        bank=bank,
        naive=naive,
        manifest=manifest,
    )
