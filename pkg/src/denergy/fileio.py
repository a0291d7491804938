"""File formats: binary embeddings, theta checkpoints, manifests, scores.

Embedding files (``.demb``) are little-endian throughout::

    magic   4 bytes  "DEMB"
    version u16      1
    flags   u16      bit 0: labels present
    rows    u32
    dim     u32
    payload rows * dim float32, row-major
    labels  rows int32 (only when flag bit 0; -1 = unlabeled)

Theta checkpoints (``.dthc``)::

    magic   4 bytes  "DTHC"
    version u16      1
    flags   u16      0
    n       u32
    d_e     u32
    seed    u64      seed used to initialize the frozen encoder weights
    payload n * d_e float64, row-major

Values are stored at 32-bit precision (embeddings) while all computation is
64-bit. Manifests are JSON documents naming the embedding files, class names
and score-config overrides; relative paths resolve against the manifest's
directory.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import FeatureMatrix
from .errors import (
    BadMagic,
    DimMismatch,
    InvalidConfig,
    SizeMismatch,
    TruncatedFile,
    VersionUnsupported,
)

_EMB_MAGIC = b"DEMB"
_THETA_MAGIC = b"DTHC"
_EMB_HEADER = struct.Struct("<4sHHII")
_THETA_HEADER = struct.Struct("<4sHHIIQ")
_VERSION = 1
_FLAG_LABELS = 1


def write_embeddings(
    path, matrix: FeatureMatrix, labels: Optional[np.ndarray] = None
) -> None:
    """Write a feature matrix (and optional int labels) in the DEMB format."""
    path = Path(path)
    flags = 0
    blobs = [
        _EMB_HEADER.pack(_EMB_MAGIC, _VERSION, 0, matrix.rows, matrix.dim),
        np.ascontiguousarray(matrix.data, dtype="<f4").tobytes(),
    ]
    if labels is not None:
        labels = np.asarray(labels, dtype="<i4").ravel()
        if labels.shape[0] != matrix.rows:
            raise DimMismatch(f"{labels.shape[0]} labels for {matrix.rows} rows")
        flags |= _FLAG_LABELS
        blobs[0] = _EMB_HEADER.pack(_EMB_MAGIC, _VERSION, flags, matrix.rows, matrix.dim)
        blobs.append(labels.tobytes())
    path.write_bytes(b"".join(blobs))


def read_embeddings(path) -> tuple[FeatureMatrix, Optional[np.ndarray]]:
    """Read a DEMB file; returns the matrix and labels (or None).

    The normalized flag is not stored; callers re-normalize as needed.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _EMB_HEADER.size:
        raise TruncatedFile(f"{path}: file shorter than the header")
    magic, version, flags, rows, dim = _EMB_HEADER.unpack_from(raw)
    if magic != _EMB_MAGIC:
        raise BadMagic(f"{path}: expected magic {_EMB_MAGIC!r}, found {magic!r}")
    if version != _VERSION:
        raise VersionUnsupported(f"{path}: version {version} unsupported")
    if dim == 0:
        raise SizeMismatch(f"{path}: dim must be positive")
    payload = rows * dim * 4
    expected = _EMB_HEADER.size + payload + (rows * 4 if flags & _FLAG_LABELS else 0)
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, need {expected}")
    if len(raw) > expected:
        raise SizeMismatch(f"{path}: {len(raw)} bytes, declared {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=rows * dim, offset=_EMB_HEADER.size)
    matrix = FeatureMatrix(data.astype(np.float64).reshape(rows, dim))
    labels = None
    if flags & _FLAG_LABELS:
        labels = np.frombuffer(
            raw, dtype="<i4", count=rows, offset=_EMB_HEADER.size + payload
        ).astype(np.int64)
    return matrix, labels


def write_theta(path, theta: np.ndarray, seed: int) -> None:
    """Write a context-vector checkpoint."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2:
        raise InvalidConfig("theta must be 2-D")
    header = _THETA_HEADER.pack(
        _THETA_MAGIC, _VERSION, 0, theta.shape[0], theta.shape[1], seed
    )
    Path(path).write_bytes(header + np.ascontiguousarray(theta, dtype="<f8").tobytes())


def read_theta(path) -> tuple[np.ndarray, int]:
    """Read a context-vector checkpoint; returns (theta, seed)."""
    raw = Path(path).read_bytes()
    if len(raw) < _THETA_HEADER.size:
        raise TruncatedFile(f"{path}: file shorter than the header")
    magic, version, _, n, d_e, seed = _THETA_HEADER.unpack_from(raw)
    if magic != _THETA_MAGIC:
        raise BadMagic(f"{path}: expected magic {_THETA_MAGIC!r}, found {magic!r}")
    if version != _VERSION:
        raise VersionUnsupported(f"{path}: version {version} unsupported")
    expected = _THETA_HEADER.size + n * d_e * 8
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, need {expected}")
    if len(raw) > expected:
        raise SizeMismatch(f"{path}: {len(raw)} bytes, declared {expected}")
    theta = np.frombuffer(raw, dtype="<f8", count=n * d_e, offset=_THETA_HEADER.size)
    return theta.astype(np.float64).reshape(n, d_e), int(seed)


@dataclass(frozen=True)
class Manifest:
    """Dataset manifest: embedding paths, class names, score overrides."""

    id_embeddings: Path
    text_embeddings: Path
    class_names: list[str]
    covariate_embeddings: Optional[Path] = None
    semantic_embeddings: Optional[Path] = None
    score_overrides: dict = field(default_factory=dict)


def write_manifest(path, manifest: Manifest) -> None:
    doc = {
        "id_embeddings": str(manifest.id_embeddings),
        "text_embeddings": str(manifest.text_embeddings),
        "class_names": list(manifest.class_names),
        "score": dict(manifest.score_overrides),
    }
    if manifest.covariate_embeddings is not None:
        doc["covariate_embeddings"] = str(manifest.covariate_embeddings)
    if manifest.semantic_embeddings is not None:
        doc["semantic_embeddings"] = str(manifest.semantic_embeddings)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> Manifest:
    """Parse and validate a manifest: files must exist with consistent dims."""
    path = Path(path)
    doc = json.loads(path.read_text())
    base = path.parent

    def resolve(key: str, required: bool) -> Optional[Path]:
        if key not in doc:
            if required:
                raise InvalidConfig(f"{path}: manifest misses required key {key!r}")
            return None
        target = base / doc[key]
        if not target.exists():
            raise InvalidConfig(f"{path}: referenced file {target} does not exist")
        return target

    manifest = Manifest(
        id_embeddings=resolve("id_embeddings", required=True),
        text_embeddings=resolve("text_embeddings", required=True),
        class_names=[str(c) for c in doc.get("class_names", [])],
        covariate_embeddings=resolve("covariate_embeddings", required=False),
        semantic_embeddings=resolve("semantic_embeddings", required=False),
        score_overrides=dict(doc.get("score", {})),
    )
    texts, _ = read_embeddings(manifest.text_embeddings)
    if manifest.class_names and len(manifest.class_names) != texts.rows:
        raise InvalidConfig(
            f"{path}: {len(manifest.class_names)} class names for {texts.rows} text rows"
        )
    for key in ("id_embeddings", "covariate_embeddings", "semantic_embeddings"):
        target = getattr(manifest, key)
        if target is None:
            continue
        images, _ = read_embeddings(target)
        if images.dim != texts.dim:
            raise DimMismatch(f"{target}: dim {images.dim} != text dim {texts.dim}")
    return manifest


def write_scores_csv(path, scores: np.ndarray) -> None:
    """One score per row: ``index,score`` with round-trippable floats."""
    lines = ["index,score"]
    for i, value in enumerate(np.asarray(scores, dtype=np.float64).ravel()):
        lines.append(f"{i},{value:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_scores_csv(path) -> np.ndarray:
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip() != "index,score":
        raise InvalidConfig(f"{path}: expected an 'index,score' CSV header")
    return np.array([float(line.split(",", 1)[1]) for line in text[1:]], dtype=np.float64)


def write_metrics_json(path, result) -> None:
    doc = {
        "auroc": result.auroc,
        "fpr95": result.fpr95,
        "threshold": result.threshold,
        "n_id": result.n_id,
        "n_ood": result.n_ood,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
