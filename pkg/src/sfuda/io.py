"""Serialization: SFDK feature files, numeric CSV, experiment manifests.

SFDK v1 layout (all integers little-endian):

    offset  size  field
    0       4     magic "SFDK"
    4       4     version, u32, must be 1
    8       8     rows, u64
    16      8     cols, u64
    24      4     flags, u32; bit 0 = has_labels, other bits must be 0
    28      ...   rows*cols float32, row-major
    then    ...   rows int32 labels, only when bit 0 is set (-1 = unlabeled)

Storage is float32 (extractors emit single precision; halves file size);
everything is widened to float64 on read.
"""
from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .core import (
    LabelOutOfRange,
    LabeledDomain,
    NonFiniteValue,
    SfudaError,
    UNLABELED,
    validate_domain,
)

MAGIC = b"SFDK"
VERSION = 1
FLAG_HAS_LABELS = 0x1
_HEADER = struct.Struct("<4sIQQI")

MANIFEST_HEADER = "# sfuda-manifest v1"
METHODS = ("lp", "cp", "sca", "shot_lite", "ft_stats")


class FormatError(SfudaError):
    """A file's bytes do not conform to the declared format."""


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class UnknownFlags(FormatError):
    pass


class HeaderMismatch(FormatError):
    pass


class RaggedRow(FormatError):
    pass


class UnparsableNumber(FormatError):
    pass


class ManifestError(SfudaError):
    pass


class IoFailure(SfudaError):
    pass


def _infer_num_classes(labels: np.ndarray) -> int:
    labeled = labels[labels >= 0]
    return int(labeled.max()) + 1 if labeled.size else 1


def read_sfdk(path) -> LabeledDomain:
    """Read an SFDK v1 file into a LabeledDomain (features as float64).

    The class count is not stored in the file; it is inferred as
    max(label)+1 (1 when fully unlabeled).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        if blob[:4] != MAGIC:
            raise BadMagic(f"{path}: not an SFDK file")
        raise TruncatedPayload(f"{path}: header truncated at {len(blob)} bytes")
    magic, version, rows, cols, flags = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version}, expected {VERSION}")
    if flags & ~FLAG_HAS_LABELS:
        raise UnknownFlags(f"{path}: unknown flag bits 0x{flags & ~FLAG_HAS_LABELS:x}")
    has_labels = bool(flags & FLAG_HAS_LABELS)
    expected = _HEADER.size + rows * cols * 4 + (rows * 4 if has_labels else 0)
    if len(blob) != expected:
        raise TruncatedPayload(
            f"{path}: declared {rows}x{cols} needs {expected} bytes, file has {len(blob)}"
        )
    payload_end = _HEADER.size + rows * cols * 4
    feats = (
        np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=_HEADER.size)
        .astype(np.float64)
        .reshape(rows, cols)
    )
    if has_labels:
        labels = np.frombuffer(blob, dtype="<i4", count=rows, offset=payload_end).astype(
            np.int64
        )
    else:
        labels = np.full(rows, UNLABELED, dtype=np.int64)
    if labels.size and labels.min() < UNLABELED:
        raise LabelOutOfRange(f"{path}: label below -1")
    domain = LabeledDomain(feats, labels, _infer_num_classes(labels))
    validate_domain(domain, role="target")
    return domain


def write_sfdk(domain: LabeledDomain, path) -> None:
    """Write a LabeledDomain as SFDK v1; refuses non-finite features.

    The label block is emitted only when at least one row is labeled.
    """
    validate_domain(domain, role="target")
    with np.errstate(over="ignore"):
        feats32 = domain.features.astype("<f4")
    if not np.isfinite(feats32).all():
        raise NonFiniteValue("features not representable in 32-bit storage")
    has_labels = bool((domain.labels != UNLABELED).any())
    flags = FLAG_HAS_LABELS if has_labels else 0
    header = _HEADER.pack(MAGIC, VERSION, domain.n, domain.dim, flags)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(feats32.tobytes(order="C"))
            if has_labels:
                fh.write(domain.labels.astype("<i4").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> LabeledDomain:
    """Read a numeric CSV with header f0,...,f{D-1},label.

    An empty label field means unlabeled (-1). Accepts \\n or \\r\\n line
    endings; fields are plain numbers, no quoting.
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise HeaderMismatch(f"{path}: empty file") from None
        dim = len(header) - 1
        if dim < 1 or header != [f"f{i}" for i in range(dim)] + ["label"]:
            raise HeaderMismatch(f"{path}: header must be f0,...,f{{D-1}},label")
        rows: list[list[float]] = []
        labels: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 1:
                raise RaggedRow(f"{path}:{lineno}: expected {dim + 1} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[:dim]])
            except ValueError as exc:
                raise UnparsableNumber(f"{path}:{lineno}: {exc}") from None
            raw = row[dim].strip()
            if raw == "":
                labels.append(UNLABELED)
            else:
                try:
                    labels.append(int(raw))
                except ValueError:
                    raise UnparsableNumber(
                        f"{path}:{lineno}: label {raw!r} is not an integer"
                    ) from None
    if not rows:
        raise HeaderMismatch(f"{path}: no data rows")
    label_arr = np.array(labels, dtype=np.int64)
    if label_arr.min() < UNLABELED:
        raise LabelOutOfRange(f"{path}: label below -1")
    domain = LabeledDomain(np.array(rows), label_arr, _infer_num_classes(label_arr))
    validate_domain(domain, role="target")
    return domain


def read_features(path) -> LabeledDomain:
    """Dispatch on extension: .csv goes through read_csv, else SFDK."""
    return read_csv(path) if str(path).lower().endswith(".csv") else read_sfdk(path)


@dataclass(frozen=True)
class ExperimentSpec:
    """One manifest record: a (source, target, method) run with its seed."""

    id: str
    source_path: str
    target_path: str
    method: str
    seed: int = 0
    method_params: dict = field(default_factory=dict)


def parse_manifest(path) -> list[ExperimentSpec]:
    """Parse a line-delimited manifest: header line, then one JSON record per line.

    Lines starting with '#' after the header are comments. Raises
    ManifestError for schema violations (bad header, duplicate ids,
    unknown method, missing paths, seed outside u64, no records).
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise ManifestError(f"{path}: first line must be {MANIFEST_HEADER!r}")
    specs: list[ExperimentSpec] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from None
        if not isinstance(rec, dict):
            raise ManifestError(f"{path}:{lineno}: record must be a JSON object")
        try:
            spec = ExperimentSpec(
                id=str(rec["id"]),
                source_path=str(rec["source_path"]),
                target_path=str(rec["target_path"]),
                method=str(rec["method"]),
                seed=int(rec.get("seed", 0)),
                method_params=dict(rec.get("method_params") or {}),
            )
        except KeyError as exc:
            raise ManifestError(f"{path}:{lineno}: missing field {exc}") from None
        if spec.id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate id {spec.id!r}")
        seen.add(spec.id)
        if not spec.source_path or not spec.target_path:
            raise ManifestError(f"{path}:{lineno}: empty source/target path")
        if spec.method not in METHODS:
            raise ManifestError(
                f"{path}:{lineno}: unknown method {spec.method!r} (expected one of {METHODS})"
            )
        if not 0 <= spec.seed < 2**64:
            raise ManifestError(f"{path}:{lineno}: seed must be an unsigned 64-bit integer")
        specs.append(spec)
    if not specs:
        raise ManifestError(f"{path}: manifest contains no experiment records")
    return specs


def write_manifest(specs, path) -> None:
    """Inverse of parse_manifest (one JSON record per line)."""
    lines = [MANIFEST_HEADER]
    for s in specs:
        lines.append(
            json.dumps(
                {
                    "id": s.id,
                    "source_path": s.source_path,
                    "target_path": s.target_path,
                    "method": s.method,
                    "seed": s.seed,
                    "method_params": s.method_params,
                },
                sort_keys=True,
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text: str) -> None:
    """Write text via a temp file + rename so failures leave no partial file."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
