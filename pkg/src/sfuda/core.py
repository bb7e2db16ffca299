"""Shared domain types used across the toolkit.

Feature matrices and soft predictions are plain float64 numpy arrays;
the dataclasses below add the metadata the algorithms need (labels,
class count, staleness flags, fit diagnostics). Everything is treated
as immutable after construction: arrays are copied in and write-locked.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNLABELED = -1


class SfudaError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(SfudaError):
    pass


class LabelOutOfRange(SfudaError):
    pass


class NonFiniteValue(SfudaError):
    pass


class EmptyClass(SfudaError):
    pass


class UnlabeledSample(SfudaError):
    pass


class ZeroRow(SfudaError):
    pass


class ZeroVector(SfudaError):
    pass


class DimMismatch(SfudaError):
    pass


class AllCentroidsStale(SfudaError):
    pass


class TooFewSamples(SfudaError):
    pass


class EmptyInput(SfudaError):
    pass


def as_feature_matrix(values) -> np.ndarray:
    """Coerce to a read-only N x D float64 array (no finiteness check)."""
    m = np.array(values, dtype=np.float64, order="C")
    if m.ndim != 2:
        raise ShapeMismatch(f"feature matrix must be 2-D, got ndim={m.ndim}")
    m.flags.writeable = False
    return m


def check_features(m: np.ndarray) -> None:
    """Enforce the feature-matrix invariants: 2-D, N,D >= 1, all finite."""
    if m.ndim != 2:
        raise ShapeMismatch(f"feature matrix must be 2-D, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatch(f"feature matrix must be at least 1x1, got {m.shape}")
    if not np.isfinite(m).all():
        raise NonFiniteValue("feature matrix contains NaN or Inf")


@dataclass(frozen=True)
class LabeledDomain:
    """Feature matrix plus per-row integer labels in {-1, 0..C-1}.

    -1 marks an unlabeled row; target domains carry real labels only so
    accuracy can be reported after adaptation, never for fitting.
    Invariants are checked by :func:`validate_domain`, not on construction,
    so deliberately corrupted instances can be built in tests.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "features", as_feature_matrix(self.features))
        labels = np.array(self.labels, dtype=np.int64)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def without_labels(self) -> "LabeledDomain":
        """Label-stripped copy, used to isolate adaptation from eval labels."""
        return LabeledDomain(
            self.features, np.full(self.n, UNLABELED), self.num_classes
        )


def validate_domain(domain: LabeledDomain, role: str = "target") -> None:
    """Check all LabeledDomain invariants; raise the first violation found.

    role="source" additionally demands a fully labeled set with every
    class 0..C-1 populated, as required of a training set.
    """
    if role not in ("source", "target"):
        raise ValueError(f"unknown role {role!r}")
    check_features(domain.features)
    if domain.labels.ndim != 1 or len(domain.labels) != domain.n:
        raise ShapeMismatch(
            f"labels length {len(domain.labels)} != feature rows {domain.n}"
        )
    if domain.num_classes < 1:
        raise LabelOutOfRange(f"num_classes must be >= 1, got {domain.num_classes}")
    labels = domain.labels
    if labels.size and (labels.min() < UNLABELED or labels.max() >= domain.num_classes):
        raise LabelOutOfRange(
            f"labels must lie in {{-1, 0..{domain.num_classes - 1}}}"
        )
    if role == "source":
        if (labels == UNLABELED).any():
            raise UnlabeledSample("source training set contains unlabeled rows")
        counts = np.bincount(labels, minlength=domain.num_classes)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            raise EmptyClass(f"source classes without samples: {empty.tolist()}")


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm, preserving direction.

    Raises ZeroRow for any all-zero row (no direction to preserve).
    """
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    if (norms == 0.0).any():
        raise ZeroRow("cannot normalize an all-zero row")
    return m / norms


@dataclass(frozen=True)
class LinearClassifier:
    """Softmax classifier z -> softmax(W z + bias) with C x D weights.

    `lam` records the L2 coefficient used at fit time. The remaining
    fields are solver diagnostics attached by fit_multinomial; a
    classifier built directly (e.g. from explicit weights) leaves them
    at their defaults.
    """

    weights: np.ndarray
    bias: np.ndarray | None = None
    lam: float = 0.0
    converged: bool = True
    grad_norm: float = 0.0
    iterations: int = 0
    objective_trace: tuple = field(default=(), repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeMismatch("weights must be a C x D matrix")
        if not np.isfinite(w).all():
            raise NonFiniteValue("classifier weights contain NaN or Inf")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        if self.bias is not None:
            b = np.array(self.bias, dtype=np.float64)
            if b.shape != (w.shape[0],):
                raise ShapeMismatch("bias length must equal the class count")
            if not np.isfinite(b).all():
                raise NonFiniteValue("classifier bias contains NaN or Inf")
            b.flags.writeable = False
            object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Prototypes:
    """C x D matrix of class centroids for the cosine 1-NN classifier.

    A row may be all-zero only when its stale flag is set (empty-cluster
    carryover); stale rows never win a classification.
    """

    centroids: np.ndarray
    normalized: bool = False
    stale: np.ndarray = None

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float64)
        if c.ndim != 2:
            raise ShapeMismatch("centroids must be a C x D matrix")
        if not np.isfinite(c).all():
            raise NonFiniteValue("centroids contain NaN or Inf")
        c.flags.writeable = False
        object.__setattr__(self, "centroids", c)
        stale = (
            np.zeros(c.shape[0], dtype=bool)
            if self.stale is None
            else np.array(self.stale, dtype=bool)
        )
        if stale.shape != (c.shape[0],):
            raise ShapeMismatch("stale flags length must equal the class count")
        stale.flags.writeable = False
        object.__setattr__(self, "stale", stale)
        norms = np.linalg.norm(c, axis=1)
        if (norms[~stale] == 0.0).any():
            raise ZeroVector("non-stale centroid row is all-zero")
        if self.normalized:
            live = norms[~stale]
            if live.size and np.abs(live - 1.0).max() > 1e-9:
                raise ShapeMismatch("normalized flag set but rows are not unit length")

    @property
    def num_classes(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def check_soft_predictions(probs: np.ndarray, tol: float = 1e-9) -> None:
    """Rows must be nonnegative and sum to 1 within tol."""
    probs = np.asarray(probs)
    if probs.ndim != 2:
        raise ShapeMismatch("soft predictions must be an N x C matrix")
    if (probs < 0).any():
        raise ShapeMismatch("soft predictions contain negative entries")
    if np.abs(probs.sum(axis=1) - 1.0).max() > tol:
        raise ShapeMismatch("soft prediction rows do not sum to 1")
