"""Prototype alignment: spherical k-means on unlabeled target features.

Initialization centroids come from one of four sources (source-label
means, multinomial-regressor weight rows, hard-pseudo-label means, or
probability-weighted means). The refinement loop normalizes target
features once up front, then alternates cosine-similarity assignment
with mean updates until the assignment vector repeats exactly.

A cluster left empty by an assignment keeps its previous centroid and
is flagged stale for that iteration; stale centroids still compete in
later assignments so the class count stays fixed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    AllCentroidsStale,
    DimMismatch,
    LabeledDomain,
    LinearClassifier,
    Prototypes,
    UNLABELED,
    UnlabeledSample,
    ZeroRow,
    check_features,
    validate_domain,
)
from .probing import class_prototypes, cp_classify, predict_labels, predict_proba

_STALE_DENOM = 1e-12


@dataclass(frozen=True)
class KMeansConfig:
    max_iters: int = 100
    # the only implemented policy: empty clusters keep their previous
    # centroid, flagged stale, and keep competing in later assignments
    empty_cluster_policy: str = "keep-stale"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.empty_cluster_policy != "keep-stale":
            raise ValueError("keep-stale is the only empty-cluster policy")


@dataclass(frozen=True)
class ScaResult:
    """Outcome of a spherical k-means run.

    prototypes rows are unit length (stale rows may be zero);
    objective_trace holds the post-assignment cosine-dissimilarity sum
    of every iteration performed, which is non-increasing.
    """

    prototypes: Prototypes
    assignments: np.ndarray
    iterations_used: int
    converged: bool
    objective_trace: tuple = ()


def init_from_source_labels(source: LabeledDomain) -> Prototypes:
    """Per-class means of the labeled source features."""
    return class_prototypes(source)


def init_from_mr_weights(clf: LinearClassifier) -> Prototypes:
    """Rows of the fitted weight matrix W; any bias is ignored."""
    return Prototypes(clf.weights, normalized=False)


def init_from_hard_preds(clf: LinearClassifier, target: np.ndarray) -> Prototypes:
    """Means of target features grouped by argmax pseudo-label.

    Classes that receive no pseudo-labels yield stale (zero) centroids.
    """
    target = np.asarray(target, dtype=np.float64)
    check_features(target)
    preds = predict_labels(clf, target)
    C = clf.num_classes
    centroids = np.zeros((C, target.shape[1]))
    stale = np.zeros(C, dtype=bool)
    for c in range(C):
        mask = preds == c
        if mask.any():
            centroids[c] = target[mask].mean(axis=0)
        else:
            stale[c] = True
    # a mean that cancels to exactly zero has no direction either
    stale |= np.linalg.norm(centroids, axis=1) == 0.0
    centroids[stale] = 0.0
    return Prototypes(centroids, normalized=False, stale=stale)


def init_from_soft_preds(probs: np.ndarray, target: np.ndarray) -> Prototypes:
    """Probability-weighted means: centroid_c = sum_i p_ic z_i / sum_i p_ic.

    A class whose probability mass is (numerically) zero yields a stale
    centroid.
    """
    probs = np.asarray(probs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    check_features(target)
    if probs.ndim != 2 or probs.shape[0] != target.shape[0]:
        raise DimMismatch("probability rows must match target rows")
    mass = probs.sum(axis=0)
    stale = mass <= _STALE_DENOM
    centroids = np.zeros((probs.shape[1], target.shape[1]))
    live = ~stale
    centroids[live] = (probs.T[live] @ target) / mass[live, None]
    stale |= np.linalg.norm(centroids, axis=1) == 0.0
    centroids[stale] = 0.0
    return Prototypes(centroids, normalized=False, stale=stale)


def spherical_kmeans(
    init: Prototypes, target: np.ndarray, cfg: KMeansConfig = KMeansConfig()
) -> ScaResult:
    """Refine centroids on unit-normalized target features.

    Each iteration: normalize live centroids, assign every sample to the
    highest-cosine-similarity competing centroid (ties to the lowest
    index), then recompute centroids as means of their assigned
    normalized features. Stops when the assignment vector repeats
    exactly, or after cfg.max_iters iterations (converged=False).
    """
    target = np.asarray(target, dtype=np.float64)
    check_features(target)
    if target.shape[1] != init.dim:
        raise DimMismatch(f"target has D={target.shape[1]}, init expects {init.dim}")
    if init.stale.all():
        raise AllCentroidsStale("initialization has no usable centroid")
    norms = np.linalg.norm(target, axis=1)
    if (norms == 0.0).any():
        raise ZeroRow("target feature matrix contains an all-zero row")
    Z = target / norms[:, None]

    centroids = init.centroids.copy()
    stale = init.stale.copy()
    C = init.num_classes
    prev = None
    assignments = None
    converged = False
    iterations = 0
    trace: list[float] = []
    for iterations in range(1, cfg.max_iters + 1):
        cnorms = np.linalg.norm(centroids, axis=1)
        competing = cnorms > 0.0
        if not competing.any():
            raise AllCentroidsStale("all centroids collapsed to zero")
        unit = np.zeros_like(centroids)
        unit[competing] = centroids[competing] / cnorms[competing, None]
        sims = np.full((Z.shape[0], C), -np.inf)
        sims[:, competing] = Z @ unit[competing].T
        assignments = np.argmax(sims, axis=1).astype(np.int64)
        trace.append(float((0.5 - 0.5 * sims[np.arange(len(Z)), assignments]).sum()))
        if prev is not None and np.array_equal(assignments, prev):
            converged = True
            centroids = unit
            break
        counts = np.bincount(assignments, minlength=C)
        for c in range(C):
            mean = Z[assignments == c].mean(axis=0) if counts[c] else None
            # exactly cancelling members leave no direction; treat as empty
            if mean is not None and np.linalg.norm(mean) > 0.0:
                centroids[c] = mean
                stale[c] = False
            else:
                stale[c] = True
        prev = assignments
    if not converged:
        # normalize what the final update produced
        cnorms = np.linalg.norm(centroids, axis=1)
        live = cnorms > 0.0
        centroids = np.where(live[:, None], centroids / np.where(live, cnorms, 1.0)[:, None], 0.0)
    protos = Prototypes(centroids, normalized=True, stale=stale)
    return ScaResult(protos, assignments, iterations, converged, tuple(trace))


def sca(
    source_side: Prototypes,
    target: LabeledDomain,
    cfg: KMeansConfig = KMeansConfig(),
) -> tuple[ScaResult, float]:
    """Run spherical k-means from source-side prototypes and report accuracy.

    Target labels are read only for the final accuracy figure; the
    refinement itself sees features alone.
    """
    validate_domain(target, role="target")
    if (target.labels == UNLABELED).any():
        raise UnlabeledSample("sca reports accuracy and needs a fully labeled target")
    result = spherical_kmeans(source_side, target.features, cfg)
    preds = cp_classify(result.prototypes, target.features)
    return result, float((preds == target.labels).mean())


def sca_init(method: str, clf: LinearClassifier | None, source: LabeledDomain | None,
             target: np.ndarray) -> Prototypes:
    """Build initialization prototypes by name: source_labels | mr_weights | hard | soft."""
    if method == "source_labels":
        if source is None:
            raise ValueError("source_labels init needs the source domain")
        return init_from_source_labels(source)
    if clf is None:
        raise ValueError(f"{method} init needs a fitted classifier")
    if method == "mr_weights":
        return init_from_mr_weights(clf)
    if method == "hard":
        return init_from_hard_preds(clf, target)
    if method == "soft":
        return init_from_soft_preds(predict_proba(clf, target), target)
    raise ValueError(f"unknown SCA initialization {method!r}")
