"""Linear probing and cluster probing of fixed feature extractors.

Linear probing fits a multinomial regressor minimizing

    lam * ||W||_F^2  +  mean_i( -log softmax(W z_i)_{y_i} )

by deterministic full-batch gradient descent (W starts at zero, fixed
step with halving whenever a step would increase the objective).
Cluster probing classifies by the nearest class prototype under cosine
dissimilarity d(a, b) = 1/2 - <a, b> / (2 |a| |b|).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DimMismatch,
    LabeledDomain,
    LinearClassifier,
    Prototypes,
    UNLABELED,
    UnlabeledSample,
    ZeroVector,
    AllCentroidsStale,
    check_features,
    l2_normalize_rows,
    validate_domain,
)

_MIN_STEP = 1e-30


@dataclass(frozen=True)
class FitConfig:
    """Solver settings for fit_multinomial.

    lam is the L2 coefficient on the squared Frobenius norm of W
    (the bias, when enabled, is unregularized).
    """

    lam: float = 0.01
    max_iters: int = 10000
    grad_tol: float = 1e-6
    step_size: float = 1.0
    use_bias: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be > 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _objective(W, bias, Z, y, lam) -> float:
    logits = Z @ W.T
    if bias is not None:
        logits = logits + bias
    logp = _log_softmax(logits)
    ce = -logp[np.arange(len(y)), y].mean()
    return lam * float((W * W).sum()) + ce


def _gradients(W, bias, Z, y, lam):
    n = len(y)
    logits = Z @ W.T
    if bias is not None:
        logits = logits + bias
    probs = np.exp(_log_softmax(logits))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    grad_w = 2.0 * lam * W + delta.T @ Z / n
    grad_b = delta.mean(axis=0) if bias is not None else None
    return grad_w, grad_b


def fit_multinomial(train: LabeledDomain, cfg: FitConfig = FitConfig()) -> LinearClassifier:
    """Fit the L2-regularized multinomial regressor on a source training set.

    Deterministic: W (and bias) start at zero, gradient descent runs
    until the gradient infinity-norm falls below cfg.grad_tol or
    cfg.max_iters is hit. Non-convergence is not an error; the returned
    classifier carries converged/grad_norm/iterations diagnostics and
    the objective trace, which is non-increasing by construction.
    """
    validate_domain(train, role="source")
    Z = train.features
    y = train.labels
    C = train.num_classes
    W = np.zeros((C, train.dim))
    bias = np.zeros(C) if cfg.use_bias else None

    obj = _objective(W, bias, Z, y, cfg.lam)
    trace = [obj]
    step = cfg.step_size
    converged = False
    grad_norm = np.inf
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        grad_w, grad_b = _gradients(W, bias, Z, y, cfg.lam)
        grad_norm = np.abs(grad_w).max()
        if grad_b is not None:
            grad_norm = max(grad_norm, np.abs(grad_b).max())
        if grad_norm <= cfg.grad_tol:
            converged = True
            break
        while True:
            W_new = W - step * grad_w
            b_new = bias - step * grad_b if bias is not None else None
            obj_new = _objective(W_new, b_new, Z, y, cfg.lam)
            if obj_new <= obj:
                break
            step *= 0.5
            if step < _MIN_STEP:
                break
        if step < _MIN_STEP:
            break
        W, bias, obj = W_new, b_new, obj_new
        trace.append(obj)
    return LinearClassifier(
        weights=W,
        bias=bias,
        lam=cfg.lam,
        converged=converged,
        grad_norm=float(grad_norm),
        iterations=iterations,
        objective_trace=tuple(trace),
    )


def predict_proba(clf: LinearClassifier, feats: np.ndarray) -> np.ndarray:
    """Softmax probabilities, computed with max-subtraction for overflow safety."""
    feats = np.asarray(feats, dtype=np.float64)
    check_features(feats)
    if feats.shape[1] != clf.dim:
        raise DimMismatch(f"features have D={feats.shape[1]}, classifier expects {clf.dim}")
    logits = feats @ clf.weights.T
    if clf.bias is not None:
        logits = logits + clf.bias
    return np.exp(_log_softmax(logits))


def predict_labels(clf: LinearClassifier, feats: np.ndarray) -> np.ndarray:
    """Argmax-probability labels; ties go to the lowest class index."""
    return np.argmax(predict_proba(clf, feats), axis=1)


def lp_accuracy(clf: LinearClassifier, test: LabeledDomain) -> float:
    """Fraction of argmax predictions matching the labels of a fully labeled set."""
    validate_domain(test, role="target")
    if (test.labels == UNLABELED).any():
        raise UnlabeledSample("accuracy needs a fully labeled test set")
    preds = predict_labels(clf, test.features)
    return float((preds == test.labels).mean())


def class_prototypes(train: LabeledDomain) -> Prototypes:
    """Per-class arithmetic means of the feature vectors (unnormalized)."""
    validate_domain(train, role="source")
    centroids = np.empty((train.num_classes, train.dim))
    for c in range(train.num_classes):
        centroids[c] = train.features[train.labels == c].mean(axis=0)
    return Prototypes(centroids, normalized=False)


def cosine_dissim(a, b) -> float:
    """Cosine dissimilarity 1/2 - cos(a, b)/2, in [0, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimMismatch("vectors must have the same length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine dissimilarity is undefined for a zero vector")
    return float(np.clip(0.5 - 0.5 * (a @ b) / (na * nb), 0.0, 1.0))


def cp_classify(protos: Prototypes, feats: np.ndarray) -> np.ndarray:
    """Assign each row the class of its minimum-dissimilarity centroid.

    Ties break to the lowest class index; stale centroids never win.
    """
    feats = np.asarray(feats, dtype=np.float64)
    check_features(feats)
    if feats.shape[1] != protos.dim:
        raise DimMismatch(f"features have D={feats.shape[1]}, prototypes expect {protos.dim}")
    if protos.stale.all():
        raise AllCentroidsStale("every centroid is stale")
    norms = np.linalg.norm(feats, axis=1)
    if (norms == 0.0).any():
        raise ZeroVector("feature matrix contains an all-zero row")
    live = ~protos.stale
    unit_feats = feats / norms[:, None]
    unit_centroids = l2_normalize_rows(protos.centroids[live])
    dissim = np.full((feats.shape[0], protos.num_classes), np.inf)
    dissim[:, live] = 0.5 - 0.5 * (unit_feats @ unit_centroids.T)
    return np.argmin(dissim, axis=1).astype(np.int64)


def cp_accuracy(train: LabeledDomain, test: LabeledDomain) -> float:
    """Cluster-probing accuracy: prototypes from train, cosine 1-NN on test."""
    validate_domain(train, role="source")
    validate_domain(test, role="target")
    if (test.labels == UNLABELED).any():
        raise UnlabeledSample("accuracy needs a fully labeled test set")
    if test.dim != train.dim or test.num_classes != train.num_classes:
        raise DimMismatch("train and test must share D and the class count")
    preds = cp_classify(class_prototypes(train), test.features)
    return float((preds == test.labels).mean())
