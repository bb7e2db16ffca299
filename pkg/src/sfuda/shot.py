"""Pseudo-labeling with a fixed classifier plus a trainable feature adapter.

The adapter is a plain affine map z -> M z + b (initialized to the
identity), trained full-batch on

    L = mean per-sample entropy + sum_c pbar_c log pbar_c + beta * CE(pseudo)

with the classifier frozen, where pbar is the batch-mean prediction and
the pseudo-labels come from probability-weighted prototypes refined by
spherical k-means. This is deliberately a linear stand-in for deep
extractor fine-tuning and is labeled "shot_lite" in all outputs.

The module also hosts the feature-statistics adaptation path: estimate
per-dimension mean/std on a domain and standardize with them, the
feature-space analog of swapping normalization statistics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DimMismatch,
    LabeledDomain,
    LinearClassifier,
    Prototypes,
    TooFewSamples,
    UNLABELED,
    check_features,
    validate_domain,
)
from .align import KMeansConfig, init_from_soft_preds, spherical_kmeans
from .probing import _log_softmax, cp_classify, predict_labels, predict_proba

_MIN_STEP = 1e-30
_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class FeatureAdapter:
    """Affine feature map z -> M z + b with a D x D matrix and length-D offset."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        b = np.array(self.offset, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimMismatch("adapter matrix must be square")
        if b.shape != (m.shape[0],):
            raise DimMismatch("adapter offset length must match the matrix")
        if not (np.isfinite(m).all() and np.isfinite(b).all()):
            raise ValueError("adapter parameters must be finite")
        m.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", b)

    @classmethod
    def identity(cls, dim: int) -> "FeatureAdapter":
        return cls(np.eye(dim), np.zeros(dim))

    def apply(self, feats: np.ndarray) -> np.ndarray:
        feats = np.asarray(feats, dtype=np.float64)
        if feats.shape[1] != self.matrix.shape[0]:
            raise DimMismatch("adapter dimension does not match the features")
        return feats @ self.matrix.T + self.offset


@dataclass(frozen=True)
class ShotConfig:
    """Adapter-training settings.

    learning_rate = 0 is allowed as a degenerate no-step value (the
    adapter stays at the identity). pseudo_rounds > 1 re-derives
    prototypes from the hard pseudo-labels and reruns the k-means
    refinement that many times per epoch.
    """

    epochs: int = 15
    learning_rate: float = 1e-2
    beta: float = 0.3
    grad_tol: float = 1e-6
    seed: int = 0
    steps_per_epoch: int = 100
    kmeans_max_iters: int = 100
    pseudo_rounds: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be >= 1")
        if self.pseudo_rounds < 1:
            raise ValueError("pseudo_rounds must be >= 1")


@dataclass(frozen=True)
class FeatureStats:
    """Per-dimension mean and (floored) population standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        std = np.array(self.std, dtype=np.float64)
        if mean.ndim != 1 or std.shape != mean.shape:
            raise DimMismatch("mean and std must be vectors of the same length")
        if (std < _STD_FLOOR).any():
            raise ValueError(f"std entries must be >= {_STD_FLOOR}")
        mean.flags.writeable = False
        std.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class ShotLiteResult:
    """Adapter plus traces: accuracy_trace[0] is the pre-adaptation accuracy,
    then one entry per epoch (NaN when the target carries no labels);
    loss_traces holds the accepted-step losses of every epoch."""

    adapter: FeatureAdapter
    accuracy_trace: tuple
    loss_traces: tuple
    pseudo_labels: np.ndarray


def shot_pseudo_labels(
    clf: LinearClassifier,
    target: np.ndarray,
    cfg: KMeansConfig = KMeansConfig(),
    rounds: int = 1,
) -> tuple[np.ndarray, Prototypes]:
    """Pseudo-labels from probability-weighted prototypes refined on the sphere.

    Soft predictions of the fixed classifier initialize the centroids,
    spherical k-means refines them, and the cosine 1-NN rule over the
    final prototypes yields the labels. Additional rounds rebuild
    centroids from the current hard labels and rerun the refinement.
    """
    target = np.asarray(target, dtype=np.float64)
    check_features(target)
    probs = predict_proba(clf, target)
    protos = init_from_soft_preds(probs, target)
    result = spherical_kmeans(protos, target, cfg)
    labels = cp_classify(result.prototypes, target)
    for _ in range(rounds - 1):
        onehot = np.zeros((len(labels), clf.num_classes))
        onehot[np.arange(len(labels)), labels] = 1.0
        protos = init_from_soft_preds(onehot, target)
        result = spherical_kmeans(protos, target, cfg)
        labels = cp_classify(result.prototypes, target)
    return labels, result.prototypes


def im_loss(probs: np.ndarray) -> tuple[float, np.ndarray]:
    """Information-maximization loss and its gradient w.r.t. the logits.

    L = mean_i H(p_i) + sum_c pbar_c log pbar_c. Both terms vanish when
    every row is one-hot on a single class, and they cancel exactly for
    uniform rows.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1:
        raise DimMismatch("probs must be a nonempty N x C matrix")
    n = probs.shape[0]
    logp = np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0)
    row_entropy = -(probs * logp).sum(axis=1)
    pbar = probs.mean(axis=0)
    logpbar = np.where(pbar > 0, np.log(np.where(pbar > 0, pbar, 1.0)), 0.0)
    value = float(row_entropy.mean() + (pbar * logpbar).sum())
    grad = (
        probs
        * (-(logp + row_entropy[:, None]) + logpbar[None, :] - (probs @ logpbar)[:, None])
        / n
    )
    return value, grad


def adapter_objective(
    clf: LinearClassifier,
    matrix: np.ndarray,
    offset: np.ndarray,
    feats: np.ndarray,
    pseudo: np.ndarray,
    beta: float,
    with_grad: bool = True,
):
    """Loss L_IM + beta*CE(pseudo) of the adapted features, with analytic
    gradients w.r.t. the adapter matrix and offset when requested."""
    n = feats.shape[0]
    adapted = feats @ matrix.T + offset
    logits = adapted @ clf.weights.T
    if clf.bias is not None:
        logits = logits + clf.bias
    logp = _log_softmax(logits)
    probs = np.exp(logp)
    value, grad_logits = im_loss(probs)
    if beta > 0:
        value += beta * float(-logp[np.arange(n), pseudo].mean())
        ce_grad = probs.copy()
        ce_grad[np.arange(n), pseudo] -= 1.0
        grad_logits = grad_logits + beta * ce_grad / n
    if not with_grad:
        return value, None, None
    d_adapted = grad_logits @ clf.weights
    return value, d_adapted.T @ feats, d_adapted.sum(axis=0)


def shot_lite_adapt(
    clf: LinearClassifier, target: LabeledDomain, cfg: ShotConfig = ShotConfig()
) -> ShotLiteResult:
    """Alternate pseudo-labeling and adapter training with the classifier frozen.

    Per epoch: recompute pseudo-labels on the currently adapted
    features, then run full-batch gradient descent over (M, b) with
    step halving on objective increase, so the loss trace within an
    epoch is non-increasing. Target labels feed the accuracy trace
    only, never the optimization.
    """
    validate_domain(target, role="target")
    if clf.dim != target.dim:
        raise DimMismatch("classifier and target dimensions differ")
    Z = target.features
    labeled = not (target.labels == UNLABELED).any()

    def accuracy(m, off):
        if not labeled:
            return float("nan")
        preds = predict_labels(clf, Z @ m.T + off)
        return float((preds == target.labels).mean())

    M = np.eye(target.dim)
    b = np.zeros(target.dim)
    acc_trace = [accuracy(M, b)]
    loss_traces = []
    kcfg = KMeansConfig(cfg.kmeans_max_iters)
    pseudo = predict_labels(clf, Z)
    for _ in range(cfg.epochs):
        adapted = Z @ M.T + b
        pseudo, _protos = shot_pseudo_labels(clf, adapted, kcfg, rounds=cfg.pseudo_rounds)
        epoch_losses = []
        if cfg.learning_rate > 0:
            step = cfg.learning_rate
            loss, gM, gb = adapter_objective(clf, M, b, Z, pseudo, cfg.beta)
            epoch_losses.append(loss)
            for _ in range(cfg.steps_per_epoch):
                if max(np.abs(gM).max(), np.abs(gb).max()) <= cfg.grad_tol:
                    break
                while True:
                    M_new = M - step * gM
                    b_new = b - step * gb
                    loss_new, _, _ = adapter_objective(
                        clf, M_new, b_new, Z, pseudo, cfg.beta, with_grad=False
                    )
                    if loss_new <= loss:
                        break
                    step *= 0.5
                    if step < _MIN_STEP:
                        break
                if step < _MIN_STEP:
                    break
                M, b, loss = M_new, b_new, loss_new
                epoch_losses.append(loss)
                _, gM, gb = adapter_objective(clf, M, b, Z, pseudo, cfg.beta)
        loss_traces.append(tuple(epoch_losses))
        acc_trace.append(accuracy(M, b))
    return ShotLiteResult(
        FeatureAdapter(M, b), tuple(acc_trace), tuple(loss_traces), pseudo
    )


def estimate_stats(feats: np.ndarray) -> FeatureStats:
    """Per-dimension mean and population std (floored at 1e-8); needs N >= 2."""
    feats = np.asarray(feats, dtype=np.float64)
    check_features(feats)
    if feats.shape[0] < 2:
        raise TooFewSamples("statistics need at least 2 samples")
    return FeatureStats(feats.mean(axis=0), np.maximum(feats.std(axis=0), _STD_FLOOR))


def standardize(feats: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Column-wise (x - mean) / std with the given statistics."""
    feats = np.asarray(feats, dtype=np.float64)
    check_features(feats)
    if feats.shape[1] != stats.mean.shape[0]:
        raise DimMismatch("statistics dimension does not match the features")
    return (feats - stats.mean) / stats.std
