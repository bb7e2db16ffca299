"""Experiment execution, failure metrics, and the synthetic pair generator.

The generator places one Gaussian blob per class at scaled
standard-basis vertices (so every pair of class anchors is the same
distance apart) and produces the target domain by drawing fresh blobs
from the same anchors and pushing them through
translate -> per-dimension scale -> in-plane rotation.

run_pair realizes the two-step protocol: everything source-side is
fitted first, the adaptation step then sees a label-stripped view of
the target, and accuracy is finally evaluated transductively on the
very rows used for adaptation. An adaptation run "fails" when its
target accuracy lands strictly below the linear-probing baseline.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    DimMismatch,
    EmptyInput,
    LabeledDomain,
    SfudaError,
    UNLABELED,
    UnlabeledSample,
    validate_domain,
)
from .align import KMeansConfig, sca_init, spherical_kmeans
from .probing import (
    FitConfig,
    cp_classify,
    class_prototypes,
    fit_multinomial,
    lp_accuracy,
    predict_labels,
)
from .shot import ShotConfig, estimate_stats, shot_lite_adapt, standardize
from .stats import mean_std

METHODS = ("lp", "cp", "sca", "shot_lite", "ft_stats")


class UnknownMethod(SfudaError):
    pass


class MissingKey(SfudaError):
    pass


@dataclass(frozen=True)
class ShiftSpec:
    """Synthetic domain-pair recipe; fully determined by its seed."""

    num_classes: int
    dim: int
    samples_per_class: int
    class_separation: float
    noise_sigma: float
    rotation_angle: float = 0.0
    translation: tuple = None
    per_dim_scale: tuple = None
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.dim < self.num_classes:
            raise ValueError("dim must be >= num_classes (one anchor axis per class)")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.class_separation <= 0:
            raise ValueError("class_separation must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        translation = (
            np.zeros(self.dim) if self.translation is None else np.asarray(self.translation, float)
        )
        scale = (
            np.ones(self.dim) if self.per_dim_scale is None else np.asarray(self.per_dim_scale, float)
        )
        if translation.shape != (self.dim,) or scale.shape != (self.dim,):
            raise ValueError("translation and per_dim_scale must have length dim")
        if (scale <= 0).any():
            raise ValueError("per_dim_scale entries must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "translation", tuple(float(v) for v in translation))
        object.__setattr__(self, "per_dim_scale", tuple(float(v) for v in scale))


def _anchors(spec: ShiftSpec) -> np.ndarray:
    # scaled basis vertices: every anchor pair is class_separation apart
    a = np.zeros((spec.num_classes, spec.dim))
    a[np.arange(spec.num_classes), np.arange(spec.num_classes)] = (
        spec.class_separation / np.sqrt(2.0)
    )
    return a


def _rotation(spec: ShiftSpec) -> np.ndarray:
    r = np.eye(spec.dim)
    if spec.dim >= 2:
        c, s = np.cos(spec.rotation_angle), np.sin(spec.rotation_angle)
        r[0, 0], r[0, 1], r[1, 0], r[1, 1] = c, -s, s, c
    return r


def _sample_blobs(anchors, spc, sigma, rng):
    C, D = anchors.shape
    feats = np.empty((C * spc, D))
    labels = np.empty(C * spc, dtype=np.int64)
    for c in range(C):
        feats[c * spc : (c + 1) * spc] = anchors[c] + sigma * rng.standard_normal((spc, D))
        labels[c * spc : (c + 1) * spc] = c
    return feats, labels


def gen_domain_pair(spec: ShiftSpec) -> tuple[LabeledDomain, LabeledDomain]:
    """Deterministic (given seed) source/target pair of labeled blobs.

    The target is freshly sampled from the source anchors and then
    distorted: x -> R @ (scale * (x + translation)).
    """
    rng = np.random.default_rng(spec.seed)
    anchors = _anchors(spec)
    src_feats, src_labels = _sample_blobs(anchors, spec.samples_per_class, spec.noise_sigma, rng)
    tgt_feats, tgt_labels = _sample_blobs(anchors, spec.samples_per_class, spec.noise_sigma, rng)
    tgt_feats = ((tgt_feats + np.asarray(spec.translation)) * np.asarray(spec.per_dim_scale)) @ _rotation(spec).T
    source = LabeledDomain(src_feats, src_labels, spec.num_classes)
    target = LabeledDomain(tgt_feats, tgt_labels, spec.num_classes)
    return source, target


@dataclass(frozen=True)
class ExperimentOutcome:
    """Result of one adaptation run against the linear-probing baseline.

    failed must equal (adapted < baseline), strictly: a tie is a success.
    """

    pair_id: str
    method: str
    baseline_target_acc: float
    adapted_target_acc: float
    delta: float
    failed: bool
    source_acc: float = float("nan")
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.failed != (self.adapted_target_acc < self.baseline_target_acc):
            raise ValueError("failed flag contradicts the accuracies")


def adapt_predictions(method, params, clf, source, target_feats, seed=0):
    """Target predictions of one method; takes no target labels by design.

    This is the only path run_pair uses for adaptation, so planted
    labels cannot leak into it (the transductive contract).
    """
    if method == "lp":
        preds = predict_labels(clf, target_feats)
    elif method == "cp":
        preds = cp_classify(class_prototypes(source), target_feats)
    elif method == "sca":
        init = sca_init(params.get("init", "mr_weights"), clf, source, target_feats)
        kcfg = KMeansConfig(max_iters=int(params.get("kmeans_max_iters", 100)))
        result = spherical_kmeans(init, target_feats, kcfg)
        preds = cp_classify(result.prototypes, target_feats)
    elif method == "shot_lite":
        cfg = ShotConfig(
            epochs=int(params.get("epochs", 15)),
            learning_rate=float(params.get("learning_rate", 1e-2)),
            beta=float(params.get("beta", 0.3)),
            steps_per_epoch=int(params.get("steps_per_epoch", 100)),
            pseudo_rounds=int(params.get("pseudo_rounds", 1)),
            seed=seed,
        )
        stripped = LabeledDomain(
            target_feats, np.full(len(target_feats), UNLABELED), clf.num_classes
        )
        result = shot_lite_adapt(clf, stripped, cfg)
        preds = predict_labels(clf, result.adapter.apply(target_feats))
    elif method == "ft_stats":
        src_stats = estimate_stats(source.features)
        clf_std = fit_multinomial(
            LabeledDomain(
                standardize(source.features, src_stats), source.labels, source.num_classes
            ),
            FitConfig(lam=clf.lam),
        )
        tgt_stats = estimate_stats(target_feats)
        preds = predict_labels(clf_std, standardize(target_feats, tgt_stats))
    else:
        raise UnknownMethod(f"unknown method {method!r} (expected one of {METHODS})")
    return preds


def run_pair(
    source: LabeledDomain,
    target: LabeledDomain,
    method: str,
    params: dict | None = None,
    seed: int = 0,
    pair_id: str = "pair",
    metadata: dict | None = None,
) -> ExperimentOutcome:
    """Run one (source, target, method) experiment transductively.

    The baseline is always the source-fitted linear probe evaluated on
    the raw target. Adaptation receives only target features; the held
    labels enter at the final accuracy computation.
    """
    if method not in METHODS:
        raise UnknownMethod(f"unknown method {method!r} (expected one of {METHODS})")
    params = dict(params or {})
    validate_domain(source, role="source")
    validate_domain(target, role="target")
    if (target.labels == UNLABELED).any():
        raise UnlabeledSample("run_pair needs target labels for the accuracy report")
    if source.dim != target.dim or source.num_classes != target.num_classes:
        raise DimMismatch("source and target must share D and the class count")

    clf = fit_multinomial(source, FitConfig(lam=float(params.get("lambda", 0.01))))
    source_acc = lp_accuracy(clf, source)
    baseline = lp_accuracy(clf, target)
    preds = adapt_predictions(method, params, clf, source, target.features, seed)
    adapted = float((preds == target.labels).mean())
    delta = adapted - baseline
    return ExperimentOutcome(
        pair_id=pair_id,
        method=method,
        baseline_target_acc=baseline,
        adapted_target_acc=adapted,
        delta=delta,
        failed=adapted < baseline,
        source_acc=source_acc,
        seed=seed,
        metadata=dict(metadata or {}),
    )


def failure_rate(outcomes) -> tuple[float, tuple[float, float]]:
    """Percentage of failed outcomes plus (mean, std) of all deltas."""
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyInput("failure_rate needs at least one outcome")
    rate = 100.0 * sum(o.failed for o in outcomes) / len(outcomes)
    return rate, mean_std(o.delta for o in outcomes)


def conditional_degradation(outcomes):
    """(mean, std) of deltas conditioned on success and on failure.

    Either side is None when its group is empty.
    """
    outcomes = list(outcomes)
    success = [o.delta for o in outcomes if not o.failed]
    failure = [o.delta for o in outcomes if o.failed]
    return (
        mean_std(success) if success else None,
        mean_std(failure) if failure else None,
    )


def group_summary(outcomes, group_key: str):
    """Rows (group, method, delta mean, delta std, count), ordered by
    group then method; every outcome must carry group_key in metadata."""
    outcomes = list(outcomes)
    buckets: dict[tuple[str, str], list[float]] = {}
    for o in outcomes:
        if group_key not in o.metadata:
            raise MissingKey(f"outcome {o.pair_id!r} lacks metadata key {group_key!r}")
        buckets.setdefault((str(o.metadata[group_key]), o.method), []).append(o.delta)
    rows = []
    for (group, method) in sorted(buckets):
        mean, std = mean_std(buckets[(group, method)])
        rows.append((group, method, mean, std, len(buckets[(group, method)])))
    return rows
