"""Analysis models: OLS accuracy fits, goodness-of-fit, significance pruning.

Two model families explain downstream accuracy from benchmark accuracy
and a binary pretraining indicator:

    simple:       accuracy = m * top1 + q + eps
    interaction:  accuracy = (m + dm * pretrain) * top1 + q + dq * pretrain + eps

Fits solve the normal equations by Cholesky factorization (at most 4
parameters; condition threshold 1e12 rejects rank-deficient designs)
and report R^2, adjusted R^2 = 1 - (1 - R^2)(N - 1)/(N - df), classical
standard errors, and two-sided Student-t p-values via the regularized
incomplete beta identity p = I_{v/(v+t^2)}(v/2, 1/2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EmptyInput, SfudaError, TooFewSamples

_COND_LIMIT = 1e12
_BETA_EPS = 1e-12
_BETA_MAX_ITERS = 300
_FPMIN = 1e-300
_ZERO_RES_RTOL = 1e-24

TERM_NAMES = ("q", "m", "dq", "dm")


class RankDeficient(SfudaError):
    pass


class MissingGroup(SfudaError):
    pass


class DegenerateDof(SfudaError):
    pass


class DegenerateVariance(SfudaError):
    pass


class NumericsError(SfudaError):
    pass


@dataclass(frozen=True)
class BackboneRecord:
    """One model's benchmark accuracy, pretraining flag, and downstream accuracy."""

    top1: float
    pretrain: int
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.top1 <= 1.0:
            raise ValueError("top1 must lie in [0, 1]")
        if self.pretrain not in (0, 1):
            raise ValueError("pretrain must be 0 or 1")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")


@dataclass(frozen=True)
class RegressionFit:
    """OLS solution with the diagnostics used for model comparison.

    terms names the design columns in coefficient order ([q, m] for the
    simple model, [q, m, dq, dm] for the interaction model); df counts
    the estimated parameters, intercept included. On a saturated fit
    (n == df, necessarily exact) adj_r2 is reported as its limiting
    value 1 and p-values follow the zero-residual convention of
    coef_pvalues.
    """

    terms: tuple
    coefficients: np.ndarray
    residuals: np.ndarray
    ss_tot: float
    ss_res: float
    r2: float
    adj_r2: float
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    df: int
    n: int

    def coef(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def pvalue(self, term: str) -> float:
        return float(self.p_values[self.terms.index(term)])


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITERS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise NumericsError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_pvalue(t: float, dof: float) -> float:
    """Two-sided p-value of a Student-t statistic with dof degrees of freedom."""
    if dof <= 0:
        raise DegenerateDof("degrees of freedom must be positive")
    if math.isnan(t):
        raise ValueError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))


def adjusted_r2(r2: float, n: int, df: int) -> float:
    """1 - (1 - R^2)(N - 1)/(N - df); requires n > df."""
    if n <= df:
        raise DegenerateDof(f"need n > df, got n={n}, df={df}")
    return 1.0 - (1.0 - r2) * (n - 1) / (n - df)


def coef_pvalues(X: np.ndarray, beta: np.ndarray, ss_res: float):
    """Standard errors, t statistics, and two-sided p-values of OLS coefficients.

    sigma^2 = SS_res / (N - df) with df = column count; a zero residual
    sum makes every standard error zero, giving t = +/-inf and p = 0
    for nonzero coefficients (t = 0, p = 1 for exactly-zero ones).
    """
    X = np.asarray(X, dtype=np.float64)
    n, df = X.shape
    xtx = X.T @ X
    if np.linalg.cond(xtx) > _COND_LIMIT:
        raise RankDeficient("design matrix is rank deficient")
    nu = n - df
    if nu > 0 and ss_res > 0.0:
        sigma2 = ss_res / nu
        cov = sigma2 * np.linalg.inv(xtx)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    else:
        se = np.zeros(df)
    t_stats = np.empty(df)
    p_values = np.empty(df)
    for j in range(df):
        if se[j] == 0.0:
            t_stats[j] = math.inf if beta[j] != 0.0 else 0.0
            p_values[j] = 0.0 if beta[j] != 0.0 else 1.0
        else:
            t_stats[j] = beta[j] / se[j]
            p_values[j] = student_t_pvalue(float(t_stats[j]), nu)
    return se, t_stats, p_values


def _design_columns(records, terms):
    top1 = np.array([r.top1 for r in records], dtype=np.float64)
    pretrain = np.array([r.pretrain for r in records], dtype=np.float64)
    cols = {"q": np.ones(len(records)), "m": top1, "dq": pretrain, "dm": top1 * pretrain}
    return np.column_stack([cols[t] for t in terms])


def _fit_terms(records, terms) -> RegressionFit:
    records = list(records)
    y = np.array([r.accuracy for r in records], dtype=np.float64)
    X = _design_columns(records, terms)
    n, df = X.shape
    xtx = X.T @ X
    if np.linalg.cond(xtx) > _COND_LIMIT:
        raise RankDeficient("design matrix is rank deficient")
    try:
        L = np.linalg.cholesky(xtx)
    except np.linalg.LinAlgError:
        raise RankDeficient("normal equations are not positive definite") from None
    beta = np.linalg.solve(L.T, np.linalg.solve(L, X.T @ y))
    residuals = y - X @ beta
    ss_res = float(residuals @ residuals)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    zero_res = ss_res <= _ZERO_RES_RTOL * max(1.0, float(y @ y))
    if zero_res:
        ss_res = 0.0
    if ss_tot == 0.0:
        if not zero_res:
            raise DegenerateVariance("response has zero variance but nonzero residuals")
        r2 = 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    adj = adjusted_r2(r2, n, df) if n > df else 1.0
    se, t_stats, p_values = coef_pvalues(X, beta, ss_res)
    return RegressionFit(
        terms=tuple(terms),
        coefficients=beta,
        residuals=residuals,
        ss_tot=ss_tot,
        ss_res=ss_res,
        r2=r2,
        adj_r2=adj,
        std_errors=se,
        t_stats=t_stats,
        p_values=p_values,
        df=df,
        n=n,
    )


def fit_linear(records) -> RegressionFit:
    """OLS of accuracy on [1, top1]; needs N >= 3 and varying top1."""
    records = list(records)
    if len(records) < 3:
        raise TooFewSamples("the simple model needs at least 3 records")
    return _fit_terms(records, ("q", "m"))


def fit_interaction(records) -> RegressionFit:
    """OLS of accuracy on [1, top1, pretrain, top1*pretrain].

    Requires both pretraining groups; insufficient top1 variation in a
    group surfaces as RankDeficient.
    """
    records = list(records)
    groups = {r.pretrain for r in records}
    if groups != {0, 1}:
        raise MissingGroup("interaction model needs records from both pretrain groups")
    return _fit_terms(records, TERM_NAMES)


def prune_insignificant(records, alpha: float = 0.01):
    """Backward-eliminate dm/dq terms whose p-value exceeds alpha.

    Starts from the interaction fit; while either group term is
    insignificant, the larger-p one is dropped and the reduced design is
    refitted. The intercept q and slope m are never dropped. Returns
    (final fit, removed term names in removal order).
    """
    records = list(records)
    fit = fit_interaction(records)
    removed: list[str] = []
    terms = list(TERM_NAMES)
    while True:
        candidates = [t for t in ("dq", "dm") if t in terms]
        over = [(fit.pvalue(t), t) for t in candidates if fit.pvalue(t) > alpha]
        if not over:
            return fit, removed
        _, worst = max(over)
        terms.remove(worst)
        removed.append(worst)
        fit = _fit_terms(records, tuple(terms))


def mean_std(values) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation (N in the denominator).

    Sums via math.fsum, so the result is exactly invariant to the order
    of the values.
    """
    vals = [float(v) for v in values]
    if not vals:
        raise EmptyInput("mean_std needs at least one value")
    mean = math.fsum(vals) / len(vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
    return mean, math.sqrt(var)
