"""Intersection tests for one-sided null hypotheses ``theta_j <= delta_j``.

The weighted signed Wald statistic is the squared weighted Mahalanobis
distance from the estimate to the null region::

    SW_w = inf_{theta <= delta} (theta_hat - theta)^T W V^{-1} W (theta_hat - theta)

with ``V = sigma_hat / n`` the covariance of the estimates and
``W = diag(w)``. Writing ``u_hat = V^{-1/2} W (theta_hat - delta)`` turns it
into the squared distance from ``u_hat`` to the cone ``{u : V^{1/2} u <= 0}``.
Under ``theta = delta`` the statistic converges to the same distance for
``U ~ N(0, V^{-1/2} W V W V^{-1/2})``, which is sampled to obtain p-values.

With equal weights ``SW = J**2 * SW_w`` is the unweighted statistic; for two
hypotheses its null law is the mixture
``1/2 * chi2_1 + P(polar) * chi2_2`` (plus a point mass at zero).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import _rng
from .cone import ConeSpec, project_many
from .estimands import EstimateSet
from .exceptions import DegenerateCorrelation, DimensionMismatch, EmptySample, InputError, ZeroVariance
from .linalg import correlation, sym_inv_sqrt, sym_sqrt

METHODS = ("sw_mc", "sw_two_analytic", "sw_two_mc", "minp_joint", "minp_bonferroni", "marginal")
MIN_DRAWS = 1000


@dataclass(frozen=True)
class HypothesisSpec:
    """Margins, weights and level of the family ``H_j: theta_j <= delta_j``.

    Weights must be strictly positive and are stored normalised to sum 1.
    """

    deltas: tuple[float, ...]
    weights: tuple[float, ...] | None = None
    alpha: float = 0.025

    def __post_init__(self):
        deltas = tuple(float(d) for d in np.atleast_1d(self.deltas))
        w = np.full(len(deltas), 1.0) if self.weights is None else np.atleast_1d(
            np.asarray(self.weights, dtype=float)
        )
        if w.size != len(deltas):
            raise DimensionMismatch("weights and deltas must have the same length")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InputError("weights must be strictly positive")
        if not 0 < self.alpha < 1:
            raise InputError("alpha must lie in (0, 1)")
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "weights", tuple((w / w.sum()).tolist()))

    @classmethod
    def zeros(cls, dim: int, weights=None, alpha: float = 0.025) -> HypothesisSpec:
        return cls(deltas=(0.0,) * dim, weights=weights, alpha=alpha)

    @property
    def dim(self) -> int:
        return len(self.deltas)

    @property
    def equal_weights(self) -> bool:
        w = np.asarray(self.weights)
        return bool(np.allclose(w, 1.0 / w.size, rtol=0, atol=1e-12))

    def subset(self, indices) -> HypothesisSpec:
        idx = list(indices)
        return HypothesisSpec(
            deltas=tuple(self.deltas[i] for i in idx),
            weights=tuple(self.weights[i] for i in idx),
            alpha=self.alpha,
        )


@dataclass(frozen=True)
class McConfig:
    """Monte-Carlo settings. ``n_jobs`` changes speed only, never results."""

    draws: int = 10_000
    seed: int = 0
    conservative: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        if self.draws < MIN_DRAWS:
            raise InputError(f"at least {MIN_DRAWS} Monte-Carlo draws are required, got {self.draws}")


@dataclass(frozen=True)
class TestResult:
    """Outcome of one intersection test.

    For the signed Wald methods ``statistic`` is the weighted statistic; for
    the min-p methods it is the minimum marginal p-value.
    """

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    p_value: float
    method: str
    mc: McConfig | None = None
    mc_std_error: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown method tag {self.method!r}")
        if not 0.0 <= self.p_value <= 1.0:
            raise InputError(f"p-value {self.p_value} outside [0, 1]")
        if self.method in ("sw_mc", "sw_two_mc", "minp_joint") and self.mc is None:
            raise InputError(f"method {self.method} requires Monte-Carlo settings")

    def to_dict(self) -> dict:
        d = {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method,
            "mc_std_error": self.mc_std_error,
            "mc": None if self.mc is None else asdict(self.mc),
        }
        d.update(self.extra)
        return d


def _check_dims(est: EstimateSet, spec: HypothesisSpec):
    if est.dim != spec.dim:
        raise DimensionMismatch(f"estimate set has {est.dim} entries, hypotheses {spec.dim}")


def standardized_effects(est: EstimateSet, deltas) -> np.ndarray:
    """``(theta_hat_j - delta_j) / se_j`` with ``se_j = sqrt(sigma_jj / n)``."""
    d = np.diag(est.sigma_hat)
    if np.any(d <= 0):
        raise ZeroVariance("an estimate has zero variance")
    return (est.theta_hat - np.asarray(deltas, dtype=float)) / np.sqrt(d / est.n)


def marginal_p(est: EstimateSet, j: int, delta_j: float) -> float:
    """One-sided p-value ``1 - Phi(z_j)`` for ``H_j: theta_j <= delta_j``."""
    if est.sigma_hat[j, j] <= 0:
        raise ZeroVariance(f"estimate {j} has zero variance")
    z = (est.theta_hat[j] - delta_j) / math.sqrt(est.sigma_hat[j, j] / est.n)
    return float(stats.norm.sf(z))


def sw_two_closed_form(z1, z2, rho):
    """Unweighted two-hypothesis signed Wald statistic from standardized effects.

    ``z1``, ``z2`` already include the ``sqrt(n)`` factor. Vectorised over
    array inputs.
    """
    z1, z2 = np.asarray(z1, dtype=float), np.asarray(z2, dtype=float)
    zmax, zmin = np.maximum(z1, z2), np.minimum(z1, z2)
    both = ((zmax - zmin) ** 2 + 2.0 * (1.0 - rho) * zmin * zmax) / (1.0 - rho**2)
    out = np.where(zmin <= rho * zmax, zmax**2, both)
    out = np.where(zmax >= 0, out, 0.0)
    return out if out.ndim else float(out)


def signed_wald_two(est: EstimateSet, spec: HypothesisSpec, j1: int = 0, j2: int = 1) -> float:
    """Closed-form unweighted signed Wald statistic for ``H_j1 & H_j2``.

    Equals ``4 * signed_wald_general`` on the pair with equal weights.
    """
    _check_dims(est, spec)
    w = np.asarray(spec.weights)[[j1, j2]]
    if not np.isclose(w[0], w[1], rtol=1e-12, atol=0):
        raise InputError("the closed form needs equal weights on the pair")
    sub = est.subset([j1, j2])
    rho = float(correlation(sub.sigma_hat)[0, 1])
    if abs(rho) >= 1 - 1e-10:
        raise DegenerateCorrelation(f"|rho| = {abs(rho)} too close to 1")
    z = standardized_effects(sub, [spec.deltas[j1], spec.deltas[j2]])
    return sw_two_closed_form(z[0], z[1], rho)


@dataclass(frozen=True, eq=False)
class _Standardized:
    u_hat: np.ndarray
    cone: ConeSpec
    null_factor: np.ndarray  # U = null_factor @ z with z ~ N(0, I)


def _standardize(est: EstimateSet, spec: HypothesisSpec) -> _Standardized:
    _check_dims(est, spec)
    v = est.per_estimate_cov
    root = sym_sqrt(v)
    inv_root = sym_inv_sqrt(v)
    w = np.diag(spec.weights)
    u_hat = inv_root @ w @ (est.theta_hat - np.asarray(spec.deltas))
    chol = np.linalg.cholesky(v)
    return _Standardized(u_hat, ConeSpec(root), inv_root @ w @ chol)


def signed_wald_general(est: EstimateSet, spec: HypothesisSpec) -> float:
    """Weighted signed Wald statistic via projection of ``u_hat`` onto the null cone."""
    st = _standardize(est, spec)
    _, d2 = project_many(st.u_hat[None, :], st.cone)
    return float(d2[0])


def _null_block(st: _Standardized, seed: int, k: int, rows: int) -> np.ndarray:
    z = _rng.stream(seed, k).standard_normal((rows, st.u_hat.size))
    _, d2 = project_many(z @ st.null_factor.T, st.cone)
    return d2


def null_sample_sw(est: EstimateSet, spec: HypothesisSpec, mc: McConfig) -> np.ndarray:
    """Draws from the limiting null distribution of the weighted statistic.

    Draw ``b`` uses substream ``b // 1024`` of ``mc.seed``; blocks are
    independent work items, so the output does not depend on ``mc.n_jobs``.
    """
    return _null_sample(_standardize(est, spec), mc)


def _null_sample(st: _Standardized, mc: McConfig) -> np.ndarray:
    sizes = [min(_rng.BLOCK, mc.draws - s) for s in range(0, mc.draws, _rng.BLOCK)]
    if mc.n_jobs == 1:
        parts = [_null_block(st, mc.seed, k, r) for k, r in enumerate(sizes)]
    else:
        parts = Parallel(n_jobs=mc.n_jobs, prefer="threads")(
            delayed(_null_block)(st, mc.seed, k, r) for k, r in enumerate(sizes)
        )
    return np.concatenate(parts)


def sw_p_value(statistic: float, null_sample, conservative: bool = False) -> tuple[float, float]:
    """Fraction of null realizations at or above ``statistic``, with its MC standard error.

    ``conservative=True`` uses ``(1 + count) / (1 + B)``, which is valid at
    any ``B``.
    """
    sample = np.asarray(null_sample, dtype=float).ravel()
    b = sample.size
    if b == 0:
        raise EmptySample("null sample is empty")
    count = int(np.count_nonzero(sample >= statistic))
    p = (1 + count) / (1 + b) if conservative else count / b
    return p, math.sqrt(p * (1.0 - p) / b)


def polar_probability(rho: float) -> float:
    """Probability that an isotropic normal falls in the polar cone.

    The cone is ``{u : sqrt(Sigma) u <= 0}`` with correlation ``rho`` in
    ``Sigma``; the cone itself has probability ``1/4 + asin(rho) / (2 pi)``
    and the two facet regions have 1/4 each.
    """
    return 0.25 - math.asin(rho) / (2.0 * math.pi)


def sw_two_p_analytic(statistic: float, rho: float) -> float:
    """Asymptotic p-value of the unweighted two-hypothesis statistic.

    ``P(SW >= x) = 1/2 P(chi2_1 >= x) + P(polar) P(chi2_2 >= x)`` for ``x > 0``.
    """
    if abs(rho) >= 1 - 1e-10:
        raise DegenerateCorrelation(f"|rho| = {abs(rho)} too close to 1")
    if statistic <= 0:
        return 1.0
    return float(0.5 * stats.chi2.sf(statistic, 1) + polar_probability(rho) * math.exp(-statistic / 2))


def signed_wald_test(
    est: EstimateSet,
    spec: HypothesisSpec,
    mc: McConfig | None = None,
    method: str = "mc",
) -> TestResult:
    """Weighted signed Wald intersection test.

    Parameters
    ----------
    method : {"mc", "analytic"}
        ``"analytic"`` is available for two hypotheses with equal weights
        only; every other case needs ``mc``.

    Notes
    -----
    For a single hypothesis the test is the one-sided marginal test and the
    marginal p-value is returned.
    """
    _check_dims(est, spec)
    st = _standardize(est, spec)
    _, d2 = project_many(st.u_hat[None, :], st.cone)
    stat = float(d2[0])
    extra = {"deltas": list(spec.deltas), "weights": list(spec.weights), "names": list(est.names)}
    if spec.dim == 1:
        return TestResult(stat, marginal_p(est, 0, spec.deltas[0]), "marginal", extra=extra)
    if method == "analytic":
        if spec.dim != 2 or not spec.equal_weights:
            raise InputError("the analytic p-value needs two hypotheses with equal weights")
        rho = float(correlation(est.sigma_hat)[0, 1])
        return TestResult(stat, sw_two_p_analytic(4.0 * stat, rho), "sw_two_analytic", extra=extra)
    if method != "mc":
        raise InputError(f"unknown method {method!r}")
    if mc is None:
        raise InputError("Monte-Carlo settings (with a seed) are required")
    tag = "sw_two_mc" if spec.dim == 2 else "sw_mc"
    if stat == 0.0:
        # every realization is >= 0
        p, se = 1.0, 0.0
    else:
        p, se = sw_p_value(stat, _null_sample(st, mc), mc.conservative)
    return TestResult(stat, p, tag, mc=mc, mc_std_error=se, extra=extra)


def minp_test(est: EstimateSet, spec: HypothesisSpec, mc: McConfig | None = None, mode: str = "joint") -> TestResult:
    """Minimum p-value intersection test; weights are ignored.

    ``mode="joint"`` calibrates ``min_j p_j`` against the joint normal law of
    the standardized estimates (correlation from the stacked covariance) by
    Monte-Carlo; ``mode="bonferroni"`` returns ``min(1, J * min_j p_j)``.
    """
    _check_dims(est, spec)
    z = standardized_effects(est, spec.deltas)
    zmax = float(np.max(z))
    pmin = float(stats.norm.sf(zmax))
    extra = {"deltas": list(spec.deltas), "names": list(est.names)}
    if spec.dim == 1:
        return TestResult(pmin, pmin, "marginal", extra=extra)
    if mode == "bonferroni":
        return TestResult(pmin, min(1.0, spec.dim * pmin), "minp_bonferroni", extra=extra)
    if mode != "joint":
        raise InputError(f"unknown min-p mode {mode!r}")
    if mc is None:
        raise InputError("Monte-Carlo settings (with a seed) are required")
    r = correlation(est.sigma_hat)
    try:
        factor = np.linalg.cholesky(r)
    except np.linalg.LinAlgError:
        factor = sym_sqrt(r)
    draws = _rng.standard_normal_blocks(mc.seed, mc.draws, spec.dim) @ factor.T
    p, se = sw_p_value(zmax, draws.max(axis=1), mc.conservative)
    return TestResult(pmin, p, "minp_joint", mc=mc, mc_std_error=se, extra=extra)
