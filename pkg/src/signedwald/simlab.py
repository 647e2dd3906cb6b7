"""Simulation studies: two-hypothesis power, null calibration and closed-testing power.

Every replication draws from its own random stream keyed by
``(seed, cell, replication)``, so tables are reproducible and do not depend
on how replications are scheduled across workers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import optimize, stats

from . import _rng
from .bahadur import BahadurPoint
from .estimands import ScenarioConfig, TrialArrays, TrialRecord, landmark_estimates
from .exceptions import DegenerateCorrelation, EmptyExperiment, InputError
from .intersection import HypothesisSpec, McConfig, signed_wald_test, sw_two_closed_form, sw_two_p_analytic
from .multtest import all_subsets, closed_testing, subset_key, subset_weights

STUDY1_RHOS = (-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75)
STUDY1_S = tuple(round(-1 + 0.05 * k, 2) for k in range(41))
SAMPLE_SIZES = (200, 500, 1000, 2000, 3500)
UPWEIGHTED = (0.2, 0.4, 0.4)
EQUAL = (1 / 3, 1 / 3, 1 / 3)

# (reps, MC draws) per scale
STUDY2_SCALE = {"desk": (2000, 2000), "paper": (10_000, 10_000)}
STUDY3_SCALE = {"desk": (1000, 2000), "paper": (10_000, 10_000)}
STUDY1_SCALE = {"desk": 10_000, "paper": 100_000}

STRATEGIES = ("equal", "upweighted", "minp")


@dataclass
class StudyResultTable:
    """Long-format result table: one row per cell, CSV-friendly.

    ``columns`` fixes the output column order; every row is a dict with
    those keys.
    """

    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def select(self, **where) -> list[dict]:
        return [r for r in self.rows if all(_same(r.get(k), v) for k, v in where.items())]

    def value(self, column: str, **where):
        """The single value of ``column`` in the row matching ``where``."""
        hits = self.select(**where)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {where}")
        return hits[0][column]

    def to_csv(self, path=None) -> str:
        """Write CSV to ``path`` (if given) and return it as text."""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(row[k]) for k in self.columns})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _same(a, b) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        try:
            return math.isclose(float(a), float(b), rel_tol=1e-12, abs_tol=1e-12)
        except (TypeError, ValueError):
            return False
    return a == b


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def _rate_row(hits: int, reps: int) -> dict:
    p = hits / reps
    return {"rejection_rate": p, "std_error": math.sqrt(p * (1 - p) / reps), "reps": reps}


def _run_reps(fn, args_list, n_jobs: int):
    if n_jobs == 1:
        return [fn(*args) for args in args_list]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(*args) for args in args_list)


# ---------------------------------------------------------------- data


def simulate_arrays(cfg: ScenarioConfig, seed: int) -> TrialArrays:
    """Columnar version of :func:`simulate_trial` (same draws)."""
    rng = _rng.stream(seed)
    n = cfg.n
    a = rng.integers(0, 2, size=n)
    rate = cfg.lam + cfg.trt_hazard * a
    t = rng.exponential(1.0 / rate)
    r = (t <= cfg.tau).astype(np.int8)
    y_all = rng.normal(cfg.mu + cfg.trt_score * a, cfg.sigma)
    y = np.where(r == 1, np.nan, y_all)
    y_tilde = np.where(r == 1, cfg.gamma, y_all)
    return TrialArrays(a.astype(np.int8), r, y, y_tilde)


def simulate_trial(cfg: ScenarioConfig, seed: int) -> list[TrialRecord]:
    """Simulate one randomised landmark trial.

    ``A ~ Bernoulli(1/2)``, ``T ~ Exp(lam + trt_hazard * A)``,
    ``R = 1(T <= tau)``, ``Y ~ N(mu + trt_score * A, sigma**2)`` observed when
    ``R == 0``, and ``y_tilde = Y`` or ``gamma`` when ``R == 1``.
    """
    return list(simulate_arrays(cfg, seed))


# ---------------------------------------------------------------- study 1


def critical_value_two(rho: float, alpha: float) -> float:
    """Upper ``alpha`` quantile of the equal-weights two-hypothesis null mixture."""
    if not abs(rho) < 1 - 1e-10:
        raise DegenerateCorrelation(f"|rho| = {abs(rho)} too close to 1")
    if not 0 < alpha <= 0.5:
        raise InputError("alpha must lie in (0, 0.5]")
    hi = 1.0
    while sw_two_p_analytic(hi, rho) > alpha:
        hi *= 2.0
    return float(optimize.brentq(lambda x: sw_two_p_analytic(x, rho) - alpha, 1e-300, hi, xtol=1e-13, rtol=1e-14))


def minp_critical_value(rho: float, alpha: float) -> float:
    """``c`` with ``P(max(Z1, Z2) >= c) = alpha`` for a standard bivariate normal pair."""
    cov = np.array([[1.0, rho], [rho, 1.0]])
    mvn = stats.multivariate_normal(mean=[0.0, 0.0], cov=cov)
    lo, hi = stats.norm.isf(alpha), stats.norm.isf(alpha / 2)
    return float(optimize.brentq(lambda c: 1 - mvn.cdf([c, c]) - alpha, lo - 1e-9, hi + 1e-9, xtol=1e-12))


def minp_power(z_max: float, s: float, rho: float, crit: float) -> float:
    """``P(max(Z1, Z2) >= crit)`` with ``Z ~ N((z_max, s z_max), [[1, rho], [rho, 1]])``."""
    cov = np.array([[1.0, rho], [rho, 1.0]])
    mvn = stats.multivariate_normal(mean=[z_max, s * z_max], cov=cov)
    return float(1 - mvn.cdf([crit, crit]))


def size_alternative(s: float, rho: float, alpha: float, power: float) -> float:
    """``z_max`` at which the min-p test has the requested power."""
    crit = minp_critical_value(rho, alpha)
    hi = crit + stats.norm.isf(1 - power) + 1.0
    return float(optimize.brentq(lambda z: minp_power(z, s, rho, crit) - power, 0.0, hi, xtol=1e-12))


@dataclass(frozen=True)
class Study1Config:
    rhos: tuple[float, ...] = STUDY1_RHOS
    s_values: tuple[float, ...] = STUDY1_S
    alpha: float = 0.025
    power: float = 0.9
    reps: int = STUDY1_SCALE["desk"]
    seed: int = 0

    def __post_init__(self):
        if any(not -1 < r < 1 for r in self.rhos):
            raise InputError("correlations must lie in (-1, 1)")
        if any(not -1 <= s <= 1 for s in self.s_values):
            raise InputError("s values must lie in [-1, 1]")
        if self.reps < 100:
            raise InputError("at least 100 replications per cell")
        if not 0 < self.alpha < 0.5 or not 0 < self.power < 1:
            raise InputError("alpha must lie in (0, 0.5) and power in (0, 1)")


def run_study1(cfg: Study1Config) -> StudyResultTable:
    """Power of the signed Wald and min-p tests for two hypotheses.

    For each ``(rho, s)`` the alternative ``(z_max, s z_max)`` is sized so
    the min-p test has power ``cfg.power``; standardized pairs are drawn from
    ``N((z_max, s z_max), R)`` and each test rejects at its own critical value.
    """
    table = StudyResultTable(
        ["rho", "s", "z_max", "sw_power", "sw_std_error", "minp_power", "minp_std_error", "reps"]
    )
    for i, rho in enumerate(cfg.rhos):
        c_sw = critical_value_two(rho, cfg.alpha)
        c_mp = minp_critical_value(rho, cfg.alpha)
        chol = np.linalg.cholesky(np.array([[1.0, rho], [rho, 1.0]]))
        for k, s in enumerate(cfg.s_values):
            pt = BahadurPoint.from_ratio(size_alternative(s, rho, cfg.alpha, cfg.power), s, rho)
            z = _rng.stream(cfg.seed, i, k).standard_normal((cfg.reps, 2)) @ chol.T
            z += (pt.z_max, pt.z_min)
            sw = np.mean(sw_two_closed_form(z[:, 0], z[:, 1], rho) >= c_sw)
            mp = np.mean(z.max(axis=1) >= c_mp)
            table.rows.append(
                {
                    "rho": float(rho),
                    "s": float(s),
                    "z_max": pt.z_max,
                    "sw_power": float(sw),
                    "sw_std_error": math.sqrt(sw * (1 - sw) / cfg.reps),
                    "minp_power": float(mp),
                    "minp_std_error": math.sqrt(mp * (1 - mp) / cfg.reps),
                    "reps": cfg.reps,
                }
            )
    return table


# ---------------------------------------------------------------- study 2


def default_null_scenarios() -> list[ScenarioConfig]:
    return [
        ScenarioConfig(n=n, mu=mu, lam=lam)
        for mu in (40.0, 45.0)
        for n in SAMPLE_SIZES
        for lam in (0.05, 0.08)
    ]


def _null_tests(weight_sets):
    """``(label, subset, weights)`` for the triple and the pairs of each weight set.

    A pair whose renormalised weights repeat an earlier test is skipped.
    """
    seen, out = [], []
    for label, w in weight_sets:
        for subset in [(0, 1, 2), (0, 1), (0, 2), (1, 2)]:
            sw = tuple(np.round(subset_weights(w, subset), 12))
            if (subset, sw) in seen:
                continue
            seen.append((subset, sw))
            out.append((label, subset, sw))
    return out


def _study2_rep(cfg, tests, draws, seed, alpha):
    est = landmark_estimates(simulate_arrays(cfg, seed), cfg.gamma)
    hits = []
    for t, (_, subset, w) in enumerate(tests):
        spec = HypothesisSpec(deltas=(0.0,) * len(subset), weights=w, alpha=alpha)
        mc = McConfig(draws=draws, seed=_rng.derive_seed(seed, 1 + t))
        hits.append(signed_wald_test(est.subset(subset), spec, mc).p_value <= alpha)
    return hits


def run_study2(
    scenarios: Sequence[ScenarioConfig] | None = None,
    weight_sets=None,
    reps: int = STUDY2_SCALE["desk"][0],
    mc: McConfig | None = None,
    seed: int = 0,
    alpha: float = 0.025,
    n_jobs: int = 1,
) -> StudyResultTable:
    """Type 1 error of the intersection tests under the global null.

    Parameters
    ----------
    scenarios : sequence of ScenarioConfig
        Treatment effects are forced to zero, so all three contrasts vanish.
    weight_sets : sequence of (label, weights)
        Defaults to equal weights and ``(0.2, 0.4, 0.4)``.
    mc : McConfig
        Draws per test; its seed is unused (per-test seeds derive from ``seed``).
    """
    if reps <= 0:
        raise EmptyExperiment("reps must be positive")
    scenarios = default_null_scenarios() if scenarios is None else list(scenarios)
    if not scenarios:
        raise EmptyExperiment("no scenarios")
    weight_sets = [("equal", EQUAL), ("upweighted", UPWEIGHTED)] if weight_sets is None else list(weight_sets)
    draws = STUDY2_SCALE["desk"][1] if mc is None else mc.draws
    tests = _null_tests(weight_sets)
    table = StudyResultTable(
        ["hypothesis", "n", "mu", "lam", "weights", "sub_weights", "rejection_rate", "std_error", "reps"]
    )
    for c, cfg in enumerate(scenarios):
        cfg = replace(cfg, trt_hazard=0.0, trt_score=0.0)
        args = [(cfg, tests, draws, _rng.derive_seed(seed, c, r), alpha) for r in range(reps)]
        hits = np.array(_run_reps(_study2_rep, args, n_jobs))
        for t, (label, subset, w) in enumerate(tests):
            row = {
                "hypothesis": subset_key(subset),
                "n": cfg.n,
                "mu": cfg.mu,
                "lam": cfg.lam,
                "weights": label,
                "sub_weights": " ".join(f"{x:.4g}" for x in w),
            }
            row.update(_rate_row(int(hits[:, t].sum()), reps))
            table.rows.append(row)
    return table


# ---------------------------------------------------------------- study 3


def power_scenario(n: int) -> ScenarioConfig:
    """Effects giving theta = (0.032, 2.7, 3.23) approximately."""
    return ScenarioConfig(n=n, mu=40.0, sigma=15.0, lam=0.07, tau=2.0, gamma=15.0, trt_hazard=-0.018, trt_score=2.7)


def _strategy(name: str):
    if name == "equal":
        return "sw", EQUAL
    if name == "upweighted":
        return "sw", UPWEIGHTED
    if name == "minp":
        return "minp", EQUAL
    raise InputError(f"unknown strategy {name!r}; expected one of {STRATEGIES}")


def _study3_rep(cfg, strategies, draws, seed, alpha):
    est = landmark_estimates(simulate_arrays(cfg, seed), cfg.gamma)
    # common random numbers: every strategy sees the same data and MC seed
    mc = McConfig(draws=draws, seed=_rng.derive_seed(seed, 1))
    out = []
    for name in strategies:
        method, w = _strategy(name)
        rep = closed_testing(est, global_w=w, alpha=alpha, mc=mc, method=method)
        out.append(rep.rejected.copy())
    return out


def run_study3(
    sample_sizes: Iterable[int] = SAMPLE_SIZES,
    strategies: Sequence[str] = STRATEGIES,
    reps: int = STUDY3_SCALE["desk"][0],
    mc: McConfig | None = None,
    seed: int = 0,
    alpha: float = 0.025,
    scenario: ScenarioConfig | None = None,
    n_jobs: int = 1,
) -> StudyResultTable:
    """Power of closed testing to reject each subset of the three hypotheses.

    A subset counts as rejected in a replication when all its hypotheses
    are in the final rejection set, so a superset never has higher power
    than any of its subsets.
    """
    if reps <= 0:
        raise EmptyExperiment("reps must be positive")
    for name in strategies:
        _strategy(name)
    draws = STUDY3_SCALE["desk"][1] if mc is None else mc.draws
    base = power_scenario(500) if scenario is None else scenario
    subsets = all_subsets(3)
    table = StudyResultTable(["n", "strategy", "subset", "power", "std_error", "reps"])
    for c, n in enumerate(sample_sizes):
        cfg = replace(base, n=int(n))
        args = [(cfg, tuple(strategies), draws, _rng.derive_seed(seed, c, r), alpha) for r in range(reps)]
        rejected = np.array(_run_reps(_study3_rep, args, n_jobs))  # reps x strategies x 3
        for k, name in enumerate(strategies):
            for subset in subsets:
                hits = int(np.all(rejected[:, k, list(subset)], axis=1).sum())
                rate = _rate_row(hits, reps)
                table.rows.append(
                    {
                        "n": int(n),
                        "strategy": name,
                        "subset": subset_key(subset),
                        "power": rate["rejection_rate"],
                        "std_error": rate["std_error"],
                        "reps": reps,
                    }
                )
    return table
