"""Closed testing over all intersections of a family of one-sided hypotheses.

``H_j`` is rejected at level alpha when every intersection hypothesis that
contains it is rejected at level alpha by its local test, so the adjusted
p-value of ``H_j`` is the largest local p-value over those intersections.
The signed Wald intersection test is not consonant in general, and no
shortcut is used: all ``2**J - 1`` intersections are evaluated.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from . import _rng
from .estimands import EstimateSet
from .exceptions import DimensionMismatch, EmptySubset, InputError, TooManyHypotheses
from .intersection import HypothesisSpec, McConfig, TestResult, minp_test, signed_wald_test

MAX_HYPOTHESES = 20


def subset_weights(global_w, subset) -> np.ndarray:
    """Restrict ``global_w`` to ``subset`` (0-based indices) and renormalise to sum 1."""
    idx = sorted(subset)
    if not idx:
        raise EmptySubset("subset must be non-empty")
    w = np.asarray(global_w, dtype=float)
    if np.any(w <= 0):
        raise InputError("global weights must be strictly positive")
    sub = w[idx]
    return sub / sub.sum()


def subset_key(subset) -> str:
    """Canonical 1-based key, e.g. ``(0, 2) -> "1,3"``."""
    return ",".join(str(i + 1) for i in sorted(subset))


def parse_subset_key(key: str) -> tuple[int, ...]:
    return tuple(int(k) - 1 for k in key.split(","))


def _subset_code(subset) -> int:
    return sum(1 << i for i in subset)


def all_subsets(dim: int) -> list[tuple[int, ...]]:
    """Non-empty subsets ordered by size, then lexicographically."""
    return [c for k in range(1, dim + 1) for c in itertools.combinations(range(dim), k)]


@dataclass
class ClosedTestReport:
    subset_results: dict[tuple[int, ...], TestResult]
    adjusted_p: np.ndarray
    rejected: np.ndarray
    consonant: bool
    alpha: float
    names: tuple[str, ...]
    theta_hat: np.ndarray
    method: str = "sw"

    def raw_p(self, subset) -> float:
        return self.subset_results[tuple(sorted(subset))].p_value

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "alpha": self.alpha,
            "names": list(self.names),
            "theta_hat": self.theta_hat.tolist(),
            "adjusted_p": self.adjusted_p.tolist(),
            "rejected": self.rejected.tolist(),
            "consonant": self.consonant,
            "subsets": {subset_key(s): r.to_dict() for s, r in self.subset_results.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def format_table(self) -> str:
        """Plain-text report grouped into 1-way, 2-way, ... intersections."""
        width = max(len(n) for n in self.names)
        lines = ["-- Adjusted p-values --", ""]
        lines.append(f"{'':<{width}}  {'Estimate':>12}  {'adj.p':>10}  reject")
        for name, est, p, rej in zip(self.names, self.theta_hat, self.adjusted_p, self.rejected):
            lines.append(f"{name:<{width}}  {est:>12.8f}  {p:>10.8f}  {'yes' if rej else 'no'}")
        lines += ["", "-- Raw p-values for intersection hypotheses --", ""]
        dim = len(self.names)
        for k in range(1, dim + 1):
            lines.append(f"{k}-way intersections:")
            for s, res in self.subset_results.items():
                if len(s) == k:
                    label = "{" + ", ".join(self.names[i] for i in s) + "}"
                    lines.append(f"  {label:<40} p = {res.p_value:.4f}")
            lines.append("")
        lines.append(f"consonant: {self.consonant}")
        return "\n".join(lines)


def _local_test(est, subset, deltas, global_w, alpha, mc, method, minp_mode):
    sub_est = est.subset(subset)
    spec = HypothesisSpec(
        deltas=tuple(deltas[i] for i in subset),
        weights=tuple(subset_weights(global_w, subset)),
        alpha=alpha,
    )
    sub_mc = None
    if mc is not None:
        sub_mc = McConfig(
            draws=mc.draws,
            seed=_rng.derive_seed(mc.seed, _subset_code(subset)),
            conservative=mc.conservative,
        )
    if method == "sw":
        # a singleton reduces to the marginal one-sided test
        return signed_wald_test(sub_est, spec, sub_mc)
    if method == "minp":
        return minp_test(sub_est, spec, sub_mc, mode=minp_mode)
    raise InputError(f"unknown closed-testing method {method!r}")


def consonance(subset_results: dict, rejected, alpha: float) -> bool:
    """True iff each locally rejected intersection contains a finally rejected hypothesis."""
    return all(
        any(rejected[j] for j in s) for s, r in subset_results.items() if r.p_value <= alpha
    )


def closed_testing(
    est: EstimateSet,
    deltas=None,
    global_w=None,
    alpha: float = 0.025,
    mc: McConfig | None = None,
    method: str = "sw",
    minp_mode: str = "joint",
) -> ClosedTestReport:
    """Run the closed testing procedure with the signed Wald or min-p local tests.

    Parameters
    ----------
    est : EstimateSet
    deltas : array_like, optional
        Margins; zeros by default.
    global_w : array_like, optional
        Weights of the full family; each intersection uses them restricted
        and renormalised. Equal by default.
    mc : McConfig
        Master seed and draw count. The intersection with index set ``S`` uses
        a seed derived from ``(mc.seed, sum(2**j for j in S))``.
    method : {"sw", "minp"}
        Singletons are always tested with the marginal one-sided p-value.
    """
    dim = est.dim
    if dim > MAX_HYPOTHESES:
        raise TooManyHypotheses(f"{dim} hypotheses; at most {MAX_HYPOTHESES} are supported")
    deltas = np.zeros(dim) if deltas is None else np.asarray(deltas, dtype=float)
    global_w = np.full(dim, 1.0 / dim) if global_w is None else np.asarray(global_w, dtype=float)
    if deltas.size != dim or global_w.size != dim:
        raise DimensionMismatch("deltas and weights must have one entry per estimate")
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    if dim > 1 and mc is None:
        raise InputError("Monte-Carlo settings (with a seed) are required for intersections")

    subsets = all_subsets(dim)
    n_jobs = 1 if mc is None else mc.n_jobs
    args = (deltas, global_w, alpha, mc, method, minp_mode)
    if n_jobs == 1:
        results = [_local_test(est, s, *args) for s in subsets]
    else:
        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_local_test)(est, s, *args) for s in subsets
        )
    subset_results = dict(zip(subsets, results))

    adjusted = np.array([max(r.p_value for s, r in subset_results.items() if j in s) for j in range(dim)])
    rejected = adjusted <= alpha
    return ClosedTestReport(
        subset_results=subset_results,
        adjusted_p=adjusted,
        rejected=rejected,
        consonant=consonance(subset_results, rejected, alpha),
        alpha=alpha,
        names=est.names,
        theta_hat=est.theta_hat.copy(),
        method=method,
    )


def fwer_check(report: ClosedTestReport, truth) -> bool:
    """True iff no hypothesis in ``truth`` (0-based indices of true nulls) was rejected."""
    return not any(report.rejected[j] for j in truth)
