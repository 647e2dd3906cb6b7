"""Estimate sets, influence-function stacking and the landmark-trial estimands.

An :class:`EstimateSet` carries the estimates of J treatment effects together
with the covariance of their joint asymptotic normal limit. When the
estimators are asymptotically linear, the joint covariance is the second
moment of the stacked influence values; no model of the joint behaviour is
required beyond that.

The landmark-trial estimators cover a two-arm trial with a terminal event
before a landmark time and a score observed only without the event:

* ``theta1``: difference in probability of no terminal event,
* ``theta2``: difference in mean score among those without the event,
* ``theta3``: difference in mean composite score, where the terminal event
  is scored as the penalty value ``gamma``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import (
    DimensionMismatch,
    EmptyArm,
    InputError,
    NonFiniteInput,
    NoSurvivors,
    TooFewRows,
)
from .linalg import check_psd

COVARIANCE_KINDS = ("asymptotic", "per_estimate")


def stack_covariance(influence) -> np.ndarray:
    """Sandwich covariance ``(1/n) * sum_i phi_i phi_i^T`` of stacked influence values.

    Parameters
    ----------
    influence : array_like, shape (n, J)
        Empirical influence values, one row per subject.

    Returns
    -------
    ndarray, shape (J, J)
        Estimate of the covariance of ``sqrt(n) * (theta_hat - theta)``.
    """
    phi = np.asarray(influence, dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    if phi.ndim != 2:
        raise DimensionMismatch(f"influence must be 2-d, got shape {phi.shape}")
    if not np.all(np.isfinite(phi)):
        raise NonFiniteInput("influence matrix has non-finite entries")
    n = phi.shape[0]
    if n < 2:
        raise TooFewRows(f"need at least 2 rows of influence values, got {n}")
    sigma = phi.T @ phi / n
    return 0.5 * (sigma + sigma.T)


@dataclass(frozen=True, eq=False)
class EstimateSet:
    """Estimates of J effects with the covariance of their asymptotic limit.

    ``sigma_hat`` is the asymptotic covariance of ``sqrt(n) * (theta_hat - theta)``;
    ``sigma_hat / n`` (see :attr:`per_estimate_cov`) is the covariance of the
    estimates themselves.
    """

    n: int
    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    influence: np.ndarray | None = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InputError(f"sample size must be a positive integer, got {self.n}")
        theta = np.atleast_1d(np.asarray(self.theta_hat, dtype=float)).copy()
        if theta.ndim != 1:
            raise DimensionMismatch("theta_hat must be a vector")
        if not np.all(np.isfinite(theta)):
            raise NonFiniteInput("theta_hat has non-finite entries")
        sigma = check_psd(np.atleast_2d(self.sigma_hat))
        if sigma.shape != (theta.size, theta.size):
            raise DimensionMismatch(
                f"sigma_hat has shape {sigma.shape}, expected ({theta.size}, {theta.size})"
            )
        names = tuple(self.names) or tuple(f"theta{j + 1}" for j in range(theta.size))
        if len(names) != theta.size:
            raise DimensionMismatch("names must match the number of estimates")
        infl = self.influence
        if infl is not None:
            infl = np.asarray(infl, dtype=float).copy()
            if infl.ndim != 2 or infl.shape[1] != theta.size:
                raise DimensionMismatch("influence must have one column per estimate")
            infl.setflags(write=False)
        theta.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "sigma_hat", sigma)
        object.__setattr__(self, "influence", infl)
        object.__setattr__(self, "names", names)

    @property
    def dim(self) -> int:
        return self.theta_hat.size

    @property
    def per_estimate_cov(self) -> np.ndarray:
        return self.sigma_hat / self.n

    @property
    def std_err(self) -> np.ndarray:
        return np.sqrt(np.diag(self.sigma_hat) / self.n)

    @classmethod
    def from_influence(cls, theta_hat, influence, names: Sequence[str] = ()) -> EstimateSet:
        phi = np.asarray(influence, dtype=float)
        return cls(
            n=phi.shape[0],
            theta_hat=theta_hat,
            sigma_hat=stack_covariance(phi),
            influence=phi,
            names=tuple(names),
        )

    @classmethod
    def from_covariance(
        cls, n, theta_hat, covariance, kind: str = "asymptotic", names: Sequence[str] = ()
    ) -> EstimateSet:
        """Build from either the asymptotic covariance or the per-estimate covariance.

        ``kind="per_estimate"`` means ``covariance`` is the covariance of
        ``theta_hat`` itself (what regression software calls ``vcov``), which is
        multiplied by ``n`` internally.
        """
        if kind not in COVARIANCE_KINDS:
            raise InputError(f"covariance_kind must be one of {COVARIANCE_KINDS}, got {kind!r}")
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        if kind == "per_estimate":
            cov = cov * n
        return cls(n=n, theta_hat=theta_hat, sigma_hat=cov, names=tuple(names))

    def subset(self, indices: Iterable[int]) -> EstimateSet:
        """Restrict to a subset of estimates; the covariance is the plain sub-matrix."""
        idx = list(indices)
        if not idx:
            raise InputError("subset must be non-empty")
        infl = None if self.influence is None else self.influence[:, idx]
        return EstimateSet(
            n=self.n,
            theta_hat=self.theta_hat[idx],
            sigma_hat=self.sigma_hat[np.ix_(idx, idx)],
            influence=infl,
            names=tuple(self.names[i] for i in idx),
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "names": list(self.names),
            "theta_hat": self.theta_hat.tolist(),
            "covariance": self.sigma_hat.tolist(),
            "covariance_kind": "asymptotic",
        }

    @classmethod
    def from_dict(cls, d: dict) -> EstimateSet:
        try:
            n = d["n"]
            theta = d["theta_hat"]
            cov = d["covariance"] if "covariance" in d else d["sigma_hat"]
        except KeyError as exc:
            raise InputError(f"missing field {exc.args[0]!r}") from None
        kind = d.get("covariance_kind", "asymptotic" if "sigma_hat" in d else None)
        if kind is None:
            raise InputError("covariance_kind is required ('asymptotic' or 'per_estimate')")
        return cls.from_covariance(n, theta, cov, kind=kind, names=d.get("names", ()))


def read_estimate_json(path) -> EstimateSet:
    with open(path) as fh:
        return EstimateSet.from_dict(json.load(fh))


def read_influence_csv(path) -> tuple[np.ndarray, tuple[str, ...]]:
    """Read an influence matrix: a header row of hypothesis names, then n rows of J values."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = tuple(h.strip() for h in rows[0])
    try:
        values = np.array([[float(x) for x in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if values.ndim != 2 or values.shape[1] != len(header):
        raise DimensionMismatch(f"{path}: rows do not match the {len(header)} header columns")
    return values, header


def write_influence_csv(path, influence, names: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        w.writerows(np.asarray(influence).tolist())


# --- landmark trial ---------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    """One subject: treatment ``a``, terminal event ``r``, score ``y`` (only if ``r == 0``)."""

    a: int
    r: int
    y: float | None
    y_tilde: float

    def __post_init__(self):
        if self.a not in (0, 1) or self.r not in (0, 1):
            raise InputError("a and r must be binary")
        if self.r == 0 and (self.y is None or not math.isfinite(self.y)):
            raise InputError("score y is required when r == 0")

    @classmethod
    def make(cls, a: int, r: int, y: float | None, gamma: float) -> TrialRecord:
        y = None if r == 1 else float(y)
        return cls(a=int(a), r=int(r), y=y, y_tilde=float(gamma) if r == 1 else y)


@dataclass(frozen=True, eq=False)
class TrialArrays:
    """Columnar trial data; ``y`` holds NaN where ``r == 1`` and is never read there."""

    a: np.ndarray
    r: np.ndarray
    y: np.ndarray
    y_tilde: np.ndarray

    def __len__(self) -> int:
        return self.a.size

    def __iter__(self) -> Iterator[TrialRecord]:
        for a, r, y, yt in zip(self.a, self.r, self.y, self.y_tilde):
            yield TrialRecord(int(a), int(r), None if r else float(y), float(yt))

    @classmethod
    def from_records(cls, records: Sequence[TrialRecord]) -> TrialArrays:
        a = np.array([rec.a for rec in records], dtype=np.int8)
        r = np.array([rec.r for rec in records], dtype=np.int8)
        y = np.array([np.nan if rec.r else rec.y for rec in records], dtype=float)
        yt = np.array([rec.y_tilde for rec in records], dtype=float)
        return cls(a, r, y, yt)


def landmark_estimates(data, gamma: float) -> EstimateSet:
    """Estimate the three landmark contrasts with their stacked influence functions.

    Parameters
    ----------
    data : TrialArrays or sequence of TrialRecord
    gamma : float
        Penalty score assigned to a terminal event. Stored ``y_tilde`` values
        must agree with it.

    Returns
    -------
    EstimateSet
        ``theta_hat = (theta1, theta2, theta3)`` and the influence matrix
        ``phi_j = psi_j1 - psi_j0`` evaluated with empirical plug-in moments,
        so every influence column has mean zero up to rounding.
    """
    arr = data if isinstance(data, TrialArrays) else TrialArrays.from_records(list(data))
    a = arr.a.astype(float)
    alive = 1.0 - arr.r.astype(float)
    n = a.size
    n1 = a.sum()
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        raise EmptyArm("both treatment arms need at least one record")
    if np.sum(alive * a) == 0 or np.sum(alive * (1 - a)) == 0:
        raise NoSurvivors("an arm has no record without terminal event")
    y = np.where(alive > 0, arr.y, 0.0)
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("score missing for a record without terminal event")
    yt = alive * y + (1.0 - alive) * gamma
    if not np.allclose(yt, arr.y_tilde, rtol=0.0, atol=1e-9 * max(1.0, abs(gamma))):
        raise InputError("stored composite scores disagree with gamma")

    def contrast_terms(num, den):
        # ratio of means E(num)/E(den) and its influence function
        m_num, m_den = num.mean(), den.mean()
        return m_num / m_den, (num - m_num) / m_den - m_num / m_den**2 * (den - m_den)

    b = 1.0 - a
    est, psi = zip(
        contrast_terms(alive * a, a),
        contrast_terms(alive * b, b),
        contrast_terms(y * alive * a, alive * a),
        contrast_terms(y * alive * b, alive * b),
        contrast_terms(yt * a, a),
        contrast_terms(yt * b, b),
    )
    theta = np.array([est[0] - est[1], est[2] - est[3], est[4] - est[5]])
    phi = np.column_stack([psi[0] - psi[1], psi[2] - psi[3], psi[4] - psi[5]])
    return EstimateSet.from_influence(theta, phi, names=("theta1", "theta2", "theta3"))


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of the simulated landmark trial.

    ``lam`` is the baseline hazard of the terminal event, ``trt_hazard`` the
    additive hazard shift under treatment and ``trt_score`` the mean score
    shift under treatment. Treatment is randomised 1:1.
    """

    n: int = 500
    mu: float = 40.0
    sigma: float = 15.0
    lam: float = 0.07
    tau: float = 2.0
    gamma: float = 15.0
    trt_hazard: float = 0.0
    trt_score: float = 0.0
    weights: tuple[float, ...] = field(default=(1 / 3, 1 / 3, 1 / 3))

    def __post_init__(self):
        if self.lam <= 0 or self.lam + self.trt_hazard <= 0:
            raise InputError("hazards must be positive in both arms")
        if self.sigma <= 0:
            raise InputError("sigma must be positive")
        if self.n < 2:
            raise InputError("n must be at least 2")
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown scenario keys: {sorted(unknown)}")
        if "weights" in d:
            d["weights"] = tuple(d["weights"])
        return cls(**d)

    def survival(self, arm: int) -> float:
        """P(R = 0 | A = arm)."""
        return math.exp(-(self.lam + self.trt_hazard * arm) * self.tau)

    def true_theta(self) -> np.ndarray:
        s0, s1 = self.survival(0), self.survival(1)
        m0, m1 = self.mu, self.mu + self.trt_score
        g = self.gamma
        return np.array([s1 - s0, m1 - m0, (s1 * m1 + (1 - s1) * g) - (s0 * m0 + (1 - s0) * g)])


def theoretical_sigma(cfg: ScenarioConfig) -> np.ndarray:
    """Closed-form asymptotic covariance of the three landmark estimators."""
    sigma = np.zeros((3, 3))
    p_arm = 0.5
    for arm in (0, 1):
        surv = cfg.survival(arm)
        v_r = surv * (1.0 - surv)
        v_y = cfg.sigma**2
        gap = cfg.mu + cfg.trt_score * arm - cfg.gamma
        s13 = gap * v_r / p_arm
        sigma += np.array(
            [
                [v_r / p_arm, 0.0, s13],
                [0.0, v_y / (surv * p_arm), v_y / p_arm],
                [s13, v_y / p_arm, gap**2 * v_r / p_arm + surv * v_y / p_arm],
            ]
        )
    return sigma


def load_json(path) -> dict:
    with open(Path(path)) as fh:
        return json.load(fh)
