"""scikit-learn style wrappers around the functional API.

Hyper-parameters go to ``__init__`` and are exposed through
``get_params``/``set_params``; ``fit`` takes data and stores results in
attributes with a trailing underscore.

>>> import numpy as np
>>> rng = np.random.default_rng(0)
>>> phi = rng.standard_normal((400, 2))
>>> test = SignedWaldTest(seed=1, draws=2000).fit(phi - phi.mean(0), theta_hat=[0.2, 0.1])
>>> 0 <= test.p_value_ <= 1
True
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .estimands import EstimateSet, TrialArrays, landmark_estimates
from .exceptions import InputError
from .intersection import HypothesisSpec, McConfig, minp_test, signed_wald_test
from .multtest import closed_testing


def _as_estimate_set(X, theta_hat) -> EstimateSet:
    if isinstance(X, EstimateSet):
        if theta_hat is not None:
            raise InputError("theta_hat is taken from the EstimateSet")
        return X
    if theta_hat is None:
        raise InputError("theta_hat is required with an influence matrix")
    phi = check_array(X, ensure_min_samples=2)
    return EstimateSet.from_influence(np.asarray(theta_hat, dtype=float), phi)


class _IntersectionBase(BaseEstimator):
    def _mc(self):
        if self.seed is None:
            return None
        return McConfig(draws=self.draws, seed=self.seed, n_jobs=self.n_jobs)

    def _spec(self, est):
        deltas = np.zeros(est.dim) if self.deltas is None else self.deltas
        return HypothesisSpec(deltas=tuple(deltas), weights=self.weights, alpha=self.alpha)

    @property
    def reject_(self) -> bool:
        check_is_fitted(self, "p_value_")
        return self.p_value_ <= self.alpha


class SignedWaldTest(_IntersectionBase):
    """Weighted signed Wald test of ``theta_j <= delta_j`` for all ``j``.

    Parameters
    ----------
    deltas, weights : array_like, optional
        Margins (default 0) and weights (default equal).
    alpha : float
    draws : int
        Monte-Carlo draws for the null distribution.
    seed : int, optional
        Required unless ``method="analytic"`` or a single hypothesis is tested.
    method : {"mc", "analytic"}
    n_jobs : int

    Attributes
    ----------
    statistic_, p_value_ : float
    result_ : TestResult
    """

    def __init__(self, deltas=None, weights=None, alpha=0.025, draws=10_000, seed=None, method="mc", n_jobs=1):
        self.deltas = deltas
        self.weights = weights
        self.alpha = alpha
        self.draws = draws
        self.seed = seed
        self.method = method
        self.n_jobs = n_jobs

    def fit(self, X, y=None, theta_hat=None):
        """``X`` is an ``EstimateSet`` or an ``n x J`` influence matrix (then pass ``theta_hat``)."""
        est = _as_estimate_set(X, theta_hat)
        self.result_ = signed_wald_test(est, self._spec(est), self._mc(), method=self.method)
        self.statistic_ = self.result_.statistic
        self.p_value_ = self.result_.p_value
        return self


class MinPTest(_IntersectionBase):
    """Minimum p-value intersection test (joint normal calibration or Bonferroni)."""

    def __init__(self, deltas=None, alpha=0.025, draws=10_000, seed=None, mode="joint", n_jobs=1):
        self.deltas = deltas
        self.alpha = alpha
        self.draws = draws
        self.seed = seed
        self.mode = mode
        self.n_jobs = n_jobs

    weights = None

    def fit(self, X, y=None, theta_hat=None):
        est = _as_estimate_set(X, theta_hat)
        self.result_ = minp_test(est, self._spec(est), self._mc(), mode=self.mode)
        self.statistic_ = self.result_.statistic
        self.p_value_ = self.result_.p_value
        return self


class ClosedTesting(BaseEstimator):
    """Closed testing over all intersections with signed Wald or min-p local tests.

    Attributes
    ----------
    adjusted_p_ : ndarray
    rejected_ : ndarray of bool
    consonant_ : bool
    report_ : ClosedTestReport
    """

    def __init__(self, deltas=None, weights=None, alpha=0.025, draws=10_000, seed=None, method="sw", n_jobs=1):
        self.deltas = deltas
        self.weights = weights
        self.alpha = alpha
        self.draws = draws
        self.seed = seed
        self.method = method
        self.n_jobs = n_jobs

    def fit(self, X, y=None, theta_hat=None):
        est = _as_estimate_set(X, theta_hat)
        mc = None if self.seed is None else McConfig(draws=self.draws, seed=self.seed, n_jobs=self.n_jobs)
        self.report_ = closed_testing(
            est, deltas=self.deltas, global_w=self.weights, alpha=self.alpha, mc=mc, method=self.method
        )
        self.adjusted_p_ = self.report_.adjusted_p
        self.rejected_ = self.report_.rejected
        self.consonant_ = self.report_.consonant
        return self


class LandmarkEstimator(BaseEstimator):
    """Landmark treatment contrasts with stacked influence functions.

    ``fit`` accepts ``TrialArrays``, a sequence of ``TrialRecord`` or an
    ``n x 3`` array with columns ``(a, r, y)`` (``y`` ignored where ``r == 1``).

    Attributes
    ----------
    theta_ : ndarray of shape (3,)
    influence_ : ndarray of shape (n, 3)
    covariance_ : ndarray of shape (3, 3)
        Asymptotic covariance; divide by ``n`` for the covariance of ``theta_``.
    estimates_ : EstimateSet
    """

    def __init__(self, gamma=15.0):
        self.gamma = gamma

    def fit(self, X, y=None):
        if isinstance(X, np.ndarray) or (isinstance(X, list) and X and not hasattr(X[0], "y_tilde")):
            # y is NaN where the terminal event occurred, so finiteness is checked per column
            arr = np.asarray(X, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 3:
                raise InputError("expected an n x 3 array of (a, r, y)")
            check_array(arr[:, :2])
            a = arr[:, 0].astype(np.int8)
            r = arr[:, 1].astype(np.int8)
            yv = np.where(r == 1, np.nan, arr[:, 2])
            X = TrialArrays(a, r, yv, np.where(r == 1, self.gamma, arr[:, 2]))
        self.estimates_ = landmark_estimates(X, self.gamma)
        self.theta_ = self.estimates_.theta_hat
        self.influence_ = self.estimates_.influence
        self.covariance_ = self.estimates_.sigma_hat
        return self
