import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from signedwald.estimands import EstimateSet

FIXTURES = Path(__file__).parent / "fixtures"

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def load_fixture(name: str) -> dict:
    with open(FIXTURES / name) as fh:
        return json.load(fh)


@pytest.fixture
def worked_est() -> EstimateSet:
    return EstimateSet.from_dict(load_fixture("worked.json"))


@pytest.fixture
def flow_est() -> EstimateSet:
    return EstimateSet.from_dict(load_fixture("flow.json"))


def enumerate_projection(u, normals):
    """Projection onto ``{x : normals @ x <= 0}`` by trying every active set.

    For each index set ``S`` the point ``u`` is projected onto the subspace
    ``{x : A_S x = 0}``; among the feasible candidates the closest one is the
    projection, since the true projection is one of them.
    """
    a = np.asarray(normals, dtype=float)
    u = np.asarray(u, dtype=float)
    best, best_d = None, np.inf
    m = a.shape[0]
    scale = max(1.0, np.linalg.norm(u))
    for k in range(m + 1):
        for s in itertools.combinations(range(m), k):
            if k == 0:
                p = u.copy()
            else:
                a_s = a[list(s)]
                lam = np.linalg.lstsq(a_s @ a_s.T, a_s @ u, rcond=None)[0]
                p = u - lam @ a_s
            if np.all(a @ p <= 1e-10 * scale * np.linalg.norm(a, axis=1)):
                d = float(np.sum((u - p) ** 2))
                if d < best_d:
                    best, best_d = p, d
    return best, best_d


def random_search_projection(u, normals, rng, iters=1500, batch=32):
    """Projection by adaptive random search over the cone's generators.

    With invertible normals ``A`` the cone is ``{-A^{-1} mu : mu >= 0}``, so
    every clipped candidate ``mu`` gives a feasible point and the best
    distance found bounds the true one from above. Batches of random steps
    are proposed around the incumbent and the step shrinks when none improves.
    """
    a = np.asarray(normals, dtype=float)
    u = np.asarray(u, dtype=float)
    gen = -np.linalg.inv(a)
    mu = np.zeros(u.size)
    best = float(u @ u)
    step = max(1.0, np.linalg.norm(u)) * np.max(np.abs(a))
    for _ in range(iters):
        cand = np.maximum(0.0, mu + step * rng.standard_normal((batch, u.size)))
        d = np.sum((u - cand @ gen.T) ** 2, axis=1)
        k = int(np.argmin(d))
        if d[k] < best:
            mu, best = cand[k], float(d[k])
        else:
            step *= 0.8
        if step < 1e-12:
            break
    return gen @ mu, best


def lbfgs_statistic(theta_hat, deltas, weights, cov):
    """Weighted signed Wald statistic by direct bounded minimisation over ``theta <= delta``."""
    from scipy.optimize import minimize

    w = np.diag(weights)
    m = w @ np.linalg.inv(cov) @ w
    theta_hat = np.asarray(theta_hat, dtype=float)
    deltas = np.asarray(deltas, dtype=float)

    def f(t):
        r = theta_hat - t
        return r @ m @ r, -2 * m @ r

    x0 = np.minimum(theta_hat, deltas)
    res = minimize(f, x0, jac=True, method="L-BFGS-B", bounds=[(None, d) for d in deltas],
                   options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000})
    return float(res.fun)
