import numpy as np
import pytest
from conftest import enumerate_projection, random_search_projection
from hypothesis import given, settings
from hypothesis import strategies as st

from signedwald.cone import ConeSpec, Region, dykstra_project, project_halfspace, project_many, two_h_geometry
from signedwald.exceptions import DegenerateCorrelation, InputError, NoConvergence, ZeroNormal
from signedwald.intersection import HypothesisSpec, _standardize, sw_two_closed_form
from signedwald.linalg import correlation, sym_inv_sqrt, sym_sqrt

ORTHANT = ConeSpec(np.eye(2))


def random_cov(rng, dim):
    g = rng.standard_normal((dim, dim + 2))
    s = g @ g.T / (dim + 2)
    d = rng.uniform(0.05, 20.0, size=dim)
    return s * np.sqrt(np.outer(d, d))


def test_halfspace_examples():
    np.testing.assert_allclose(project_halfspace([2.0, 3.0], [1.0, 0.0]), [0.0, 3.0])
    np.testing.assert_allclose(project_halfspace([-1.0, 2.0], [1.0, 0.0]), [-1.0, 2.0])
    np.testing.assert_allclose(project_halfspace([1.0, 1.0], [1.0, 1.0]), [0.0, 0.0], atol=1e-15)
    with pytest.raises(ZeroNormal):
        project_halfspace([1.0, 1.0], [0.0, 0.0])
    with pytest.raises(ZeroNormal):
        ConeSpec(np.array([[1.0, 0.0], [0.0, 0.0]]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_halfspace_result_feasible(x, a):
    a = np.array(a)
    if np.linalg.norm(a) < 1e-3:
        return
    p = project_halfspace(x, a)
    assert a @ p <= 1e-12 * max(np.linalg.norm(x), 1.0) * np.linalg.norm(a) + 1e-12


def test_dykstra_orthant_examples():
    res = dykstra_project([1.0, 1.0], ORTHANT)
    np.testing.assert_allclose(res.point, [0.0, 0.0], atol=1e-12)
    assert res.sq_distance == pytest.approx(2.0)
    res = dykstra_project([-1.0, 2.0], ORTHANT)
    np.testing.assert_allclose(res.point, [-1.0, 0.0], atol=1e-12)
    assert res.sq_distance == pytest.approx(4.0)
    res = dykstra_project([-1.0, -2.0], ORTHANT)
    assert res.sq_distance == 0.0 and res.cycles == 0


def test_dykstra_worked_example_golden(worked_est):
    spec = HypothesisSpec.zeros(3)
    st_ = _standardize(worked_est, spec)
    res = dykstra_project(st_.u_hat, st_.cone)
    assert res.sq_distance == pytest.approx(0.75974, abs=1e-4)


def test_dykstra_raises_without_convergence():
    rng = np.random.default_rng(3)
    cone = ConeSpec.from_covariance(np.array([[1.0, 0.99, 0.98], [0.99, 1.0, 0.99], [0.98, 0.99, 1.0]]))
    pts = rng.standard_normal((200, 3))
    with pytest.raises(NoConvergence):
        project_many(pts, cone, max_cycles=2, certify=False)
    with pytest.raises(InputError):
        project_many(pts, cone, max_cycles=0)


def test_plain_dykstra_agrees_with_certified():
    rng = np.random.default_rng(5)
    for _ in range(100):
        cone = ConeSpec.from_covariance(random_cov(rng, 3))
        u = rng.standard_normal(3)
        plain = dykstra_project(u, cone, certify=False, max_cycles=200_000)
        assert plain.sq_distance == pytest.approx(dykstra_project(u, cone).sq_distance, rel=1e-7, abs=1e-9)


def test_dykstra_matches_enumeration_oracle():
    rng = np.random.default_rng(7)
    for _ in range(300):
        dim = rng.integers(2, 6)
        cone = ConeSpec.from_covariance(random_cov(rng, dim))
        u = rng.standard_normal(dim) * rng.uniform(0.1, 10)
        res = dykstra_project(u, cone)
        _, d_oracle = enumerate_projection(u, cone.normals)
        assert res.sq_distance == pytest.approx(d_oracle, rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("dim", [2, 3])
def test_dykstra_matches_random_search_oracle(dim):
    rng = np.random.default_rng(100 + dim)
    for _ in range(50):
        cone = ConeSpec.from_covariance(random_cov(rng, dim))
        u = rng.standard_normal(dim) * 2
        res = dykstra_project(u, cone)
        _, d_rs = random_search_projection(u, cone.normals, rng)
        # random search only ever finds feasible points, so it bounds from above
        assert res.sq_distance <= d_rs + 1e-10
        assert d_rs - res.sq_distance <= 1e-4


def test_dykstra_matches_two_dim_closed_form():
    rng = np.random.default_rng(21)
    for _ in range(1000):
        cov = random_cov(rng, 2)
        rho = correlation(cov)[0, 1]
        if abs(rho) > 0.999:
            continue
        u = rng.standard_normal(2) * rng.uniform(0.1, 5)
        # u = Sigma^{-1/2} z-scale vector; closed form works on standardized effects
        theta = sym_sqrt(cov) @ u
        z = theta / np.sqrt(np.diag(cov))
        res = dykstra_project(u, ConeSpec.from_covariance(cov))
        assert res.sq_distance == pytest.approx(sw_two_closed_form(z[0], z[1], rho), abs=1e-8, rel=1e-8)


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_projection_idempotent_and_obtuse(dim, seed):
    rng = np.random.default_rng(seed)
    cov = random_cov(rng, dim)
    cone = ConeSpec.from_covariance(cov)
    u = rng.standard_normal(dim) * 3
    res = dykstra_project(u, cone)
    again = dykstra_project(res.point, cone)
    assert again.sq_distance <= 1e-10 * max(1.0, float(res.point @ res.point))
    # cone members: -inv_sqrt(cov) applied to non-negative vectors
    members = -(sym_inv_sqrt(cov) @ rng.exponential(size=(dim, 100))).T
    assert np.all(members @ cone.normals.T <= 1e-9 * np.linalg.norm(members, axis=1)[:, None])
    scale = max(1.0, np.linalg.norm(u)) ** 2
    assert np.all((members - res.point) @ (u - res.point) <= 1e-8 * scale * np.maximum(1, np.linalg.norm(members, axis=1)))
    # cone projection: residual orthogonal to the point
    assert abs((u - res.point) @ res.point) <= 1e-8 * scale


def test_project_many_independent_of_batch():
    rng = np.random.default_rng(4)
    cone = ConeSpec.from_covariance(random_cov(rng, 4))
    u = rng.standard_normal((300, 4))
    pts, d2 = project_many(u, cone)
    pts_half, d2_half = project_many(u[:150], cone)
    np.testing.assert_allclose(d2[:150], d2_half, rtol=1e-13, atol=1e-15)
    for i in (0, 17, 149):
        assert d2[i] == pytest.approx(dykstra_project(u[i], cone).sq_distance, rel=1e-13, abs=1e-15)


def test_two_h_geometry_identity_regions():
    g = two_h_geometry([1.0, 1.0], np.eye(2))
    assert g.region is Region.POLAR
    np.testing.assert_allclose(g.projection, [0.0, 0.0])
    g = two_h_geometry([1.0, -1.0], np.eye(2))
    assert g.region is Region.FACET1
    np.testing.assert_allclose(g.projection, [0.0, -1.0], atol=1e-15)
    g = two_h_geometry([-1.0, 1.0], np.eye(2))
    assert g.region is Region.FACET2
    assert two_h_geometry([-1.0, -1.0], np.eye(2)).region is Region.INTERIOR


def test_two_h_geometry_vertical_ray():
    # with an identity covariance the ray of the first constraint is the u2-axis
    g = two_h_geometry([1.0, -1.0], np.eye(2))
    assert g.beta1 is None
    assert g.beta2 == 0.0


def test_two_h_geometry_degenerate():
    with pytest.raises(DegenerateCorrelation):
        two_h_geometry([1.0, 0.0], np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_two_h_geometry_agrees_with_projection():
    rng = np.random.default_rng(9)
    for _ in range(500):
        cov = random_cov(rng, 2)
        if abs(correlation(cov)[0, 1]) > 0.99:
            continue
        u = rng.standard_normal(2) * 2
        g = two_h_geometry(u, cov)
        res = dykstra_project(u, ConeSpec.from_covariance(cov))
        np.testing.assert_allclose(g.projection, res.point, atol=1e-8)
        assert (g.region is Region.INTERIOR) == bool(np.all(sym_sqrt(cov) @ u <= 0))
