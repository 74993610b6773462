import math

import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from jax.tree_util import Partial

from sasakian_reduction import geometry as geo
from sasakian_reduction import sasaki
from sasakian_reduction.catalog import make_sphere
from sasakian_reduction.errors import EvenDimension, ReebNotKilling, ReebNotUnit
from sasakian_reduction.geometry import Chart, ChartManifold
from sasakian_reduction.sasaki import SasakianData

from conftest import by_name

SUITE_ORDER = [
    "reeb_unit",
    "reeb_killing",
    "phi_identity",
    "curvature_identity",
    "phi_squared",
    "phi_preserves_F",
    "contact_nondegeneracy",
    "contact_identity",
]


@pytest.mark.parametrize("fixture", ["s3", "s5"])
def test_round_spheres_pass_every_check(request, fixture):
    data = request.getfixturevalue(fixture)
    reports = sasaki.sasaki_suite(data, 100, 0)
    assert [r.check_name for r in reports] == SUITE_ORDER
    for r in reports:
        assert r.passed, r.to_text()


def test_flat_torus_fails_phi_checks(t3):
    reps = by_name(sasaki.sasaki_suite(t3, 50, 0))
    for name in ("phi_identity", "curvature_identity", "phi_squared", "contact_nondegeneracy"):
        assert not reps[name].passed
    # Φ ≡ 0: the identity defect is |g(v, w) ξ − g(ξ, w) v| = 1 on a unit frame pair
    assert reps["phi_identity"].max_residual == pytest.approx(1.0, abs=1e-12)
    assert reps["reeb_unit"].passed and reps["reeb_killing"].passed
    assert reps["contact_nondegeneracy"].notes["integrable"]


def test_perturbed_sphere_keeps_reeb_but_breaks_phi(s3_perturbed):
    reps = by_name(sasaki.sasaki_suite(s3_perturbed, 50, 0))
    assert reps["reeb_unit"].passed and reps["reeb_killing"].passed
    assert not reps["phi_identity"].passed
    assert reps["phi_identity"].max_residual > 0.1


def test_conditions_coincide_for_killing_reeb(s3_perturbed, t3):
    """For a unit Killing ξ, (∇_v Φ) w = −R(v, ξ) w, so both residuals agree pointwise."""
    for data in (s3_perturbed, t3):
        a = sasaki.check_condition_i(data, 50, 1)
        b = sasaki.check_condition_ii(data, 50, 1)
        assert a.max_residual == pytest.approx(b.max_residual, abs=1e-10)
        assert a.mean_residual == pytest.approx(b.mean_residual, abs=1e-10)


def test_phi_closed_form_on_s3(s3):
    p = np.array([math.pi / 4, 0.3, 0.9])
    # Φ(∂η) = −∇_∂η ξ = tan η ∂α − cot η ∂β
    assert np.allclose(sasaki.phi(s3, p, [1.0, 0, 0]), [0.0, 1.0, -1.0], atol=1e-12)
    assert np.allclose(sasaki.phi(s3, p, [0, 1.0, 1.0]), 0.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 1.35), st.floats(0, 6.2))
def test_reeb_geodesic_and_phi_kills_reeb(s3, eta, a):
    p = np.array([eta, a, 1.0])
    xi = np.asarray(s3.reeb(jnp.asarray(p)))
    assert np.abs(geo.covariant_derivative(s3.chart, p, xi, s3.reeb)).max() < 1e-8
    assert np.abs(sasaki.phi(s3, p, xi)).max() < 1e-12


def test_contact_form_closed_form(s3):
    eta = 0.5
    omega, d_omega = sasaki.contact_form(s3, [eta, 1.0, 2.0])
    c2, s2 = math.cos(eta) ** 2, math.sin(eta) ** 2
    assert np.allclose(omega, [0.0, c2, s2], atol=1e-14)
    sc = math.sin(eta) * math.cos(eta)
    assert d_omega[0, 1] == pytest.approx(-sc, abs=1e-14)
    assert d_omega[0, 2] == pytest.approx(sc, abs=1e-14)
    assert np.allclose(d_omega, -d_omega.T)


def test_contact_identity_and_nondegeneracy_on_s5(s5):
    assert sasaki.check_contact_identity(s5, 100, 0).max_residual < 1e-12
    rep = sasaki.check_contact_nondegeneracy(s5, 100, 0)
    # dω restricted to F equals the g-orthogonal complex structure, so |det| = 1
    assert rep.notes["min_abs_det"] == pytest.approx(1.0, abs=1e-10)
    assert not rep.notes["integrable"]


def test_phi_derivative_pointwise(s3):
    p = np.array([0.7, 0.2, 0.4])
    g = s3.chart.metric(p)
    xi = np.asarray(s3.reeb(jnp.asarray(p)))
    v = np.array([1.0, 0.2, -0.3])
    w = Partial(geo._constant, jnp.array([0.1, 1.0, 0.5]))
    wv = np.array([0.1, 1.0, 0.5])
    out = sasaki.phi_derivative(s3, p, v, w)
    assert np.allclose(out, (v @ g @ wv) * xi - (xi @ g @ wv) * v, atol=1e-10)


def test_reeb_preconditions(s3):
    doubled = SasakianData(s3.manifold, geo.constant_field([0.0, 2.0, 2.0]))
    with pytest.raises(ReebNotUnit):
        sasaki.check_condition_i(doubled, 10, 0)
    guarded = by_name(sasaki.sasaki_suite(doubled, 10, 0))
    assert guarded["phi_identity"].verdict == "fail"
    assert "ReebNotUnit" in guarded["phi_identity"].notes["error"]

    # ∂η is a unit field on S3 but not Killing
    radial = SasakianData(s3.manifold, geo.constant_field([1.0, 0.0, 0.0]))
    with pytest.raises(ReebNotKilling):
        sasaki.require_reeb(radial, 10, 0)


def test_even_dimension_rejected():
    chart = Chart(2, [0, 0], [1, 1], Partial(lambda x: jnp.eye(2) + 0 * x[0]))
    data = SasakianData(ChartManifold((chart,)), geo.constant_field([1.0, 0.0]))
    with pytest.raises(EvenDimension):
        sasaki.check_contact_nondegeneracy(data, 5, 0)


def test_tensors_are_memoized_and_seeded(s3):
    a = s3.tensors(12, 4)
    assert s3.tensors(12, 4) is a
    b = s3.tensors(12, 5)
    assert not np.array_equal(a["g"], b["g"])


def test_higher_sphere_dimension():
    s7 = make_sphere(3)
    assert s7.dim == 7
    reps = by_name(sasaki.sasaki_suite(s7, 20, 0))
    assert reps["phi_identity"].passed and reps["contact_identity"].passed


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_phi_derivative_is_tensorial(s3_perturbed, seed):
    """Two extensions of w through p give the same (∇_v Φ)(w)."""
    rng = np.random.default_rng(seed)
    p = np.array([0.7, 1.0, 2.0])
    v, w = rng.standard_normal(3), rng.standard_normal(3)
    affine = geo.affine_field(w, rng.standard_normal((3, 3)), p)
    a = sasaki.phi_derivative(s3_perturbed, p, v, geo.constant_field(w))
    b = sasaki.phi_derivative(s3_perturbed, p, v, affine)
    assert np.abs(a - b).max() < 1e-7
