"""Chart calculus against closed forms on the round S3 and finite-difference oracles."""

import math

import jax
import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from jax.tree_util import Partial

from sasakian_reduction import geometry as geo
from sasakian_reduction import sasaki
from sasakian_reduction.errors import DegenerateFrame, DomainError, SingularMetric
from sasakian_reduction.geometry import Chart, ChartManifold

eta_st = st.floats(0.2, 1.35)
angle_st = st.floats(0.0, 2 * math.pi - 1e-3)


def s3_closed_form(x):
    """dη² + cos²η dα² + sin²η dβ², numpy only (independent of the embedding)."""
    eta = x[0]
    return np.diag([1.0, math.cos(eta) ** 2, math.sin(eta) ** 2])


def fd_christoffel(metric, x, h=1e-5):
    """Christoffel symbols from central differences of ``metric`` (pure numpy)."""
    d = len(x)
    dg = np.zeros((d, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        dg[k] = (metric(x + e) - metric(x - e)) / (2 * h)
    ginv = np.linalg.inv(metric(x))
    lowered = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    return np.einsum("kl,lij->kij", ginv, lowered)


def test_christoffel_closed_form_at_quarter_turn(s3):
    x = np.array([math.pi / 4, 1.0, 2.0])
    gam = geo.christoffel(s3.chart, x)
    # Γ^η_αα = sinη cosη = 1/2 and the companions at η = π/4
    assert gam[0, 1, 1] == pytest.approx(0.5, abs=1e-12)
    assert gam[0, 2, 2] == pytest.approx(-0.5, abs=1e-12)
    assert gam[1, 0, 1] == pytest.approx(-1.0, abs=1e-12)
    assert gam[2, 0, 2] == pytest.approx(1.0, abs=1e-12)
    mask = np.ones_like(gam, dtype=bool)
    for idx in [(0, 1, 1), (0, 2, 2), (1, 0, 1), (1, 1, 0), (2, 0, 2), (2, 2, 0)]:
        mask[idx] = False
    assert np.abs(gam[mask]).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(eta_st, angle_st, angle_st)
def test_christoffel_matches_fd_oracle(s3, eta, a, b):
    x = np.array([eta, a, b])
    ad = geo.christoffel(s3.chart, x)
    fd = fd_christoffel(s3_closed_form, x)
    assert np.abs(ad - fd).max() < 1e-8


@settings(max_examples=25, deadline=None)
@given(eta_st, angle_st, angle_st)
def test_pullback_metric_equals_closed_form(s3, eta, a, b):
    x = np.array([eta, a, b])
    assert np.abs(s3.chart.metric(x) - s3_closed_form(x)).max() < 1e-12


@settings(max_examples=15, deadline=None)
@given(eta_st, angle_st, angle_st)
def test_round_s3_has_unit_sectional_curvature(s3, eta, a, b):
    """R(∂i, ∂j)∂k = g_jk ∂i − g_ik ∂j for constant curvature one."""
    x = np.array([eta, a, b])
    g = s3_closed_form(x)
    R = np.asarray(geo.riemann_tensor(s3.metric_fn, jnp.asarray(x)))
    I = np.eye(3)
    expected = np.einsum("li,jk->lijk", I, g) - np.einsum("lj,ik->lijk", I, g)
    assert np.abs(R - expected).max() < 1e-9


def test_riemann_public_op_on_vectors(s3):
    x = np.array([0.7, 0.3, 0.2])
    g = s3_closed_form(x)
    u, v, w = np.array([1.0, 0.5, 0.0]), np.array([0.0, 1.0, -1.0]), np.array([0.3, 0.0, 1.0])
    out = geo.riemann(s3.chart, x, u, v, w)
    assert np.allclose(out, (v @ g @ w) * u - (u @ g @ w) * v, atol=1e-10)


def test_covariant_derivative_of_reeb(s3):
    x = np.array([math.pi / 4, 0.4, 1.1])
    out = geo.covariant_derivative(s3.chart, x, [1.0, 0.0, 0.0], s3.reeb)
    assert np.allclose(out, [0.0, -1.0, 1.0], atol=1e-12)


def test_lie_bracket_closed_form(s3):
    V = geo.constant_field([1.0, 0.0, 0.0])
    W = Partial(lambda x: jnp.array([0.0, jnp.cos(x[0]) ** 2, 0.0]))
    x = np.array([0.5, 1.0, 1.0])
    out = geo.lie_bracket(s3.chart, x, V, W)
    assert np.allclose(out, [0.0, -2 * math.cos(0.5) * math.sin(0.5), 0.0], atol=1e-14)


def test_lie_bracket_antisymmetric(s3):
    V = Partial(lambda x: jnp.array([jnp.sin(x[1]), x[0] ** 2, 1.0]))
    W = Partial(lambda x: jnp.array([x[2], jnp.cos(x[0]), x[1] * x[0]]))
    x = np.array([0.5, 1.0, 1.5])
    assert np.allclose(geo.lie_bracket(s3.chart, x, V, W), -geo.lie_bracket(s3.chart, x, W, V), atol=1e-14)


def test_killing_residuals(s3):
    x = np.array([0.6, 0.1, 0.2])
    assert geo.killing_residual(s3.chart, x, s3.reeb) < 1e-12
    # ∂η is not Killing: L_∂η g = diag(0, −sin 2η, sin 2η), i.e. diag(0, −2 tan η, 2 cot η)
    # on the orthonormal frame
    res = geo.killing_residual(s3.chart, x, geo.constant_field([1.0, 0.0, 0.0]))
    assert res == pytest.approx(max(2 * math.tan(0.6), 2 / math.tan(0.6)), rel=1e-10)


def test_ad_matches_fd_jets(s3):
    p = np.array([0.8, 2.0, 3.0])
    ad, fd = geo.ad_jet(s3.metric_fn, p), geo.fd_jet(s3.metric_fn, p)
    assert np.allclose(ad.value, fd.value)
    h = geo.fd_step(p).max()
    assert np.abs(ad.first_derivs - fd.first_derivs).max() < 10 * h**2


def test_ad_fd_discrepancy_detects_wrong_derivative():
    """A function with a deliberately wrong custom derivative must fail the oracle."""

    @jax.custom_jvp
    def f(x):
        return jnp.sin(x)

    @f.defjvp
    def f_jvp(primals, tangents):
        (x,), (t,) = primals, tangents
        return jnp.sin(x), 1.01 * jnp.cos(x) * t

    errs, bounds = geo.ad_fd_discrepancy(f, np.linspace(0.1, 1.0, 10)[:, None] * np.ones((1, 2)))
    assert (errs > bounds).all()


def test_jet_kernel_matches_direct_kernel(s3_perturbed):
    """Tensors from one shared jet agree with per-tensor nested AD."""
    pts = jnp.asarray(s3_perturbed.sample(8, 3))
    a = sasaki._batched_tensors(s3_perturbed.structure, pts)
    b = sasaki._batched_direct(s3_perturbed.metric_fn, s3_perturbed.reeb, pts)
    for key in a:
        assert np.abs(np.asarray(a[key]) - np.asarray(b[key])).max() < 1e-11, key


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000))
def test_spd_solve_matches_numpy(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    A = M @ M.T + n * np.eye(n)
    b = rng.standard_normal(n)
    assert np.allclose(np.asarray(geo.spd_solve(jnp.asarray(A), jnp.asarray(b))), np.linalg.solve(A, b))


def test_gram_schmidt_is_orthonormal_and_detects_degeneracy(s3):
    g = s3_closed_form([0.4, 0, 0])
    E = geo.orthonormal_frame(g)
    assert np.allclose(E.T @ g @ E, np.eye(3), atol=1e-14)
    with pytest.raises(DegenerateFrame):
        geo.gram_schmidt(g, [np.array([1.0, 0, 0]), np.array([2.0, 0, 0])])


def test_domain_and_singular_metric_errors(s3):
    with pytest.raises(DomainError):
        geo.christoffel(s3.chart, [2.0, 0.0, 0.0])
    # periodic coordinates are wrapped, not rejected
    assert s3.chart.contains([0.5, 10.0, -3.0])
    assert np.allclose(s3.chart.wrap([0.5, 2 * math.pi + 1, -1])[1:], [1.0, 2 * math.pi - 1])
    bad = Chart(2, [0, 0], [1, 1], Partial(lambda x: jnp.diag(jnp.array([1.0, 1e-14])) + 0 * x[0]))
    with pytest.raises(SingularMetric):
        geo.christoffel(bad, [0.5, 0.5])


def test_sampler_respects_margin_and_is_deterministic():
    c = Chart(2, [0.0, -1.0], [1.0, 1.0], Partial(lambda x: jnp.eye(2) + 0 * x[0]))
    m = ChartManifold((c,), margin=0.1)
    pts = m.sample(2000, 5)
    assert pts[:, 0].min() >= 0.1 and pts[:, 0].max() <= 0.9
    assert pts[:, 1].min() >= -0.8 and pts[:, 1].max() <= 0.8
    assert np.array_equal(pts, m.sample(2000, 5))
    assert not np.array_equal(pts, m.sample(2000, 6))


def test_charts_must_share_dimension():
    a = Chart(2, [0, 0], [1, 1], Partial(lambda x: jnp.eye(2) + 0 * x[0]))
    b = Chart(3, [0, 0, 0], [1, 1, 1], Partial(lambda x: jnp.eye(3) + 0 * x[0]))
    with pytest.raises(ValueError):
        ChartManifold((a, b))


@settings(max_examples=20, deadline=None)
@given(st.floats(-3.0, 3.0), st.integers(0, 1000))
def test_killing_residual_scales_linearly(s3, c, seed):
    rng = np.random.default_rng(seed)
    v, w = rng.standard_normal(3), rng.standard_normal(3)
    x = np.array([0.6, 0.1, 0.2])
    V = geo.constant_field([1.0, 0.0, 0.0])
    one = geo.killing_residual(s3.chart, x, V, [(v, w)])
    assert geo.killing_residual(s3.chart, x, V, [(c * v, w)]) == pytest.approx(abs(c) * one, rel=1e-12, abs=1e-15)
