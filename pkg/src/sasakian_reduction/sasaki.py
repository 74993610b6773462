"""Reeb field, Φ-tensor, the equivalent Sasakian criteria, and the contact form.

Conventions: ``Φ(v) = −∇_v ξ`` and ``ω(u) = g(ξ, u)``.  The exterior
derivative of ω is stored as the bilinear form

    dω(v, w) = ½ (v ω(w) − w ω(v) − ω([v, w])) = ½ (∂_i ω_j − ∂_j ω_i) v^i w^j,

the normalization under which ``dω(v, w) = −g(Φ v, w)`` on the contact
distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np
from jax.tree_util import Partial

from . import geometry as geo
from .errors import DegenerateFrame, EvenDimension, ReebNotKilling, ReebNotUnit, SingularMetric
from .geometry import ChartManifold, as_partial
from .report import CheckReport

UNIT_TOL = 1e-8
FIRST_ORDER_TOL = 1e-6
CURVATURE_TOL = 1e-5
NONDEGENERACY_FLOOR = 1e-8

ANCHORS = {
    "reeb_unit": "g(xi, xi) = 1",
    "reeb_killing": "g(nabla_v xi, w) + g(nabla_w xi, v) = 0",
    "phi_identity": "(nabla_v Phi)(w) = g(v, w) xi - g(xi, w) v",
    "curvature_identity": "R(v, xi) w = g(xi, w) v - g(v, w) xi",
    "phi_squared": "(Phi|_F)^2 = -Id_F",
    "phi_preserves_F": "g(Phi(v), xi) = 0",
    "contact_nondegeneracy": "(d omega)^n ^ omega nowhere vanishing",
    "contact_identity": "d omega(v, w) = -g(Phi(v), w) on F",
}


@dataclass(eq=False)
class SasakianData:
    """A chart manifold with a candidate Reeb field (odd dimension ``2n + 1``)."""

    manifold: ChartManifold
    reeb: Callable
    name: str = ""
    structure: Partial | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.reeb = as_partial(self.reeb)
        if self.structure is None:
            self.structure = Partial(_pair, self.metric_fn, self.reeb)

    @property
    def dim(self) -> int:
        return self.manifold.dim

    @property
    def chart(self):
        return self.manifold.chart

    @property
    def metric_fn(self):
        return self.chart.metric_fn

    def sample(self, samples: int, seed: int) -> np.ndarray:
        return self.manifold.sample(samples, seed)

    def tensors(self, samples: int, seed: int) -> dict:
        """Pointwise structure tensors at the seeded sample points (memoized)."""
        key = (samples, seed)
        if key not in self._cache:
            pts = self.sample(samples, seed)
            self._cache[key] = tensors_at(self, pts)
        return self._cache[key]


# ---------------------------------------------------------------------------
# traceable kernels


def phi_tensor(metric, reeb, x):
    """Matrix of Φ: ``Phi[k, i]`` is the k-th component of Φ(∂_i)."""
    gam = geo.christoffel_symbols(metric, x)
    nabla_xi = geo.field_jacobian(reeb, x) + jnp.einsum("kij,j->ki", gam, reeb(x))
    return -nabla_xi


def phi_derivative_tensor(metric, reeb, x):
    """``cov[i, k, j]`` = components of (∇_{∂_i} Φ)(∂_j)."""
    gam = geo.christoffel_symbols(metric, x)
    phi = phi_tensor(metric, reeb, x)
    dphi = jax.jacfwd(lambda y: phi_tensor(metric, reeb, y))(x)  # dphi[k, j, i] = ∂_i Φ^k_j
    return (
        jnp.einsum("kji->ikj", dphi)
        + jnp.einsum("kil,lj->ikj", gam, phi)
        - jnp.einsum("lij,kl->ikj", gam, phi)
    )


def contact_forms(metric, reeb, x):
    """ω_i and dω_ij (half-normalized, see module docstring)."""
    omega_fn = lambda y: metric(y) @ reeb(y)
    d_omega = jax.jacfwd(omega_fn)(x)  # [j, i] = ∂_i ω_j
    return omega_fn(x), 0.5 * (d_omega.T - d_omega)


def _point_tensors_direct(metric, reeb, x):
    """Reference kernel: every tensor by its own nested forward AD."""
    omega, d_omega = contact_forms(metric, reeb, x)
    return {
        "x": x,
        "g": metric(x),
        "xi": reeb(x),
        "phi": phi_tensor(metric, reeb, x),
        "cov_phi": phi_derivative_tensor(metric, reeb, x),
        "riemann": geo.riemann_tensor(metric, x),
        "killing": geo.killing_tensor(metric, x, reeb),
        "omega": omega,
        "d_omega": d_omega,
    }


def _pair(metric, reeb, x):
    return metric(x), reeb(x)


def first_order_tensors(structure, x):
    """g, Γ, ξ and Φ from the first jet of ``structure(x) = (g, ξ)``."""
    (g, xi), (G1, X1) = geo.first_jet(structure, x)
    gam, _ = geo.connection_from_jet(g, G1)
    phi = -(X1 + jnp.einsum("kij,j->ki", gam, xi))
    return g, gam, xi, phi


def _point_tensors(structure, x):
    """All structure tensors from one second-order jet of ``(g, ξ)``."""
    (g, xi), (G1, X1), (G2, X2) = geo.second_jet(structure, x)
    gam, dgam = geo.connection_from_jet(g, G1, G2)
    nabla = X1 + jnp.einsum("kij,j->ki", gam, xi)  # (∇_i ξ)^k
    phi = -nabla
    dphi = -(X2 + jnp.einsum("mkij,j->kim", dgam, xi) + jnp.einsum("kij,jm->kim", gam, X1))
    cov_phi = (
        jnp.einsum("kji->ikj", dphi)
        + jnp.einsum("kil,lj->ikj", gam, phi)
        - jnp.einsum("lij,kl->ikj", gam, phi)
    )
    A = g @ nabla
    D = jnp.einsum("jli,l->ji", G1, xi) + g @ X1  # D[j, i] = ∂_i ω_j
    return {
        "x": x,
        "g": g,
        "xi": xi,
        "phi": phi,
        "cov_phi": cov_phi,
        "riemann": geo.riemann_from_connection(gam, dgam),
        "killing": A + A.T,
        "omega": g @ xi,
        "d_omega": 0.5 * (D.T - D),
    }


_batched_tensors = jax.jit(jax.vmap(_point_tensors, in_axes=(None, 0)))
_batched_direct = jax.jit(jax.vmap(_point_tensors_direct, in_axes=(None, None, 0)))


def tensors_at(data: SasakianData, points) -> dict:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    for p in points:
        data.chart.require(p)
    out = _batched_tensors(data.structure, jnp.asarray(points))
    out = {k: np.asarray(v) for k, v in out.items()}
    for g in out["g"]:
        geo._check_metric(g)
    return out


# ---------------------------------------------------------------------------
# frames


def adapted_frames(g_batch, xi_batch, seed: int) -> np.ndarray:
    """Per point: column 0 is ξ/|ξ|, the rest a g-orthonormal basis of F = ξ^⊥."""
    rng = np.random.default_rng(seed)
    frames = []
    for g, xi in zip(g_batch, xi_batch):
        nrm = np.sqrt(xi @ g @ xi)
        if not nrm > 1e-10:
            raise DegenerateFrame("Reeb field vanishes")
        e0 = xi / nrm
        rest = geo.gram_schmidt(g, geo.frame_seeds(rng, g.shape[0], g.shape[0] - 1), against=[e0])
        frames.append(np.column_stack([e0, rest]))
    return np.stack(frames)


def _gnorm(g, v):
    return np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", v, g, v), 0.0))


# ---------------------------------------------------------------------------
# operations


def phi(data: SasakianData, p, v) -> np.ndarray:
    """Φ(v) = −∇_v ξ at ``p``."""
    p = data.chart.require(p)
    geo._check_metric(data.chart.metric(p))
    return np.asarray(phi_tensor(data.metric_fn, data.reeb, jnp.asarray(p))) @ np.asarray(v, dtype=float)


def _phi_field(metric, reeb, W, x):
    return phi_tensor(metric, reeb, x) @ W(x)


def phi_derivative(data: SasakianData, p, v, w_field: Callable) -> np.ndarray:
    """(∇_v Φ)(w) = ∇_v(Φ(W)) − Φ(∇_v W), with ``W`` any field extending w."""
    p = jnp.asarray(data.chart.require(p))
    v = jnp.asarray(v, dtype=float)
    W = as_partial(w_field)
    metric, reeb = data.metric_fn, data.reeb
    phiW = jax.tree_util.Partial(_phi_field, metric, reeb, W)
    first = geo.covariant_derivative_at(metric, p, v, phiW)
    second = phi_tensor(metric, reeb, p) @ geo.covariant_derivative_at(metric, p, v, W)
    return np.asarray(first - second)


def reeb_reports(data: SasakianData, samples=100, seed=0, tol=FIRST_ORDER_TOL) -> list:
    """Unit length and Killing residuals of the Reeb candidate."""
    t = data.tensors(samples, seed)
    unit = np.abs(np.einsum("ni,nij,nj->n", t["xi"], t["g"], t["xi"]) - 1.0)
    E = np.stack([geo.orthonormal_frame(g) for g in t["g"]])
    kill = np.abs(np.einsum("nia,nij,njb->nab", E, t["killing"], E)).max(axis=(1, 2))
    return [
        CheckReport.from_residuals("reeb_unit", ANCHORS["reeb_unit"], unit, UNIT_TOL),
        CheckReport.from_residuals("reeb_killing", ANCHORS["reeb_killing"], kill, tol),
    ]


def require_reeb(data: SasakianData, samples=100, seed=0, tol=FIRST_ORDER_TOL) -> None:
    unit, kill = reeb_reports(data, samples, seed, tol)
    if not unit.passed:
        raise ReebNotUnit(f"|g(xi, xi) - 1| reaches {unit.max_residual:.3e}")
    if not kill.passed:
        raise ReebNotKilling(f"Killing residual reaches {kill.max_residual:.3e}")


def _frames_for(data, samples, seed):
    t = data.tensors(samples, seed)
    return t, adapted_frames(t["g"], t["xi"], seed)


def check_condition_i(data: SasakianData, samples=100, seed=0, tol=FIRST_ORDER_TOL) -> CheckReport:
    """Residual of (∇_v Φ)(w) = g(v, w) ξ − g(ξ, w) v over frame pairs including ξ."""
    require_reeb(data, samples, seed)
    t, E = _frames_for(data, samples, seed)
    lhs = np.einsum("nia,nikj,njb->nabk", E, t["cov_phi"], E)
    gvw = np.einsum("nia,nij,njb->nab", E, t["g"], E)
    gxw = np.einsum("ni,nij,njb->nb", t["xi"], t["g"], E)
    rhs = gvw[..., None] * t["xi"][:, None, None, :] - gxw[:, None, :, None] * np.swapaxes(E, 1, 2)[:, :, None, :]
    diff = lhs - rhs
    res = _gnorm(t["g"][:, None, None], diff).max(axis=(1, 2))
    return CheckReport.from_residuals("phi_identity", ANCHORS["phi_identity"], res, tol)


def check_condition_ii(data: SasakianData, samples=100, seed=0, tol=CURVATURE_TOL) -> CheckReport:
    """Residual of R(v, ξ) w = g(ξ, w) v − g(v, w) ξ over frame pairs including ξ."""
    require_reeb(data, samples, seed)
    t, E = _frames_for(data, samples, seed)
    lhs = np.einsum("nlijk,nia,nj,nkb->nabl", t["riemann"], E, t["xi"], E)
    gvw = np.einsum("nia,nij,njb->nab", E, t["g"], E)
    gxw = np.einsum("ni,nij,njb->nb", t["xi"], t["g"], E)
    rhs = gxw[:, None, :, None] * np.swapaxes(E, 1, 2)[:, :, None, :] - gvw[..., None] * t["xi"][:, None, None, :]
    res = _gnorm(t["g"][:, None, None], lhs - rhs).max(axis=(1, 2))
    return CheckReport.from_residuals("curvature_identity", ANCHORS["curvature_identity"], res, tol)


def check_phi_squared(data: SasakianData, samples=100, seed=0, tol=1e-7) -> CheckReport:
    """|Φ(Φ(v)) + v| for v in an orthonormal frame of F."""
    t, E = _frames_for(data, samples, seed)
    F = E[:, :, 1:]
    diff = np.einsum("nkl,nlm,nma->nak", t["phi"], t["phi"], F) + np.swapaxes(F, 1, 2)
    res = _gnorm(t["g"][:, None], diff).max(axis=1)
    return CheckReport.from_residuals("phi_squared", ANCHORS["phi_squared"], res, tol)


def check_phi_preserves_distribution(data: SasakianData, samples=100, seed=0, tol=1e-8) -> CheckReport:
    """|g(Φ(v), ξ)| over the full frame, plus skew-symmetry of g∘Φ in the notes."""
    t, E = _frames_for(data, samples, seed)
    phiE = np.einsum("nkl,nla->nka", t["phi"], E)
    res = np.abs(np.einsum("nka,nkj,nj->na", phiE, t["g"], t["xi"])).max(axis=1)
    gphi = np.einsum("nka,nkj,njb->nab", phiE, t["g"], E)
    skew = np.abs(gphi + np.swapaxes(gphi, 1, 2)).max()
    return CheckReport.from_residuals(
        "phi_preserves_F", ANCHORS["phi_preserves_F"], res, tol, {"skew_symmetry_max": float(skew)}
    )


def contact_form(data: SasakianData, p) -> tuple[np.ndarray, np.ndarray]:
    """The covector ω = g(ξ, ·) and the bilinear form dω at ``p``."""
    p = data.chart.require(p)
    omega, d_omega = contact_forms(data.metric_fn, data.reeb, jnp.asarray(p))
    return np.asarray(omega), np.asarray(d_omega)


def _wedge_norm(d_omega, omega, E):
    """max over frame triples of |(dω ∧ ω)(a, b, c)|."""
    D = np.einsum("ia,ij,jb->ab", E, d_omega, E)
    w = omega @ E
    T = D[:, :, None] * w[None, None, :] + np.einsum("bc,a->abc", D, w) + np.einsum("ca,b->abc", D, w)
    return float(np.abs(T).max())


def check_contact_nondegeneracy(
    data: SasakianData, samples=100, seed=0, floor=NONDEGENERACY_FLOOR
) -> CheckReport:
    """Determinant of dω on an orthonormal frame of F must stay above ``floor``.

    The reported residual is the degeneracy ratio ``floor / |det|``; the check
    passes iff it is below 1 everywhere.  The Frobenius quantity dω ∧ ω is
    reported alongside (it vanishes exactly when F is integrable).
    """
    if data.dim % 2 == 0:
        raise EvenDimension(f"dimension {data.dim} is even")
    t, E = _frames_for(data, samples, seed)
    F = E[:, :, 1:]
    D = np.einsum("nia,nij,njb->nab", F, t["d_omega"], F)
    dets = np.abs(np.linalg.det(D))
    ratio = floor / np.maximum(dets, 1e-300)
    frob = [_wedge_norm(dw, w, e) for dw, w, e in zip(t["d_omega"], t["omega"], E)]
    notes = {
        "min_abs_det": float(dets.min()),
        "max_abs_det": float(dets.max()),
        "floor": floor,
        "frobenius_min": float(min(frob)),
        "integrable": bool(min(frob) < 1e-12),
    }
    return CheckReport.from_residuals("contact_nondegeneracy", ANCHORS["contact_nondegeneracy"], ratio, 1.0, notes)


def check_contact_identity(data: SasakianData, samples=100, seed=0, tol=FIRST_ORDER_TOL) -> CheckReport:
    """|dω(v, w) + g(Φ(v), w)| over pairs from an orthonormal frame of F."""
    t, E = _frames_for(data, samples, seed)
    F = E[:, :, 1:]
    D = np.einsum("nia,nij,njb->nab", F, t["d_omega"], F)
    G = np.einsum("nkl,nla,nkj,njb->nab", t["phi"], F, t["g"], F)
    res = np.abs(D + G).max(axis=(1, 2))
    return CheckReport.from_residuals("contact_identity", ANCHORS["contact_identity"], res, tol)


def _guarded(fn, name, *args, **kwargs) -> CheckReport:
    """Run a check; precondition failures become failed reports instead of escaping."""
    try:
        return fn(*args, **kwargs)
    except (ReebNotUnit, ReebNotKilling, DegenerateFrame, SingularMetric, EvenDimension) as exc:
        return CheckReport.failed(name, ANCHORS[name], f"{type(exc).__name__}: {exc}")


def sasaki_suite(data: SasakianData, samples=100, seed=0, tol=FIRST_ORDER_TOL) -> list:
    """All Sasakian-layer checks in a fixed order."""
    curv_tol = max(CURVATURE_TOL, 10 * tol)
    reports = reeb_reports(data, samples, seed, tol)
    reports.append(_guarded(check_condition_i, "phi_identity", data, samples, seed, tol))
    reports.append(_guarded(check_condition_ii, "curvature_identity", data, samples, seed, curv_tol))
    reports.append(_guarded(check_phi_squared, "phi_squared", data, samples, seed))
    reports.append(_guarded(check_phi_preserves_distribution, "phi_preserves_F", data, samples, seed))
    reports.append(_guarded(check_contact_nondegeneracy, "contact_nondegeneracy", data, samples, seed))
    reports.append(_guarded(check_contact_identity, "contact_identity", data, samples, seed, tol))
    return reports
