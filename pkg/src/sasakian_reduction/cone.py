"""The metric cone ``X × ℝ₊`` with ``dr² ⊕ r² g`` and its almost complex structure.

Cone coordinates are the base coordinates followed by ``r``.  The complex
structure is

    J(r ∂_r) = ξ,    J(ξ) = −r ∂_r,    J|_F = −Φ|_F = ∇ξ|_F,

extended r-independently on F.  The sign on F is the one for which J is
integrable and ``ω_M(u, v) = g_M(J u, v)`` is closed; :data:`LITERAL` selects
the opposite sign for comparison.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np
from jax.tree_util import Partial

from . import geometry as geo
from .geometry import Chart, ChartManifold
from .report import CheckReport
from .sasaki import SasakianData, phi_tensor

INTEGRABLE = "J|F = -Phi|F, J(r dr) = xi, J(xi) = -r dr"
LITERAL = "J|F = +Phi|F, J(r dr) = xi, J(xi) = -r dr"

ANCHORS = {
    "cone_nijenhuis": "N_J(u, v) = [Ju, Jv] - J[Ju, v] - J[u, Jv] - [u, v] = 0",
    "cone_kahler": "omega_M(u, v) = g_M(Ju, v) antisymmetric, J-invariant and closed",
}


def _cone_metric(base_metric, y):
    x, r = y[:-1], y[-1]
    d = x.shape[0]
    G = jnp.zeros((d + 1, d + 1), dtype=y.dtype)
    G = G.at[:d, :d].set(r**2 * base_metric(x))
    return G.at[d, d].set(1.0)


def _cone_complex_structure(base_metric, reeb, sign, y):
    x, r = y[:-1], y[-1]
    d = x.shape[0]
    g = base_metric(x)
    xi = reeb(x)
    omega = g @ xi
    phi = phi_tensor(base_metric, reeb, x)
    to_F = jnp.eye(d) - jnp.outer(xi, omega)
    J = jnp.zeros((d + 1, d + 1), dtype=y.dtype)
    J = J.at[:d, :d].set(sign * phi @ to_F)
    J = J.at[d, :d].set(-r * omega)
    return J.at[:d, d].set(xi / r)


@dataclass(eq=False)
class ConeManifold:
    """Cone over a Sasakian candidate, with metric ``g_M`` and structure ``J``."""

    base: SasakianData
    chart: Chart
    manifold: ChartManifold
    J: Partial
    convention: str = INTEGRABLE
    r_interval: tuple = (0.5, 2.0)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def metric_fn(self):
        return self.chart.metric_fn

    def complex_structure(self, y) -> np.ndarray:
        return np.asarray(self.J(jnp.asarray(y, dtype=float)))

    def sample(self, samples, seed):
        return self.manifold.sample(samples, seed)

    def tensors(self, samples, seed) -> dict:
        key = (samples, seed)
        if key not in self._cache:
            pts = self.sample(samples, seed)
            out = _batched(self.metric_fn, self.J, jnp.asarray(pts))
            self._cache[key] = {k: np.asarray(v) for k, v in out.items()}
        return self._cache[key]


def build_cone(data: SasakianData, r_interval=(0.5, 2.0), convention: str = INTEGRABLE, check: bool = False):
    """Cone manifold over ``data``.

    With ``check=True`` the Φ identity is evaluated on a few points first and a
    warning is issued (not an error) when it fails.
    """
    from .sasaki import _guarded, check_condition_i

    if check:
        rep = _guarded(check_condition_i, "phi_identity", data, 20, 0)
        if not rep.passed:
            warnings.warn(f"building cone over non-Sasakian data {data.name!r}", stacklevel=2)
    base = data.chart
    lo, hi = r_interval
    chart = Chart(
        base.dim + 1,
        np.append(base.lower, lo),
        np.append(base.upper, hi),
        Partial(_cone_metric, data.metric_fn),
        periods=tuple(base.periods) + (None,),
        name=f"cone({base.name})",
    )
    sign = -1.0 if convention == INTEGRABLE else 1.0
    J = Partial(_cone_complex_structure, data.metric_fn, data.reeb, jnp.asarray(sign))
    manifold = ChartManifold((chart,), seed=data.manifold.seed, margin=data.manifold.margin)
    return ConeManifold(data, chart, manifold, J, convention, tuple(r_interval))


# ---------------------------------------------------------------------------
# kernels


def kahler_form(metric, J, y):
    """``W[i, j] = ω_M(∂_i, ∂_j) = g_M(J ∂_i, ∂_j)``."""
    return J(y).T @ metric(y)


def nijenhuis_tensor(J, y):
    """``N[k, i, j]`` = components of N_J(∂_i, ∂_j) (exactly antisymmetric in i, j)."""
    Jy = J(y)
    dJ = jax.jacfwd(J)(y)  # dJ[k, j, m] = ∂_m J^k_j
    T = jnp.einsum("mi,kjm->kij", Jy, dJ)  # J^m_i ∂_m J^k_j
    S = jnp.einsum("km,mji->kij", Jy, dJ)  # J^k_m ∂_i J^m_j
    X = T - S
    return X - jnp.swapaxes(X, 1, 2)


def _cone_point(metric, J, y):
    W_fn = lambda z: kahler_form(metric, J, z)
    dW = jax.jacfwd(W_fn)(y)  # dW[i, j, k] = ∂_k W_ij
    closed = (
        jnp.einsum("jki->ijk", dW) + jnp.einsum("kij->ijk", dW) + jnp.einsum("ijk->ijk", dW)
    )
    return {
        "y": y,
        "G": metric(y),
        "J": J(y),
        "N": nijenhuis_tensor(J, y),
        "W": W_fn(y),
        "dW": closed,
    }


_batched = jax.jit(jax.vmap(_cone_point, in_axes=(None, None, 0)))


def _frames(G_batch):
    return np.stack([geo.orthonormal_frame(G) for G in G_batch])


def _gnorm(G, v):
    return np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", v, G, v), 0.0))


def nijenhuis_residual(cone: ConeManifold, samples=100, seed=0, tol=1e-6) -> CheckReport:
    """Max g_M-norm of N_J over orthonormal frame pairs.

    N_J only measures integrability of an almost complex structure, so the
    residual also includes the defect |J² u + u|; otherwise a degenerate J
    (for instance J|_F = 0) would register as integrable.
    """
    t = cone.tensors(samples, seed)
    E = _frames(t["G"])
    NE = np.einsum("nkij,nia,njb->nabk", t["N"], E, E)
    nij = _gnorm(t["G"][:, None, None], NE).max(axis=(1, 2))
    J2 = np.einsum("nij,njk,nka->nai", t["J"], t["J"], E) + np.swapaxes(E, 1, 2)
    ac = _gnorm(t["G"][:, None], J2).max(axis=1)
    notes = {
        "nijenhuis_max": float(nij.max()),
        "almost_complex_defect_max": float(ac.max()),
        "convention": cone.convention,
    }
    return CheckReport.from_residuals(
        "cone_nijenhuis", ANCHORS["cone_nijenhuis"], np.maximum(nij, ac), tol, notes
    )


def kahler_form_check(cone: ConeManifold, samples=100, seed=0, tol=1e-6) -> CheckReport:
    """ω_M = g_M(J·, ·): antisymmetry, J-invariance of g_M and closedness dω_M = 0.

    All three are measured on g_M-orthonormal frames; the residual is their
    pointwise maximum.
    """
    t = cone.tensors(samples, seed)
    E = _frames(t["G"])
    W = np.einsum("nij,nia,njb->nab", t["W"], E, E)
    anti = np.abs(W + np.swapaxes(W, 1, 2)).max(axis=(1, 2))
    JE = np.einsum("nij,nja->nia", t["J"], E)
    herm = np.abs(np.einsum("nia,nij,njb->nab", JE, t["G"], JE) - np.eye(cone.dim)).max(axis=(1, 2))
    closed = np.abs(np.einsum("nijk,nia,njb,nkc->nabc", t["dW"], E, E, E)).max(axis=(1, 2, 3))
    notes = {
        "antisymmetry_max": float(anti.max()),
        "hermitian_max": float(herm.max()),
        "closedness_max": float(closed.max()),
        "convention": cone.convention,
    }
    return CheckReport.from_residuals(
        "cone_kahler", ANCHORS["cone_kahler"], np.maximum.reduce([anti, herm, closed]), tol, notes
    )


def cone_suite(cone: ConeManifold, samples=100, seed=0, tol=1e-6) -> list:
    return [nijenhuis_residual(cone, samples, seed, tol), kahler_form_check(cone, samples, seed, tol)]


# ---------------------------------------------------------------------------
# cross-checks used by tests


def kahler_homogeneity_residual(cone: ConeManifold, y, s: float) -> float:
    """|ω_M(x, s r) − s² ω_M(x, r)| on base directions."""
    y = np.asarray(y, dtype=float)
    ys = y.copy()
    ys[-1] *= s
    W = np.asarray(kahler_form(cone.metric_fn, cone.J, jnp.asarray(y)))
    Ws = np.asarray(kahler_form(cone.metric_fn, cone.J, jnp.asarray(ys)))
    d = cone.dim - 1
    return float(np.abs(Ws[:d, :d] - s**2 * W[:d, :d]).max())


def slice_compatibility_residual(cone: ConeManifold, x, seed=0) -> float:
    """At r = 1: ω_M(ξ, v) = −dr(v) and ω_M = dω on F (Φ-form identification)."""
    from .sasaki import adapted_frames, contact_forms

    x = np.asarray(x, dtype=float)
    y = np.append(x, 1.0)
    W = np.asarray(kahler_form(cone.metric_fn, cone.J, jnp.asarray(y)))
    base = cone.base
    g = base.chart.metric(x)
    xi = np.asarray(base.reeb(jnp.asarray(x)))
    E = adapted_frames(g[None], xi[None], seed)[0]
    d = base.dim
    lift = np.vstack([E, np.zeros((1, d))])
    xi_up = np.append(xi, 0.0)
    dr = np.zeros(d + 1)
    dr[-1] = 1.0
    # ξ-contraction over a full cone frame
    full = np.column_stack([lift, dr])
    res1 = np.abs(xi_up @ W @ full + dr @ full).max()
    _, d_omega = contact_forms(base.metric_fn, base.reeb, jnp.asarray(x))
    F = lift[:, 1:]
    res2 = np.abs(F.T @ W @ F - E[:, 1:].T @ np.asarray(d_omega) @ E[:, 1:]).max()
    return float(max(res1, res2))
