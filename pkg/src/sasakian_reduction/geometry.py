"""Chart-based Riemannian calculus.

Metrics and vector fields are callables ``x -> array`` built from JAX
primitives.  They are wrapped in :class:`jax.tree_util.Partial` so that
parameter arrays (chart centres, frames, ...) are traced leaves and jitted
kernels compile once per *kind* of object rather than once per instance.

Index conventions used throughout:

* ``dg[k, i, j] = d_k g_ij``
* ``Gamma[k, i, j] = Γ^k_ij``
* ``R[l, i, j, k]`` with ``R(∂_i, ∂_j) ∂_k = R^l_ijk ∂_l``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np
from jax.tree_util import Partial

from .errors import DegenerateFrame, DomainError, SingularMetric

EPS = float(np.finfo(float).eps)
COND_LIMIT = 1e12


def as_partial(fn: Callable) -> Partial:
    """Wrap a callable as a pytree so it can be passed through ``jax.jit``."""
    return fn if isinstance(fn, Partial) else Partial(fn)


def _constant(w, x):
    return w + 0.0 * x[: w.shape[0]].sum()


def constant_field(w) -> Partial:
    """Constant-coefficient coordinate field with components ``w``."""
    return Partial(_constant, jnp.asarray(w, dtype=float))


def _affine(w, A, p, x):
    return w + A @ (x - p)


def affine_field(w, A, p) -> Partial:
    """Field ``x -> w + A (x - p)``; equals ``w`` at ``p``."""
    as_arr = lambda a: jnp.asarray(a, dtype=float)
    return Partial(_affine, as_arr(w), as_arr(A), as_arr(p))


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True, eq=False)
class Chart:
    """Coordinate box with a metric-component function.

    ``periods[i]`` (or ``None``) marks coordinates that are angles; such
    coordinates are wrapped into the box instead of being rejected.
    """

    dim: int
    lower: np.ndarray
    upper: np.ndarray
    metric_fn: Partial
    periods: tuple = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "metric_fn", as_partial(self.metric_fn))
        periods = tuple(self.periods) if self.periods else (None,) * self.dim
        object.__setattr__(self, "periods", periods)
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise ValueError("domain bounds must have length dim")
        if np.any(self.upper <= self.lower):
            raise ValueError("empty chart domain")

    def metric(self, p) -> np.ndarray:
        return np.asarray(self.metric_fn(jnp.asarray(p, dtype=float)))

    def wrap(self, p) -> np.ndarray:
        """Reduce periodic coordinates into the box."""
        p = np.array(p, dtype=float)
        for i, per in enumerate(self.periods):
            if per:
                p[i] = self.lower[i] + np.mod(p[i] - self.lower[i], per)
        return p

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        for i, per in enumerate(self.periods):
            if not per and not (self.lower[i] < p[i] < self.upper[i]):
                return False
        return True

    def require(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,) or not self.contains(p):
            raise DomainError(f"point {p} outside open domain of chart {self.name!r}")
        return p


@dataclass(frozen=True, eq=False)
class ChartManifold:
    """One or more charts plus a deterministic seeded sampler."""

    charts: tuple
    seed: int = 0
    margin: float = 1e-3

    def __post_init__(self):
        charts = tuple(self.charts)
        if not charts:
            raise ValueError("a ChartManifold needs at least one chart")
        if len({c.dim for c in charts}) != 1:
            raise ValueError("all charts must share one dimension")
        object.__setattr__(self, "charts", charts)

    @property
    def dim(self) -> int:
        return self.charts[0].dim

    @property
    def chart(self) -> Chart:
        return self.charts[0]

    def sample(self, n: int, seed: int | None = None, chart: int = 0) -> np.ndarray:
        """``n`` points drawn uniformly from the chart box shrunk by the margin."""
        c = self.charts[chart]
        rng = np.random.default_rng([self.seed if seed is None else seed, chart])
        pad = self.margin * (c.upper - c.lower)
        return rng.uniform(c.lower + pad, c.upper - pad, size=(n, c.dim))


# ---------------------------------------------------------------------------
# derivative carriers


@dataclass(frozen=True)
class Jet:
    """Value of a function together with its first partial derivatives.

    ``first_derivs[k]`` is the partial derivative along coordinate ``k``.
    """

    value: np.ndarray
    first_derivs: np.ndarray


def fd_step(p) -> np.ndarray:
    """Central-difference step ``eps**(1/3) * max(1, |x_i|)`` per coordinate."""
    return EPS ** (1.0 / 3.0) * np.maximum(1.0, np.abs(np.asarray(p, dtype=float)))


def ad_jet(fn: Callable, p) -> Jet:
    """Forward-mode jet of ``fn`` at ``p``."""
    x = jnp.asarray(p, dtype=float)
    value, jac = jax.jvp(fn, (x,), (jnp.zeros_like(x),))[0], jax.jacfwd(fn)(x)
    return Jet(np.asarray(value), np.moveaxis(np.asarray(jac), -1, 0))


def fd_jet(fn: Callable, p, step=None) -> Jet:
    """Central finite-difference jet of ``fn`` at ``p`` (independent oracle)."""
    p = np.asarray(p, dtype=float)
    h = fd_step(p) if step is None else np.broadcast_to(np.asarray(step, dtype=float), p.shape)
    derivs = []
    for k in range(p.size):
        xp, xm = p.copy(), p.copy()
        xp[k] += h[k]
        xm[k] -= h[k]
        derivs.append((np.asarray(fn(jnp.asarray(xp))) - np.asarray(fn(jnp.asarray(xm)))) / (xp[k] - xm[k]))
    return Jet(np.asarray(fn(jnp.asarray(p))), np.stack(derivs))


def ad_fd_discrepancy(fn: Callable, points) -> tuple[np.ndarray, np.ndarray]:
    """Per-point max |AD - FD| and the allowed bound ``10 h^2`` (largest step)."""
    fn = as_partial(fn)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    jac = jax.jit(jax.vmap(jax.jacfwd(fn)))(jnp.asarray(points))
    jac = np.moveaxis(np.asarray(jac), -1, 1)  # (n, k, ...)
    vfn = jax.jit(jax.vmap(fn))
    errs, bounds = [], []
    h_all = fd_step(points)
    diffs = np.zeros_like(jac)
    for k in range(points.shape[1]):
        xp, xm = points.copy(), points.copy()
        xp[:, k] += h_all[:, k]
        xm[:, k] -= h_all[:, k]
        span = (xp[:, k] - xm[:, k]).reshape((-1,) + (1,) * (jac.ndim - 2))
        fd = (np.asarray(vfn(jnp.asarray(xp))) - np.asarray(vfn(jnp.asarray(xm)))) / span
        diffs[:, k] = np.abs(fd - jac[:, k])
    errs = diffs.reshape(points.shape[0], -1).max(axis=1)
    bounds = 10.0 * h_all.max(axis=1) ** 2
    return errs, bounds


# ---------------------------------------------------------------------------
# traceable kernels


def metric_jet(metric: Callable, x):
    """Metric components and their first derivatives, ``dg[k, i, j] = d_k g_ij``."""
    g = metric(x)
    dg = jnp.moveaxis(jax.jacfwd(metric)(x), -1, 0)
    return g, dg


def christoffel_symbols(metric: Callable, x):
    """Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij), symmetric in (i, j) by construction."""
    g, dg = metric_jet(metric, x)
    lowered = 0.5 * (
        jnp.einsum("ijl->lij", dg) + jnp.einsum("jil->lij", dg) - dg
    )
    gam = jnp.einsum("kl,lij->kij", jnp.linalg.inv(g), lowered)
    return 0.5 * (gam + jnp.swapaxes(gam, 1, 2))


def christoffel_derivative(metric: Callable, x):
    """``dGamma[m, k, i, j] = ∂_m Γ^k_ij`` by nested forward AD."""
    return jnp.moveaxis(jax.jacfwd(lambda y: christoffel_symbols(metric, y))(x), -1, 0)


def riemann_tensor(metric: Callable, x):
    """R^l_ijk = ∂_i Γ^l_jk − ∂_j Γ^l_ik + Γ^l_im Γ^m_jk − Γ^l_jm Γ^m_ik."""
    gam = christoffel_symbols(metric, x)
    dgam = christoffel_derivative(metric, x)
    deriv = jnp.einsum("iljk->lijk", dgam)
    quad = jnp.einsum("lim,mjk->lijk", gam, gam)
    out = deriv - jnp.swapaxes(deriv, 1, 2) + quad - jnp.swapaxes(quad, 1, 2)
    return out


def second_jet(fn: Callable, x):
    """``(f, Df, D²f)`` of a pytree-valued ``fn`` from one nested forward pass.

    Derivative axes are appended: ``Df[..., i] = ∂_i f`` and
    ``D²f[..., i, j] = ∂_j ∂_i f``.  Tracing ``fn`` once under two nested JVPs
    keeps the compiled graph far smaller than differentiating every derived
    tensor separately.
    """

    def first(z):
        y = fn(z)
        return y, y

    def second(z):
        d1, y = jax.jacfwd(first, has_aux=True)(z)
        return d1, (y, d1)

    d2, (y, d1) = jax.jacfwd(second, has_aux=True)(x)
    return y, d1, d2


def first_jet(fn: Callable, x):
    def first(z):
        y = fn(z)
        return y, y

    d1, y = jax.jacfwd(first, has_aux=True)(x)
    return y, d1


def connection_from_jet(g, G1, G2=None):
    """Γ (and ∂Γ when second derivatives are given) from metric jets.

    ``G1[i, j, k] = ∂_k g_ij`` and ``G2[i, j, k, m] = ∂_m ∂_k g_ij``; returns
    ``Gamma[k, i, j]`` and ``dGamma[m, k, i, j] = ∂_m Γ^k_ij``.
    """
    ginv = jnp.linalg.inv(g)
    lowered = 0.5 * (jnp.einsum("jli->lij", G1) + jnp.einsum("ilj->lij", G1) - jnp.einsum("ijl->lij", G1))
    gam = jnp.einsum("kl,lij->kij", ginv, lowered)
    gam = 0.5 * (gam + jnp.swapaxes(gam, 1, 2))
    if G2 is None:
        return gam, None
    d_lowered = 0.5 * (
        jnp.einsum("jlim->mlij", G2) + jnp.einsum("iljm->mlij", G2) - jnp.einsum("ijlm->mlij", G2)
    )
    dgam = -jnp.einsum("ka,abm,bij->mkij", ginv, G1, gam) + jnp.einsum("kl,mlij->mkij", ginv, d_lowered)
    return gam, 0.5 * (dgam + jnp.swapaxes(dgam, 2, 3))


def riemann_from_connection(gam, dgam):
    deriv = jnp.einsum("iljk->lijk", dgam)
    quad = jnp.einsum("lim,mjk->lijk", gam, gam)
    return deriv - jnp.swapaxes(deriv, 1, 2) + quad - jnp.swapaxes(quad, 1, 2)


def spd_solve(A, b):
    """Solve ``A z = b`` for a small symmetric positive definite ``A``.

    Unrolled Cholesky: under repeated forward differentiation this stays a
    handful of scalar operations, unlike the generic LU-based solver.
    """
    n = A.shape[0]
    L = [[None] * n for _ in range(n)]
    for j in range(n):
        s = A[j, j] - sum(L[j][p] ** 2 for p in range(j))
        L[j][j] = jnp.sqrt(s)
        for i in range(j + 1, n):
            L[i][j] = (A[i, j] - sum(L[i][p] * L[j][p] for p in range(j))) / L[j][j]
    y = [None] * n
    for i in range(n):
        y[i] = (b[i] - sum(L[i][p] * y[p] for p in range(i))) / L[i][i]
    z = [None] * n
    for i in reversed(range(n)):
        z[i] = (y[i] - sum(L[p][i] * z[p] for p in range(i + 1, n))) / L[i][i]
    return jnp.stack(z)


def covariant_derivative_at(metric: Callable, x, direction, field: Callable):
    """(∇_v W)^k = v^i ∂_i W^k + Γ^k_ij v^i W^j."""
    w, dw = jax.jvp(field, (x,), (direction,))
    gam = christoffel_symbols(metric, x)
    return dw + jnp.einsum("kij,i,j->k", gam, direction, w)


def lie_bracket_at(x, V: Callable, W: Callable):
    """[V, W]^k = V^i ∂_i W^k − W^i ∂_i V^k."""
    v, w = V(x), W(x)
    return jax.jvp(W, (x,), (v,))[1] - jax.jvp(V, (x,), (w,))[1]


def field_jacobian(field: Callable, x):
    """``D[k, i] = ∂_i V^k``."""
    return jax.jacfwd(field)(x)


# ---------------------------------------------------------------------------
# public pointwise operations


def _check_metric(g: np.ndarray) -> None:
    g = np.asarray(g)
    if not np.all(np.isfinite(g)):
        raise SingularMetric("metric has non-finite components")
    c = np.linalg.cond(g)
    if not np.isfinite(c) or c > COND_LIMIT:
        raise SingularMetric(f"metric condition number {c:.3e} exceeds {COND_LIMIT:.0e}")


def christoffel(chart: Chart, p) -> np.ndarray:
    """Christoffel symbols ``Gamma[k, i, j]`` of the chart metric at ``p``."""
    p = chart.require(p)
    _check_metric(chart.metric(p))
    return np.asarray(christoffel_symbols(chart.metric_fn, jnp.asarray(p)))


def covariant_derivative(chart: Chart, p, direction, field: Callable) -> np.ndarray:
    p = chart.require(p)
    _check_metric(chart.metric(p))
    out = covariant_derivative_at(
        chart.metric_fn, jnp.asarray(p), jnp.asarray(direction, dtype=float), as_partial(field)
    )
    return np.asarray(out)


def riemann(chart: Chart, p, u, v, w) -> np.ndarray:
    """R(u, v) w = ∇_u ∇_v w − ∇_v ∇_u w − ∇_[u,v] w for vectors at ``p``."""
    p = chart.require(p)
    _check_metric(chart.metric(p))
    R = np.asarray(riemann_tensor(chart.metric_fn, jnp.asarray(p)))
    return np.einsum("lijk,i,j,k->l", R, u, v, w)


def lie_bracket(chart: Chart, p, V: Callable, W: Callable) -> np.ndarray:
    p = chart.require(p)
    return np.asarray(lie_bracket_at(jnp.asarray(p), as_partial(V), as_partial(W)))


def killing_tensor(metric: Callable, x, field: Callable):
    """Symmetric form K(v, w) = g(∇_v V, w) + g(∇_w V, v)."""
    g = metric(x)
    gam = christoffel_symbols(metric, x)
    nabla = field_jacobian(field, x) + jnp.einsum("kij,j->ki", gam, field(x))  # (∇_i V)^k
    A = g @ nabla  # A[j, i] = g(∇_i V, ∂_j)
    return A + A.T


def killing_residual(chart: Chart, p, V: Callable, trial_pairs: Sequence | None = None) -> float:
    """max |g(∇_v V, w) + g(∇_w V, v)| over trial pairs (default: orthonormal frame pairs)."""
    p = chart.require(p)
    g = chart.metric(p)
    _check_metric(g)
    K = np.asarray(killing_tensor(chart.metric_fn, jnp.asarray(p), as_partial(V)))
    if trial_pairs is None:
        E = orthonormal_frame(g, np.eye(chart.dim))
        return float(np.abs(E.T @ K @ E).max())
    return float(max(abs(np.asarray(v) @ K @ np.asarray(w)) for v, w in trial_pairs))


# ---------------------------------------------------------------------------
# frames


def gram_schmidt(g: np.ndarray, vectors, against=(), pivot: float = 1e-10) -> np.ndarray:
    """g-orthonormalize ``vectors`` (columns of the result), after projecting out ``against``.

    ``against`` must already be g-orthonormal.
    """
    basis = [np.asarray(a, dtype=float) for a in against]
    out = []
    for v in vectors:
        v = np.asarray(v, dtype=float).copy()
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            for b in basis + out:
                v = v - (b @ g @ v) * b
        n2 = v @ g @ v
        if not n2 > pivot**2:
            raise DegenerateFrame(f"pivot {np.sqrt(max(n2, 0.0)):.2e} below {pivot:.0e}")
        out.append(v / np.sqrt(n2))
    return np.stack(out, axis=1) if out else np.zeros((g.shape[0], 0))


def orthonormal_frame(g: np.ndarray, vectors=None) -> np.ndarray:
    """Columns form a g-orthonormal basis."""
    vectors = np.eye(g.shape[0]) if vectors is None else vectors
    return gram_schmidt(g, list(np.asarray(vectors).T))


def frame_seeds(rng: np.random.Generator, dim: int, count: int) -> list:
    """Deterministic random initial vectors for Gram-Schmidt."""
    return list(rng.standard_normal((count, dim)))
