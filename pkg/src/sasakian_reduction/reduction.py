"""Group actions, moment maps, level sets and slice charts of the quotient.

A :class:`GroupAction` lives on the cone: ``field_fn(y)`` returns the
``(dim_cone, k)`` matrix whose columns are the fundamental fields ``a_M`` and
``moment_map(y)`` the ``k`` components of μ (the pairing with 𝔨 is the
coordinate dot product).  Everything on the level set happens inside the
``r = 1`` slice, i.e. on the base chart.

Slice charts parametrize a neighbourhood in the quotient ``Y`` by

    ψ(t) = Fl_θ(t)(c + H t + N λ(t)),

where ``H`` is an orthonormal horizontal frame at the centre ``c``, ``N`` are
the g-gradients of μ at ``c``, λ(t) solves μ = 0 along ``N`` (Newton) and θ(t)
picks the point on the K-orbit nearest to ``c + H t`` (Gauss-Newton on the
orbit parameters).  Both solvers run a fixed number of iterations inside
traced code, so ψ and the induced ``g_Y``, ``ξ_Y`` are differentiated exactly
by forward-mode AD, including the third derivatives curvature needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np
from jax import lax
from jax.tree_util import Partial

from . import geometry as geo
from .cone import ConeManifold, kahler_form
from .errors import (
    ChartOverlap,
    DegenerateFrame,
    DimensionTooSmall,
    EmptyLevelSet,
    GeometryError,
    NoConvergence,
    NonFreeAction,
)
from .geometry import Chart, ChartManifold, as_partial
from .report import CheckReport, merge_all
from .sasaki import SasakianData, phi_tensor
from . import sasaki

LEVEL_TOL = 1e-12
MAX_ITER = 50
MAX_HALVINGS = 20
BASIN = 0.5
NEWTON_STEPS = 8
ALIGN_STEPS = 4
ALIGN_FLOW_STEPS = 4
SPLIT_FLOW_STEP = 1e-3

ANCHORS = {
    "moment_map": "d mu(x)(v) . a = omega_M(v, a_M)",
    "moment_equivariance": "d mu_b(a_M) = c^c_ab mu_c",
    "action_closure": "[a_M, b_M] = c^c_ab c_M",
    "reeb_orthogonal_to_orbits": "g(xi, a_M) = 0 on mu^-1(0)",
    "radial_symplectic_orthogonal": "omega_M(d/dr, a_M) = 0",
    "radial_commutes_with_action": "[a_M, d/dr] = 0",
    "reeb_commutes_with_action": "[xi, a_M] = 0",
    "radial_preserves_level_set": "d mu(d/dr) = 0 on mu^-1(0)",
    "level_set_radial_invariance": "mu(x, r) = 0 for (x, 1) in mu^-1(0), all r",
    "flow_scaling_commutation": "Fl_a(x, s r) = s . Fl_a(x, r)",
    "quotient_dimension": "dim Y = dim X - 2k",
    "slice_chart_invariants": "psi(0) = c, g_Y(0) = Id, mu(psi(t)) = 0",
    "horizontal_bracket_defect": "hor([u~, v~] - lift([u, v])) = 0",
    "horizontal_connection_defect": "hor(lift(nabla^Y_u v) - nabla_u~ v~) = 0",
    "horizontal_phi_defect": "hor(lift(Phi^Y(u)) - Phi(u~)) = 0",
    "koszul_consistency": "g(nabla_u~ v~, w~) = g_Y(nabla^Y_u v, w)",
    "quotient_circle_length": "length of Y for a one-dimensional quotient",
}


# ---------------------------------------------------------------------------
# group actions


def _column(field_fn, a, y):
    return field_fn(y)[:, a]


def _on_slice(fn, x):
    return fn(jnp.append(x, jnp.ones((), dtype=x.dtype)))


def _base_fields(field_fn, x):
    return field_fn(jnp.append(x, jnp.ones((), dtype=x.dtype)))[:-1]


@dataclass(eq=False)
class GroupAction:
    """Infinitesimal action of a compact group on the cone, with a supplied moment map.

    ``structure_constants[a, b, c] = c^c_ab`` with ``[a_M, b_M] = c^c_ab c_M``.
    """

    lie_dim: int
    field_fn: Partial
    moment_map: Partial
    structure_constants: np.ndarray | None = None
    acts_on_slice: bool = True
    name: str = ""
    warnings: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.field_fn = as_partial(self.field_fn)
        self.moment_map = as_partial(self.moment_map)
        k = self.lie_dim
        if self.structure_constants is None:
            self.structure_constants = np.zeros((k, k, k))
        self.structure_constants = np.asarray(self.structure_constants, dtype=float)
        c = self.structure_constants
        if c.shape != (k, k, k):
            raise ValueError(f"structure constants must have shape {(k, k, k)}")
        if not np.allclose(c, -np.swapaxes(c, 0, 1), atol=1e-14):
            raise ValueError("structure constants must be antisymmetric in (a, b)")

    @property
    def fundamental_fields(self) -> tuple:
        return tuple(Partial(_column, self.field_fn, a) for a in range(self.lie_dim))

    @property
    def base_fields(self) -> Partial:
        """``x -> (dim_X, k)`` fundamental fields restricted to the r = 1 slice."""
        return Partial(_base_fields, self.field_fn)

    @property
    def base_moment(self) -> Partial:
        """μ_X(x) = μ(x, 1)."""
        return Partial(_on_slice, self.moment_map)

    @property
    def is_abelian(self) -> bool:
        return not np.any(self.structure_constants)


# ---------------------------------------------------------------------------
# small traced helpers


def _mu_jet(mu, x):
    return mu(x), jax.jacfwd(mu)(x)


_mu_jet_jit = jax.jit(_mu_jet)
_mu_batch = jax.jit(jax.vmap(lambda mu, x: mu(x), in_axes=(None, 0)))


def flow(fields, x, theta, steps=ALIGN_FLOW_STEPS, time=1.0):
    """RK4 flow of ``x -> fields(x) @ theta`` for the given time."""
    h = time / steps

    def rhs(z):
        return fields(z) @ theta

    def step(_, z):
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * h * k1)
        k3 = rhs(z + 0.5 * h * k2)
        k4 = rhs(z + h * k3)
        return z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    return lax.fori_loop(0, steps, step, x)


def horizontal_form(g, V):
    """Bilinear form g restricted to the g-orthogonal complement of span(V)."""
    gV = g @ V
    W = jnp.stack([geo.spd_solve(V.T @ gV, row) for row in gV], axis=1)
    return g - gV @ W


def horizontal_projector(g, V):
    """Matrix of the g-orthogonal projection onto span(V)^⊥."""
    gV = g @ V
    W = jnp.stack([geo.spd_solve(V.T @ gV, row) for row in gV], axis=1)
    return jnp.eye(g.shape[0]) - V @ W


# ---------------------------------------------------------------------------
# moment map and assumptions


def _moment_point(metric, J, field_fn, mu, y):
    return {
        "W": kahler_form(metric, J, y),
        "dmu": jax.jacfwd(mu)(y),
        "mu": mu(y),
        "A": field_fn(y),
        "G": metric(y),
    }


_moment_batch = jax.jit(jax.vmap(_moment_point, in_axes=(None, None, None, None, 0)))


def verify_moment_map(cone: ConeManifold, action: GroupAction, samples=100, seed=0, tol=1e-7) -> list:
    """Residuals of dμ_a(x)(v) = ω_M(v, a_M(x)) and of infinitesimal equivariance."""
    pts = cone.sample(samples, seed)
    t = {k: np.asarray(v) for k, v in
         _moment_batch(cone.metric_fn, cone.J, action.field_fn, action.moment_map, jnp.asarray(pts)).items()}
    for name in ("A", "mu"):
        if not np.all(np.isfinite(t[name])):
            raise GeometryError(f"non-finite {name} at a sampled cone point")
    E = np.stack([geo.orthonormal_frame(G) for G in t["G"]])
    lhs = np.einsum("nai,nib->nab", t["dmu"], E)  # dμ_a(e_b)
    rhs = np.einsum("nib,nij,nja->nab", E, t["W"], t["A"])  # ω_M(e_b, a_M)
    res = np.abs(lhs - rhs).max(axis=(1, 2))
    c = action.structure_constants
    eq = np.einsum("nbi,nia->nab", t["dmu"], t["A"]) - np.einsum("abc,nc->nab", c, t["mu"])
    eq_res = np.abs(eq).max(axis=(1, 2))
    notes = {"abelian": action.is_abelian, "pairing": "coordinate dot product on k*"}
    return [
        CheckReport.from_residuals("moment_map", ANCHORS["moment_map"], res, tol, notes),
        CheckReport.from_residuals("moment_equivariance", ANCHORS["moment_equivariance"], eq_res, tol),
    ]


def _closure_point(field_fn, k, y):
    cols = [Partial(_column, field_fn, a) for a in range(k)]
    return jnp.stack([jnp.stack([geo.lie_bracket_at(y, cols[a], cols[b]) for b in range(k)]) for a in range(k)])


def check_action_closure(cone: ConeManifold, action: GroupAction, samples=50, seed=0, tol=1e-7) -> CheckReport:
    """|[a_M, b_M] − c^c_ab c_M| at sampled cone points."""
    pts = jnp.asarray(cone.sample(samples, seed))
    k = action.lie_dim
    br = np.asarray(jax.vmap(lambda y: _closure_point(action.field_fn, k, y))(pts))
    A = np.asarray(jax.vmap(action.field_fn)(pts))
    expected = np.einsum("abc,nic->nabi", action.structure_constants, A)
    res = np.abs(br - expected).max(axis=(1, 2, 3))
    return CheckReport.from_residuals("action_closure", ANCHORS["action_closure"], res, tol)


def _assumption_point(base_metric, reeb, field_fn, mu, x):
    d = x.shape[0]
    y = jnp.append(x, 1.0)
    A = field_fn(y)
    g = base_metric(x)
    xi = reeb(x)
    dr = jnp.zeros(d + 1).at[d].set(1.0)
    radial = Partial(geo._constant, dr)
    cols = [Partial(_column, field_fn, a) for a in range(A.shape[1])]
    comm = jnp.stack([geo.lie_bracket_at(y, c, radial) for c in cols])
    base_cols = [Partial(_column, Partial(_base_fields, field_fn), a) for a in range(A.shape[1])]
    reeb_comm = jnp.stack([geo.lie_bracket_at(x, reeb, c) for c in base_cols])
    dmu = jax.jacfwd(mu)(y)
    dmuX = dmu[:, :d]
    phi = phi_tensor(base_metric, reeb, x)
    dphi = jax.jacfwd(lambda z: phi_tensor(base_metric, reeb, z))(x)
    return {
        "A": A[:d],
        "A_r": A[d],
        "g": g,
        "xi": xi,
        "comm": comm,
        "reeb_comm": reeb_comm,
        "dmu_r": dmu[:, d],
        "dmu_xi": dmuX @ xi,
        "mu": mu(y),
        "phi": phi,
        "dphi": dphi,
        "dA": jnp.stack([jax.jacfwd(c)(x) for c in base_cols]),
        "cov_phi": sasaki.phi_derivative_tensor(base_metric, reeb, x),
    }


_assumption_batch = jax.jit(jax.vmap(_assumption_point, in_axes=(None, None, None, None, 0)))


def _assumption_tensors(data, action, points):
    out = _assumption_batch(data.metric_fn, data.reeb, action.field_fn, action.moment_map, jnp.asarray(points))
    return {k: np.asarray(v) for k, v in out.items()}


def verify_assumptions(
    data: SasakianData, cone: ConeManifold, action: GroupAction, samples=100, seed=0, tol=1e-7
) -> list:
    """Residuals (A)-(E) of the orthogonality/commutation assumptions and the two lemmas.

    (A) and (E) are evaluated on level-set points; if the level set is empty
    they fall back to the sampled slice points and say so in the notes.
    """
    slice_pts = data.sample(samples, seed)
    on_level = True
    try:
        level = level_set_points(cone, action, samples, seed)
        level_pts = np.stack([p.x for p in level])
    except EmptyLevelSet as exc:
        on_level = False
        level_pts = slice_pts
        reason = str(exc)
    tl = _assumption_tensors(data, action, level_pts)
    ts = _assumption_tensors(data, action, slice_pts)

    def gxa(t):
        return np.abs(np.einsum("ni,nij,nja->na", t["xi"], t["g"], t["A"])).max(axis=1)

    notes_a = {"evaluated_on": "level set" if on_level else "slice (level set empty)",
               "global_max": float(gxa(ts).max())}
    if not on_level:
        notes_a["reason"] = reason
    A = gxa(tl)
    C = np.abs(ts["comm"]).max(axis=(1, 2))
    D = np.abs(ts["reeb_comm"]).max(axis=(1, 2))
    Eres = np.abs(tl["dmu_r"]).max(axis=1)
    notes_e = {"evaluated_on": notes_a["evaluated_on"],
               "reeb_tangency_max": float(np.abs(tl["dmu_xi"]).max()) if on_level else None}
    # unlabeled lemma on L_u(J|F): informational only
    notes_d = _lie_derivative_reading(tl, seed)
    B = _radial_symplectic(cone, action, level_pts)
    return [
        CheckReport.from_residuals("reeb_orthogonal_to_orbits", ANCHORS["reeb_orthogonal_to_orbits"], A, tol, notes_a),
        CheckReport.from_residuals("radial_symplectic_orthogonal", ANCHORS["radial_symplectic_orthogonal"],
                                   B, tol),
        CheckReport.from_residuals("radial_commutes_with_action", ANCHORS["radial_commutes_with_action"], C, tol),
        CheckReport.from_residuals("reeb_commutes_with_action", ANCHORS["reeb_commutes_with_action"], D, tol,
                                   notes_d),
        CheckReport.from_residuals("radial_preserves_level_set", ANCHORS["radial_preserves_level_set"], Eres, tol,
                                   notes_e),
    ]


def _radial_symplectic(cone, action, base_pts):
    ys = jnp.asarray(np.column_stack([base_pts, np.ones(len(base_pts))]))
    t = _moment_batch(cone.metric_fn, cone.J, action.field_fn, action.moment_map, ys)
    W, A = np.asarray(t["W"]), np.asarray(t["A"])
    return np.abs(np.einsum("nj,nja->na", W[:, -1, :], A)).max(axis=1)


def _lie_derivative_reading(t, seed):
    """Compare L_u(Φ|F)(v) and −(∇_u Φ)(v) with −g(u, v) ξ for u in 𝔨, v ⊥ ξ."""
    rng = np.random.default_rng(seed)
    lie_res, cov_res = 0.0, 0.0
    for n in range(len(t["g"])):
        g, xi, A = t["g"][n], t["xi"][n], t["A"][n]
        e0 = xi / np.sqrt(xi @ g @ xi)
        try:
            F = geo.gram_schmidt(g, geo.frame_seeds(rng, g.shape[0], g.shape[0] - 1), against=[e0])
        except DegenerateFrame:
            continue
        phi, dphi, dA = t["phi"][n], t["dphi"][n], t["dA"][n]
        for a in range(A.shape[1]):
            u = A[:, a]
            # (L_u Φ)(v) = u^i ∂_i Φ v − (∂_j u) Φ v + Φ (∂_j u) v with constant v
            for v in F.T:
                lie = np.einsum("kji,i,j->k", dphi, u, v) - dA[a] @ (phi @ v) + phi @ (dA[a] @ v)
                target = -(u @ g @ v) * xi
                lie_res = max(lie_res, float(np.abs(lie - target).max()))
                cov = -np.einsum("ikj,i,j->k", t["cov_phi"][n], u, v)
                cov_res = max(cov_res, float(np.abs(cov - target).max()))
    return {"lie_derivative_reading_residual": lie_res, "covariant_reading_residual": cov_res,
            "excluded_from_verdict": True}


# ---------------------------------------------------------------------------
# level set


@dataclass(frozen=True, eq=False)
class LevelSetPoint:
    """Point of μ_X^{-1}(0) with g-orthonormal vertical and horizontal frames."""

    x: np.ndarray
    vertical: np.ndarray
    horizontal: np.ndarray
    iterations: int
    residual: float

    @property
    def quotient_dim(self) -> int:
        return self.horizontal.shape[1]


def _sign_check(cone: ConeManifold, action: GroupAction, n=512):
    key = ("sign", n)
    if key in action._cache:
        return
    base = cone.base
    pts = base.manifold.sample(n, 12345)
    vals = np.asarray(_mu_batch(action.base_moment, jnp.asarray(pts)))
    for a in range(vals.shape[1]):
        if vals[:, a].min() > 0 or vals[:, a].max() < 0:
            raise EmptyLevelSet(
                f"moment component {a} has a definite sign on the slice "
                f"(range [{vals[:, a].min():.3g}, {vals[:, a].max():.3g}] over {n} samples)"
            )
    action._cache[key] = True


def _frames_at(base_metric, base_fields, mu, x):
    g = np.asarray(base_metric(jnp.asarray(x)))
    A = np.asarray(base_fields(jnp.asarray(x)))
    _, dmu = _mu_jet_jit(mu, jnp.asarray(x))
    dmu = np.asarray(dmu)
    k = A.shape[1]
    try:
        V = geo.gram_schmidt(g, list(A.T), pivot=1e-8)
    except DegenerateFrame as exc:
        raise NonFreeAction(f"fundamental fields dependent at {x}: {exc}") from exc
    sv = np.linalg.svd(dmu, compute_uv=False)
    if sv.min() < 1e-8:
        raise NonFreeAction(f"d mu not surjective at {x} (singular value {sv.min():.2e})")
    _, _, vt = np.linalg.svd(dmu)
    T = vt[k:].T  # Euclidean basis of ker dμ
    P = T - V @ (V.T @ g @ T)
    gram = P.T @ g @ P
    w, U = np.linalg.eigh(gram)
    keep = w > 1e-10
    m = g.shape[0] - 2 * k
    if keep.sum() != m:
        raise NonFreeAction(f"horizontal space has dimension {keep.sum()}, expected {m}")
    H = P @ U[:, keep] / np.sqrt(w[keep])
    H = geo.gram_schmidt(g, list(H.T))
    return V, H


def project_to_level_set(cone: ConeManifold, action: GroupAction, x0, tol=LEVEL_TOL, max_iter=MAX_ITER):
    """Damped Gauss-Newton on μ_X inside the r = 1 slice."""
    _sign_check(cone, action)
    base = cone.base
    chart = base.chart
    mu = action.base_moment
    x = chart.wrap(np.asarray(x0, dtype=float))
    val, jac = (np.asarray(a) for a in _mu_jet_jit(mu, jnp.asarray(x)))
    it = 0
    while np.abs(val).max() >= tol:
        if it >= max_iter:
            raise NoConvergence(f"|mu| = {np.abs(val).max():.3e} after {max_iter} iterations")
        g = chart.metric(x)
        gi_jt = np.linalg.solve(g, jac.T)
        step = -gi_jt @ np.linalg.solve(jac @ gi_jt, val)
        lam, cur = 1.0, np.abs(val).max()
        for _ in range(MAX_HALVINGS + 1):
            trial = chart.wrap(x + lam * step)
            if chart.contains(trial):
                tv, tj = (np.asarray(a) for a in _mu_jet_jit(mu, jnp.asarray(trial)))
                if np.abs(tv).max() < cur:
                    break
            lam *= 0.5
        else:
            raise NoConvergence("step halving exhausted")
        x, val, jac = trial, tv, tj
        it += 1
    V, H = _frames_at(base.metric_fn, action.base_fields, mu, x)
    return LevelSetPoint(x, V, H, it, float(np.abs(val).max()))


def level_set_points(cone: ConeManifold, action: GroupAction, count, seed, margin=0.0, attempts=20):
    """``count`` level-set points from seeded starts inside the basin."""
    _sign_check(cone, action)
    base = cone.base
    out = []
    rng_seed = seed
    for round_ in range(attempts):
        starts = base.manifold.sample(max(4 * count, 16), seed=rng_seed * 7919 + round_ + 1)
        vals = np.abs(np.asarray(_mu_batch(action.base_moment, jnp.asarray(starts)))).max(axis=1)
        for x0 in starts[vals < BASIN]:
            try:
                p = project_to_level_set(cone, action, x0)
            except (NoConvergence, NonFreeAction):
                continue
            if margin and not _inside(base.chart, p.x, margin):
                continue
            out.append(p)
            if len(out) == count:
                return out
    if not out:
        raise EmptyLevelSet("no start point converged to the level set")
    return out


def _inside(chart: Chart, x, margin):
    for i, per in enumerate(chart.periods):
        if not per and not (chart.lower[i] + margin < x[i] < chart.upper[i] - margin):
            return False
    return True


def level_set_cone_splitting(cone: ConeManifold, action: GroupAction, samples=20, seed=0, tol=1e-7) -> list:
    """μ vanishes along the ℝ₊-ray through level-set points, and K-flows commute with scaling."""
    pts = level_set_points(cone, action, samples, seed)
    X = np.stack([p.x for p in pts])
    scales = (0.5, 1.0, 2.0)
    radial = []
    for s in scales:
        ys = np.column_stack([X, np.full(len(X), s)])
        radial.append(np.abs(np.asarray(_mu_batch(action.moment_map, jnp.asarray(ys)))).max(axis=1))
    radial = np.max(radial, axis=0)
    slice_eq = np.abs(np.asarray(_mu_batch(action.base_moment, jnp.asarray(X)))).max()
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(-1.0, 1.0, size=(len(X), action.lie_dim))
    comm = np.zeros(len(X))
    n_steps = int(round(1.0 / SPLIT_FLOW_STEP))
    for s in (0.5, 2.0):
        y1 = jnp.asarray(np.column_stack([X, np.ones(len(X))]))
        moved = _cone_flow_batch(action.field_fn, y1, jnp.asarray(thetas), n_steps)
        ys = y1.at[:, -1].multiply(s)
        moved_s = _cone_flow_batch(action.field_fn, ys, jnp.asarray(thetas), n_steps)
        expected = np.asarray(moved).copy()
        expected[:, -1] *= s
        comm = np.maximum(comm, np.abs(np.asarray(moved_s) - expected).max(axis=1))
    return [
        CheckReport.from_residuals(
            "level_set_radial_invariance", ANCHORS["level_set_radial_invariance"], radial, 1e-9,
            {"scales": list(scales), "slice_restriction_max": float(slice_eq)},
        ),
        CheckReport.from_residuals(
            "flow_scaling_commutation", ANCHORS["flow_scaling_commutation"], comm, tol,
            {"integrator": "rk4", "step": SPLIT_FLOW_STEP},
        ),
    ]


def _cone_flow(field_fn, y, theta, n_steps):
    return flow(field_fn, y, theta, steps=n_steps)


_cone_flow_batch = jax.jit(jax.vmap(_cone_flow, in_axes=(None, 0, 0, None)), static_argnums=3)


# ---------------------------------------------------------------------------
# slice charts


def _slice_point(mu_X, fields_X, params, t):
    c, H, N, Gc = params["c"], params["H"], params["N"], params["Gc"]
    k = N.shape[1]
    x0 = c + H @ t

    def newton(_, lam):
        x = x0 + N @ lam
        F = mu_X(x)
        Jm = jax.jacfwd(mu_X)(x) @ N  # ≈ dμ G⁻¹ dμᵀ, symmetric positive definite near c
        return lam - geo.spd_solve(0.5 * (Jm + Jm.T), F)

    lam = lax.fori_loop(0, NEWTON_STEPS, newton, jnp.zeros(k, dtype=t.dtype))
    x = x0 + N @ lam

    def align(_, th):
        y = flow(fields_X, x, th)
        Jt = jax.jacfwd(lambda s: flow(fields_X, x, s))(th)
        r = y - x0
        return th - geo.spd_solve(Jt.T @ Gc @ Jt, Jt.T @ Gc @ r)

    th = lax.fori_loop(0, ALIGN_STEPS, align, jnp.zeros(k, dtype=t.dtype))
    return flow(fields_X, x, th)


def _slice_frame(base_metric, mu_X, fields_X, params, t):
    psi = lambda s: _slice_point(mu_X, fields_X, params, s)
    x = psi(t)
    D = jax.jacfwd(psi)(t)
    Q = horizontal_form(base_metric(x), fields_X(x))
    return x, D, Q


def quotient_metric(base_metric, mu_X, fields_X, params, t):
    """g_Y(t): Gram matrix of the horizontal parts of ∂ψ/∂t_i."""
    _, D, Q = _slice_frame(base_metric, mu_X, fields_X, params, t)
    return D.T @ Q @ D


def quotient_reeb(base_metric, reeb, mu_X, fields_X, params, t):
    """ξ_Y(t): coordinates of the horizontal part of ξ in the ∂ψ frame."""
    return quotient_structure(base_metric, reeb, mu_X, fields_X, params, t)[1]


def quotient_structure(base_metric, reeb, mu_X, fields_X, params, t):
    """(g_Y, ξ_Y) sharing one evaluation of ψ and its Jacobian."""
    x, D, Q = _slice_frame(base_metric, mu_X, fields_X, params, t)
    gY = D.T @ Q @ D
    return gY, geo.spd_solve(gY, D.T @ Q @ reeb(x))


def _slice_diagnostics(mu_X, fields_X, params, t):
    x = _slice_point(mu_X, fields_X, params, t)
    return {"x": x, "mu": mu_X(x)}


_call = jax.jit(lambda fn, t: fn(t))
_slice_diag_batch = jax.jit(jax.vmap(_slice_diagnostics, in_axes=(None, None, None, 0)))


@dataclass(eq=False)
class SliceChart:
    """Local chart of the quotient Y around a level-set point."""

    center: LevelSetPoint
    radius: float
    params: dict
    psi: Partial
    data: SasakianData
    action: GroupAction
    cone: ConeManifold

    @property
    def dim(self) -> int:
        return self.data.dim

    @property
    def metric_fn(self):
        return self.data.metric_fn

    @property
    def reeb(self):
        return self.data.reeb

    def point(self, t) -> np.ndarray:
        return np.asarray(_call(self.psi, jnp.asarray(t, dtype=float)))


def build_slice_chart(cone: ConeManifold, action: GroupAction, center: LevelSetPoint, radius=0.05, seed=0,
                      check=True) -> SliceChart:
    """Slice chart of radius ``radius`` (orthonormal horizontal coordinates) around ``center``."""
    base = cone.base
    m = center.quotient_dim
    if m < 1:
        raise DimensionTooSmall("quotient has dimension 0")
    c = np.asarray(center.x, dtype=float)
    g = base.chart.metric(c)
    _, dmu = _mu_jet_jit(action.base_moment, jnp.asarray(c))
    N = np.linalg.solve(g, np.asarray(dmu).T)
    H = np.array(center.horizontal)
    xi = np.asarray(base.reeb(jnp.asarray(c)))
    if H[:, 0] @ g @ xi < 0:
        H[:, 0] = -H[:, 0]  # orient so that ξ_Y has a positive first component
    params = {k: jnp.asarray(v) for k, v in {"c": c, "H": H, "N": N, "Gc": g}.items()}
    mu_X, fields_X = action.base_moment, action.base_fields
    psi = Partial(_slice_point, mu_X, fields_X, params)
    metric = Partial(quotient_metric, base.metric_fn, mu_X, fields_X, params)
    reeb = Partial(quotient_reeb, base.metric_fn, base.reeb, mu_X, fields_X, params)
    structure = Partial(quotient_structure, base.metric_fn, base.reeb, mu_X, fields_X, params)
    chart = Chart(m, -radius * np.ones(m), radius * np.ones(m), metric, name=f"slice({base.name})")
    data = SasakianData(ChartManifold((chart,), seed=seed, margin=0.05), reeb, name=f"Y({base.name})",
                        structure=structure)
    sc = SliceChart(center, radius, params, psi, data, action, cone)
    if check:
        rep = slice_chart_report(sc, samples=16, seed=seed)
        if not rep.passed:
            raise ChartOverlap(f"slice chart invariants violated: max residual {rep.max_residual:.3e}")
    return sc


def _alignment_stationarity(mu_X, fields_X, params, t):
    x = _slice_point(mu_X, fields_X, params, t)
    x0 = params["c"] + params["H"] @ t
    A = fields_X(x)
    return A.T @ params["Gc"] @ (x - x0)


_align_batch = jax.jit(jax.vmap(_alignment_stationarity, in_axes=(None, None, None, 0)))


def slice_chart_report(sc: SliceChart, samples=16, seed=0, tol=1e-8) -> CheckReport:
    """ψ(0) = c, g_Y(0) = Id, |μ(ψ(t))| small and orbit alignment stationary."""
    m = sc.dim
    ts = sc.data.sample(samples, seed)
    diag = _slice_diag_batch(sc.action.base_moment, sc.action.base_fields, sc.params, jnp.asarray(ts))
    mu_res = np.abs(np.asarray(diag["mu"])).max(axis=1)
    align = np.abs(np.asarray(_align_batch(sc.action.base_moment, sc.action.base_fields, sc.params,
                                           jnp.asarray(ts)))).max(axis=1)
    zero = jnp.zeros(m)
    c_res = np.abs(sc.point(zero) - sc.center.x).max()
    gY0 = np.asarray(_call(sc.metric_fn, zero))
    g_res = np.abs(gY0 - np.eye(m)).max()
    res = np.concatenate([mu_res, align, [c_res, g_res]])
    notes = {"center_residual": float(c_res), "metric_at_center_residual": float(g_res),
             "level_residual_max": float(mu_res.max()), "alignment_residual_max": float(align.max())}
    return CheckReport.from_residuals("slice_chart_invariants", ANCHORS["slice_chart_invariants"], res, tol, notes)


# ---------------------------------------------------------------------------
# horizontal-lift calculus upstairs


def _lift_point(base_metric, reeb, mu_X, fields_X, params, t):
    """Upstairs defects at ψ(t) for horizontal lifts of the chart coordinate fields."""
    m = t.shape[0]
    k = params["N"].shape[1]

    def Psi(s):
        return flow(fields_X, _slice_point(mu_X, fields_X, params, s[:m]), s[m:])

    def frame(s):
        x, DPsi = geo.first_jet(Psi, s)
        P = horizontal_projector(base_metric(x), fields_X(x))
        return x, DPsi, P @ DPsi[:, :m]  # columns of the last entry: ũ_i

    s0 = jnp.concatenate([t, jnp.zeros(k, dtype=t.dtype)])
    (x, DPsi, U), (_, _, dU) = geo.first_jet(frame, s0)  # dU[comp, i, s]
    sigma = jnp.linalg.lstsq(DPsi, U)[0]  # parameters of each ũ_i
    dirU = jnp.einsum("kjs,si->kij", dU, sigma)  # D_{ũ_i} ũ_j
    g = base_metric(x)
    gam = geo.christoffel_symbols(base_metric, x)
    bracket = dirU - jnp.swapaxes(dirU, 1, 2)
    nabla = dirU + jnp.einsum("kab,ai,bj->kij", gam, U, U)
    ystruct = Partial(quotient_structure, base_metric, reeb, mu_X, fields_X, params)
    gY, gamY, xiY, phiY = sasaki.first_order_tensors(ystruct, t)
    lift_nablaY = jnp.einsum("ka,aij->kij", U, gamY)
    phiX = phi_tensor(base_metric, reeb, x)
    lift_phiY = U @ phiY
    phiU = phiX @ U

    # horizontal space of the level set at x is spanned by the lifts themselves;
    # projecting only off the orbit would keep the level set's normal component
    gU = g @ U
    P_hor = U @ jnp.stack([geo.spd_solve(U.T @ gU, row) for row in gU], axis=1)

    def hor_norm(v):  # v: (d, ...) -> g-norms of horizontal parts
        hv = jnp.einsum("ab,b...->a...", P_hor, v)
        return jnp.sqrt(jnp.abs(jnp.einsum("a...,ab,b...->...", hv, g, hv)))

    koszul_up = jnp.einsum("kij,kl,lm->ijm", nabla, g, U)
    koszul_down = jnp.einsum("aij,am->ijm", gamY, gY)
    return {
        "bracket": hor_norm(bracket).max(),
        "connection": hor_norm(lift_nablaY - nabla).max(),
        "phi": hor_norm(lift_phiY - phiU).max(),
        "koszul": jnp.abs(koszul_up - koszul_down).max(),
        "reeb_lift": jnp.sqrt(jnp.abs((U @ xiY - P_hor @ reeb(x)) @ g @ (U @ xiY - P_hor @ reeb(x)))),
    }


_lift_batch = jax.jit(jax.vmap(_lift_point, in_axes=(None, None, None, None, None, 0)))


def lift_defects(sc: SliceChart, samples=20, seed=0) -> dict:
    base = sc.cone.base
    ts = sc.data.sample(samples, seed)
    out = _lift_batch(base.metric_fn, base.reeb, sc.action.base_moment, sc.action.base_fields, sc.params,
                      jnp.asarray(ts))
    return {k: np.asarray(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# quotient verification


def choose_centers(cone, action, n_charts, seed, margin=0.15):
    return level_set_points(cone, action, n_charts, seed, margin=margin)


def chart_reports(sc: SliceChart, samples=20, seed=0, tol=1e-4) -> list:
    """Sasakian and lift checks on one slice chart."""
    q = sc.data
    reports = [slice_chart_report(sc, samples, seed)]
    reports += sasaki.reeb_reports(q, samples, seed, tol=tol)
    if q.dim >= 3:
        reports.append(sasaki._guarded(sasaki.check_condition_i, "phi_identity", q, samples, seed, tol))
        reports.append(sasaki._guarded(sasaki.check_condition_ii, "curvature_identity", q, samples, seed, tol))
        reports.append(sasaki._guarded(sasaki.check_contact_nondegeneracy, "contact_nondegeneracy", q, samples,
                                       seed))
    else:
        reason = f"DimensionTooSmall: quotient dimension {q.dim}; F = 0 and the identities are vacuous"
        for name in ("phi_identity", "curvature_identity", "contact_nondegeneracy"):
            reports.append(CheckReport.skipped(name, sasaki.ANCHORS[name], reason, tol))
    lifts = lift_defects(sc, samples, seed)
    for name, key in (("horizontal_bracket_defect", "bracket"), ("horizontal_connection_defect", "connection"),
                      ("horizontal_phi_defect", "phi"), ("koszul_consistency", "koszul")):
        reports.append(CheckReport.from_residuals(name, ANCHORS[name], lifts[key], 1e-5))
    return reports


def verify_quotient_sasakian(cone: ConeManifold, action: GroupAction, n_charts=4, samples=20, seed=0,
                             tol=1e-4, radius=0.05) -> tuple[list, dict]:
    """Build ``n_charts`` slice charts and run the Sasakian checks on each.

    Returns the merged reports (one per check, in a fixed order, prefixed by
    ``quotient_``) and a summary dictionary.
    """
    centers = choose_centers(cone, action, n_charts, seed)
    m = centers[0].quotient_dim
    expected_m = cone.base.dim - 2 * action.lie_dim
    per_chart = []
    for i, c in enumerate(centers):
        sc = build_slice_chart(cone, action, c, radius, seed=seed + i)
        per_chart.append(chart_reports(sc, samples, seed + i, tol))
    merged = []
    for j in range(len(per_chart[0])):
        rep = merge_all([pc[j] for pc in per_chart])
        merged.append(CheckReport(
            "quotient_" + rep.check_name, rep.anchor, rep.points_sampled, rep.max_residual, rep.mean_residual,
            rep.tolerance, rep.verdict, {**rep.notes, "charts": len(per_chart)},
        ))
    dim_rep = CheckReport.from_residuals(
        "quotient_dimension", ANCHORS["quotient_dimension"], [abs(m - expected_m)], 0.5,
        {"quotient_dim": m, "expected": expected_m},
    )
    unit = next(r for r in merged if r.check_name == "quotient_reeb_unit")
    summary = {"quotient_dim": m, "reeb_norm_error": unit.max_residual, "charts_built": len(per_chart)}
    return [dim_rep] + merged, summary


# ---------------------------------------------------------------------------
# one-dimensional quotients: total length by stepping slice charts

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def _speed(base_metric, mu_X, fields_X, params, t):
    return jnp.sqrt(quotient_metric(base_metric, mu_X, fields_X, params, t)[0, 0])


_speed_batch = jax.jit(jax.vmap(_speed, in_axes=(None, None, None, None, 0)))
_psi_batch = jax.jit(jax.vmap(_slice_point, in_axes=(None, None, None, 0)))


def _segment_length(sc: SliceChart, a: float, b: float) -> float:
    base = sc.cone.base
    t = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
    v = _speed_batch(base.metric_fn, sc.action.base_moment, sc.action.base_fields, sc.params,
                     jnp.asarray(t[:, None]))
    return float(0.5 * (b - a) * np.dot(_GL_WEIGHTS, np.asarray(v)))


def _periodic_diff(chart: Chart, a, b):
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    for i, per in enumerate(chart.periods):
        if per:
            d[i] = (d[i] + 0.5 * per) % per - 0.5 * per
    return d


def _orbit_distance(chart, fields_X, g0, target, x, theta_grid):
    """min over θ of the g0-distance between Fl_θ(x) and ``target`` (modulo periods)."""
    pts = np.asarray(_flow_many(fields_X, jnp.asarray(x), jnp.asarray(theta_grid)))
    diffs = np.stack([_periodic_diff(chart, p, target) for p in pts])
    dist = np.sqrt(np.einsum("ni,ij,nj->n", diffs, g0, diffs))
    j = int(np.argmin(dist))
    return float(dist[j]), theta_grid[j]


_flow_many = jax.jit(jax.vmap(lambda f, x, th: flow(f, x, th, steps=32), in_axes=(None, None, 0)))


def quotient_circle_length(cone: ConeManifold, action: GroupAction, start: LevelSetPoint, step=0.04,
                           radius=0.05, max_charts=2000, period_guess=2 * np.pi) -> dict:
    """Length of a one-dimensional quotient, walking slice charts around the circle.

    Each chart contributes the integral of |∂_t|_{g_Y} over its step (Gauss-
    Legendre); the walk closes when the current chart meets the K-orbit of
    the starting point, located by minimizing orbit distance over (t, θ).
    """
    if start.quotient_dim != 1 or action.lie_dim != 1:
        raise DimensionTooSmall("circle length needs a one-dimensional quotient of a circle action")
    base = cone.base
    chart = base.chart
    fields_X = action.base_fields
    c0 = start.x
    g0 = chart.metric(c0)
    grid = np.linspace(-period_guess / 2, period_guess / 2, 257)[:, None]
    length, center, charts, left = 0.0, start, 0, False
    ts = np.linspace(0.0, step, 41)
    while charts < max_charts:
        sc = build_slice_chart(cone, action, center, radius, check=False)
        charts += 1
        pts = np.asarray(_psi_batch(action.base_moment, fields_X, sc.params, jnp.asarray(ts[:, None])))
        dists = np.array([_orbit_distance(chart, fields_X, g0, c0, p, grid)[0] for p in pts])
        if not left and dists.min() > 4 * step:
            left = True
        if left and dists.min() < 2 * step:
            j = int(np.argmin(dists))
            if 0 < j < len(ts) - 1 or dists[j] < 0.5 * step:
                t_star = _refine_closure(sc, chart, fields_X, g0, c0, ts[j], grid)
                length += _segment_length(sc, 0.0, t_star)
                return {"length": length, "charts": charts, "closure_t": t_star}
        length += _segment_length(sc, 0.0, step)
        nxt = chart.wrap(sc.point(np.array([step])))
        center = project_to_level_set(cone, action, nxt)
    raise NoConvergence("circle walk did not close")


def _refine_closure(sc, chart, fields_X, g0, c0, t_guess, grid):
    """Solve Fl_θ(ψ(t)) = c0 for (t, θ) by Gauss-Newton in least squares."""
    _, th = _orbit_distance(chart, fields_X, g0, c0, sc.point([t_guess]), grid)
    z = np.array([t_guess, th[0]])
    L = np.linalg.cholesky(g0)

    def resid(zz):
        x = _slice_point(sc.action.base_moment, fields_X, sc.params, zz[:1])
        y = flow(fields_X, x, zz[1:], steps=32)
        return y

    f = jax.jit(resid)
    jf = jax.jit(jax.jacfwd(resid))
    for _ in range(30):
        r = L.T @ _periodic_diff(chart, np.asarray(f(jnp.asarray(z))), c0)
        Jr = L.T @ np.asarray(jf(jnp.asarray(z)))
        dz = np.linalg.lstsq(Jr, -r, rcond=None)[0]
        z = z + dz
        if np.abs(dz).max() < 1e-14:
            break
    return float(z[0])
