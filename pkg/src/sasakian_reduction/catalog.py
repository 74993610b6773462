"""Built-in examples, negative controls and the JSON configuration format.

Every catalog entry is stored as a configuration dictionary, so built-in and
user-supplied examples go through the same constructor and an entry survives
a round trip through JSON unchanged.

Configuration fields::

    name        identifier
    sphere      n, for the round S^{2n+1} in generalized Hopf coordinates, or
    coords      coordinate names, with
    domain      [[lo, hi], ...] per coordinate,
    periods     period or null per coordinate (optional),
    metric      matrix of expressions, or
    embedding   list of expressions (metric = pullback of the Euclidean one),
    reeb        list of expressions (defaults to the Hopf field on spheres)
    action      {"weights": [[...], ...], "moment_shift": [...]} on spheres, or
                {"fields": [[...], ...], "moment": [...], "structure_constants": ...};
                fields use the base coordinates, the moment map may also use r
    expected    {check name: "fail"}; unlisted checks are expected to pass
    expect_error  exception name the reduction is expected to raise
    oracles     {"circle_length": value, ...}
    seed        integer
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np
from jax.tree_util import Partial

from . import geometry as geo
from .errors import ExpressionError
from .expr import compile_array
from .geometry import Chart, ChartManifold
from .reduction import GroupAction
from .sasaki import SasakianData

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# spheres


@dataclass(frozen=True)
class SphereEmbedding:
    """z_j = ρ_j(η) e^{iα_j} with ρ_1 = cos η_1, ρ_2 = sin η_1 cos η_2, ..., ρ_{n+1} = Π sin η_i."""

    n: int

    def radii(self, eta):
        return sphere_radii(eta)

    def __call__(self, x):
        n = self.n
        rho = sphere_radii(x[:n])
        alpha = x[n:]
        return jnp.concatenate([rho * jnp.cos(alpha), rho * jnp.sin(alpha)])


def sphere_radii(eta):
    """Moduli |z_j| as functions of the radial angles (works on traced arrays)."""
    n = eta.shape[0]
    s = jnp.concatenate([jnp.ones(1, dtype=eta.dtype), jnp.cumprod(jnp.sin(eta))])
    c = jnp.concatenate([jnp.cos(eta), jnp.ones(1, dtype=eta.dtype)])
    return s[: n + 1] * c


def pullback_metric(embedding, x):
    D = jax.jacfwd(embedding)(x)
    return D.T @ D


def make_sphere(n: int) -> SasakianData:
    """Round S^{2n+1} with the Hopf Reeb field Σ_j ∂α_j."""
    if n < 1:
        raise ValueError("n must be at least 1")
    dim = 2 * n + 1
    lower = np.zeros(dim)
    upper = np.concatenate([np.full(n, math.pi / 2), np.full(n + 1, TWO_PI)])
    periods = (None,) * n + (TWO_PI,) * (n + 1)
    chart = Chart(dim, lower, upper, Partial(pullback_metric, Partial(SphereEmbedding(n))), periods, name=f"S{dim}")
    reeb = geo.constant_field(np.concatenate([np.zeros(n), np.ones(n + 1)]))
    return SasakianData(ChartManifold((chart,)), reeb, name=f"S{dim}")


def _torus_fields(W, y):
    k, m = W.shape
    n = m - 1
    A = jnp.zeros((y.shape[0], k), dtype=y.dtype) + 0.0 * y[0]
    return A.at[n : n + m].set(W.T)


def _torus_moment(W, shift, y):
    n = W.shape[1] - 1
    rho = sphere_radii(y[:n])
    return 0.5 * y[-1] ** 2 * (W @ rho**2) + shift


def make_torus_action(sphere: SasakianData, weights, moment_shift=None, name="") -> GroupAction:
    """Linear torus action with weight matrix ``weights`` (k × (n+1)) on S^{2n+1}."""
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    n = (sphere.dim - 1) // 2
    if W.shape[1] != n + 1:
        raise ValueError(f"weights need {n + 1} entries per row, got {W.shape[1]}")
    if not np.any(W, axis=1).all():
        raise ValueError("every weight row must be nonzero")
    shift = np.zeros(W.shape[0]) if moment_shift is None else np.asarray(moment_shift, dtype=float)
    warnings = []
    for row in W:
        if (row >= 0).all() or (row <= 0).all():
            warnings.append("AllPositiveWeights: weights of one sign, the level set is empty")
            break
    return GroupAction(
        W.shape[0],
        Partial(_torus_fields, jnp.asarray(W)),
        Partial(_torus_moment, jnp.asarray(W), jnp.asarray(shift)),
        acts_on_slice=True,
        name=name or "T^%d%s" % (W.shape[0], tuple(W.astype(int).tolist())),
        warnings=tuple(warnings),
    )


def make_circle_action(sphere: SasakianData, weights, moment_shift=None) -> GroupAction:
    """Circle action a_M = Σ_j w_j ∂α_j with μ = (r²/2) Σ_j w_j ρ_j²."""
    w = np.asarray(weights, dtype=float).reshape(1, -1)
    shift = None if moment_shift is None else np.atleast_1d(moment_shift)
    return make_torus_action(sphere, w, shift, name="S1" + str(tuple(w[0].astype(int).tolist())))


# ---------------------------------------------------------------------------
# generic configs


def _lifted_fields(fields, y):
    A = fields(y[:-1])  # (k, d)
    return jnp.concatenate([A.T, jnp.zeros((1, A.shape[0]), dtype=y.dtype)], axis=0)


class ConfigError(ValueError):
    """Malformed configuration (missing or inconsistent fields)."""


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError(f"config {cfg.get('name', '?')!r} lacks field {key!r}")
    return cfg[key]


def build_data(cfg: dict) -> SasakianData:
    name = cfg.get("name", "")
    if "sphere" in cfg:
        data = make_sphere(int(cfg["sphere"]))
        if "reeb" in cfg:
            coords = sphere_coords(int(cfg["sphere"]))
            data = SasakianData(data.manifold, Partial(compile_array(cfg["reeb"], coords)), name=name)
        data.name = name or data.name
        return data
    coords = list(_require(cfg, "coords"))
    dim = len(coords)
    domain = np.asarray(_require(cfg, "domain"), dtype=float)
    if domain.shape != (dim, 2):
        raise ConfigError(f"domain must list [lo, hi] for each of the {dim} coordinates")
    periods = tuple(None if p is None else float(p) for p in cfg.get("periods", [None] * dim))
    if len(periods) != dim:
        raise ConfigError("periods must have one entry per coordinate")
    if "metric" in cfg:
        metric = Partial(compile_array(cfg["metric"], coords))
        if metric.func.shape != (dim, dim):
            raise ConfigError(f"metric must be a {dim}x{dim} matrix of expressions")
    elif "embedding" in cfg:
        metric = Partial(pullback_metric, Partial(compile_array(cfg["embedding"], coords)))
    else:
        raise ConfigError("config needs 'metric', 'embedding' or 'sphere'")
    reeb = Partial(compile_array(_require(cfg, "reeb"), coords))
    if reeb.func.shape != (dim,):
        raise ConfigError(f"reeb must list {dim} expressions")
    chart = Chart(dim, domain[:, 0], domain[:, 1], metric, periods, name=name)
    return SasakianData(ChartManifold((chart,), seed=int(cfg.get("seed", 0))), reeb, name=name)


def sphere_coords(n: int) -> list:
    return [f"eta{i + 1}" for i in range(n)] + [f"alpha{j + 1}" for j in range(n + 1)]


def config_coords(cfg: dict) -> list:
    return sphere_coords(int(cfg["sphere"])) if "sphere" in cfg else list(cfg["coords"])


def build_action(cfg: dict, data: SasakianData, weights=None) -> GroupAction | None:
    action_cfg = cfg.get("action")
    if weights is not None:
        if "sphere" not in cfg:
            raise ConfigError("--weights only applies to sphere entries")
        shift = (action_cfg or {}).get("moment_shift")
        return make_torus_action(data, np.atleast_2d(weights), shift)
    if action_cfg is None:
        return None
    if "weights" in action_cfg:
        if "sphere" not in cfg:
            raise ConfigError("'weights' actions are defined on sphere entries only")
        return make_torus_action(data, np.atleast_2d(action_cfg["weights"]), action_cfg.get("moment_shift"))
    coords = config_coords(cfg)
    fields = compile_array(_require(action_cfg, "fields"), coords)
    k = fields.shape[0]
    if len(fields.shape) != 2 or fields.shape[1] != len(coords):
        raise ConfigError("action fields must be k lists of one expression per coordinate")
    moment = compile_array(_require(action_cfg, "moment"), coords + ["r"])
    if moment.shape != (k,):
        raise ConfigError(f"moment must list {k} expressions")
    return GroupAction(
        k,
        Partial(_lifted_fields, Partial(fields)),
        Partial(moment),
        structure_constants=action_cfg.get("structure_constants"),
        name=action_cfg.get("name", ""),
    )


# ---------------------------------------------------------------------------
# entries


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    """Immutable example: a configuration plus its expected verdicts."""

    name: str
    config: dict
    description: str = ""
    expected_verdicts: dict = field(default_factory=dict)

    @property
    def expect_error(self) -> str | None:
        return self.config.get("expect_error")

    @property
    def oracles(self) -> dict:
        return dict(self.config.get("oracles", {}))

    @property
    def is_negative_control(self) -> bool:
        return bool(self.expected_verdicts) or self.expect_error is not None

    def build_data(self) -> SasakianData:
        return build_data(self.config)

    def build_action(self, data: SasakianData | None = None, weights=None) -> GroupAction | None:
        return build_action(self.config, data if data is not None else self.build_data(), weights)

    def expected(self, check_name: str) -> str:
        return self.expected_verdicts.get(check_name, "pass")

    def to_config(self) -> dict:
        cfg = copy.deepcopy(self.config)
        cfg["name"] = self.name
        if self.description:
            cfg["description"] = self.description
        if self.expected_verdicts:
            cfg["expected"] = dict(self.expected_verdicts)
        return cfg


def entry_from_config(cfg: dict) -> CatalogEntry:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(cfg)
    name = cfg.get("name", "config")
    expected = cfg.pop("expected", {}) or {}
    description = cfg.pop("description", "")
    for k, v in expected.items():
        if v not in ("pass", "fail"):
            raise ConfigError(f"expected verdict for {k!r} must be 'pass' or 'fail'")
    cfg["name"] = name
    entry = CatalogEntry(name, cfg, description, dict(expected))
    entry.build_action(entry.build_data())  # surface parse errors now
    return entry


def load_config(path) -> CatalogEntry:
    """Read and validate a JSON configuration file.

    Raises :class:`ConfigError` or :class:`ExpressionError` (both ValueErrors).
    """
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return entry_from_config(cfg)


def dump_config(entry: CatalogEntry, path=None) -> str:
    text = json.dumps(entry.to_config(), indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


# squared cosine / sine of the S³ radial angle, used by the perturbed-sphere metric
_C2, _S2 = "cos(eta)^2", "sin(eta)^2"
_F = "(1 + 0.1*sin(eta))"

_CONFIGS = [
    {
        "name": "s3",
        "description": "round S3, Hopf Reeb field, circle action with weights (1, -1)",
        "sphere": 1,
        "action": {"weights": [[1, -1]]},
        "oracles": {"circle_length": math.pi},
    },
    {
        "name": "s5",
        "description": "round S5, Hopf Reeb field, circle action with weights (1, 1, -2)",
        "sphere": 2,
        "action": {"weights": [[1, 1, -2]]},
    },
    {
        "name": "t3-flat",
        "description": "flat torus with xi = d/dz; unit Killing but Phi = 0",
        "coords": ["x", "y", "z"],
        "domain": [[0, 1], [0, 1], [0, 1]],
        "periods": [1, 1, 1],
        "metric": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
        "reeb": ["0", "0", "1"],
        "expected": {
            "phi_identity": "fail",
            "curvature_identity": "fail",
            "phi_squared": "fail",
            "contact_nondegeneracy": "fail",
            "cone_nijenhuis": "fail",
            "cone_kahler": "fail",
        },
    },
    {
        "name": "s3-perturbed",
        "description": "S3 with the transverse metric scaled by 1 + 0.1 sin(eta); xi stays unit and Killing",
        "coords": ["eta", "a", "b"],
        "domain": [[0, math.pi / 2], [0, TWO_PI], [0, TWO_PI]],
        "periods": [None, TWO_PI, TWO_PI],
        "metric": [
            [_F, "0", "0"],
            ["0", f"{_C2}^2 + {_F}*({_C2} - {_C2}^2)", f"{_C2}*{_S2} - {_F}*{_C2}*{_S2}"],
            ["0", f"{_C2}*{_S2} - {_F}*{_C2}*{_S2}", f"{_S2}^2 + {_F}*({_S2} - {_S2}^2)"],
        ],
        "reeb": ["0", "1", "1"],
        "expected": {
            "phi_identity": "fail",
            "curvature_identity": "fail",
            "phi_squared": "fail",
            "cone_nijenhuis": "fail",
            "cone_kahler": "fail",
        },
    },
    {
        "name": "s3-reeb-action",
        "description": "circle action generated by the Reeb field itself (weights (1, 1))",
        "sphere": 1,
        "action": {"weights": [[1, 1]]},
        "expected": {
            "reeb_orthogonal_to_orbits": "fail",
            "radial_symplectic_orthogonal": "fail",
            "radial_preserves_level_set": "fail",
            "level_set": "fail",
        },
        "expect_error": "EmptyLevelSet",
    },
    {
        "name": "s3-positive-weights",
        "description": "circle action with weights (1, 2); the moment map never vanishes",
        "sphere": 1,
        "action": {"weights": [[1, 2]]},
        "expected": {
            "reeb_orthogonal_to_orbits": "fail",
            "radial_symplectic_orthogonal": "fail",
            "radial_preserves_level_set": "fail",
            "level_set": "fail",
        },
        "expect_error": "EmptyLevelSet",
    },
    {
        "name": "s5-shifted-moment",
        "description": "S5 weights (1, 1, -2) with the moment map shifted by the constant 0.1",
        "sphere": 2,
        "action": {"weights": [[1, 1, -2]], "moment_shift": [0.1]},
        "expected": {
            "reeb_orthogonal_to_orbits": "fail",
            "radial_symplectic_orthogonal": "fail",
            "radial_preserves_level_set": "fail",
            "level_set_radial_invariance": "fail",
            "quotient_reeb_unit": "fail",
            "quotient_phi_identity": "fail",
            "quotient_curvature_identity": "fail",
            "quotient_horizontal_phi_defect": "fail",
        },
    },
]

CATALOG = {cfg["name"]: entry_from_config(cfg) for cfg in _CONFIGS}
POSITIVE = ("s3", "s5")


def get_entry(name: str) -> CatalogEntry:
    try:
        return CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown catalog entry {name!r}; known: {', '.join(CATALOG)}") from None


def make_negative_controls() -> list:
    return [e for e in CATALOG.values() if e.is_negative_control]


__all__ = [
    "CATALOG",
    "CatalogEntry",
    "ConfigError",
    "ExpressionError",
    "dump_config",
    "entry_from_config",
    "get_entry",
    "load_config",
    "make_circle_action",
    "make_negative_controls",
    "make_sphere",
    "make_torus_action",
]
