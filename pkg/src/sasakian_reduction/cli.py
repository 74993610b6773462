"""Command-line driver: ``verify`` and ``reduce`` emit one report per check.

Reports are JSON lines (or aligned text with ``--format text``), in a fixed
order, followed by a summary object.  Exit codes:

    0  every check passed (or matched the config's expectations)
    1  a check failed, including the AD-vs-FD derivative gate
    2  the entry or configuration could not be parsed
    3  the level set is empty or the action is not free
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import cone as cone_mod
from . import geometry as geo
from . import reduction as red
from . import sasaki
from .catalog import CatalogEntry, ConfigError, get_entry, load_config
from .errors import EmptyLevelSet, ExpressionError, GeometryError, NonFreeAction
from .report import SKIPPED, CheckReport

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_LEVEL = 0, 1, 2, 3
CIRCLE_TOL = 1e-4
QUOTIENT_TOL = 1e-4
ASSUMPTION_TOL = 1e-7

AD_FD_ANCHOR = "|D_AD f - D_FD f| <= 10 h^2, h = eps^(1/3) max(1, |x|)"


def derivative_gate(name, fns, samples, seed, manifold) -> CheckReport:
    """AD first derivatives against central differences; residual is error / bound."""
    pts = manifold.sample(samples, seed)
    ratios, worst, bound = np.zeros(len(pts)), 0.0, 0.0
    for fn in fns:
        errs, bounds = geo.ad_fd_discrepancy(fn, pts)
        ratios = np.maximum(ratios, errs / bounds)
        worst, bound = max(worst, float(errs.max())), float(bounds.max())
    notes = {"max_abs_error": worst, "max_bound": bound, "functions": len(fns)}
    return CheckReport.from_residuals(name, AD_FD_ANCHOR, ratios, 1.0, notes)


def verify_reports(entry: CatalogEntry, samples=100, seed=0, tol=1e-6):
    """Reports of the verify pipeline; stops after a failed derivative gate."""
    data = entry.build_data()
    cone = cone_mod.build_cone(data)
    gate = [
        derivative_gate("ad_fd_base", [data.metric_fn, data.reeb], samples, seed, data.manifold),
        derivative_gate("ad_fd_cone", [cone.metric_fn], samples, seed, cone.manifold),
    ]
    if not all(r.passed for r in gate):
        return gate, True
    reports = gate + sasaki.sasaki_suite(data, samples, seed, tol) + cone_mod.cone_suite(cone, samples, seed, tol)
    return reports, False


def _default_weights(entry: CatalogEntry, weights) -> bool:
    """True when ``weights`` is absent or equal to the entry's own action weights."""
    if weights is None:
        return True
    own = (entry.config.get("action") or {}).get("weights")
    return own is not None and np.array_equal(np.atleast_2d(own), np.atleast_2d(weights))


def _circle_report(entry, cone, action, start, weights_overridden):
    oracle = None if weights_overridden else entry.oracles.get("circle_length")
    out = red.quotient_circle_length(cone, action, start)
    notes = {"length": out["length"], "charts": out["charts"]}
    anchor = red.ANCHORS["quotient_circle_length"]
    if oracle is None:
        return CheckReport.skipped("quotient_circle_length", anchor, "no closed-form length for this action",
                                   CIRCLE_TOL, notes)
    notes["oracle"] = oracle
    return CheckReport.from_residuals("quotient_circle_length", anchor, [abs(out["length"] - oracle)], CIRCLE_TOL,
                                      notes)


def reduce_reports(entry: CatalogEntry, weights=None, samples=100, charts=4, seed=0, tol=1e-6):
    """Reports and summary of the reduce pipeline.

    Returns ``(reports, summary, status)`` where ``status`` is ``None``,
    ``"gate"`` (derivative check failed) or the name of the level-set error.
    """
    data = entry.build_data()
    action = entry.build_action(data, weights)
    if action is None:
        raise ConfigError(f"entry {entry.name!r} defines no group action")
    cone = cone_mod.build_cone(data)
    summary = {"quotient_dim": None, "reeb_norm_error": None, "charts_built": 0}
    gate = [
        derivative_gate("ad_fd_base", [data.metric_fn, data.reeb], samples, seed, data.manifold),
        derivative_gate("ad_fd_cone", [cone.metric_fn, action.moment_map, action.field_fn], samples,
                        seed, cone.manifold),
    ]
    reports = list(gate)
    if not all(r.passed for r in gate):
        return reports, summary, "gate"
    reports += red.verify_moment_map(cone, action, samples, seed, ASSUMPTION_TOL)
    reports.append(red.check_action_closure(cone, action, min(samples, 50), seed, ASSUMPTION_TOL))
    reports += red.verify_assumptions(data, cone, action, samples, seed, ASSUMPTION_TOL)
    n_level = min(samples, 20)
    try:
        reports += red.level_set_cone_splitting(cone, action, n_level, seed, ASSUMPTION_TOL)
        quotient, summ = red.verify_quotient_sasakian(cone, action, charts, min(samples, 20), seed, QUOTIENT_TOL)
        reports += quotient
        summary.update(summ)
        if summ["quotient_dim"] == 1 and action.lie_dim == 1:
            start = red.choose_centers(cone, action, 1, seed)[0]
            reports.append(_circle_report(entry, cone, action, start, not _default_weights(entry, weights)))
    except (EmptyLevelSet, NonFreeAction) as exc:
        kind = type(exc).__name__
        reports.append(CheckReport.failed("level_set", "mu^-1(0) nonempty, K acts freely", f"{kind}: {exc}"))
        return reports, summary, kind
    except GeometryError as exc:
        reports.append(CheckReport.failed("reduction", "slice charts of the quotient", f"{type(exc).__name__}: {exc}"))
        return reports, summary, type(exc).__name__
    return reports, summary, None


def _outcome(reports, entry: CatalogEntry, use_expectations: bool):
    failed = []
    for r in reports:
        if r.verdict == SKIPPED:
            continue
        expected = entry.expected(r.check_name) if use_expectations else "pass"
        if r.verdict != expected:
            failed.append(r.check_name)
    return failed


def _emit(reports, summary, fmt, out):
    for r in reports:
        out.write((r.to_json() if fmt == "json" else r.to_text()) + "\n")
    if fmt == "json":
        out.write(json.dumps({"check": "summary", **summary}, sort_keys=True) + "\n")
    else:
        out.write("SUMMARY " + " ".join(f"{k}={v}" for k, v in sorted(summary.items())) + "\n")
    out.flush()


def _resolve(args):
    """Entry and whether its expectations are binding (configs only)."""
    if args.config:
        return load_config(args.config), True
    return get_entry(args.manifold), False


def _parse_weights(text):
    if text is None:
        return None
    rows = [[float(w) for w in row.split(",")] for row in text.split(";")]
    return np.asarray(rows)


def cmd_verify(args, out=None) -> int:
    out = out or sys.stdout
    try:
        entry, binding = _resolve(args)
    except (ConfigError, ExpressionError, KeyError, OSError) as exc:
        _emit([], {"error": f"{type(exc).__name__}: {exc}", "exit_code": EXIT_PARSE}, args.format, out)
        return EXIT_PARSE
    reports, aborted = verify_reports(entry, args.samples, args.seed, args.tol)
    failed = _outcome(reports, entry, binding)
    code = EXIT_FAIL if (failed or aborted) else EXIT_OK
    summary = {"entry": entry.name, "checks": len(reports), "failed": failed, "aborted": aborted,
               "exit_code": code}
    _emit(reports, summary, args.format, out)
    return code


def cmd_reduce(args, out=None) -> int:
    out = out or sys.stdout
    try:
        entry, binding = _resolve(args)
        weights = _parse_weights(args.weights)
        if entry.build_action(entry.build_data(), weights) is None:
            raise ConfigError(f"entry {entry.name!r} defines no group action")
    except (ConfigError, ExpressionError, KeyError, OSError, ValueError) as exc:
        _emit([], {"error": f"{type(exc).__name__}: {exc}", "exit_code": EXIT_PARSE}, args.format, out)
        return EXIT_PARSE
    reports, summary, status = reduce_reports(entry, weights, args.samples, args.charts, args.seed, args.tol)
    failed = _outcome(reports, entry, binding)
    if status in ("EmptyLevelSet", "NonFreeAction"):
        code = EXIT_LEVEL
    else:
        code = EXIT_FAIL if failed or status else EXIT_OK
    summary.update({"entry": entry.name, "failed": failed, "exit_code": code})
    if status:
        summary["status"] = status
    _emit(reports, summary, args.format, out)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sasakian-reduction", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("verify", "check the Sasakian and cone identities"),
                           ("reduce", "check a reduction and the quotient structure")):
        p = sub.add_parser(name, help=helptext)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--manifold", help="catalog entry id")
        src.add_argument("--config", help="path to a JSON configuration")
        p.add_argument("--samples", type=int, default=100)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--format", choices=("json", "text"), default="json")
        if name == "reduce":
            p.add_argument("--weights", help="comma-separated weights; ';' separates torus factors")
            p.add_argument("--charts", type=int, default=4)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        return cmd_verify(args)
    return cmd_reduce(args)


if __name__ == "__main__":
    sys.exit(main())
