"""One pass/fail test per acceptance criterion, at the stated tolerances.

Timed criteria run in a fresh interpreter so that compilation is included.
"""

import json
import math
import subprocess
import sys
import textwrap
import time

import pytest
from jax.tree_util import Partial

from sasakian_reduction import catalog, cli, cone, reduction, sasaki

ENTRIES_WITH_ACTIONS = [n for n, e in catalog.CATALOG.items() if "action" in e.config]


def python(code: str, timeout=600):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-c", textwrap.dedent(code)], capture_output=True, text=True,
                          timeout=timeout, check=True)
    return proc.stdout, time.perf_counter() - start


def cli_run(*argv, timeout=600):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "sasakian_reduction", *argv], capture_output=True, text=True,
                          timeout=timeout)
    return proc, time.perf_counter() - start


def rows(stdout):
    return [json.loads(line) for line in stdout.splitlines()]


AC1_SCRIPT = """
import json
from sasakian_reduction import catalog, cone, sasaki
out = {}
for name in ("s3", "s5", "t3-flat"):
    data = catalog.get_entry(name).build_data()
    c = cone.build_cone(data)
    reps = [sasaki.check_condition_i(data, 200, 0), sasaki.check_condition_ii(data, 200, 0),
            cone.nijenhuis_residual(c, 200, 0), cone.kahler_form_check(c, 200, 0)]
    out[name] = {r.check_name: [r.max_residual, r.passed] for r in reps}
print(json.dumps(out))
"""


def test_ac1_sasakian_criteria_equivalence():
    out, elapsed = python(AC1_SCRIPT)
    res = json.loads(out)
    for name in ("s3", "s5"):
        assert len(res[name]) == 4
        for check, (max_res, passed) in res[name].items():
            assert passed and max_res < 1e-5, (name, check, max_res)
    for check, (max_res, passed) in res["t3-flat"].items():
        assert not passed and max_res > 1e-2, (check, max_res)
    assert elapsed < 60.0


@pytest.mark.parametrize("fixture", ["s3", "s5"])
def test_ac2_contact_identity(request, fixture):
    rep = sasaki.check_contact_identity(request.getfixturevalue(fixture), 200, 0)
    assert rep.points_sampled == 200
    assert rep.max_residual < 1e-6


@pytest.mark.parametrize("name", catalog.POSITIVE)
def test_ac3_phi_squared_on_positive_entries(name):
    rep = sasaki.check_phi_squared(catalog.get_entry(name).build_data(), 200, 0)
    assert rep.max_residual < 1e-7


def test_ac4_moment_map(s3_cone, s3_action):
    for name in ENTRIES_WITH_ACTIONS:
        entry = catalog.get_entry(name)
        data = entry.build_data()
        rep = reduction.verify_moment_map(cone.build_cone(data), entry.build_action(data), 100, 0)[0]
        assert rep.max_residual < 1e-7, name
    flipped = reduction.GroupAction(1, s3_action.field_fn, Partial(_negated, s3_action.moment_map))
    assert reduction.verify_moment_map(s3_cone, flipped, 100, 0)[0].max_residual > 0.1


def _negated(mu, y):
    return -mu(y)


def test_ac5_assumptions_on_level_set(s3, s5, s3_cone, s5_cone, s3_action, s5_action):
    for data, c, act in ((s3, s3_cone, s3_action), (s5, s5_cone, s5_action)):
        reps = reduction.verify_assumptions(data, c, act, 100, 0)
        assert len(reps) == 5
        for r in reps:
            assert r.max_residual < 1e-7, (data.name, r.check_name, r.max_residual)
        assert reps[0].notes["evaluated_on"] == "level set"
    reeb_action = catalog.make_circle_action(s3, [1, 1])
    a = reduction.verify_assumptions(s3, s3_cone, reeb_action, 100, 0)[0]
    assert not a.passed
    assert abs(a.max_residual - 1.0) <= 1e-8


@pytest.fixture(scope="module")
def reduce_runs():
    s3_proc, t3 = cli_run("reduce", "--manifold", "s3", "--weights", "1,-1")
    s5_proc, t5 = cli_run("reduce", "--manifold", "s5", "--weights", "1,1,-2", "--charts", "5")
    return {"s3": (s3_proc, rows(s3_proc.stdout)), "s5": (s5_proc, rows(s5_proc.stdout)), "elapsed": t3 + t5}


def test_ac6_reduction_end_to_end(reduce_runs):
    proc, s3_rows = reduce_runs["s3"]
    assert proc.returncode == 0, proc.stdout[-2000:]
    s3 = {r["check"]: r for r in s3_rows}
    assert s3["summary"]["quotient_dim"] == 1
    assert s3["quotient_reeb_unit"]["max_residual"] < 1e-6
    circle = s3["quotient_circle_length"]
    assert circle["verdict"] == "pass"
    assert abs(circle["notes"]["length"] - math.pi) < 1e-4

    proc, s5_rows = reduce_runs["s5"]
    assert proc.returncode == 0, proc.stdout[-2000:]
    s5 = {r["check"]: r for r in s5_rows}
    assert s5["summary"]["quotient_dim"] == 3
    assert s5["summary"]["charts_built"] >= 5
    assert s5["quotient_phi_identity"]["notes"]["charts"] >= 5
    assert s5["quotient_phi_identity"]["max_residual"] < 1e-4
    assert reduce_runs["elapsed"] < 300.0


def test_ac7_horizontal_lift_defects(reduce_runs):
    proc, s5_rows = reduce_runs["s5"]
    s5 = {r["check"]: r for r in s5_rows}
    for name in ("bracket", "connection", "phi"):
        assert s5[f"quotient_horizontal_{name}_defect"]["max_residual"] < 1e-5


def test_ac8_ad_matches_fd_with_abort(tmp_path):
    for name, entry in catalog.CATALOG.items():
        data = entry.build_data()
        c = cone.build_cone(data)
        fns = [c.metric_fn]
        action = entry.build_action(data)
        if action is not None:
            fns += [action.moment_map, action.field_fn]
        gates = [cli.derivative_gate("ad_fd_base", [data.metric_fn, data.reeb], 200, 0, data.manifold),
                 cli.derivative_gate("ad_fd_cone", fns, 200, 0, c.manifold)]
        for g in gates:
            assert g.points_sampled == 200
            assert g.passed, (name, g.to_text())
    # a failing gate stops the pipeline before any geometric check runs
    cfg = {"name": "wiggly", "coords": ["x", "y", "z"], "domain": [[0, 1]] * 3, "periods": [1, 1, 1],
           "metric": [["1 + 0.01*sin(200*x)", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
           "reeb": ["0", "0", "1"]}
    reports, aborted = cli.verify_reports(catalog.entry_from_config(cfg), 200, 0)
    assert aborted
    assert [r.check_name for r in reports] == ["ad_fd_base", "ad_fd_cone"]


def test_ac9_byte_identical_output():
    argv = ("verify", "--manifold", "s3", "--samples", "200", "--seed", "0")
    a, _ = cli_run(*argv)
    b, _ = cli_run(*argv)
    assert a.returncode == b.returncode == 0
    assert a.stdout == b.stdout and a.stdout
    c, _ = cli_run("reduce", "--manifold", "s3-positive-weights")
    d, _ = cli_run("reduce", "--manifold", "s3-positive-weights")
    assert c.returncode == d.returncode == 3
    assert c.stdout == d.stdout and c.stdout
