import io
import json

import pytest

from sasakian_reduction import catalog, cli

FLAT = {
    "coords": ["x", "y", "z"],
    "domain": [[0, 1], [0, 1], [0, 1]],
    "periods": [1, 1, 1],
    "reeb": ["0", "0", "1"],
}


def run(argv):
    args = cli.build_parser().parse_args(argv)
    out = io.StringIO()
    fn = cli.cmd_verify if args.command == "verify" else cli.cmd_reduce
    code = fn(args, out)
    return code, out.getvalue()


def lines(text):
    return [json.loads(line) for line in text.splitlines()]


def test_verify_round_sphere_json_schema():
    code, text = run(["verify", "--manifold", "s3", "--samples", "30"])
    assert code == 0
    rows = lines(text)
    keys = {"check", "anchor", "samples", "max_residual", "mean_residual", "tol", "verdict", "notes"}
    for row in rows[:-1]:
        assert set(row) == keys
        assert row["verdict"] == "pass"
    assert [r["check"] for r in rows[:2]] == ["ad_fd_base", "ad_fd_cone"]
    assert rows[-1] == {"check": "summary", "entry": "s3", "checks": len(rows) - 1, "failed": [],
                        "aborted": False, "exit_code": 0}


def test_verify_is_deterministic_and_seed_sensitive():
    a = run(["verify", "--manifold", "s5", "--samples", "20", "--seed", "3"])[1]
    b = run(["verify", "--manifold", "s5", "--samples", "20", "--seed", "3"])[1]
    c = run(["verify", "--manifold", "s5", "--samples", "20", "--seed", "4"])[1]
    assert a == b
    assert a != c


def test_negative_control_by_id_fails_but_config_matches(tmp_path):
    code, text = run(["verify", "--manifold", "t3-flat", "--samples", "20"])
    assert code == 1
    assert "phi_identity" in lines(text)[-1]["failed"]
    path = tmp_path / "t3.json"
    catalog.dump_config(catalog.get_entry("t3-flat"), path)
    code, text = run(["verify", "--config", str(path), "--samples", "20"])
    assert code == 0
    assert lines(text)[-1]["failed"] == []


def test_text_format():
    code, text = run(["verify", "--manifold", "s3", "--samples", "20", "--format", "text"])
    out = text.splitlines()
    assert code == 0
    assert out[0].startswith("PASS    ad_fd_base")
    assert out[-1].startswith("SUMMARY ") and "exit_code=0" in out[-1]


@pytest.mark.parametrize(
    "content",
    ["{broken", json.dumps({**FLAT, "metric": [["1", "0"], ["0", "1"]]}),
     json.dumps({**FLAT, "metric": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "cos("]]})],
)
def test_malformed_config_exits_2(tmp_path, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    code, text = run(["verify", "--config", str(path)])
    assert code == 2
    summary = lines(text)[-1]
    assert summary["exit_code"] == 2 and "error" in summary


def test_unknown_entry_and_missing_file_exit_2(tmp_path):
    assert run(["verify", "--manifold", "nope"])[0] == 2
    assert run(["verify", "--config", str(tmp_path / "missing.json")])[0] == 2
    assert run(["reduce", "--manifold", "t3-flat"])[0] == 2  # no action defined
    assert run(["reduce", "--manifold", "s3", "--weights", "1,x"])[0] == 2
    assert run(["reduce", "--manifold", "s3", "--weights", "1,1,1"])[0] == 2


def test_parser_rejects_conflicting_sources():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["verify", "--manifold", "s3", "--config", "x.json"])


def test_derivative_gate_aborts_the_suite(tmp_path):
    """A valid but rapidly oscillating metric defeats central differences at step h."""
    cfg = {**FLAT, "name": "wiggly",
           "metric": [["1 + 0.01*sin(200*x)", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]}
    path = tmp_path / "wiggly.json"
    path.write_text(json.dumps(cfg))
    code, text = run(["verify", "--config", str(path), "--samples", "20"])
    rows = lines(text)
    assert code == 1
    assert [r["check"] for r in rows] == ["ad_fd_base", "ad_fd_cone", "summary"]
    assert rows[0]["verdict"] == "fail"
    assert rows[-1]["aborted"] is True


def test_reduce_empty_level_set_exits_3():
    code, text = run(["reduce", "--manifold", "s3", "--weights", "1,2", "--samples", "20"])
    rows = lines(text)
    assert code == 3
    assert rows[-1]["status"] == "EmptyLevelSet"
    level = [r for r in rows if r["check"] == "level_set"][0]
    assert level["verdict"] == "fail" and "EmptyLevelSet" in level["notes"]["error"]


def test_reduce_reeb_action_exits_3():
    code, text = run(["reduce", "--manifold", "s3-reeb-action", "--samples", "20"])
    rows = {r["check"]: r for r in lines(text)}
    assert code == 3
    assert rows["reeb_orthogonal_to_orbits"]["max_residual"] == pytest.approx(1.0, abs=1e-8)


def test_module_entry_point(capsys):
    assert cli.main(["verify", "--manifold", "s3", "--samples", "20"]) == 0
    assert capsys.readouterr().out.endswith('"exit_code": 0, "failed": []}\n')
