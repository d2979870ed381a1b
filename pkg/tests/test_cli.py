import json

import pytest

from inheritlab.cli import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, build_parser, main


def _run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main([argv[0], "--out", str(out), *argv[1:]])
    return code, out


def _load(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_verify_minkowski_writes_report_and_manifest(tmp_path):
    code, out = _run(tmp_path, "verify-solution", "--name", "minkowski", "--points", "20", "--seed", "7")
    assert code == EXIT_PASS
    report = _load(out / "verify_solution.json")
    assert report["solution"] == "minkowski" and report["passed"]
    manifest = _load(out / "manifest.json")
    assert manifest["command"] == "verify-solution"
    assert manifest["seed"] == 7
    assert manifest["params"]["name"] == "minkowski"
    assert {"numpy", "scipy", "jax", "python"} <= set(manifest["versions"])


def test_verify_mc(tmp_path):
    code, out = _run(tmp_path, "verify-solution", "--name", "mc", "--b", "0.3", "--points", "50")
    assert code == EXIT_PASS
    assert _load(out / "verify_solution.json")["params"] == {"b": 0.3}


@pytest.mark.parametrize("argv", [
    ["verify-solution", "--name", "nosuch"],
    ["verify-solution", "--name", "minkowski", "--b", "0.3"],
    ["carleman", "--check", "nosuch"],
    ["beltrami", "--field", "dx"],
    ["frequency-scan", "--field", "zero", "--r-min", "5", "--r-max", "6", "--n-theta", "8", "--n-phi", "16"],
])
def test_usage_errors_exit_2(tmp_path, capsys, argv):
    code, _ = _run(tmp_path, *argv)
    assert code == EXIT_USAGE
    assert "inheritlab: error:" in capsys.readouterr().err


def test_argparse_errors_exit_2(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["carleman", "--grid", "many"]) == EXIT_USAGE
    assert main(["audit-metric", "-v", "-q"]) == EXIT_USAGE


def test_version_exits_cleanly(capsys):
    assert main(["--version"]) == EXIT_PASS
    assert "inheritlab" in capsys.readouterr().out


@pytest.mark.parametrize("power,verdict,expected", [
    ("4", "in_L2_consistent", EXIT_PASS),
    ("3", "inconclusive", EXIT_FAIL),
])
def test_synthetic_frequency_scan(tmp_path, power, verdict, expected):
    code, out = _run(tmp_path, "frequency-scan", "--synthetic", power)
    assert code == expected
    report = _load(out / "frequency.json")
    assert report["classification"]["verdict"] == verdict
    assert report["fit"]["p"] == pytest.approx(float(power) / 2, abs=1e-9)
    header = (out / "profile.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "r,X,E,F,dX_dr,identity_ratio"
    assert (out / "profile.svg").read_text(encoding="utf-8").lstrip().startswith("<?xml")


def test_synthetic_slow_decay_is_not_in_L2(tmp_path):
    code, out = _run(tmp_path, "frequency-scan", "--synthetic", "2")
    assert code == EXIT_PASS
    assert _load(out / "frequency.json")["classification"]["verdict"] == "not_in_L2"


def test_carleman_squared_identity(tmp_path):
    code, out = _run(tmp_path, "carleman", "--check", "squared-identity", "--grid", "127", "--export-triplets")
    assert code == EXIT_PASS
    report = _load(out / "carleman_squared_identity.json")
    assert report["pass"] and report["identity"]["defect"] <= 1e-12
    assert report["grid"]["n"] == 127
    assert (out / "P.triplets").read_text(encoding="utf-8").startswith("# 127 127")


def test_beltrami_abc(tmp_path):
    code, out = _run(tmp_path, "beltrami", "--field", "abc", "--points", "box:L=5:n=50")
    assert code == EXIT_PASS
    report = _load(out / "beltrami.json")
    assert report["a"] == 1.0 and report["pass"]


def test_beltrami_zero_field_is_flagged_trivial(tmp_path):
    code, _ = _run(tmp_path, "beltrami", "--field", "zero", "--a", "1", "--points", "box:L=5:n=20")
    assert code == EXIT_FAIL


def test_audit_log_metric_fails(tmp_path):
    code, out = _run(tmp_path, "audit-metric", "--metric", "log")
    assert code == EXIT_FAIL
    report = _load(out / "audit_metric.json")
    assert len(report["worst_point"]) == 3


def test_config_file_supplies_defaults(tmp_path):
    config = tmp_path / "run.conf"
    config.write_text("# audit settings\nmetric = log\ndirections = 8\nthreads = 2\n", encoding="utf-8")
    code, out = _run(tmp_path, "audit-metric", "--config", str(config))
    assert code == EXIT_FAIL
    manifest = _load(out / "manifest.json")
    assert manifest["params"]["metric"] == "log"
    assert manifest["params"]["directions"] == 8
    assert manifest["settings"]["threads"] == 2

    code, out = _run(tmp_path, "audit-metric", "--config", str(config), "--metric", "flat3", "--threads", "3")
    manifest = _load(out / "manifest.json")
    assert manifest["params"]["metric"] == "flat3"
    assert manifest["settings"]["threads"] == 3


def test_bad_config_exits_2(tmp_path, capsys):
    config = tmp_path / "bad.conf"
    config.write_text("threads two\n", encoding="utf-8")
    assert main(["audit-metric", "--config", str(config)]) == EXIT_USAGE
    assert main(["audit-metric", "--config", str(tmp_path / "missing.conf")]) == EXIT_USAGE


def test_parser_defaults():
    args = build_parser().parse_args(["carleman"])
    assert args.check == "mourre" and args.lam == 1.0 and args.grid == 511
    assert args.t == [0.0, 0.5, 1.0]
    assert build_parser().parse_args(["shell-probe"]).closure == "dirichlet"
    args = build_parser().parse_args(["frequency-scan", "--window", "60", "150"])
    assert args.window == [60.0, 150.0]
    assert args.schedule_ratio is None
