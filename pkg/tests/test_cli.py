import json

import numpy as np
import pytest

from paleoconsensus import io as pio
from paleoconsensus.cli import RunConfig, cmd_analyze, cmd_simulate, main
from paleoconsensus.exceptions import ConfigurationError
from paleoconsensus.simulate import SyntheticSpec, signal_function, simulate
from paleoconsensus.svg import parse_map_svg

FAST = ["--iterations", "300", "--burn-in", "150", "--scale-levels", "8", "--time-points", "120"]


@pytest.fixture(scope="module")
def line_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("line")
    spec = SyntheticSpec(signal="line", n_records=3, samples_per_record=15, noise_sd=0.05,
                         date_sd=40.0, seed=3)
    return cmd_simulate(spec, out)


def test_simulate_examples():
    clean = SyntheticSpec(signal="sine", noise_sd=0.0, seed=1)
    rows, truth = simulate(clean)
    f = signal_function(clean)
    ages = np.array([r[1] for r in rows])
    assert np.allclose([r[3] for r in rows], f(ages), atol=1e-12)
    # no dating error: observed dates are the whole-year true dates
    assert np.all(ages == np.round(ages)) and all(r[2] == 0.0 for r in rows)
    assert truth.shape == (2001, 2)
    assert simulate(clean)[0] == rows
    noisy = SyntheticSpec(date_sd=50.0, seed=2)
    rows, _ = simulate(noisy)
    for rid in {r[0] for r in rows}:
        a = [r[1] for r in rows if r[0] == rid]
        assert np.all(np.diff(a) < 0)
    shared = {}
    for rid, age, _, _ in simulate(SyntheticSpec(shared_ages=True, seed=4))[0]:
        shared.setdefault(rid, []).append(age)
    assert shared["rec1"] == shared["rec2"] == shared["rec3"]
    with pytest.raises(ConfigurationError):
        SyntheticSpec(signal="square")
    with pytest.raises(ConfigurationError):
        SyntheticSpec(noise_sd=(0.1, 0.2), n_records=3)


def test_simulate_files_reproducible(tmp_path):
    spec = SyntheticSpec(seed=5, date_sd=30.0)
    a = cmd_simulate(spec, tmp_path / "a")
    b = cmd_simulate(spec, tmp_path / "b")
    for key in ("input", "truth", "spec"):
        assert a[key].read_bytes() == b[key].read_bytes()
    assert len(pio.read_records(a["input"], require_age_sd=True)) == 3


def test_analyze_line_input(tmp_path, line_data):
    out = tmp_path / "res"
    code = main(["analyze", str(line_data["input"]), "--out", str(out), "--error-mode", "small",
                 "--random-dates", "--beta", "1e-8", "--seed", "4", "--dump-chain", *FAST])
    assert code == 0
    for name in ("consensus.csv", "map.csv", "map.svg", "contributions.csv", "manifest.json", "chain.npz"):
        assert (out / name).exists()
    cons = pio.read_consensus(out / "consensus.csv")
    age, truth = pio.read_truth(line_data["truth"])
    ref = np.interp(cons["age_bp"], age, truth)
    resid = cons["mean"] - ref
    resid -= resid.mean()
    sd = (cons["q95"] - cons["q05"]) / (2 * 1.645)
    assert np.mean(np.abs(resid) <= 2 * sd + 0.02) > 0.95
    # the line rises toward old ages, so the forward-time slope is negative
    flags, lambdas, _ = pio.read_map(out / "map.csv")
    # coarse scales see the trend; fine scales resolve noise and stay mostly unflagged
    assert np.all(flags[-2:] == -1)
    assert np.mean(flags == 1) < 0.02
    assert np.array_equal(parse_map_svg(out / "map.svg"), flags)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 4 and manifest["resolved"]["joint_dates"] > 0


def test_line_example_is_flagged_everywhere(tmp_path):
    # shared, well-spaced ages keep per-record centering from offsetting the records
    spec = SyntheticSpec(signal="line", samples_per_record=15, noise_sd=0.002, min_gap=300.0,
                         shared_ages=True, seed=3)
    paths = cmd_simulate(spec, tmp_path / "sim")
    bounds = [f"--sigma-bar=rec{k}=0.005" for k in (1, 2, 3)]
    out = tmp_path / "res"
    assert main(["analyze", str(paths["input"]), "--out", str(out), "--error-mode", "custom", *bounds,
                 "--iterations", "1000", "--burn-in", "500", "--scale-levels", "20",
                 "--time-points", "300"]) == 0
    flags, _, _ = pio.read_map(out / "map.csv")
    assert np.all(flags == -1)
    cons = pio.read_consensus(out / "consensus.csv")
    age, truth = pio.read_truth(paths["truth"])
    resid = cons["mean"] - np.interp(cons["age_bp"], age, truth)
    sd = (cons["q95"] - cons["q05"]) / (2 * 1.645)
    assert np.all(np.abs(resid - resid.mean()) <= 2 * sd)


def test_analyze_is_deterministic_and_reproducible_from_manifest(tmp_path, line_data):
    args = [str(line_data["input"]), "--error-mode", "large", "--seed", "9", *FAST]
    assert main(["analyze", *args, "--out", str(tmp_path / "a")]) == 0
    assert main(["analyze", *args, "--out", str(tmp_path / "b"), "--n-jobs", "2"]) == 0
    for name in ("consensus.csv", "map.csv", "contributions.csv", "map.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    # rerunning from the manifest rewrites the same bytes into the recorded directory
    before = (tmp_path / "a" / "map.csv").read_bytes()
    assert main(["analyze", "--from-manifest", str(tmp_path / "a" / "manifest.json")]) == 0
    assert (tmp_path / "a" / "map.csv").read_bytes() == before


def test_rerun_from_manifest(tmp_path, line_data):
    cfg = RunConfig(inputs=(str(line_data["input"]),), out=str(tmp_path / "first"), iterations=200,
                    burn_in=100, scale_levels=5, time_points=60, seed=2)
    cmd_analyze(cfg)
    manifest = pio.read_manifest(tmp_path / "first" / "manifest.json")
    again = RunConfig.from_dict({**manifest["config"], "out": str(tmp_path / "second")})
    cmd_analyze(again)
    for name in ("consensus.csv", "map.csv", "contributions.csv"):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_config_errors_exit_2(tmp_path, line_data, capsys):
    no_sd = tmp_path / "nosd.csv"
    no_sd.write_text("record_id,age_bp,value\na,100,1\na,200,2\na,300,1\n")
    assert main(["analyze", str(no_sd), "--random-dates", "--out", str(tmp_path / "x")]) == 2
    assert "age_sd" in capsys.readouterr().err
    assert main(["analyze", str(line_data["input"]), "--alpha", "1.5"]) == 2
    assert main(["analyze", str(line_data["input"]), "--sigma-bar", "nope"]) == 2
    assert main(["analyze", str(line_data["input"]), "--error-mode", "custom",
                 "--out", str(tmp_path / "y"), *FAST]) == 2
    assert main(["analyze", str(tmp_path / "missing.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("record_id,age_bp,age_sd,value\na,1,1,1\na,2,1,oops\n")
    assert main(["analyze", str(bad)]) == 2
    assert ":3:" in capsys.readouterr().err
    with pytest.raises(ConfigurationError):
        RunConfig(inputs=())


def test_numeric_failure_exits_3(tmp_path, line_data, monkeypatch, capsys):
    from paleoconsensus import cli
    from paleoconsensus.exceptions import NumericalError

    def boom(*args, **kwargs):
        raise NumericalError("iteration 7: mu: conditional precision of mu is not positive definite")

    monkeypatch.setattr(cli, "run_chain", boom)
    assert main(["analyze", str(line_data["input"]), "--out", str(tmp_path / "z")]) == 3
    assert "iteration 7" in capsys.readouterr().err


def test_extended_run_skips_contributions(tmp_path, line_data):
    out = tmp_path / "ext"
    assert main(["analyze", str(line_data["input"]), "--extended", "--error-mode", "small",
                 "--out", str(out), *FAST]) == 0
    assert not (out / "contributions.csv").exists()


def test_render_and_simulate_commands(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "sim"), "--records", "2", "--samples", "12",
                 "--noise-sd", "0.1", "0.3", "--signal", "sine"]) == 0
    rows = (tmp_path / "sim" / "input.csv").read_text().splitlines()
    assert rows[0] == "record_id,age_bp,age_sd,value" and len(rows) == 25
    flags = np.array([[0, 1, 1], [-1, 0, 1]], dtype=np.int8)
    (tmp_path / "map.csv").write_text(
        "age_bp,lambda,flag\n"
        + "".join(f"{a},{lam},{f}\n" for lam, row in zip([1.0, 10.0], flags)
                  for a, f in zip([300, 200, 100], row))
    )
    assert main(["render", str(tmp_path / "map.csv"), "--out", str(tmp_path / "m.svg")]) == 0
    assert np.array_equal(parse_map_svg(tmp_path / "m.svg"), flags)
