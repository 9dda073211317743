import csv
import json

import numpy as np
import pytest

from solarsde import sample_path
from solarsde.cli import main
from solarsde.data import load_csv
from solarsde.synthetic import true_params

FAST = {"nelder_mead_maxiter": 300, "bfgs_maxiter": 3}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({**FAST, "out_dir": str(tmp_path / "out")}))
    return path


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--model", "M4", "--hours", "300", "--seed", "5", "--output", str(a)]) == 0
    assert main(["simulate", "--model", "M4", "--hours", "300", "--seed", "5", "--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    main(["simulate", "--model", "M4", "--hours", "300", "--seed", "6", "--output", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_simulate_three_years(tmp_path):
    out = tmp_path / "m1.csv"
    assert main(["simulate", "--model", "M1", "--years", "3", "--output", str(out)]) == 0
    assert abs(len(_rows(out)) - 1 - 26280) <= 24


def test_simulated_m4_observations_under_envelope(tmp_path):
    out = tmp_path / "m4.csv"
    assert main(["simulate", "--model", "M4", "--hours", "2000", "--seed", "2", "--output", str(out)]) == 0
    s = load_csv(out, mask_negative=False)
    p = true_params(4)
    # M4 has no gamma parameter: the envelope is Max itself
    assert np.all(s.irradiance <= s.max_irradiance + 4 * p["sigma_eps"])


def test_simulate_rejects_unknown_parameter(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"omega1": 0.1}}))
    assert main(["simulate", "--model", "M4", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2


def test_pipeline_on_bundled_dataset(tmp_path, fast_config, capsys):
    out = tmp_path / "out"
    common = ["--config", str(fast_config), "--data", str(sample_path()), "--train-end", "2009-02-15T01:00Z"]
    assert main(["fit", "--model", "M4", *common]) == 0
    report = json.loads((out / "fit" / "M4_fit.json").read_text())
    assert report["model_id"] == "M4" and report["n_params"] == 5
    assert report["aic"] == pytest.approx(2 * 5 - 2 * report["log_lik"])

    assert main(["forecast", "--model", "M4", "--horizon", "1", "24", "--plot-hours", "24", *common]) == 0
    for h in (1, 24):
        q = _rows(out / "forecast" / f"M4_h{h}_quantiles.csv")
        assert q[0] == ["horizon_h", "prob", "value_wm2"] and len(q) == 20
        values = [float(r[2]) for r in q[1:]]
        assert values == sorted(values)
        assert _rows(out / "forecast" / f"M4_h{h}_density.csv")[0] == ["x", "density"]
        plot = _rows(out / "forecast" / f"M4_h{h}_plot.csv")
        assert plot[0] == ["timestamp", "q05", "q50", "q95", "observation"] and len(plot) == 25

    assert main(["evaluate", "--model", "M4", "--horizon", "1", "--eval-stride", "5", *common]) == 0
    cal = _rows(out / "eval" / "M4_calibration.csv")
    assert cal[0] == ["quantile", "train_h1", "test_h1"] and len(cal) == 10
    summary = json.loads((out / "eval" / "M4_summary.json").read_text())
    assert summary["log_lik_train"] == pytest.approx(report["log_lik"], rel=1e-9)
    assert len(_rows(out / "eval" / "M4_acf.csv")) == 42

    assert main(["benchmark", "--models", "M1", "M4", *common]) == 0
    table = _rows(out / "eval" / "benchmark.csv")
    names = [r[0] for r in table[1:]]
    assert set(names) == {"Clim.1", "Clim.2", "Clim.3", "ARX", "ARX-GLM", "M1", "M4"}
    test_ll = [float(r[3]) for r in table[1:] if r[3] != "nan"]
    assert test_ll == sorted(test_ll, reverse=True)
    # the bundled data covers two months, too short for an hour-by-month climatology
    assert "year" in next(r for r in table if r[0] == "Clim.3")[4]
    assert table[0][-1] == "n_test" and len({r[-1] for r in table[1:] if r[3] != "nan"}) == 1
    assert "M4" in capsys.readouterr().out


@pytest.mark.slow
def test_generating_model_ranks_first(tmp_path):
    # the bundled file is simulated from M7; on 60 days the M7 fit drifts
    # toward a stiff latent rate, so the optimiser budget is bounded
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nelder_mead_maxiter": 1000, "bfgs_maxiter": 20}))
    argv = ["benchmark", "--models", "M1", "M4", "M7", "--config", str(cfg), "--data", str(sample_path()),
            "--train-end", "2009-02-10T00:00Z", "--out-dir", str(tmp_path)]
    assert main(argv) == 0
    table = _rows(tmp_path / "eval" / "benchmark.csv")
    assert table[1][0] == "M7"


def test_forecast_is_reproducible(tmp_path, fast_config):
    common = ["--config", str(fast_config), "--data", str(sample_path()), "--model", "M3",
              "--train-end", "2009-02-15T01:00Z"]
    assert main(["fit", *common]) == 0
    outs = []
    for _ in range(2):
        assert main(["forecast", "--horizon", "6", "--plot-hours", "3", *common]) == 0
        outs.append((tmp_path / "out" / "forecast" / "M3_h6_quantiles.csv").read_bytes())
    assert outs[0] == outs[1]


def test_missing_fit_report_is_a_usage_error(tmp_path, capsys):
    code = main(["forecast", "--model", "M5", "--data", str(sample_path()), "--out-dir", str(tmp_path)])
    assert code == 2
    assert "M5_fit.json" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["fit", "--model", "M9", "--data", "x.csv"],
    ["fit", "--model", "M1"],
    ["fit", "--model", "M1", "--data", "does-not-exist.csv"],
    ["forecast", "--model", "M1", "--horizon", "0"],
])
def test_usage_errors_exit_2(argv, tmp_path, capsys):
    assert main([*argv, "--out-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ") and err.count("\n") == 1


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"modle": "M4"}))
    assert main(["fit", "--config", str(cfg)]) == 2
    cfg.write_text("{not json")
    assert main(["fit", "--config", str(cfg)]) == 2


def test_benchmark_requires_a_test_period(tmp_path):
    assert main(["benchmark", "--data", str(sample_path()), "--out-dir", str(tmp_path)]) == 2


def test_input_is_not_modified(tmp_path, fast_config):
    before = sample_path().read_bytes()
    main(["fit", "--model", "M1", "--config", str(fast_config), "--data", str(sample_path())])
    assert sample_path().read_bytes() == before
