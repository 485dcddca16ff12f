import json
import math

import pytest

from crystal_replay.cli import main
from crystal_replay.config import (
    ConfigError,
    RunConfig,
    config_from_dict,
    default_config,
    load_config,
)


class TestConfig:
    def test_defaults(self):
        cfg = default_config()
        assert isinstance(cfg, RunConfig)
        assert cfg.sde.alpha == 0.05
        assert cfg.thresholds.tau_l == 0.3
        assert cfg.seeds == (0,)

    def test_defaults_and_overrides_layering(self):
        cfg = config_from_dict({
            "defaults": {"sde": {"alpha": 0.1}, "agent": {"eta0": 0.25}},
            "overrides": {"sde": {"sigma": 0.01}},
        })
        assert cfg.sde.alpha == 0.1
        assert cfg.sde.sigma == 0.01
        assert cfg.agent.eta0 == 0.25
        assert cfg.sde.beta == 0.005  # untouched default

    def test_override_beats_default(self):
        cfg = config_from_dict({
            "defaults": {"sde": {"alpha": 0.1}},
            "overrides": {"sde": {"alpha": 0.2}},
        })
        assert cfg.sde.alpha == 0.2

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"defaults": {"sdee": {"alpha": 0.1}}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"defaults": {"sde": {"alphaa": 0.1}}})

    def test_unknown_top_level_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"default": {}})

    def test_invalid_value_surfaces(self):
        with pytest.raises((ConfigError, ValueError)):
            config_from_dict({"defaults": {"sde": {"alpha": -1.0}}})

    def test_seeds_parsing(self):
        cfg = config_from_dict({"defaults": {"seeds": [3, 4, 5]}})
        assert cfg.seeds == (3, 4, 5)

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "missing.json"))

    def test_load_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_round_trip_via_file(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"defaults": {"suite": {"n_tasks": 3}}}))
        cfg = load_config(str(p))
        assert cfg.suite.n_tasks == 3


class TestCalc:
    def test_fixed_point(self, capsys):
        assert main(["calc", "fixed-point", "--u-bar", "1", "--i-bar", "1"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["c_star"] == pytest.approx(0.05 / 0.055, abs=1e-12)
        assert out["decay_rate"] == pytest.approx(0.055, abs=1e-12)
        assert out["variance_ceiling"] == pytest.approx(
            0.005**2 / (8 * 0.055), abs=1e-15)

    def test_stationary_default_parameters(self, capsys):
        assert main(["calc", "stationary", "--u-bar", "0.5", "--i-bar", "0.1"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["a_shape"] == pytest.approx(2000.0)
        assert out["b_shape"] == pytest.approx(40.0)
        assert out["mean"] == pytest.approx(2000.0 / 2040.0)

    def test_occupancy_uniform(self, capsys):
        assert main(["calc", "occupancy", "--a-shape", "1", "--b-shape", "1"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["liquid"] == pytest.approx(0.3, abs=1e-12)
        assert out["glass"] == pytest.approx(0.4, abs=1e-12)
        assert out["crystal"] == pytest.approx(0.3, abs=1e-12)

    def test_fstar(self, capsys):
        assert main(["calc", "fstar", "--u-bar", "1", "--i-bar", "1"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["f_c_star"] == pytest.approx(0.005 / 0.055, abs=1e-12)

    def test_capacity_and_qbound_positive(self, capsys):
        assert main(["calc", "capacity"]) == 0
        assert json.loads(capsys.readouterr().out)["n_total"] > 0
        assert main(["calc", "qbound"]) == 0
        assert json.loads(capsys.readouterr().out)["q_error"] > 0


class TestErrors:
    def test_missing_config_exits_2(self, capsys, tmp_path):
        code = main(["calc", "fstar", "--config", str(tmp_path / "nope.json")])
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert "error" in err

    def test_bad_seed_range_exits_2(self, capsys, tmp_path):
        code = main(["continual", "--seeds", "5..1", "--out", str(tmp_path)])
        assert code == 2

    def test_bad_config_content_exits_2(self, capsys, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"defaults": {"nope": {}}}))
        code = main(["calc", "fstar", "--config", str(p)])
        assert code == 2


def _tiny_continual_config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"defaults": {
        "suite": {"n_tasks": 2, "grid_height": 5, "grid_width": 5,
                  "max_steps": 30},
        "agent": {"episodes_per_task": 6, "b_min": 16, "f_consol": 20,
                  "eps_decay_steps": 100, "eval_episodes": 2},
        "sampling": {"batch_size": 16},
        "buffer": {"n_liquid": 200, "n_glass": 100, "n_crystal": 50},
    }}))
    return str(p)


class TestContinualCommand:
    def test_outputs_and_reproducibility(self, tmp_path):
        cfg = _tiny_continual_config(tmp_path)
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        for out in (out1, out2):
            code = main(["continual", "--config", cfg, "--method", "amc",
                         "--seed", "0", "--out", str(out)])
            assert code == 0
        f1 = out1 / "metrics_amc_seed0.csv"
        f2 = out2 / "metrics_amc_seed0.csv"
        assert f1.read_bytes() == f2.read_bytes()  # byte-identical re-run
        agg = json.loads((out1 / "aggregate_amc.json").read_text())
        assert agg["method"] == "amc"
        m = agg["per_seed"]["0"]["metrics"]
        assert math.isfinite(m["average_performance"])
        manifest = json.loads((out1 / "manifest.json").read_text())
        assert manifest["command"] == "continual"
        header = f1.read_text().splitlines()[0]
        assert header.startswith("step,task,return,")

    def test_seed_range_and_baseline(self, tmp_path):
        cfg = _tiny_continual_config(tmp_path)
        out = tmp_path / "base"
        code = main(["continual", "--config", cfg, "--method", "vanilla",
                     "--seeds", "0..1", "--out", str(out)])
        assert code == 0
        assert (out / "metrics_vanilla_seed0.csv").exists()
        assert (out / "metrics_vanilla_seed1.csv").exists()
        agg = json.loads((out / "aggregate_vanilla.json").read_text())
        assert agg["seeds"] == [0, 1]
        assert agg["mean"]["average_performance"] is not None

    def test_ablation_flag_changes_result(self, tmp_path):
        cfg = _tiny_continual_config(tmp_path)
        out_full, out_ab = tmp_path / "full", tmp_path / "ab"
        main(["continual", "--config", cfg, "--method", "amc", "--seed", "0",
              "--out", str(out_full)])
        main(["continual", "--config", cfg, "--method", "amc", "--seed", "0",
              "--no-crystallization", "--out", str(out_ab)])
        a = json.loads((out_full / "aggregate_amc.json").read_text())
        b = json.loads((out_ab / "aggregate_amc.json").read_text())
        assert b["ablation"]["no_crystallization"] is True
        assert a["per_seed"]["0"]["eval_matrix"] != b["per_seed"]["0"]["eval_matrix"]


class TestSdeEnsembleCommand:
    def test_verdict_and_files(self, tmp_path):
        out = tmp_path / "sde"
        code = main(["sde-ensemble", "--paths", "2000", "--horizon", "400",
                     "--seed", "1", "--out", str(out)])
        assert code == 0
        verdict = json.loads((out / "verdict.json").read_text())
        assert verdict["pass"] is True
        checks = {v["check"]: v["pass"] for v in verdict["verdicts"]}
        assert checks["terminal_mean_near_fixed_point"] is True
        assert checks["variance_under_ceiling"] is True
        lines = (out / "ensemble.csv").read_text().splitlines()
        assert lines[0] == "time,mean,variance"
        assert len(lines) > 2
        assert (out / "terminal_samples.csv").exists()
        assert (out / "manifest.json").exists()


class TestFpSolveCommand:
    def test_stationary_verdict(self, tmp_path):
        # Beta(2, 2) stationary law: resolvable on a modest grid
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"defaults": {
            "sde": {"alpha": 0.04, "beta": 0.04, "sigma": 0.2}}}))
        out = tmp_path / "fp"
        code = main(["fp-solve", "--config", str(cfg), "--nodes", "400",
                     "--t-final", "400", "--u-bar", "1", "--i-bar", "1",
                     "--out", str(out)])
        assert code == 0
        verdict = json.loads((out / "verdict.json").read_text())
        assert verdict["pass"] is True
        assert verdict["verdicts"][0]["measured"] < 1e-3
        lines = (out / "density.csv").read_text().splitlines()
        assert lines[0] == "c,p"
        assert len(lines) == 401

    def test_failing_tolerance_exits_1(self, tmp_path):
        out = tmp_path / "fp2"
        code = main(["fp-solve", "--nodes", "50", "--t-final", "1",
                     "--tol", "1e-12", "--out", str(out)])
        assert code == 1
        verdict = json.loads((out / "verdict.json").read_text())
        assert verdict["pass"] is False
