"""Configuration ingestion and the command-line surface."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from lawpal.cli import main
from lawpal.config import (
    ConfigError,
    bind_parameters,
    load_config,
    load_series,
)
from lawpal.filters import run_lawpal
from lawpal.observation import TruncNormalReporting


def base_config(**execution):
    return {
        "model": {
            "kernel": "sir",
            "params": {"beta": 0.3, "gamma": 0.2},
            "n": 2000,
            "pi0": [0.995, 0.005, 0.0],
            "obs_edge": [1, 2],
        },
        "observation": {"type": "trunc_normal", "mu_q": 0.5, "sigma2_q": 0.1},
        "execution": {"seed": 7, "T": 25, **execution},
    }


def write_config(tmp_path: Path, cfg: dict, name="config.json") -> str:
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def csv_body(path: Path) -> str:
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    return "\n".join(lines[1:])


class TestLoadConfig:
    def test_roundtrip(self, tmp_path):
        cfg = load_config(write_config(tmp_path, base_config()))
        assert cfg.model.kernel_name == "sir"
        assert cfg.execution.T == 25
        spec = cfg.model.build_spec()
        assert spec.m == 3 and spec.n == 2000

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda c: c.update(bogus=1),
            lambda c: c["model"].update(bogus=1),
            lambda c: c["observation"].update(bogus=1),
            lambda c: c["execution"].update(bogus=1),
        ],
    )
    def test_unknown_keys_rejected(self, tmp_path, mutate):
        cfg = base_config()
        mutate(cfg)
        with pytest.raises(ConfigError, match="unknown keys"):
            load_config(write_config(tmp_path, cfg))

    def test_unknown_kernel(self, tmp_path):
        cfg = base_config()
        cfg["model"]["kernel"] = "sird"
        with pytest.raises(ConfigError, match="unknown kernel"):
            load_config(write_config(tmp_path, cfg))

    def test_bad_pi0(self, tmp_path):
        cfg = base_config()
        cfg["model"]["pi0"] = [0.9, 0.2, 0.0]
        with pytest.raises(ValueError):
            load_config(write_config(tmp_path, cfg))

    def test_estimation_block(self, tmp_path):
        cfg = base_config()
        cfg["estimation"] = {
            "free": [
                {"name": "beta", "lo": 0.01, "hi": 1.0, "init": 0.25},
                {"name": "sigma2_q", "lo": 1e-4, "hi": 1.0, "init": 0.1, "log_scale": True},
            ],
            "priors": {"beta": {"type": "trunc_normal", "mu": 0, "sigma2": 10}},
        }
        rc = load_config(write_config(tmp_path, cfg))
        assert rc.estimation.space.names == ["beta", "sigma2_q"]
        assert "beta" in rc.estimation.priors

    def test_unbindable_free_parameter_rejected(self, tmp_path):
        cfg = base_config()
        cfg["estimation"] = {
            "free": [{"name": "rho", "lo": 0.01, "hi": 1.0, "init": 0.2}]
        }
        with pytest.raises(ConfigError, match="matches nothing bindable"):
            load_config(write_config(tmp_path, cfg))


class TestLoadSeries:
    def test_good_series(self, tmp_path):
        p = tmp_path / "y.csv"
        p.write_text("t,y\n1,3\n2,0\n3,12\n")
        s = load_series(p)
        np.testing.assert_array_equal(s.y, [3, 0, 12])
        assert s.T == 3

    @pytest.mark.parametrize(
        "body,msg",
        [
            ("time,count\n1,3\n", "header"),
            ("t,y\n1,3\n3,4\n", "contiguous"),
            ("t,y\n1,-3\n", "negative"),
            ("t,y\n1,3.5\n", "non-integer"),
            ("t,y\n", "empty"),
        ],
    )
    def test_rejects_malformed(self, tmp_path, body, msg):
        p = tmp_path / "bad.csv"
        p.write_text(body)
        with pytest.raises(ConfigError, match=msg):
            load_series(p)


class TestBindParameters:
    def test_kernel_and_observation(self, tmp_path):
        rc = load_config(write_config(tmp_path, base_config()))
        spec, obs = bind_parameters(
            rc.model, rc.observation, {"beta": 0.77, "mu_q": 0.6, "sigma2_q": 0.05}
        )
        assert spec.kernel.params["beta"] == 0.77
        assert isinstance(obs, TruncNormalReporting)
        assert obs.mu_q == 0.6 and obs.sigma2_q == 0.05

    def test_seeded_counts(self):
        from lawpal.config import ModelConfig

        model = ModelConfig(
            kernel_name="seir",
            kernel_params={"beta": 0.8, "rho": 0.1, "gamma": 0.2},
            h=1.0,
            n=10000,
            pi0=(0.99, 0.0, 0.01, 0.0),
            obs_edge=(2, 3),
        )
        spec, _ = bind_parameters(model, TruncNormalReporting(0.5, 0.1), {"i0": 40, "e0": 10})
        np.testing.assert_allclose(spec.pi0, [0.995, 0.001, 0.004, 0.0])

    def test_seeded_counts_need_four_compartments(self, tmp_path):
        rc = load_config(write_config(tmp_path, base_config()))
        with pytest.raises(ConfigError, match="4-compartment"):
            bind_parameters(rc.model, rc.observation, {"i0": 5})

    def test_unknown_name_rejected(self, tmp_path):
        rc = load_config(write_config(tmp_path, base_config()))
        with pytest.raises(ConfigError, match="cannot bind"):
            bind_parameters(rc.model, rc.observation, {"zeta": 1.0})


class TestCliCommands:
    def test_simulate_then_filter_roundtrip(self, tmp_path):
        cfg_path = write_config(tmp_path, base_config())
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg_path, "--out", str(out)]) == 0
        series = load_series(out / "series.csv")
        assert series.T == 25

        # filtering the emitted series must equal filtering in memory
        assert (
            main(
                [
                    "filter",
                    "--config",
                    cfg_path,
                    "--data",
                    str(out / "series.csv"),
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        rc = load_config(cfg_path)
        expected = run_lawpal(rc.model.build_spec(), rc.observation, series.y)
        got_rows = csv_body(out / "filter.csv").splitlines()[1:]
        got_ll = sum(float(r.split(",")[4]) for r in got_rows)
        assert abs(got_ll - expected.total_ll) < 1e-9

    def test_csv_bodies_byte_identical_across_runs(self, tmp_path):
        cfg_path = write_config(tmp_path, base_config())
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["loglik", "--config", cfg_path, "--out", str(out)]) == 0
            outs.append(csv_body(out / "filter.csv"))
        assert outs[0] == outs[1]

    def test_seed_override_changes_output(self, tmp_path):
        cfg_path = write_config(tmp_path, base_config())
        bodies = []
        for seed, name in ((7, "s7"), (8, "s8")):
            out = tmp_path / name
            main(["simulate", "--config", cfg_path, "--seed", str(seed), "--out", str(out)])
            bodies.append(csv_body(out / "series.csv"))
        assert bodies[0] != bodies[1]

    def test_pf_loglik(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, base_config(particles=200))
        out = tmp_path / "pf"
        assert main(["pf-loglik", "--config", cfg_path, "--out", str(out)]) == 0
        payload = json.loads((out / "pf_loglik.json").read_text())
        assert math.isfinite(payload["log_likelihood"])
        assert payload["particles"] == 200
        assert (out / "ess_trace.csv").exists()

    def test_limit_command(self, tmp_path):
        cfg_path = write_config(tmp_path, base_config())
        out = tmp_path / "lim"
        assert main(["limit", "--config", cfg_path, "--out", str(out)]) == 0
        rows = csv_body(out / "limit.csv").splitlines()
        assert rows[0].split(",")[:4] == ["t", "nu_1", "nu_2", "nu_3"]
        assert len(rows) == 26

    def test_bench_command(self, tmp_path):
        cfg_path = write_config(tmp_path, base_config(particles=100))
        out = tmp_path / "bench"
        assert main(["bench", "--config", cfg_path, "--out", str(out)]) == 0
        payload = json.loads((out / "bench.json").read_text())
        assert payload["speedup_ratio"] > 0

    def test_fit_mle_replicates(self, tmp_path):
        cfg = base_config(replicates=2)
        cfg["estimation"] = {
            "free": [{"name": "beta", "lo": 0.05, "hi": 1.0, "init": 0.25}]
        }
        cfg_path = write_config(tmp_path, cfg)
        out = tmp_path / "mle"
        assert main(["fit-mle", "--config", cfg_path, "--out", str(out)]) == 0
        summary = json.loads((out / "mle_summary.json").read_text())
        assert summary["replicates"] == 2
        assert 0.05 <= summary["parameters"]["beta"]["mean"] <= 1.0

    def test_fit_mh_small(self, tmp_path):
        cfg = base_config(iters=300, burnin=100)
        cfg["estimation"] = {
            "free": [{"name": "beta", "lo": 0.05, "hi": 1.0, "init": 0.3}],
            "priors": {"beta": {"type": "trunc_normal", "mu": 0, "sigma2": 10}},
        }
        cfg_path = write_config(tmp_path, cfg)
        out = tmp_path / "mh"
        assert main(["fit-mh", "--config", cfg_path, "--out", str(out)]) == 0
        summary = json.loads((out / "fit_summary.json").read_text())
        assert 0.0 <= summary["acceptance_rate"] <= 1.0
        assert (out / "chain.csv").exists()

    def test_fit_pmmh_small(self, tmp_path):
        cfg = base_config(iters=60, burnin=30, particles=100)
        cfg["estimation"] = {
            "free": [{"name": "beta", "lo": 0.05, "hi": 1.0, "init": 0.3}],
            "priors": {"beta": {"type": "trunc_normal", "mu": 0, "sigma2": 10}},
        }
        cfg_path = write_config(tmp_path, cfg)
        out = tmp_path / "pmmh"
        assert main(["fit-pmmh", "--config", cfg_path, "--out", str(out)]) == 0

    def test_validation_failure_exit_code(self, tmp_path, capsys):
        cfg = base_config()
        cfg["model"]["kernel"] = "nope"
        cfg_path = write_config(tmp_path, cfg)
        assert main(["simulate", "--config", cfg_path, "--out", str(tmp_path)]) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_config_exit_code(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "none.json")]) == 1

    def test_numerical_failure_exit_code_mle(self, tmp_path, capsys):
        # beta init 0 gives a structurally zero edge with positive counts
        cfg = base_config()
        cfg["estimation"] = {
            "free": [{"name": "beta", "lo": 0.0, "hi": 1.0, "init": 0.0}]
        }
        cfg_path = write_config(tmp_path, cfg)
        data = tmp_path / "y.csv"
        data.write_text("t,y\n1,5\n2,3\n")
        code = main(
            ["fit-mle", "--config", cfg_path, "--data", str(data), "--out", str(tmp_path)]
        )
        assert code == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_pf_degeneracy_exit_code(self, tmp_path, capsys):
        cfg = base_config(particles=50)
        cfg_path = write_config(tmp_path, cfg)
        data = tmp_path / "y.csv"
        data.write_text("t,y\n1,5\n2,999999\n")  # impossible count
        code = main(
            ["pf-loglik", "--config", cfg_path, "--data", str(data), "--out", str(tmp_path)]
        )
        assert code == 2
        err = capsys.readouterr().err
        assert "step 2" in err
