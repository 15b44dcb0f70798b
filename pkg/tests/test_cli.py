import json
import math

import pytest

from replica_markov.cli import ResultRow, main, rows_to_csv, run_sweep
from replica_markov.config import ConfigError, validate_config


def base_doc(**overrides):
    doc = {
        "version": 1,
        "model": {"prior": {"type": "binary_markov", "alpha": 0.3, "delta": 0.3}},
        "sweep": {"betas": [1.0]},
        "tasks": ["replica"],
        "n": 8,
        "trials": 10,
        "seed": 3,
    }
    doc.update(overrides)
    return doc


class TestValidateConfig:
    def test_missing_transition_row_names_path(self):
        doc = base_doc(
            model={
                "prior": {
                    "type": "discrete_markov",
                    "states": [-1, 1],
                    "transition": [[0.7, 0.3]],
                }
            }
        )
        with pytest.raises(ConfigError) as err:
            validate_config(doc)
        assert any("model.prior.transition[1]" in e for e in err.value.errors)

    def test_boundary_alpha_rejected_as_reducible(self):
        doc = base_doc(model={"prior": {"type": "binary_markov", "alpha": 0.0, "delta": 0.5}})
        with pytest.raises(ConfigError) as err:
            validate_config(doc)
        assert any("reducible" in e for e in err.value.errors)

    def test_sparse_hmm_document_gets_defaults(self):
        doc = base_doc(
            model={"prior": {"type": "sparse_hmm", "kappa": 0.3, "gamma": 0.8}},
            tasks=["replica", "amp"],
        )
        config = validate_config(doc)
        assert config.amp_iterations == 10
        assert config.units == "nats"
        assert config.sparse_hmm_params == (0.3, 0.8)

    def test_every_violation_reported_at_once(self):
        doc = base_doc(tasks=["bogus"], units="parsecs")
        doc["sweep"] = {"start": 2.0, "stop": 1.0, "step": 0.5}
        with pytest.raises(ConfigError) as err:
            validate_config(doc)
        joined = "\n".join(err.value.errors)
        assert "tasks" in joined and "units" in joined and "sweep" in joined

    def test_amp_task_needs_sparse_prior(self):
        doc = base_doc(tasks=["amp"])
        with pytest.raises(ConfigError) as err:
            validate_config(doc)
        assert any("sparse_hmm" in e for e in err.value.errors)

    def test_version_required(self):
        doc = base_doc()
        del doc["version"]
        with pytest.raises(ConfigError):
            validate_config(doc)

    def test_sweep_range_expansion(self):
        config = validate_config(base_doc(sweep={"start": 0.4, "stop": 1.2, "step": 0.4}))
        assert config.betas == (0.4, 0.8, 1.2)

    def test_hidden_markov_prior_document(self):
        doc = base_doc(
            model={
                "prior": {
                    "type": "hidden_markov",
                    "states": [0, 1],
                    "transition": [[0.76, 0.24], [0.56, 0.44]],
                    "emissions": [
                        [{"weight": 1.0, "type": "point", "x": 0.0}],
                        [{"weight": 1.0, "type": "gaussian", "mean": 0.0, "var": 1.0}],
                    ],
                }
            }
        )
        config = validate_config(doc)
        assert config.model is not None


class TestRunSweep:
    def test_replica_only_row_leaves_simulation_fields_empty(self):
        config = validate_config(base_doc())
        rows = run_sweep(config)
        assert len(rows) == 1
        row = rows[0]
        assert row.free_energy is not None and row.mutual_info is not None
        assert row.sim_free_energy is None and row.amp_mse is None and row.mh_mse is None
        assert row.errors == ""

    def test_rerun_is_byte_identical_and_thread_invariant(self):
        config = validate_config(
            base_doc(sweep={"betas": [0.5, 1.0]}, tasks=["replica", "exact_sim"], n=8, trials=12)
        )
        a = rows_to_csv(run_sweep(config, threads=1))
        b = rows_to_csv(run_sweep(config, threads=4))
        c = rows_to_csv(run_sweep(config, threads=1))
        assert a == b == c

    def test_rows_sorted_by_beta(self):
        config = validate_config(base_doc(sweep={"betas": [2.0, 0.5, 1.0]}))
        rows = run_sweep(config)
        assert [row.beta for row in rows] == [0.5, 1.0, 2.0]

    def test_verify_flag_checks_residuals(self):
        config = validate_config(base_doc())
        rows = run_sweep(config, verify=True)
        assert rows[0].errors == ""

    def test_bits_units_convert_log_quantities_only(self):
        nats = run_sweep(validate_config(base_doc()))[0]
        bits = run_sweep(validate_config(base_doc(units="bits")))[0]
        assert abs(bits.free_energy - nats.free_energy / math.log(2)) < 1e-12
        assert abs(bits.mutual_info - nats.mutual_info / math.log(2)) < 1e-12
        assert bits.mmse == nats.mmse

    def test_exact_sim_close_to_replica(self):
        config = validate_config(base_doc(tasks=["replica", "exact_sim"], n=10, trials=60))
        row = run_sweep(config)[0]
        assert abs(row.sim_free_energy - row.free_energy) < 5 * row.sim_free_energy_stderr + 0.05 * abs(row.free_energy)

    def test_grid_sweep_replica_tracks_enumeration(self):
        config = validate_config(
            base_doc(
                sweep={"start": 0.4, "stop": 2.0, "step": 0.2},
                tasks=["replica", "exact_sim"],
                n=12,
                trials=200,
                seed=20260809,
            )
        )
        rows = run_sweep(config, threads=2)
        assert len(rows) == 9
        for row in rows:
            assert row.errors == ""
            rel = abs(row.free_energy - row.sim_free_energy) / abs(row.sim_free_energy)
            assert rel <= 0.05

    def test_mismatched_model_records_partial_failure(self):
        doc = base_doc()
        doc["model"]["sigma"] = 2.0  # mismatched: MI/MMSE not defined, F still is
        config = validate_config(doc)
        row = run_sweep(config)[0]
        assert row.free_energy is not None
        assert row.mutual_info is None and row.mmse is None
        assert row.errors == ""


class TestCsv:
    def test_header_and_empty_fields(self):
        text = rows_to_csv([ResultRow(beta=1.0, free_energy=1.5)])
        lines = text.strip().split("\r\n")
        assert lines[0].startswith("beta,eta,xi,free_energy,mutual_info,mmse,sim_free_energy")
        assert lines[1].split(",")[1] == ""  # eta empty

    def test_floats_round_trip(self):
        text = rows_to_csv([ResultRow(beta=1.0, free_energy=1.0 / 3.0)])
        value = text.strip().split("\r\n")[1].split(",")[3]
        assert float(value) == 1.0 / 3.0


class TestMainEntry:
    def test_validation_error_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps(base_doc(tasks=["bogus"])))
        code = main(["replica", "sweep", "--config", str(cfg)])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_sweep_writes_csv(self, tmp_path):
        cfg = tmp_path / "ok.json"
        out = tmp_path / "rows.csv"
        cfg.write_text(json.dumps(base_doc()))
        code = main(["replica", "sweep", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        header = out.read_text().splitlines()[0]
        assert header.startswith("beta,")

    def test_seed_override_changes_simulation(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps(base_doc(tasks=["exact_sim"], n=8, trials=8)))
        out1, out2, out3 = (tmp_path / f"o{i}.csv" for i in range(3))
        assert main(["simulate", "exact", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["simulate", "exact", "--config", str(cfg), "--seed", "99", "--out", str(out2)]) == 0
        assert main(["simulate", "exact", "--config", str(cfg), "--seed", "3", "--out", str(out3)]) == 0
        assert out1.read_text() != out2.read_text()
        assert out1.read_text() == out3.read_text()

    def test_simulate_amp_trace_schema(self, tmp_path):
        cfg = tmp_path / "amp.json"
        cfg.write_text(
            json.dumps(
                base_doc(
                    model={"prior": {"type": "sparse_hmm", "kappa": 0.3, "gamma": 0.8}},
                    tasks=["amp"],
                    n=100,
                    trials=2,
                    amp={"iterations": 4},
                )
            )
        )
        out = tmp_path / "trace.csv"
        assert main(["simulate", "amp", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "beta,trial,iteration,mse"
        assert len(lines) == 1 + 2 * 4

    def test_pf_deriv_check_passes(self, tmp_path):
        out = tmp_path / "pf.csv"
        code = main(["pf", "deriv-check", "--cases", "6", "--seed", "1", "--out", str(out)])
        assert code == 0
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "case,nu,rel_err,pass"
        assert all(line.endswith("True") for line in rows[1:])

    def test_pf_rate_runs(self, tmp_path):
        cfg = tmp_path / "rate.json"
        cfg.write_text(
            json.dumps(
                {
                    "version": 1,
                    "chain": {"type": "binary_markov", "alpha": 0.3, "delta": 0.3},
                    "nu": 1,
                    "snr": 1.0,
                    "q_target": [[1.0, 0.2], [0.2, 1.0]],
                }
            )
        )
        out = tmp_path / "rate.csv"
        assert main(["pf", "rate", "--config", str(cfg), "--out", str(out)]) == 0
        header, row = out.read_text().strip().splitlines()
        assert header.split(",")[:2] == ["value", "feasible"]
        assert float(row.split(",")[0]) >= 0.0

    def test_missing_config_file_exit_2(self):
        assert main(["replica", "sweep", "--config", "/nonexistent.json"]) == 2

    def test_numeric_failure_exit_3(self, tmp_path, capsys):
        # enumeration budget blow-up is recorded per row and surfaces as exit 3
        cfg = tmp_path / "big.json"
        cfg.write_text(json.dumps(base_doc(tasks=["replica", "exact_sim"], n=25, trials=2)))
        out = tmp_path / "rows.csv"
        code = main(["replica", "sweep", "--config", str(cfg), "--out", str(out)])
        assert code == 3
        body = out.read_text()
        assert "exact_sim:" in body  # failure recorded in the errors column
        assert body.splitlines()[1].split(",")[3] != ""  # replica fields still present

    def test_simulate_mh_subcommand(self, tmp_path):
        cfg = tmp_path / "mh.json"
        cfg.write_text(json.dumps(base_doc(n=4, trials=4, mh={"steps": 3000, "burn_in": 500})))
        out = tmp_path / "mh.csv"
        assert main(["simulate", "mh", "--config", str(cfg), "--out", str(out)]) == 0
        row = out.read_text().splitlines()[1].split(",")
        assert row[10] != ""  # mh_mse populated

    def test_instance_dump_round_trips(self, tmp_path):
        from replica_markov.simulator import LinearModelInstance

        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps(base_doc(tasks=["exact_sim"], n=6, trials=2)))
        dump = tmp_path / "instances"
        out = tmp_path / "rows.csv"
        code = main(
            ["simulate", "exact", "--config", str(cfg), "--out", str(out), "--dump-instances", str(dump)]
        )
        assert code == 0
        files = sorted(dump.iterdir())
        assert len(files) == 2
        inst = LinearModelInstance.from_json(files[0].read_text())
        assert inst.n == 6

    def test_env_thread_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("REPLICA_THREADS", "2")
        cfg = tmp_path / "ok.json"
        cfg.write_text(json.dumps(base_doc()))
        out = tmp_path / "rows.csv"
        assert main(["replica", "sweep", "--config", str(cfg), "--out", str(out)]) == 0
