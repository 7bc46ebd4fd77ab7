"""End-to-end tests of the command-line interface."""

import json
import math
import os

import numpy as np
import pytest
from click.testing import CliRunner

from mahgenta.cli import load_model, main, save_model
from mahgenta.core import InteractionCollection, Shape, VarSubset
from mahgenta.loglinear import energy_of_rows

from conftest import random_model, xor_values


@pytest.fixture
def runner():
    return CliRunner()


def _write_xor_csv(path, n_repeats=50):
    lines = ["a,b,c"]
    for _ in range(n_repeats):
        for a in range(2):
            for b in range(2):
                lines.append(f"{a},{b},{a ^ b}")
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def _write_xor_dist(path):
    payload = {
        "format_version": 1,
        "kind": "distribution",
        "cardinalities": [2, 2, 2],
        "values": xor_values().reshape(-1).tolist(),
    }
    path.write_text(json.dumps(payload))
    return str(path)


class TestSynth:
    def test_deterministic_outputs(self, runner, tmp_path):
        args = [
            "synth", "--complexity", "low", "--n", "200", "--seed", "7",
            "--out-truth", str(tmp_path / "t1.json"),
            "--out-samples", str(tmp_path / "s1.csv"),
        ]
        assert runner.invoke(main, args).exit_code == 0
        args2 = [a.replace("1.", "2.") if a.endswith((".json", ".csv")) else a for a in args]
        assert runner.invoke(main, args2).exit_code == 0
        assert (tmp_path / "t1.json").read_text() == (tmp_path / "t2.json").read_text()
        assert (tmp_path / "s1.csv").read_text() == (tmp_path / "s2.csv").read_text()

    def test_high_preset_collection(self, runner, tmp_path):
        res = runner.invoke(main, [
            "synth", "--complexity", "high", "--n", "0",
            "--out-truth", str(tmp_path / "t.json"),
            "--out-samples", str(tmp_path / "s.csv"),
        ])
        assert res.exit_code == 0
        samples = (tmp_path / "s.csv").read_text().strip().splitlines()
        assert len(samples) == 1  # header only for n=0
        assert "KL(truth; uniform)" in res.output

    def test_requires_exactly_one_source(self, runner, tmp_path):
        res = runner.invoke(main, ["synth", "--n", "5"])
        assert res.exit_code == 2


class TestFit:
    def test_fit_xor_selects_triple(self, runner, tmp_path):
        data = _write_xor_csv(tmp_path / "xor.csv", n_repeats=60)
        out = str(tmp_path / "model.json")
        res = runner.invoke(main, [
            "fit", "--data", data, "--seed", "0", "--epochs", "40", "--k", "2",
            "--lr", "0.5", "--out", out,
        ])
        assert res.exit_code == 0, res.output
        model, payload = load_model(out)
        assert VarSubset.of(1, 2, 3) in model.collection
        best_val = float(res.output.split("val error")[1].split()[0].rstrip(","))
        assert best_val < 0.05
        assert os.path.exists(str(tmp_path / "model_history.csv"))
        assert payload["provenance"]["config"]["tau"] == 0.3

    def test_missing_data_flag_exits_2(self, runner):
        res = runner.invoke(main, ["fit"])
        assert res.exit_code == 2

    def test_tau_one_strong_heredity(self, runner, tmp_path):
        data = _write_xor_csv(tmp_path / "xor.csv", n_repeats=20)
        res = runner.invoke(main, [
            "fit", "--data", data, "--tau", "1.0", "--epochs", "5", "--seed", "1",
            "--out", str(tmp_path / "m.json"),
        ])
        assert res.exit_code == 0, res.output
        model, _ = load_model(str(tmp_path / "m.json"))
        assert model.collection.is_hierarchical()

    def test_capacity_error_exits_3(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("MAHGENTA_ENUM_CAP", "4")
        data = _write_xor_csv(tmp_path / "xor.csv", n_repeats=20)
        res = runner.invoke(main, [
            "fit", "--data", data, "--out", str(tmp_path / "m.json"),
        ])
        assert res.exit_code == 3


class TestDecompose:
    def test_xor_greedy_all_mass_on_triple(self, runner, tmp_path):
        dist = _write_xor_dist(tmp_path / "xor.json")
        out = str(tmp_path / "report.json")
        res = runner.invoke(main, ["decompose", "--dist", dist, "--out", out])
        assert res.exit_code == 0, res.output
        report = json.loads((tmp_path / "report.json").read_text())
        steps = {tuple(s["subset"]): s["bits"] for s in report["steps"]}
        assert steps[(1, 2, 3)] == pytest.approx(1.0, abs=1e-7)
        assert report["total_kl_bits"] == pytest.approx(1.0, abs=1e-9)
        assert abs(report["residual_nats"]) < 1e-8
        assert "residual" in res.output

    def test_uniform_data_total_zero(self, runner, tmp_path):
        rows = ["a,b"] + [f"{i % 2},{(i // 2) % 2}" for i in range(400)]
        data = tmp_path / "u.csv"
        data.write_text("\n".join(rows) + "\n")
        res = runner.invoke(main, ["decompose", "--data", str(data), "--chain", "greedy"])
        assert res.exit_code == 0, res.output
        payload = json.loads(res.output[: res.output.rindex("}") + 1])
        assert payload["total_kl_nats"] == pytest.approx(0.0, abs=1e-9)

    def test_chain_file(self, runner, tmp_path):
        dist = _write_xor_dist(tmp_path / "xor.json")
        chain = tmp_path / "chain.json"
        chain.write_text(json.dumps({
            "subsets": [[1], [2], [3], [1, 2], [1, 3], [2, 3], [1, 2, 3]]
        }))
        res = runner.invoke(main, ["decompose", "--dist", dist, "--chain", str(chain)])
        assert res.exit_code == 0, res.output

    def test_over_cap_exits_3(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("MAHGENTA_ENUM_CAP", "4")
        dist = _write_xor_dist(tmp_path / "xor.json")
        res = runner.invoke(main, ["decompose", "--dist", dist])
        assert res.exit_code == 3

    def test_both_sources_rejected(self, runner, tmp_path):
        dist = _write_xor_dist(tmp_path / "xor.json")
        res = runner.invoke(main, ["decompose", "--dist", dist, "--data", dist])
        assert res.exit_code == 2


class TestSampleAndLogz:
    def test_sample_reproducible(self, runner, tmp_path):
        data = _write_xor_csv(tmp_path / "xor.csv")
        model_path = str(tmp_path / "m.json")
        assert runner.invoke(main, [
            "fit", "--data", data, "--epochs", "10", "--out", model_path,
        ]).exit_code == 0
        a = str(tmp_path / "a.csv")
        b = str(tmp_path / "b.csv")
        assert runner.invoke(main, ["sample", "--model", model_path, "--n", "50",
                                    "--seed", "3", "--out", a]).exit_code == 0
        assert runner.invoke(main, ["sample", "--model", model_path, "--n", "50",
                                    "--seed", "3", "--out", b]).exit_code == 0
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()

    def test_logz_exact_label_on_uniform_cube(self, runner, tmp_path):
        from mahgenta.loglinear import ThetaModel

        model = ThetaModel.zeros(Shape((2, 2, 2)), InteractionCollection())
        path = str(tmp_path / "m.json")
        save_model(model, path)
        res = runner.invoke(main, ["logz", "--model", path])
        assert res.exit_code == 0
        payload = json.loads(res.output[res.output.index("{"):])
        assert payload["method"] == "exact"
        assert payload["log_z"] == pytest.approx(math.log(8), abs=1e-12)

    def test_logz_ais_fields(self, runner, tmp_path):
        from mahgenta.loglinear import ThetaModel

        model = ThetaModel.zeros(Shape((2, 2)), InteractionCollection())
        path = str(tmp_path / "m.json")
        save_model(model, path)
        res = runner.invoke(main, ["logz", "--model", path, "--method", "ais",
                                   "--chains", "8", "--temps", "5"])
        assert res.exit_code == 0
        payload = json.loads(res.output[res.output.index("{"):])
        assert payload["method"] == "ais"
        assert payload["log_z"] == pytest.approx(math.log(4), abs=1e-9)


class TestClassifyCmd:
    def test_xor_classify_all_columns(self, runner, tmp_path):
        data = _write_xor_csv(tmp_path / "xor.csv", n_repeats=60)
        model_path = str(tmp_path / "m.json")
        assert runner.invoke(main, [
            "fit", "--data", data, "--epochs", "40", "--k", "2", "--out", model_path,
        ]).exit_code == 0
        res = runner.invoke(main, ["classify", "--model", model_path, "--data", data,
                                   "--target", "all"])
        assert res.exit_code == 0, res.output
        lines = res.output.strip().splitlines()
        assert lines[0] == "column,accuracy"
        accs = {ln.split(",")[0]: float(ln.split(",")[1]) for ln in lines[1:4]}
        assert accs["c"] > 0.95  # xor bit is recoverable from the other two

    def test_predictions_csv(self, runner, tmp_path):
        data = _write_xor_csv(tmp_path / "xor.csv", n_repeats=30)
        model_path = str(tmp_path / "m.json")
        assert runner.invoke(main, [
            "fit", "--data", data, "--epochs", "30", "--out", model_path,
        ]).exit_code == 0
        out = str(tmp_path / "preds.csv")
        res = runner.invoke(main, ["classify", "--model", model_path, "--data", data,
                                   "--target", "c", "--out", out])
        assert res.exit_code == 0, res.output
        lines = (tmp_path / "preds.csv").read_text().strip().splitlines()
        assert lines[0].startswith("row,true,predicted,p_")
        assert len(lines) == 121


class TestInfoCmd:
    def test_xor_j_triple_one_bit(self, runner, tmp_path):
        dist = _write_xor_dist(tmp_path / "xor.json")
        res = runner.invoke(main, ["info", "--dist", dist, "--subset", "1,2,3",
                                   "--measure", "J", "--unit", "bits"])
        assert res.exit_code == 0
        assert "= 1 bits" in res.output or "= 1.0" in res.output or "= 0.99999" in res.output

    def test_ri_conditional(self, runner, tmp_path):
        dist = _write_xor_dist(tmp_path / "xor.json")
        res = runner.invoke(main, ["info", "--dist", dist, "--subset", "1,2",
                                   "--measure", "RI-cond", "--unit", "nats"])
        assert res.exit_code == 0, res.output

    def test_bad_subset_exits_2(self, runner, tmp_path):
        dist = _write_xor_dist(tmp_path / "xor.json")
        res = runner.invoke(main, ["info", "--dist", dist, "--subset", "abc",
                                   "--measure", "H"])
        assert res.exit_code == 2


class TestModelRoundTrip:
    def test_energies_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        shape = Shape((3, 2, 4))
        coll = InteractionCollection.of((1,), (2,), (3,), (1, 3), (2, 3))
        model = random_model(rng, shape, coll)
        path = str(tmp_path / "m.json")
        save_model(model, path)
        loaded, payload = load_model(path)
        rows = np.stack([rng.integers(c, size=200) for c in shape], axis=1)
        np.testing.assert_array_equal(
            energy_of_rows(model, rows), energy_of_rows(loaded, rows)
        )
        assert payload["format_version"] == 1

    def test_log_z_state_round_trip(self, tmp_path):
        from mahgenta.loglinear import ThetaModel, exact_log_partition

        model = ThetaModel.zeros(Shape((2, 2)), InteractionCollection.of((1,)))
        exact_log_partition(model)
        path = str(tmp_path / "m.json")
        save_model(model, path)
        loaded, _ = load_model(path)
        assert loaded.log_z_state == "exact"
        assert loaded.log_z == model.log_z

    def test_wrong_kind_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"kind": "distribution", "format_version": 1}))
        from mahgenta.errors import ParseError

        with pytest.raises(ParseError):
            load_model(str(path))
