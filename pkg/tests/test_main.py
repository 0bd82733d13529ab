"""End-to-end tests of the allee-rds command line."""
from __future__ import annotations

import json

import pytest

import main
from conftest import RATIONAL_A_SYSTEM, RATIONAL_B_SYSTEM, INCREASING_SYSTEM


def _run(capsys, *argv):
    code = main.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestLoading:
    def test_analyze_rational_a(self, capsys, write_system):
        code, out, err = _run(capsys, "analyze", "--config", write_system(RATIONAL_A_SYSTEM))
        assert code == 0
        data = json.loads(out)
        assert data["features"]["f"]["A"] == pytest.approx(2.5528, abs=1e-4)
        assert data["ordering"]["ordering"] == "AfAgKfKg"
        assert "Ordering" in err

    def test_flags_before_subcommand(self, capsys, write_system):
        code, out, _ = _run(capsys, "--config", write_system(RATIONAL_B_SYSTEM), "analyze")
        assert code == 0
        assert json.loads(out)["ordering"]["permutation"] == "AgAfKfKg"

    def test_not_an_allee_map(self, capsys, write_system):
        system = {**RATIONAL_A_SYSTEM, "f": {"family": "rational_unimodal", "G": 0.9, "bp": 2.0, "T": 3.0}}
        code, _, err = _run(capsys, "analyze", "--config", write_system(system))
        assert code == 3
        assert "[!]" in err
        assert "map f" in err

    @pytest.mark.parametrize("system", [
        {**RATIONAL_A_SYSTEM, "p": 1.2},
        {**RATIONAL_A_SYSTEM, "q": 0.5},
        {**RATIONAL_A_SYSTEM, "p": "half"},
        {"f": RATIONAL_A_SYSTEM["f"], "p": 0.5},
        {**RATIONAL_A_SYSTEM, "f": {"family": "rational_unimodal", "G": 1.1, "bp": 2.0}},
        {**RATIONAL_A_SYSTEM, "perturbation": {"delta": -0.1}},
    ])
    def test_bad_config_exits_2(self, capsys, write_system, system):
        code, out, err = _run(capsys, "analyze", "--config", write_system(system))
        assert code == 2
        assert out == ""
        assert "[!]" in err

    def test_malformed_json_reports_position(self, capsys, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"p": 0.5,\n "f": }', encoding="utf-8")
        code, _, err = _run(capsys, "analyze", "--config", path)
        assert code == 2
        assert "broken.json:2:" in err

    def test_missing_config(self, capsys):
        code, _, err = _run(capsys, "analyze")
        assert code == 2
        assert "--config" in err

    def test_negative_seed(self, capsys, write_system):
        code, _, _ = _run(capsys, "simulate", "--config", write_system(RATIONAL_A_SYSTEM), "--x0", 1, "--seed", -4)
        assert code == 2

    def test_payload_config_reloads(self, capsys, write_system):
        _, out, _ = _run(capsys, "analyze", "--config", write_system(INCREASING_SYSTEM))
        config = main.system_from_dict(json.loads(out)["config"])
        assert config.p == 0.5
        assert config.f.rho == 2.5


class TestCertify:
    def test_t3_with_longer_witness(self, capsys, write_system):
        code, out, _ = _run(capsys, "certify", "--config", write_system(RATIONAL_A_SYSTEM),
                            "--theorem", "T3", "--witness", "g,f,g")
        assert code == 0
        data = json.loads(out)
        assert data["verdict"] == "AllHold"
        assert "g,f,g" in out

    def test_t4_rational_b_holds(self, capsys, write_system):
        code, out, err = _run(capsys, "certify", "--config", write_system(RATIONAL_B_SYSTEM), "--theorem", "T4")
        assert code == 0
        assert "T4: AllHold" in err

    def test_t3_rational_b_fails(self, capsys, write_system):
        code, out, err = _run(capsys, "certify", "--config", write_system(RATIONAL_B_SYSTEM), "--theorem", "T3")
        assert code == 1
        assert json.loads(out)["verdict"] == "SomeFail"
        assert "FAIL A_f<A_g" in err

    def test_wrong_map_class(self, capsys, write_system):
        code, _, _ = _run(capsys, "certify", "--config", write_system(RATIONAL_A_SYSTEM), "--theorem", "T1")
        assert code == 2

    def test_delta_needed(self, capsys, write_system):
        code, _, _ = _run(capsys, "certify", "--config", write_system(INCREASING_SYSTEM), "--theorem", "T2")
        assert code == 2

    def test_delta_from_config(self, capsys, write_system):
        system = {**INCREASING_SYSTEM, "perturbation": {"delta": 0.05}}
        code, out, err = _run(capsys, "certify", "--config", write_system(system), "--theorem", "T2")
        assert code == 0
        assert "T2: AllHold" in err
        tail = next(h for h in json.loads(out)["hypotheses"] if h["name"] == "tail_condition")
        assert tail["delta"] == 0.05

    def test_delta_flag_overrides_config(self, capsys, write_system):
        system = {**INCREASING_SYSTEM, "perturbation": {"delta": 0.05}}
        code, out, _ = _run(capsys, "certify", "--config", write_system(system), "--theorem", "T2",
                            "--delta", 0.5)
        assert code == 1
        tail = next(h for h in json.loads(out)["hypotheses"] if h["name"] == "tail_condition")
        assert tail["delta"] == 0.5

    def test_bad_witness(self, capsys, write_system):
        code, _, _ = _run(capsys, "certify", "--config", write_system(RATIONAL_A_SYSTEM),
                          "--theorem", "T3", "--witness", "f,h")
        assert code == 2

    def test_all_skips_other_class(self, capsys, write_system):
        code, out, _ = _run(capsys, "certify", "--config", write_system(INCREASING_SYSTEM),
                            "--theorem", "all", "--delta", "0.05")
        data = json.loads(out)
        assert [r["theorem"] for r in data["reports"]] == ["T1", "T2"]
        assert {s["theorem"] for s in data["skipped"]} == {"T3", "T4", "T5"}
        assert code == 0

    def test_csv_form(self, capsys, write_system):
        code, out, _ = _run(capsys, "certify", "--config", write_system(RATIONAL_B_SYSTEM),
                            "--theorem", "T4", "--format", "csv")
        assert code == 0
        assert out.splitlines()[0].startswith("theorem,name,holds")


class TestSimulate:
    def test_zero_start(self, capsys, write_system):
        code, out, err = _run(capsys, "simulate", "--config", write_system(RATIONAL_A_SYSTEM),
                              "--x0", 0, "--steps", 100)
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "step,state,choice"
        assert len(lines) == 102
        assert all(line.split(",")[1] == "0.0" for line in lines[1:])
        assert "outcome extinct" in err

    def test_same_seed_same_bytes(self, capsys, write_system):
        path = write_system(RATIONAL_B_SYSTEM)
        _, first, _ = _run(capsys, "simulate", "--config", path, "--x0", 3.0, "--steps", 300, "--seed", 77)
        _, second, _ = _run(capsys, "simulate", "--config", path, "--x0", 3.0, "--steps", 300, "--seed", 77)
        _, other, _ = _run(capsys, "simulate", "--config", path, "--x0", 3.0, "--steps", 300, "--seed", 78)
        assert first == second
        assert first != other

    def test_x0_outside_domain(self, capsys, write_system):
        code, _, _ = _run(capsys, "simulate", "--config", write_system(RATIONAL_A_SYSTEM), "--x0", 50)
        assert code == 2

    def test_out_file(self, capsys, write_system, tmp_path):
        target = tmp_path / "runs" / "traj.json"
        code, out, _ = _run(capsys, "simulate", "--config", write_system(RATIONAL_A_SYSTEM),
                            "--x0", 3.0, "--steps", 20, "--format", "json", "--out", target)
        assert code == 0
        assert out == ""
        data = json.loads(target.read_text(encoding="utf-8"))
        assert len(data["states"]) == 21
        assert set(data["choices"]) <= {"f", "g"}


class TestEstimate:
    def test_below_threshold_extinct(self, capsys, write_system):
        code, out, _ = _run(capsys, "estimate", "--config", write_system(INCREASING_SYSTEM),
                            "--x0", 0.3, "--n-trials", 200)
        assert code == 0
        rows = {r["quantity"]: r for r in json.loads(out)["estimates"]}
        assert rows["p0"]["estimate"] == 1.0
        assert rows["p0"]["ci_high"] == 1.0
        assert rows["p1"]["estimate"] == 0.0

    def test_zero_trials(self, capsys, write_system):
        code, _, _ = _run(capsys, "estimate", "--config", write_system(INCREASING_SYSTEM),
                          "--x0", 0.3, "--n-trials", 0)
        assert code == 2

    def test_hitting_time(self, capsys, write_system):
        code, out, err = _run(capsys, "estimate", "--config", write_system(RATIONAL_B_SYSTEM), "--x0", 3.0,
                              "--kind", "hitting", "--n-trials", 200)
        assert code == 0
        row = json.loads(out)["estimates"][0]
        assert row["quantity"] == "T"
        assert row["ci_low"] <= row["estimate"] <= row["ci_high"]
        assert "censored=0" in err

    def test_all_censored_exits_4(self, capsys, write_system):
        system = {**RATIONAL_B_SYSTEM, "g": RATIONAL_B_SYSTEM["f"]}
        code, _, err = _run(capsys, "estimate", "--config", write_system(system), "--x0", 3.0,
                            "--kind", "hitting", "--n-trials", 20, "--cap", 100)
        assert code == 4
        assert "censored" in err

    def test_theorem2_trap_needs_noise(self, capsys, write_system):
        code, _, _ = _run(capsys, "estimate", "--config", write_system(INCREASING_SYSTEM),
                          "--x0", 0.3, "--n-trials", 10, "--trap", "theorem2")
        assert code == 2

    def test_theorem5_trap(self, capsys, write_system):
        system = {**RATIONAL_A_SYSTEM, "perturbation": {"delta": 0.1}}
        code, out, _ = _run(capsys, "estimate", "--config", write_system(system),
                            "--x0", 0.1, "--n-trials", 100, "--trap", "theorem5")
        assert code == 0
        rows = {r["quantity"]: r for r in json.loads(out)["estimates"]}
        assert rows["p0"]["estimate"] == 1.0

    def test_theorem2_trap(self, capsys, write_system):
        system = {**INCREASING_SYSTEM, "perturbation": {"delta": 0.05}}
        code, out, _ = _run(capsys, "estimate", "--config", write_system(system),
                            "--x0", 2.2, "--n-trials", 200, "--trap", "theorem2")
        assert code == 0
        rows = {r["quantity"]: r for r in json.loads(out)["estimates"]}
        assert rows["p1"]["estimate"] == 1.0

    def test_noisy_config_picks_trap_by_default(self, capsys, write_system):
        system = {**INCREASING_SYSTEM, "perturbation": {"delta": 0.05}}
        code, out, err = _run(capsys, "estimate", "--config", write_system(system),
                              "--x0", 0.3, "--n-trials", 200)
        assert code == 0
        rows = {r["quantity"]: r for r in json.loads(out)["estimates"]}
        assert rows["p0"]["estimate"] == 1.0
        assert "undecided=0" in err

    def test_noisy_config_without_trap(self, capsys, write_system):
        system = {**INCREASING_SYSTEM, "perturbation": {"delta": 0.5}}
        code, _, err = _run(capsys, "estimate", "--config", write_system(system), "--x0", 0.3, "--n-trials", 10)
        assert code == 2
        assert "--trap" in err


class TestSweep:
    def test_missing_grid(self, capsys, write_system):
        code, _, err = _run(capsys, "sweep", "--config", write_system(RATIONAL_B_SYSTEM), "--x0", 3.0)
        assert code == 2
        assert "--p-grid" in err

    def test_csv_rows(self, capsys, write_system):
        code, out, _ = _run(capsys, "sweep", "--config", write_system(RATIONAL_B_SYSTEM), "--x0", 3.0,
                            "--p-grid", "0.3,0.5,0.7", "--n-trials", 100)
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "p,estimate,ci_low,ci_high,n_trials,n_censored,seed"
        assert [line.split(",")[0] for line in lines[1:]] == ["0.3", "0.5", "0.7"]

    def test_unsorted_grid(self, capsys, write_system):
        code, _, _ = _run(capsys, "sweep", "--config", write_system(RATIONAL_B_SYSTEM), "--x0", 3.0,
                          "--p-grid", "0.7,0.3", "--n-trials", 10)
        assert code == 2

    def test_export_dir(self, capsys, write_system, tmp_path):
        export = tmp_path / "export"
        code, _, err = _run(capsys, "sweep", "--config", write_system(RATIONAL_B_SYSTEM), "--x0", 3.0,
                            "--p-grid", "0.5", "--n-trials", 50, "--seed", 5, "--export-dir", export)
        assert code == 0
        assert (export / "sweep_5.json").exists()
        assert (export / "sweep_5.csv").exists()
        assert "JSON exported to:" in err
