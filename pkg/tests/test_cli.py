import json

import pytest

from app.cli import EXIT_BAD_INPUT, EXIT_OK, EXIT_USAGE, main
from app.services.storage import read_diagnostics

SCENARIO = """\
q_true=-0.05,0.025,0.025;0.025,-0.05,0.025;0.025,0.025,-0.05
experts=constant:-1;constant:0;constant:1
noise_c=0.1
t_max=120
seed=7
"""


@pytest.fixture
def scenario(write_text):
    return write_text("scenario.env", SCENARIO)


def simulate(tmp_path, scenario, name="obs.csv", *extra):
    out = str(tmp_path / name)
    assert main(["simulate", "--scenario", scenario, "--out", out, *extra]) == EXIT_OK
    return out


class TestRun:
    def test_single_expert_passes_predictions_through(self, tmp_path, write_text, capsys):
        experts = write_text("obs.csv", "t,y,expert_0\n0,1.0,1.5\n1,2.0,2.5\n2,2.5,2.5\n")
        out = str(tmp_path / "diag.jsonl")
        assert main(["run", "--experts", experts, "--out", out]) == EXIT_OK
        assert [r.fused for r in read_diagnostics(out)] == [1.5, 2.5, 2.5]
        summary = json.loads((tmp_path / "diag.jsonl.summary.json").read_text())
        assert summary["fused_loss"] == pytest.approx(0.5)
        assert summary["expert_losses"] == [pytest.approx(0.5)]
        assert "expert_0 cumulative mse" in capsys.readouterr().out

    def test_bce_prints_f1(self, tmp_path, write_text, capsys):
        experts = write_text("obs.csv", "t,y,expert_0,expert_1\n0,1,0.9,0.2\n1,0,0.1,0.7\n2,1,0.8,0.4\n")
        out = str(tmp_path / "diag.jsonl")
        assert main(["run", "--experts", experts, "--loss", "bce", "--out", out]) == EXIT_OK
        assert "weighted F1" in capsys.readouterr().out

    def test_config_file_and_flags(self, tmp_path, write_text):
        experts = write_text("obs.csv", "t,y,expert_0,expert_1\n0,1.0,0.5,1.5\n")
        config = write_text("moef.env", "alpha=0.9\nlambda=3\n")
        out = str(tmp_path / "diag.jsonl")
        assert main(["run", "--experts", experts, "--config", config, "--alpha", "0.2", "--out", out]) == EXIT_OK

    @pytest.mark.parametrize("flags", [["--alpha", "1.5"], ["--alpha", "0"], ["--lambda", "-1"],
                                       ["--loss", "hinge"], ["--delta", "abc"]])
    def test_invalid_flags(self, tmp_path, write_text, flags):
        experts = write_text("obs.csv", "t,y,expert_0\n0,1.0,1.5\n")
        assert main(["run", "--experts", experts, "--out", str(tmp_path / "d.jsonl"), *flags]) == EXIT_USAGE

    def test_tiny_delta(self, tmp_path, write_text):
        experts = write_text("obs.csv", "t,y,expert_0,expert_1\n0,1.0,0.5,1.5\n1,2.0,1.5,2.5\n2,2.5,2.0,3.0\n")
        out = str(tmp_path / "d.jsonl")
        assert main(["run", "--experts", experts, "--delta", "1e-50", "--out", out]) == EXIT_OK
        assert len(read_diagnostics(out)) == 3

    def test_unknown_config_key(self, tmp_path, write_text):
        experts = write_text("obs.csv", "t,y,expert_0\n0,1.0,1.5\n")
        config = write_text("moef.env", "gamma=1\n")
        assert main(["run", "--experts", experts, "--config", config,
                     "--out", str(tmp_path / "d.jsonl")]) == EXIT_USAGE

    def test_malformed_observations(self, tmp_path, write_text):
        experts = write_text("obs.csv", "t,y,expert_0\n0,1.0,1.5\n1,oops,1.5\n")
        assert main(["run", "--experts", experts, "--out", str(tmp_path / "d.jsonl")]) == EXIT_BAD_INPUT

    def test_missing_subcommand(self):
        assert main([]) == EXIT_USAGE


class TestSimulate:
    def test_byte_identical_runs(self, tmp_path, scenario):
        simulate(tmp_path, scenario, "a.csv", "--truth", str(tmp_path / "a.truth.csv"))
        simulate(tmp_path, scenario, "b.csv", "--truth", str(tmp_path / "b.truth.csv"))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.truth.csv").read_bytes() == (tmp_path / "b.truth.csv").read_bytes()
        meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
        assert meta["generator"] == "numpy.random.PCG64" and meta["seed"] == 7
        assert meta["experts"] == ["constant:-1.0", "constant:0.0", "constant:1.0"]

    def test_seed_flag_changes_the_path(self, tmp_path, scenario):
        simulate(tmp_path, scenario, "a.csv")
        simulate(tmp_path, scenario, "b.csv", "--seed", "8")
        assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()

    def test_invalid_generator(self, tmp_path, write_text):
        bad = write_text("bad.env", "q_true=-1,2;1,-1\nexperts=constant:0;constant:1\nt_max=5\n")
        assert main(["simulate", "--scenario", bad, "--out", str(tmp_path / "o.csv")]) == EXIT_BAD_INPUT

    def test_seed_out_of_range(self, tmp_path, scenario):
        assert main(["simulate", "--scenario", scenario, "--seed", str(2 ** 64),
                     "--out", str(tmp_path / "o.csv")]) == EXIT_USAGE


class TestEvaluate:
    def evaluate(self, tmp_path, pred, truth, task):
        out = str(tmp_path / "report.json")
        code = main(["evaluate", "--pred", pred, "--truth", truth, "--task", task, "--out", out])
        return code, (json.loads((tmp_path / "report.json").read_text()) if code == EXIT_OK else None)

    def test_hand_computed_fixture(self, tmp_path, write_text, capsys):
        truth = write_text("truth.csv", "t,label\n1,Rise\n2,Rise\n3,Fall\n")
        pred = write_text("pred.csv", "t,label\n1,Rise\n2,Fall\n3,Fall\n")
        code, report = self.evaluate(tmp_path, pred, truth, "movement")
        assert code == EXIT_OK
        assert report["f1"] == 0.6667 and report["accuracy"] == 0.6667
        assert "F1 0.6667" in capsys.readouterr().out

    def test_identical_labels(self, tmp_path, write_text):
        truth = write_text("truth.csv", "t,label\n1,Rise\n2,Neutral\n3,Fall\n")
        code, report = self.evaluate(tmp_path, truth, truth, "movement")
        assert code == EXIT_OK
        assert report["f1"] == report["accuracy"] == report["precision"] == report["recall"] == 1.0

    def test_prices_and_probabilities(self, tmp_path, write_text):
        truth = write_text("truth.csv", "t,close\n0,100\n1,101\n2,101.1\n3,99\n")
        pred = write_text("pred.csv", "t,p_fall,p_neutral,p_rise\n1,0.1,0.2,0.7\n2,0.2,0.6,0.2\n3,0.5,0.3,0.2\n")
        code, report = self.evaluate(tmp_path, pred, truth, "movement")
        assert code == EXIT_OK and report["accuracy"] == 1.0

    def test_mse_identical(self, tmp_path, write_text, capsys):
        truth = write_text("truth.csv", "t,y\n1,0.5\n2,1.5\n")
        code, report = self.evaluate(tmp_path, truth, truth, "mse")
        assert code == EXIT_OK and report["mse"] == 0.0
        assert "MSE 0.0000" in capsys.readouterr().out

    def test_mse_missing_channel(self, tmp_path, write_text):
        truth = write_text("truth.csv", "t,y\n1,0.5\n")
        pred = write_text("pred.csv", "t,z\n1,0.5\n")
        assert self.evaluate(tmp_path, pred, truth, "mse")[0] == EXIT_BAD_INPUT

    def test_misaligned(self, tmp_path, write_text):
        truth = write_text("truth.csv", "t,label\n1,Rise\n2,Rise\n")
        pred = write_text("pred.csv", "t,label\n1,Rise\n3,Rise\n")
        assert self.evaluate(tmp_path, pred, truth, "movement")[0] == EXIT_BAD_INPUT

    def test_unknown_label(self, tmp_path, write_text):
        truth = write_text("truth.csv", "t,label\n1,Up\n")
        assert self.evaluate(tmp_path, truth, truth, "movement")[0] == EXIT_BAD_INPUT


class TestOracleCheck:
    def test_zero_trials(self):
        assert main(["oracle-check", "--trials", "0"]) == EXIT_USAGE

    def test_small_run_passes(self, capsys):
        assert main(["oracle-check", "--trials", "3", "--seed", "1"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 6 and all(line.startswith("PASS") for line in lines)


class TestPipeline:
    @pytest.mark.parametrize("parallel", ["--parallel", "--no-parallel"])
    def test_end_to_end_is_deterministic(self, tmp_path, scenario, parallel):
        reports = []
        for name in ("first", "second"):
            obs = simulate(tmp_path, scenario, f"{name}.csv")
            diag = str(tmp_path / f"{name}.jsonl")
            report = str(tmp_path / f"{name}.report.json")
            assert main(["run", "--experts", obs, "--out", diag, parallel]) == EXIT_OK
            assert main(["evaluate", "--pred", diag, "--truth", obs, "--task", "mse", "--out", report]) == EXIT_OK
            reports.append([(tmp_path / f"{name}.jsonl").read_bytes(), (tmp_path / f"{name}.report.json").read_bytes()])
        assert reports[0] == reports[1]

    def test_parallel_and_sequential_agree(self, tmp_path, scenario):
        obs = simulate(tmp_path, scenario)
        for flag in ("--parallel", "--no-parallel"):
            assert main(["run", "--experts", obs, "--out", str(tmp_path / f"{flag}.jsonl"), flag]) == EXIT_OK
        assert (tmp_path / "--parallel.jsonl").read_bytes() == (tmp_path / "--no-parallel.jsonl").read_bytes()
