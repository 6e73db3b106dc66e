import json
import shutil
import subprocess

import numpy as np
import pytest

from subpop_lp.actions import TESTING
from subpop_lp.cli import EXIT_FAILED, EXIT_OK, EXIT_VERIFY, _resolve_config, build_parser, main
from subpop_lp.kernel import RectGrid
from subpop_lp.procedures import DiscreteProcedure

COARSE = ["--tau", "0.25", "--b", "3", "--b-prime", "4", "--fine-tau", "0.01", "--scan-step", "0.01",
          "--power", "0.6", "--verify", "false", "--bound", "false"]


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestParser:
    def test_subcommands(self):
        p = build_parser()
        for cmd in ("bayes", "bound", "minimax", "decision", "tradeoff", "samplesize", "ablate-global-null"):
            assert p.parse_args([cmd]).command == cmd
        assert p.parse_args(["verify", "x.json"]).procedure == "x.json"
        assert p.parse_args(["export", "regions", "a", "b"]).kind == "regions"

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_bad_bool(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["bayes", "--verify", "maybe"])

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "subpop-lp" in capsys.readouterr().out


class TestConfigPrecedence:
    def test_preset_then_file_then_flags(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"power": 0.7, "tau": 0.5, "seed": 4}))
        args = build_parser().parse_args(["bayes", "--preset", "asym", "--config", str(path), "--tau", "0.25"])
        cfg = _resolve_config(args, "bayes")
        assert cfg.p1 == 0.63 and cfg.prior == "asym"  # preset
        assert cfg.power == 0.7 and cfg.seed == 4  # file over preset
        assert cfg.tau == 0.25  # flag over file

    def test_json_fields(self):
        args = build_parser().parse_args(["decision", "--loss-params", '{"l_fn": 2, "l_fp": 1}',
                                          "--bound-relaxations", "[0.01]"])
        cfg = _resolve_config(args, "decision")
        assert cfg.loss == "decision" and cfg.loss_params == {"l_fn": 2, "l_fp": 1}
        assert cfg.bound_relaxations == (0.01,)


class TestExitCodes:
    def test_bayes_ok_writes_report(self, capsys, tmp_path):
        rep = tmp_path / "r.json"
        code, out, _ = _run(capsys, "bayes", "--preset", "sym", *COARSE, "--report", str(rep))
        assert code == EXIT_OK
        assert json.loads(out)["status"] == "ok"
        assert json.loads(rep.read_text())["summary"]["coherent"]

    def test_infeasible_exits_2(self, capsys):
        code, out, _ = _run(capsys, "bayes", "--preset", "sym", *COARSE, "--power", "0.95", "-q")
        assert code == EXIT_FAILED and out == ""

    def test_invalid_config_exits_2(self, capsys):
        code, _, err = _run(capsys, "bayes", "--p1", "1.5")
        assert code == EXIT_FAILED and "p1" in err

    def test_verification_failure_exits_1(self, capsys):
        flags = [f for f in COARSE]
        flags[flags.index("--tau") + 1] = "0.1"
        flags[flags.index("--verify") + 1] = "true"
        code, out, _ = _run(capsys, "bayes", "--preset", "sym", *flags)
        assert code == EXIT_VERIFY
        assert json.loads(out)["status"] == "verification_failed"


class TestCommands:
    def test_minimax_with_alternatives(self, capsys):
        code, out, _ = _run(capsys, "minimax", "--preset", "sym", *COARSE,
                            "--alternatives", "[[2.0693, 0.0], [0.0, 2.0693]]")
        assert code == EXIT_OK
        assert len(json.loads(out)["summary"]["risk_at"]) == 2

    def test_decision_and_ablation(self, capsys):
        code, out, _ = _run(capsys, "decision", "--preset", "sym", *COARSE)
        assert code == EXIT_OK and json.loads(out)["config"]["loss"] == "decision"
        code, out, _ = _run(capsys, "ablate-global-null", "--preset", "sym", *COARSE)
        assert code == EXIT_OK and json.loads(out)["summary"]["fwer_at_global_null"] <= 0.05

    def test_samplesize_forward(self, capsys):
        code, out, _ = _run(capsys, "samplesize", "--preset", "sym", *COARSE, "--n-min-power", "0.6",
                            "--n-factors", "[1.5]")
        assert code == EXIT_OK
        assert json.loads(out)["tables"]["forward"][0]["status"] == "ok"

    def test_tradeoff_then_export_curves(self, capsys, tmp_path):
        rep = tmp_path / "t.json"
        code, _, _ = _run(capsys, "tradeoff", "--preset", "sym", *COARSE, "--beta-grid", "[0.55, 0.6]",
                          "--workers", "1", "--report", str(rep), "-q")
        assert code == EXIT_OK
        out = tmp_path / "curve.csv"
        assert main(["export", "curves", str(rep), str(out)]) == EXIT_OK
        lines = out.read_text().strip().split("\n")
        assert lines[0].startswith("power,") and len(lines) == 3

    def test_bayes_output_dir_then_verify_and_export(self, capsys, tmp_path):
        code, _, _ = _run(capsys, "bayes", "--preset", "sym", *COARSE, "--output-dir", str(tmp_path), "-q")
        assert code == EXIT_OK
        proc = tmp_path / "bayes_procedure.json"
        out = tmp_path / "regions.csv"
        assert main(["export", "regions", str(proc), str(out)]) == EXIT_OK
        assert out.read_text() == (tmp_path / "bayes_regions.csv").read_text()

    def test_verify_saved_procedure(self, capsys, tmp_path):
        grid = RectGrid(0.25, 3.0)
        empty = tmp_path / "empty.json"
        DiscreteProcedure(grid, TESTING, np.zeros((*grid.shape, 6))).to_json(empty)
        code, out, _ = _run(capsys, "verify", str(empty), "--b", "3", "--b-prime", "4", "--fine-tau", "0.01")
        assert code == EXIT_OK and json.loads(out)["passed"]
        m = np.zeros((*grid.shape, 6))
        m[:, :, TESTING.index({"H01", "H02", "H0C"}) - 1] = 1.0
        full = tmp_path / "full.json"
        DiscreteProcedure(grid, TESTING, m).to_json(full)
        code, _, _ = _run(capsys, "verify", str(full), "--b", "3", "--b-prime", "4", "--fine-tau", "0.01")
        assert code == EXIT_VERIFY

    def test_missing_procedure_file(self, capsys, tmp_path):
        code, _, err = _run(capsys, "verify", str(tmp_path / "nope.json"))
        assert code == EXIT_FAILED and "error" in err


def test_console_script_installed():
    exe = shutil.which("subpop-lp")
    if exe is None:
        pytest.skip("package not installed with its console script")
    res = subprocess.run([exe, "--version"], capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "subpop-lp" in res.stdout
