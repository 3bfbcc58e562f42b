import json

import pytest

from mmtc_linksim.cli import main


def test_run_writes_csvs(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nsnr_grid = 8\ndetectors = lmmse\n")
    out = tmp_path / "out"
    code = main(["run", "--preset", "fig6", "--config", str(cfg), "--trials", "3", "--seed", "2",
                 "--out", str(out), "--workers", "1"])
    assert code == 0
    assert (out / "fig6_ser-lmmse.csv").read_text().startswith("x,y,ci_low,ci_high,trials\n8,")
    assert "fig6_ser-lmmse.csv" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["bogus"],
    [],
    ["run", "--preset", "fig99"],
    ["run", "--trials", "many"],
    ["analyze", "entropy"],
    ["run", "--config", "/nonexistent.ini"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_config_range_error_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[system]\nlambda = 1.5\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "lambda" in capsys.readouterr().err


def test_runtime_error_exit_1(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nsnr_grid = 8\ndetectors = lmmse\ntrials = 1\n")
    # the output directory cannot be created below a regular file
    assert main(["run", "--config", str(cfg), "--out", str(blocker / "sub"), "--workers", "1"]) == 1
    assert "runtime error" in capsys.readouterr().err


def test_analyze_flops(capsys):
    assert main(["analyze", "flops"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["AA-VGL-DF"] == out["AA-RLS-DF"]


def test_analyze_diversity(capsys):
    assert main(["analyze", "diversity", "--vartheta", "1,0,1,1,0"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["order"] == 8 - 5 + 12 + 2
    assert [s["order"] for s in out["steps"]] == [7, 8, 12, 16, 17]


def test_analyze_sumrate(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[system]\nN = 3\n")
    assert main(["analyze", "sumrate", "--config", str(cfg), "--samples", "5", "--detector", "perfect"]) == 0
    assert json.loads(capsys.readouterr().out)["rate"] > 0


def test_bad_vartheta(capsys):
    assert main(["analyze", "diversity", "--vartheta", "1,x"]) == 2
