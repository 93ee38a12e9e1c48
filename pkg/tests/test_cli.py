import pytest

from src.core.harness import parse_config, preset
from src.core.metrics import parse_summary
from src.main import main

SMALL_SCENARIO = """\
schema_version = 1.0
preset = advection
grid.n_x = 21
grid.n_y = 21
time.t_final = 0.1
ensemble.K = 8
output.snapshot_times = 0.05, 0.1
"""


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_SCENARIO)
    return path


def test_init_config(tmp_path, capsys):
    assert main(["init-config", "burgers_sparse"]) == 0
    text = capsys.readouterr().out
    assert parse_config(text) == preset("burgers_sparse")

    out = tmp_path / "t1.cfg"
    assert main(["init-config", "advection", "--variant", "cov_diag_a4", "--out", str(out)]) == 0
    assert parse_config(out.read_text()).weighting.kind == "cov_diag"


def test_run_metrics_and_plot_data(tmp_path, scenario, capsys):
    run_dir = tmp_path / "run"
    assert main(["-q", "run", str(scenario), "--out", str(run_dir)]) == 0
    printed = capsys.readouterr().out.strip()
    summary = parse_summary(printed)
    assert 0 < summary.e_l1 < 0.05
    for name in ("config.snapshot", "metrics.csv", "summary.txt", "diagnostics.log"):
        assert (run_dir / name).exists()
    assert (run_dir / "snapshots" / "0.05.field").exists()

    assert main(["metrics", str(run_dir)]) == 0
    assert capsys.readouterr().out.strip() == printed

    assert main(["plot-data", str(run_dir), "--what", "metrics"]) == 0
    assert capsys.readouterr().out == (run_dir / "metrics.csv").read_text()

    csv_path = tmp_path / "section.csv"
    assert main(["plot-data", str(run_dir), "--what", "cross_section:y=0.5,t=0.05", "--out", str(csv_path)]) == 0
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "x,posterior,truth,error"
    assert len(rows) == 22


def test_verbose_run_logs_cycles(tmp_path, scenario):
    run_dir = tmp_path / "run"
    assert main(["-v", "run", str(scenario), "--out", str(run_dir)]) == 0
    log = (run_dir / "diagnostics.log").read_text()
    assert "cycle 4" in log
    assert "wave speed (0.500, 1.000)" in log
    assert "summary over cycles 2..4" in log


def test_truth_gen(tmp_path, scenario, capsys):
    out = tmp_path / "truth"
    assert main(["-q", "truth-gen", str(scenario), "--out", str(out)]) == 0
    assert "wrote 5 truth fields" in capsys.readouterr().out
    assert len(list((out / "truth").glob("*.field"))) == 5


def test_missing_snapshot_exit_code(tmp_path, scenario, capsys):
    run_dir = tmp_path / "run"
    main(["-q", "run", str(scenario), "--out", str(run_dir)])
    capsys.readouterr()
    assert main(["plot-data", str(run_dir), "--what", "stats_field:variance,t=0.075"]) == 2
    assert capsys.readouterr().err.startswith("error: SnapshotMissingError:")


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("schema_version = 1.0\nensemble.members = 5\n")
    assert main(["run", str(path), "--out", str(tmp_path / "run")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ConfigError:")
    assert "ensemble.members" in err


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.cfg")]) == 2
    assert "error: ConfigError:" in capsys.readouterr().err


def test_metrics_of_non_run_directory(tmp_path, capsys):
    assert main(["metrics", str(tmp_path)]) == 2
    assert "metrics.csv is missing" in capsys.readouterr().err
