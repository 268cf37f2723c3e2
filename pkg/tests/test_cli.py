import json

from beamest.cli import EXIT_CONFIG, EXIT_OK, main


def write_cfg(tmp_path, **kw):
    data = {"scenario": {"n_nlos": 1}, "trials": 2, "snr_sweep_db": [10.0],
            "run_id": "cli"}
    data.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_no_args_prints_usage(capsys):
    assert main([]) == EXIT_CONFIG
    assert "usage" in capsys.readouterr().out.lower()


def test_bad_config_path_is_config_error(capsys):
    assert main(["run", "--config", "/nonexistent.json"]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_unknown_config_key_is_config_error(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"nope": 1}))
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG
    assert "unknown" in capsys.readouterr().err


def test_lut_row_count(tmp_path):
    out = tmp_path / "lut.csv"
    assert main(["lut", "--config", "default", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 101 + 2  # header plus K+1 ratios
    assert lines[0] == "l,mu_offset_rad,ratio"
    assert lines[1].endswith("inf")
    assert lines[-1].endswith("0")


def test_run_produces_csv_and_meta(tmp_path):
    cfg = write_cfg(tmp_path, output_path=str(tmp_path / "res.csv"))
    assert main(["run", "--config", cfg]) == EXIT_OK
    text = (tmp_path / "res.csv").read_text().splitlines()
    assert text[0] == "# beamest-results v1"
    # one row per (snr, parameter, path class) after the schema+header lines
    assert len(text) == 2 + 1 * 4 * 2
    assert (tmp_path / "res.csv.meta").exists()


def test_run_snr_and_trials_overrides(tmp_path):
    cfg = write_cfg(tmp_path, output_path=str(tmp_path / "res.csv"))
    assert main(["run", "--config", cfg, "--snr", "0,10", "--trials", "1"]) == EXIT_OK
    text = (tmp_path / "res.csv").read_text().splitlines()
    assert len(text) == 2 + 2 * 4 * 2


def test_demo_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["demo", "--config", cfg, "--seed", "42"]) == EXIT_OK
    first = capsys.readouterr().out
    assert main(["demo", "--config", cfg, "--seed", "42"]) == EXIT_OK
    second = capsys.readouterr().out
    assert first == second
    assert "truth paths" in first
    assert "refined estimate" in first


def test_crlb_subcommand(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["crlb", "--config", cfg, "--seed", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "path,parameter,truth,sqrt_crlb" in out
    # 4 parameters per path, 2 paths
    assert sum(1 for line in out.splitlines() if line and line[0].isdigit()) == 8


def test_bad_snr_list_is_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["run", "--config", cfg, "--snr", "abc"]) == EXIT_CONFIG


def test_unwritable_output_is_runtime_error(tmp_path, capsys):
    from beamest.cli import EXIT_RUNTIME
    cfg = write_cfg(tmp_path, trials=1)
    code = main(["run", "--config", cfg, "--out", str(tmp_path / "no" / "dir" / "x.csv")])
    assert code == EXIT_RUNTIME
    assert "error" in capsys.readouterr().err


def test_threads_env_var_honored(tmp_path, capsys, monkeypatch):
    cfg = write_cfg(tmp_path, trials=4, output_path=str(tmp_path / "a.csv"))
    monkeypatch.setenv("THREADS", "2")
    assert main(["run", "--config", cfg]) == EXIT_OK
    assert "threads=2" in capsys.readouterr().out
    # the CLI flag wins over the environment
    assert main(["run", "--config", cfg, "--threads", "1"]) == EXIT_OK
    assert "threads=1" in capsys.readouterr().out
