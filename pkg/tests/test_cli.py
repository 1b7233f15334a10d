from clockensemble.cli import main

CFG = """
[ensemble]
clocks = 3
sigma = 1.0, 0.5
tau = 0.5
horizon = 40

[noise]
r = 0.5
p0 = 1.0
"""


def _cfg(tmp_path, text=CFG):
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_commands_write_files(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    for cmd, expected in [
        ("simulate", "trajectory.csv"),
        ("compare", "summary.csv"),
        ("allan", "adev.csv"),
        ("theory", "theory.csv"),
    ]:
        out = tmp_path / cmd
        assert main([cmd, "--config", cfg, "--out", str(out), "--seed", "3", "--paths", "2"]) == 0
        assert (out / expected).exists()
        assert expected in capsys.readouterr().out


def test_bundled_name(tmp_path):
    assert main(["theory", "--config", "example2_large", "--out", str(tmp_path)]) == 0


def test_bench(tmp_path):
    assert main(["bench", "--m", "2", "3", "--repeats", "1", "--horizon", "5", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "bench.csv").exists()


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["compare", "--config", str(tmp_path / "absent.cfg")]) == 2
    assert "error" in capsys.readouterr().err
    bad = _cfg(tmp_path, CFG + "[run]\npaths = -1\n")
    assert main(["compare", "--config", bad, "--out", str(tmp_path)]) == 2
    assert "run.paths" in capsys.readouterr().err
    assert main(["compare", "--config", _cfg(tmp_path), "--paths", "0"]) == 2
    assert main(["bench", "--m", "1", "--repeats", "1", "--out", str(tmp_path)]) == 2
    assert main(["compare", "--config", "no_such_bundle"]) == 2
