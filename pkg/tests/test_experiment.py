import csv

import numpy as np
import pytest

from clockensemble.config import bundled_config, load_config, parse_config
from clockensemble.experiment import (
    bench_runtime,
    fmt,
    read_trajectory,
    run_allan,
    run_experiment,
    run_simulate,
    run_theory,
    series_header,
)
from clockensemble.simulate import run_truth_batch, seed_list

SMALL = """
[ensemble]
clocks = 3
sigma = 1.0, 0.5
tau = 0.5
horizon = 60
x0 = 1, 2, 3, 0.1, 0.2, 0.3

[noise]
r = 0.5
p0 = 1.0

[run]
basis = canonical
paths = {paths}
seed = 7
"""


def _read(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def _summary(path):
    return {(row[0], row[1]): row[2] for row in _read(path)[1:]}


def test_fmt_round_trips():
    for x in (0.1, 1e-300, -2.5e-27, 1 / 3):
        assert float(fmt(x)) == x
    assert fmt(True) == "true" and fmt(None) == "" and fmt(np.int64(3)) == "3"


def test_compare_outputs(tmp_path):
    files = run_experiment(parse_config(SMALL.format(paths=4)), tmp_path)
    assert set(files) == {"series", "summary", "bands_jst", "bands_ckf"}
    series = _read(files["series"])
    assert series[0] == series_header(3)
    assert len(series) == 62
    summary = _summary(files["summary"])
    assert float(summary[("compare", "rel_ta_diff")]) <= 1e-10
    assert summary[("hypotheses", "prediction")] == "equal"
    ta_jst = np.array([float(r[2]) for r in series[1:]])
    ta_theory = np.array([float(r[4]) for r in series[1:]])
    np.testing.assert_allclose(ta_theory, ta_jst, rtol=0, atol=1e-12 * np.abs(ta_jst).max())
    band = np.array(_read(files["bands_jst"])[1:], dtype=float)
    assert np.all(band[:, 2] <= band[:, 3])


def test_outputs_are_byte_identical(tmp_path):
    exp = parse_config(SMALL.format(paths=3))
    a = run_experiment(exp, tmp_path / "a")
    b = run_experiment(exp, tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()


def test_single_algorithm_leaves_cells_empty(tmp_path):
    exp = parse_config(SMALL.format(paths=1).replace("basis = canonical", "algorithm = jst"))
    rows = _read(run_experiment(exp, tmp_path)["series"])
    header = rows[0]
    assert rows[5][header.index("TA_ckf")] == ""
    assert rows[5][header.index("TA_jst")] != ""


def test_theory_example2_small(tmp_path):
    files = run_theory(load_config(bundled_config("example2_small")), tmp_path)
    summary = _summary(files["theory"])
    np.testing.assert_allclose(float(summary[("li", "L_3")]), -6.0005e-26, rtol=0.01)
    assert summary[("li", "all_jst_better")] == "true"
    assert "moments" in files


def test_theory_unequal_weights_not_applicable(tmp_path):
    files = run_theory(load_config(bundled_config("example1_unequal")), tmp_path)
    summary = _summary(files["theory"])
    assert summary[("hypotheses", "prediction")] == "unequal"
    assert summary[("li", "status")].startswith("not applicable")


def test_allan_lists_every_series(tmp_path):
    text = SMALL.format(paths=1).replace("horizon = 60", "horizon = 256")
    rows = _read(run_allan(parse_config(text), tmp_path))
    names = {r[0] for r in rows[1:]}
    assert names == {"TA_jst", "TA_ckf", "clock_1", "clock_2", "clock_3"}


def test_trajectory_round_trip(tmp_path):
    exp = parse_config(SMALL.format(paths=2))
    path = run_simulate(exp, tmp_path)
    cfg = exp.ensemble
    original = run_truth_batch(cfg, seed_list(exp.seed, 2))
    for i in range(2):
        again = read_trajectory(cfg, path, i)
        np.testing.assert_array_equal(again.states, original.path(i).states)
        np.testing.assert_array_equal(again.measurements, original.path(i).measurements)


def test_bench_rows(tmp_path):
    rows = bench_runtime([2, 3], repeats=2, horizon=10, out=tmp_path)
    assert [r["m"] for r in rows] == [2, 3]
    assert all(r["jst_mean"] > 0 and r["ckf_mean"] > 0 for r in rows)
    assert len(_read(tmp_path / "bench.csv")) == 3
    with pytest.raises(ValueError):
        bench_runtime([1], repeats=1)
