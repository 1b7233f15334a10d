import numpy as np
import pytest

from clockensemble.config import bundled_config, load_config, parse_config
from clockensemble.model import ConfigError

MINIMAL = """
[ensemble]
clocks = 3
sigma = 1.0, 0.5
tau = 0.5
horizon = 10
"""


def test_minimal_defaults():
    exp = parse_config(MINIMAL)
    cfg = exp.ensemble
    assert (cfg.m, cfg.n, cfg.horizon) == (3, 2, 10)
    np.testing.assert_allclose(cfg.weights, 1 / 3)
    assert exp.algorithm == "both" and exp.reduction == "none" and exp.basis == "state"
    assert exp.paths == 1 and exp.seed == 0
    assert exp.runs_jst and exp.runs_ckf


def test_matrix_forms():
    base = MINIMAL + "[noise]\n"
    np.testing.assert_array_equal(parse_config(base + "r = 2.0\n").ensemble.r, 2 * np.eye(2))
    np.testing.assert_array_equal(parse_config(base + "r = 1, 3\n").ensemble.r, np.diag([1.0, 3.0]))
    full = parse_config(base + "r = 2, 1; 1, 2\n").ensemble.r
    np.testing.assert_array_equal(full, [[2, 1], [1, 2]])
    with pytest.raises(ConfigError, match="noise.r"):
        parse_config(base + "r = 1, 2, 3\n")


def test_per_clock_sigma_rows():
    text = MINIMAL.replace("sigma = 1.0, 0.5", "sigma = 1.0, 0.5; 2.0, 0.5; 1.0, 1.0")
    cfg = parse_config(text).ensemble
    assert not cfg.homogeneous
    assert cfg.clocks[1].sigma == (2.0, 0.5)
    with pytest.raises(ConfigError, match="ensemble.sigma"):
        parse_config(MINIMAL.replace("sigma = 1.0, 0.5", "sigma = 1.0; 2.0"))


def test_comments_and_schedule():
    text = MINIMAL.replace("tau = 0.5", "tau = 0.5  # seconds").replace("horizon = 10", "horizon = 3\n# note")
    assert parse_config(text).ensemble.tau[0] == 0.5
    sched = parse_config(MINIMAL.replace("tau = 0.5", "tau = 1, 2, 1").replace("horizon = 10", "horizon = 3"))
    np.testing.assert_array_equal(sched.ensemble.tau, [1, 2, 1])


@pytest.mark.parametrize(
    "extra, key",
    [
        ("[ensemble]\nweights = 0.5, 0.5, 0.5\n", "ensemble.weights"),
        ("[noise]\nbogus = 1\n", "noise.bogus"),
        ("[extra]\na = 1\n", "extra"),
        ("[run]\nalgorithm = magic\n", "run.algorithm"),
        ("[run]\npaths = 0\n", "run.paths"),
        ("[run]\nreduction = common-mode\nbasis = canonical\n", "run.reduction"),
        ("[noise]\np0 = -1\n", "noise.p0"),
    ],
)
def test_errors_name_the_key(extra, key):
    text = MINIMAL + extra
    if extra.startswith("[ensemble]"):
        text = MINIMAL.replace("horizon = 10", "horizon = 10\n" + extra.split("\n", 1)[1])
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(text)


def test_missing_required_key():
    with pytest.raises(ConfigError, match="ensemble.horizon"):
        parse_config(MINIMAL.replace("horizon = 10", ""))


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")


def test_bundled_example1():
    cfg = load_config(bundled_config("example1")).ensemble
    assert (cfg.m, cfg.n, cfg.horizon) == (5, 2, 36000)
    assert cfg.clocks[0].sigma == (2.0587e-20, 4.0760e-28)
    np.testing.assert_array_equal(cfg.r, 1e-12 * np.eye(4))
    assert cfg.p0 == 1e-8 and cfg.tau[0] == 0.1


def test_bundled_example2():
    large = load_config(bundled_config("example2_large")).ensemble
    small = load_config(bundled_config("example2_small")).ensemble
    assert large.clocks[0].sigma == (9e-26, 7.5e-34, 1e-47)
    np.testing.assert_array_equal(large.r, 1e-12 * np.eye(2))
    np.testing.assert_array_equal(small.r, 1e-27 * np.eye(2))
    with pytest.raises(ConfigError):
        bundled_config("example9")
