"""Experiment configuration files.

Configs are INI files read with :mod:`configparser`::

    [ensemble]
    clocks = 5                        # number of clocks m
    sigma = 2.0587e-20, 4.0760e-28    # one row for identical clocks,
                                      # or m rows separated by ';'
    tau = 0.1                         # scalar or comma-separated schedule
    horizon = 36000
    weights = 0.2, 0.2, 0.2, 0.2, 0.2 # default 1/m each
    x0 = ...                          # n*m values, order-major; default 0
    x0_guess = ...                    # default x0

    [noise]
    r = 1e-12                         # true measurement covariance
    r_guess = 1e-12                   # filter's guess, default r
    w_guess = ...                     # matrix rows separated by ';', default true W
    p0 = 1e-8

    [run]
    algorithm = both                  # jst | ckf | both | obs-ckf
    reduction = none                  # none | common-mode
    basis = state                     # state | canonical
    paths = 1
    seed = 0
    out = results

Matrix-valued keys (``r``, ``r_guess``, ``w_guess``, ``x0_cov``) accept a
scalar (times identity), a single row (diagonal) or ';'-separated rows.
Comments start with '#'.  Unknown sections and keys are rejected and every
error names the key path.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from clockensemble.model import ClockSpec, ConfigError, EnsembleConfig

ALGORITHMS = ("jst", "ckf", "both", "obs-ckf")
REDUCTIONS = ("none", "common-mode")
BASES = ("state", "canonical")

_KEYS = {
    "ensemble": {"clocks", "sigma", "tau", "horizon", "weights", "x0", "x0_guess"},
    "noise": {"r", "r_guess", "w_guess", "p0", "x0_cov"},
    "run": {"algorithm", "reduction", "basis", "paths", "seed", "out"},
}
_REQUIRED = {"ensemble": ("clocks", "sigma", "tau", "horizon")}


@dataclass
class ExperimentConfig:
    ensemble: EnsembleConfig
    algorithm: str = "both"
    reduction: str = "none"
    basis: str = "state"
    paths: int = 1
    seed: int = 0
    out: Path = Path("results")

    @property
    def runs_jst(self) -> bool:
        return self.algorithm in ("jst", "both")

    @property
    def runs_ckf(self) -> bool:
        return self.algorithm in ("ckf", "both", "obs-ckf")


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(tok) for tok in text.replace("\n", " ").replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {text!r}") from None


def _rows(text: str, key: str) -> list[list[float]]:
    rows = [_floats(part, key) for part in text.split(";") if part.strip()]
    if not rows:
        raise ConfigError(f"{key}: empty value")
    return rows


def _matrix(text: str, size: int, key: str) -> np.ndarray:
    rows = _rows(text, key)
    if len(rows) == 1 and len(rows[0]) == 1:
        return rows[0][0] * np.eye(size)
    if len(rows) == 1:
        if len(rows[0]) != size:
            raise ConfigError(f"{key}: diagonal needs {size} entries, got {len(rows[0])}")
        return np.diag(rows[0])
    if len(rows) != size or any(len(r) != size for r in rows):
        raise ConfigError(f"{key}: expected a {size}x{size} matrix")
    return np.array(rows)


def _int(text: str, key: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if value != int(value):
        raise ConfigError(f"{key}: expected an integer, got {text!r}")
    return int(value)


def _choice(text: str, options: tuple[str, ...], key: str) -> str:
    value = text.strip().lower()
    if value not in options:
        raise ConfigError(f"{key}: expected one of {', '.join(options)}, got {text!r}")
    return value


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment config, applying defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"{section}: unknown section")
        for key in parser[section]:
            if key not in _KEYS[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
    for section, keys in _REQUIRED.items():
        for key in keys:
            if not parser.has_option(section, key):
                raise ConfigError(f"{section}.{key}: required key missing")

    ens = parser["ensemble"]
    noise = parser["noise"] if parser.has_section("noise") else {}
    run = parser["run"] if parser.has_section("run") else {}

    m = _int(ens["clocks"], "ensemble.clocks")
    if m < 2:
        raise ConfigError(f"ensemble.clocks: need at least 2 clocks, got {m}")
    sigma_rows = _rows(ens["sigma"], "ensemble.sigma")
    if len(sigma_rows) == 1:
        sigma_rows = sigma_rows * m
    elif len(sigma_rows) != m:
        raise ConfigError(f"ensemble.sigma: need 1 or {m} rows, got {len(sigma_rows)}")
    try:
        clocks = [ClockSpec(len(row), tuple(row)) for row in sigma_rows]
    except ConfigError as exc:
        raise ConfigError(f"ensemble.sigma: {exc}") from None
    n = clocks[0].order

    tau = _floats(ens["tau"], "ensemble.tau")
    kwargs: dict = {
        "clocks": clocks,
        "horizon": _int(ens["horizon"], "ensemble.horizon"),
        "tau": tau[0] if len(tau) == 1 else np.array(tau),
    }
    for key in ("weights", "x0", "x0_guess"):
        if key in ens:
            kwargs[key] = np.array(_floats(ens[key], f"ensemble.{key}"))
    if "r" in noise:
        kwargs["r"] = _matrix(noise["r"], m - 1, "noise.r")
    if "r_guess" in noise:
        kwargs["r_guess"] = _matrix(noise["r_guess"], m - 1, "noise.r_guess")
    if "w_guess" in noise:
        kwargs["w_guess"] = _matrix(noise["w_guess"], n * m, "noise.w_guess")
    if "x0_cov" in noise:
        kwargs["x0_cov"] = _matrix(noise["x0_cov"], n * m, "noise.x0_cov")
    if "p0" in noise:
        kwargs["p0"] = _floats(noise["p0"], "noise.p0")[0]

    try:
        ensemble = EnsembleConfig(**kwargs)
    except ConfigError as exc:
        # EnsembleConfig messages start with the field name
        field = str(exc).split()[0]
        if field in _KEYS["noise"]:
            raise ConfigError(f"noise.{field}: {exc}") from None
        if field in _KEYS["ensemble"]:
            raise ConfigError(f"ensemble.{field}: {exc}") from None
        raise ConfigError(f"ensemble: {exc}") from None

    paths = _int(run.get("paths", "1"), "run.paths")
    if paths < 1:
        raise ConfigError(f"run.paths: must be >= 1, got {paths}")
    algorithm = _choice(run.get("algorithm", "both"), ALGORITHMS, "run.algorithm")
    reduction = _choice(run.get("reduction", "none"), REDUCTIONS, "run.reduction")
    basis = _choice(run.get("basis", "state"), BASES, "run.basis")
    if basis == "canonical" and reduction != "none":
        raise ConfigError("run.reduction: covariance reduction applies to the state basis only")
    return ExperimentConfig(
        ensemble=ensemble,
        algorithm=algorithm,
        reduction=reduction,
        basis=basis,
        paths=paths,
        seed=_int(run.get("seed", "0"), "run.seed"),
        out=Path(run.get("out", "results")),
    )


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``"example1"``."""
    path = Path(__file__).parent / "configs" / f"{name}.cfg"
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path
