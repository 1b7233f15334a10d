"""Run configured experiments and write their CSV artifacts.

All files are UTF-8 with a header row and ',' separators.  Floats are written
in shortest round-trip form (``repr``), so the same config and seed always
produce byte-identical files.  Schemas:

series.csv      k, t, TA_jst, TA_ckf, TA_theory, eps_jst_1..m, eps_ckf_1..m, trace_P
                (path 0; cells of an algorithm that was not run are empty)
summary.csv     section, key, value
bands_<alg>.csv k, mean, lo, hi  (98% band across paths, only when paths > 1)
adev.csv        series, tau, adev
trajectory.csv  path, k, t, x_<order>_<clock>..., y_<clock>..., v_..., w_...
bench.csv       m, jst_mean, jst_median_of_means, ckf_mean, ckf_median_of_means  (seconds)
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from clockensemble.analysis import confidence_band, octave_factors, overlapping_adev
from clockensemble.ckf import ckf_run, obs_ckf_lifted
from clockensemble.config import ExperimentConfig
from clockensemble.jst import jst_run
from clockensemble.model import ClockSpec, EnsembleConfig
from clockensemble.simulate import (
    NoiseSeeds,
    Trajectory,
    replay,
    run_truth,
    run_truth_batch,
    seed_list,
)
from clockensemble.theory import (
    HypothesisError,
    TheoryOracle,
    check_equivalence_hypotheses,
    ta_moments,
    ta_series_jst,
)

CHUNK = 32
BAND_LEVEL = 0.98


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    return path


@dataclass
class PathResults:
    """Per-algorithm outputs kept from a Monte-Carlo run."""

    ta: dict = field(default_factory=dict)  # algorithm -> (paths, T+1)
    first: dict = field(default_factory=dict)  # algorithm -> RunOutput of path 0
    ta_theory: Optional[np.ndarray] = None  # path 0
    trajectory: Optional[Trajectory] = None  # path 0


def run_filter(exp: ExperimentConfig, traj: Trajectory, diagnostics: bool = True):
    cfg = exp.ensemble
    if exp.algorithm == "obs-ckf":
        return obs_ckf_lifted(cfg, traj)
    return ckf_run(
        cfg,
        traj,
        None if exp.reduction == "none" else exp.reduction,
        basis=exp.basis,
        diagnostics=diagnostics,
    )


def run_paths(exp: ExperimentConfig) -> PathResults:
    """Simulate every path (in chunks) and run the selected algorithms on each."""
    cfg = exp.ensemble
    seeds = seed_list(exp.seed, exp.paths)
    out = PathResults()
    tas: dict[str, list] = {"jst": [], "ckf": []}
    for start in range(0, exp.paths, CHUNK):
        traj = run_truth_batch(cfg, seeds[start : start + CHUNK])
        head = start == 0
        if exp.runs_jst:
            res = jst_run(cfg, traj, keep_states=False)
            tas["jst"].append(res.ta)
            if head:
                out.first["jst"] = _slice(res)
        if exp.runs_ckf:
            res = run_filter(exp, traj, diagnostics=head)
            tas["ckf"].append(res.ta)
            if head:
                out.first["ckf"] = _slice(res)
        if head:
            out.trajectory = traj.path(0)
            out.ta_theory = ta_series_jst(cfg, out.trajectory)[0]
    out.ta = {k: np.concatenate(v) for k, v in tas.items() if v}
    return out


def _slice(res):
    return type(res)(
        algorithm=res.algorithm,
        ta=res.ta[0],
        residuals=res.residuals[0],
        p_trace=res.p_trace,
        p_max_eig=res.p_max_eig,
    )


def _series_rows(cfg: EnsembleConfig, results: PathResults):
    m, T = cfg.m, cfg.horizon
    t = np.concatenate([[0.0], np.cumsum(cfg.tau)])
    jst = results.first.get("jst")
    ckf = results.first.get("ckf")
    blank = [None] * m
    for k in range(T + 1):
        trace = None
        if ckf is not None and ckf.p_trace is not None:
            trace = ckf.p_trace[k]
        yield (
            [k, t[k]]
            + [jst.ta[k] if jst else None, ckf.ta[k] if ckf else None, results.ta_theory[k]]
            + (list(jst.residuals[k]) if jst else blank)
            + (list(ckf.residuals[k]) if ckf else blank)
            + [trace]
        )


def series_header(m: int) -> list[str]:
    return (
        ["k", "t", "TA_jst", "TA_ckf", "TA_theory"]
        + [f"eps_jst_{i}" for i in range(1, m + 1)]
        + [f"eps_ckf_{i}" for i in range(1, m + 1)]
        + ["trace_P"]
    )


def _adev_rows(cfg: EnsembleConfig, series: dict):
    if not cfg.constant_tau:
        return
    tau0 = float(cfg.tau[0])
    for name, phase in series.items():
        if phase.size < 3:
            continue
        curve = overlapping_adev(phase, tau0, octave_factors(phase.size))
        for tau, dev in zip(curve.taus, curve.adev):
            yield name, tau, dev


def summary_rows(exp: ExperimentConfig, results: PathResults) -> list[tuple]:
    cfg = exp.ensemble
    rows: list[tuple] = [
        ("run", "algorithm", exp.algorithm),
        ("run", "basis", exp.basis),
        ("run", "reduction", exp.reduction),
        ("run", "paths", exp.paths),
        ("run", "seed", exp.seed),
        ("run", "clocks", cfg.m),
        ("run", "order", cfg.n),
        ("run", "horizon", cfg.horizon),
    ]
    rows += _hypothesis_rows(cfg)
    jst, ckf = results.first.get("jst"), results.first.get("ckf")
    if jst is not None:
        scale = np.abs(results.ta_theory).max()
        err = np.abs(jst.ta - results.ta_theory).max()
        rows.append(("jst", "max_abs_ta", np.abs(jst.ta).max()))
        rows.append(("jst", "ta_theory_rel_err", err / scale if scale > 0 else err))
    if ckf is not None:
        rows.append(("ckf", "max_abs_ta", np.abs(ckf.ta).max()))
        if ckf.p_trace is not None:
            rows.append(("ckf", "final_trace_P", ckf.p_trace[-1]))
    if jst is not None and ckf is not None:
        diff = np.abs(jst.ta - ckf.ta).max()
        scale = np.abs(jst.ta).max()
        rows.append(("compare", "max_abs_ta_diff", diff))
        rows.append(("compare", "rel_ta_diff", diff / scale if scale > 0 else diff))
    rows += _li_rows(TheoryOracle(cfg))
    phases = {f"TA_{name}": res.ta for name, res in results.first.items()}
    for name, tau, dev in _adev_rows(cfg, phases):
        rows.append((f"adev_{name}", fmt(tau), dev))
    return rows


def run_experiment(exp: ExperimentConfig, out: Optional[Path] = None) -> dict[str, Path]:
    """Write series, summary and (for several paths) band CSVs; return their paths."""
    out = Path(exp.out if out is None else out)
    cfg = exp.ensemble
    results = run_paths(exp)
    files = {
        "series": write_csv(out / "series.csv", series_header(cfg.m), _series_rows(cfg, results)),
        "summary": write_csv(out / "summary.csv", ["section", "key", "value"], summary_rows(exp, results)),
    }
    if exp.paths > 1:
        for name, ta in results.ta.items():
            band = confidence_band(ta, BAND_LEVEL)
            rows = zip(range(cfg.horizon + 1), band.mean, band.lo, band.hi)
            files[f"bands_{name}"] = write_csv(out / f"bands_{name}.csv", ["k", "mean", "lo", "hi"], rows)
    return files


def run_allan(exp: ExperimentConfig, out: Optional[Path] = None) -> Path:
    """ADEV of both time scales and of every free-running clock (path 0)."""
    out = Path(exp.out if out is None else out)
    cfg = exp.ensemble
    if not cfg.constant_tau:
        raise ValueError("Allan deviation needs a constant sampling interval")
    results = run_paths(replace(exp, paths=1))
    series = {f"TA_{name}": res.ta for name, res in results.first.items()}
    for j in range(cfg.m):
        series[f"clock_{j + 1}"] = results.trajectory.states[:, j]
    return write_csv(out / "adev.csv", ["series", "tau", "adev"], _adev_rows(cfg, series))


def _hypothesis_rows(cfg: EnsembleConfig) -> list[tuple]:
    report = check_equivalence_hypotheses(cfg)
    return [
        ("hypotheses", "w_kronecker", report.w_kronecker),
        ("hypotheses", "equal_weights", report.equal_weights),
        ("hypotheses", "p0_scalar", report.p0_scalar),
        ("hypotheses", "constant_tau", report.constant_tau),
        ("hypotheses", "prediction", report.prediction or "none"),
    ]


def _li_rows(oracle: TheoryOracle) -> list[tuple]:
    try:
        li = oracle.li_criterion()
    except HypothesisError as exc:
        return [("li", "status", f"not applicable: {exc}")]
    rows: list[tuple] = []
    for i, (value, verdict) in enumerate(zip(li.values, li.verdicts), start=1):
        rows.append(("li", f"L_{i}", value))
        rows.append(("li", f"verdict_{i}", verdict))
    rows.append(("li", "all_jst_better", li.all_jst_better))
    return rows


def theory_rows(exp: ExperimentConfig) -> list[tuple]:
    cfg = exp.ensemble
    oracle = TheoryOracle(cfg)
    rows = _hypothesis_rows(cfg) + _li_rows(oracle)
    if rows[-1][1] == "all_jst_better":  # L_i computed, so P_ss is cached
        for i, value in enumerate(np.diag(oracle.P_ss), start=1):
            rows.append(("p_ss", f"diag_{i}", value))
    return rows


def run_theory(exp: ExperimentConfig, out: Optional[Path] = None) -> dict[str, Path]:
    """Closed-form quantities: hypothesis report, L_i, P_ss diagonal and TA moments."""
    out = Path(exp.out if out is None else out)
    cfg = exp.ensemble
    files = {"theory": write_csv(out / "theory.csv", ["section", "key", "value"], theory_rows(exp))}
    try:
        n, m = cfg.n, cfg.m
        mu0 = (cfg.x0 - cfg.x0_guess).reshape(n, m) @ cfg.weights
        ks = np.arange(cfg.horizon + 1)
        mean, var = ta_moments(cfg, mu0, cfg.x0_cov, ks)
    except HypothesisError:
        return files
    files["moments"] = write_csv(out / "moments.csv", ["k", "ta_mean", "ta_var"], zip(ks, mean, var))
    return files


def trajectory_header(n: int, m: int) -> list[str]:
    return (
        ["path", "k", "t"]
        + [f"x_{i}_{j}" for i in range(1, n + 1) for j in range(1, m + 1)]
        + [f"y_{j}" for j in range(1, m)]
        + [f"v_{i}_{j}" for i in range(1, n + 1) for j in range(1, m + 1)]
        + [f"w_{j}" for j in range(1, m)]
    )


def write_trajectories(cfg: EnsembleConfig, traj: Trajectory, path: Path) -> Path:
    """Serialize one or more paths; ``v`` cells are empty on the final step."""
    n, m, T = cfg.n, cfg.m, cfg.horizon
    t = np.concatenate([[0.0], np.cumsum(cfg.tau)])
    paths = [traj.path(i) for i in range(traj.states.shape[0])] if traj.batched else [traj]

    def rows():
        for p, tr in enumerate(paths):
            for k in range(T + 1):
                v = list(tr.process_noises[k]) if k < T else [None] * (n * m)
                yield [p, k, t[k], *tr.states[k], *tr.measurements[k], *v, *tr.measurement_noises[k]]

    return write_csv(path, trajectory_header(n, m), rows())


def read_trajectory(cfg: EnsembleConfig, path: Path, index: int = 0) -> Trajectory:
    """Load one path written by :func:`write_trajectories` and rebuild it from its noises."""
    n, m, T = cfg.n, cfg.m, cfg.horizon
    header = trajectory_header(n, m)
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != header:
            raise ValueError(f"{path}: header does not match the configured ensemble")
        rows = [r for r in reader if int(r[0]) == index]
    if len(rows) != T + 1:
        raise ValueError(f"{path}: expected {T + 1} rows for path {index}, got {len(rows)}")
    nm = n * m
    x0 = np.array([float(v) for v in rows[0][3 : 3 + nm]])
    v_start = 3 + nm + (m - 1)
    v = np.array([[float(c) for c in r[v_start : v_start + nm]] for r in rows[:T]])
    w = np.array([[float(c) for c in r[v_start + nm :]] for r in rows])
    return replay(cfg, x0, v, w)


def run_simulate(exp: ExperimentConfig, out: Optional[Path] = None) -> Path:
    out = Path(exp.out if out is None else out)
    cfg = exp.ensemble
    traj = run_truth_batch(cfg, seed_list(exp.seed, exp.paths))
    return write_trajectories(cfg, traj, out / "trajectory.csv")


BENCH_SIGMA = (2.0587e-20, 4.0760e-28)


def _median_of_means(samples: np.ndarray, groups: int = 10) -> float:
    parts = np.array_split(samples, min(groups, samples.size))
    return float(np.median([p.mean() for p in parts]))


def bench_runtime(
    m_range: Sequence[int],
    repeats: int,
    horizon: int = 200,
    tau: float = 0.1,
    sigma: Sequence[float] = BENCH_SIGMA,
    out: Optional[Path] = None,
    seed: int = 0,
) -> list[dict]:
    """Wall-clock runtime of both algorithms versus ensemble size.

    Noise is generated before timing starts.  Each repeat times one full run
    of each algorithm over ``horizon`` steps with ``time.perf_counter``;
    repeats cycle through all sizes so slow drifts in machine load hit every
    size alike.  One untimed warm-up run per size precedes the timed ones.
    """
    for m in m_range:
        if not 2 <= m <= 64:
            raise ValueError(f"ensemble size must be within 2..64, got {m}")
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    cases = []
    for m in m_range:
        cfg = EnsembleConfig(clocks=[ClockSpec(len(sigma), tuple(sigma))] * m, horizon=horizon, tau=tau, r=1e-12)
        traj = run_truth(cfg, NoiseSeeds.from_seed(seed + m))
        jst_run(cfg, traj, keep_states=False)
        ckf_run(cfg, traj, keep_states=False, diagnostics=False)
        cases.append((cfg, traj))
    jst_t = np.empty((len(cases), repeats))
    ckf_t = np.empty((len(cases), repeats))
    for r in range(repeats):
        for i, (cfg, traj) in enumerate(cases):
            t0 = time.perf_counter()
            jst_run(cfg, traj, keep_states=False)
            t1 = time.perf_counter()
            ckf_run(cfg, traj, keep_states=False, diagnostics=False)
            t2 = time.perf_counter()
            jst_t[i, r] = t1 - t0
            ckf_t[i, r] = t2 - t1
    rows = [
        {
            "m": m,
            "jst_mean": float(jst_t[i].mean()),
            "jst_median_of_means": _median_of_means(jst_t[i]),
            "ckf_mean": float(ckf_t[i].mean()),
            "ckf_median_of_means": _median_of_means(ckf_t[i]),
        }
        for i, m in enumerate(m_range)
    ]
    if out is not None:
        header = ["m", "jst_mean", "jst_median_of_means", "ckf_mean", "ckf_median_of_means"]
        write_csv(Path(out) / "bench.csv", header, ([row[h] for h in header] for row in rows))
    return rows
