"""Monte Carlo studies: parameter sweeps, direction finding, CSV output.

Trial seeding is hierarchical: every trial owns entropy (base_seed,
trial_index), so a study is reproducible regardless of worker count.
The point index is deliberately left out: trial t reuses the same entropy
at every sweep value, and inside a trial each consumer (channels, priors,
initial design, symbol block, observation noise) draws from its own spawned
substream. Draws whose shapes do not involve the swept knob therefore
coincide across sweep points and across the with/without-surface arms, so
point-to-point comparisons are paired (common random numbers) and trend
estimates do not carry the shared channel noise. The optimizer itself
consumes no randomness.

Worker count comes from RISPRIV_THREADS: unset or 0 means one process per
CPU, 1 forces inline execution, anything else is taken literally.
"""
from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .linalg import NumericalError, cgauss, unvec
from .optimizer import OptimizerReport, ProblemContext, initial_design, outer_loop
from .scenario import (PRIOR_SCENARIOS, SystemConfig, apply_prior_scenario,
                       dbm_to_watt, derive_priors, sample_channels,
                       watt_to_dbm)
from .sensing import (estimate_channel, filter_mse, lmmse_gain_sensor,
                      make_observation, predicted_objective,
                      sample_observations)

SWEEP_PARAMS = ("m_R", "m_A", "m_S", "K", "p_max_dbm", "prior_var")

CSV_COLUMNS = ["sweep_param", "sweep_value", "scenario", "ris",
               "nmse_analytic_mean", "nmse_mc_mean", "nmse_stderr",
               "rate_mean", "residual_mean", "aoa_rmse", "trials", "seed"]

CONVERGENCE_COLUMNS = ["iteration", "objective", "augmented_objective",
                       "residual", "rate"]


@dataclass
class SweepSpec:
    """One sweep: which knob moves, its values, and how trials are run."""

    param: str
    values: list
    trials: int = 20
    scenario: str = "imperfect_both"
    ris_enabled: bool = True
    n_mc: int = 200

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}")
        if len(self.values) == 0:
            raise ValueError("sweep needs at least one value")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.scenario not in PRIOR_SCENARIOS:
            raise ValueError(f"unknown prior scenario {self.scenario!r}")
        if self.n_mc < 1:
            raise ValueError("n_mc must be positive")
        if self.param == "m_R" and not self.ris_enabled:
            raise ValueError("an m_R sweep requires the surface enabled")


@dataclass
class TrialRecord:
    """Outcome of one optimized draw; NMSE values are relative to tr(Sigma_AS)."""

    seed: int
    sweep_value: float
    nmse_analytic: float
    nmse_mc: float
    predicted: float
    rate: float
    residual: float
    iterations: int
    wall_time: float
    failed: bool = False


@dataclass
class AoaResult:
    """Bartlett spectrum peak for one estimated channel matrix."""

    true_angle_deg: float
    estimated_angle_deg: float
    grid_deg: np.ndarray
    spectrum: np.ndarray


def apply_sweep_value(config: SystemConfig, param: str, value) -> SystemConfig:
    """Return a config with one swept knob changed.

    prior_var moves all four presumed-prior variances together; the CSI
    error variances at the receiver stay put. Sweeping m_A recomputes
    m_min = min(m_A, m_B).
    """
    if param == "m_R":
        return replace(config, m_R=int(value))
    if param == "m_A":
        v = int(value)
        return replace(config, m_A=v, m_min=min(v, config.m_B))
    if param == "m_S":
        return replace(config, m_S=int(value))
    if param == "K":
        return replace(config, K=int(value))
    if param == "p_max_dbm":
        return replace(config, p_max=dbm_to_watt(float(value)))
    if param == "prior_var":
        v = float(value)
        return replace(config, varsigma2_A_AS=v, varsigma2_S_AS=v,
                       varsigma2_A_RS=v, varsigma2_S_RS=v)
    raise ValueError(f"unknown sweep parameter {param!r}")


def run_trial(config: SystemConfig, sweep_point, scenario: str,
              rng: np.random.Generator, n_mc: int = 200,
              seed_id: int = 0) -> TrialRecord:
    """Draw, optimize, then score the sensor's estimator at the final design.

    Channels, priors, the initial design, the symbol block and the Monte
    Carlo observations each draw from their own substream spawned off rng,
    so a swept knob only perturbs the draws whose shapes it touches; pass a
    freshly seeded generator for reproducible trials. The optimizer takes
    nothing from any stream. A numerical failure yields a record with
    failed=True.
    """
    cfg = config
    value = float("nan")
    if sweep_point is not None:
        cfg = apply_sweep_value(cfg, sweep_point[0], sweep_point[1])
        value = float(sweep_point[1])
    cfg = apply_prior_scenario(cfg, scenario)
    start = time.perf_counter()
    nan = float("nan")
    try:
        r_ch, r_pri, r_init, r_sym, r_obs = rng.spawn(5)
        channels = sample_channels(cfg, r_ch)
        priors = derive_priors(cfg, r_pri)
        design0 = initial_design(cfg, r_init)
        w_c = cgauss(r_sym, cfg.m_min, cfg.K)
        w_s = cgauss(r_sym, cfg.m_A, cfg.K)
        problem = ProblemContext(channels, priors, cfg, w_c, w_s)
        report = outer_loop(design0, problem)
        design = report.design
        obs = make_observation(design, channels, cfg, w_c, w_s)
        filt = lmmse_gain_sensor(obs, priors, cfg)
        tr_sigma = float(np.real(np.trace(priors.Sigma_AS)))
        nmse_analytic = filter_mse(obs, filt, priors, cfg) / tr_sigma
        predicted = predicted_objective(design, channels, priors, obs, cfg) / tr_sigma
        y, h_true = sample_observations(obs, cfg, r_obs, n_mc)
        err = estimate_channel(obs, filt, priors, y) - h_true
        nmse_mc = float(np.mean(np.sum(np.abs(err) ** 2, axis=0))) / tr_sigma
    except NumericalError:
        return TrialRecord(seed=seed_id, sweep_value=value, nmse_analytic=nan,
                           nmse_mc=nan, predicted=nan, rate=nan, residual=nan,
                           iterations=0,
                           wall_time=time.perf_counter() - start, failed=True)
    last = report.trajectory[-1]
    iterations = len(report.trajectory) - len(report.outer_boundaries)
    return TrialRecord(seed=seed_id, sweep_value=value,
                       nmse_analytic=nmse_analytic, nmse_mc=nmse_mc,
                       predicted=predicted, rate=last.rate,
                       residual=last.residual, iterations=iterations,
                       wall_time=time.perf_counter() - start)


# -- process-pool plumbing (module level so tasks pickle) -------------------

def _worker_count() -> int:
    env = os.environ.get("RISPRIV_THREADS", "").strip()
    if env:
        n = int(env)
        if n < 0:
            raise ValueError("RISPRIV_THREADS must be >= 0")
        if n > 0:
            return n
    return os.cpu_count() or 1


def _trial_task(args):
    config, sweep_point, scenario, entropy, n_mc = args
    rng = np.random.default_rng(entropy)
    seed_id = int(np.random.SeedSequence(entropy).generate_state(1)[0])
    return run_trial(config, sweep_point, scenario, rng, n_mc=n_mc,
                     seed_id=seed_id)


def _aoa_task(args):
    config, scenario, entropy, grid_step = args
    cfg = apply_prior_scenario(config, scenario)
    rng = np.random.default_rng(entropy)
    try:
        r_ch, r_pri, r_init, r_sym, r_obs = rng.spawn(5)
        channels = sample_channels(cfg, r_ch)
        priors = derive_priors(cfg, r_pri)
        design0 = initial_design(cfg, r_init)
        w_c = cgauss(r_sym, cfg.m_min, cfg.K)
        w_s = cgauss(r_sym, cfg.m_A, cfg.K)
        report = outer_loop(design0, ProblemContext(channels, priors, cfg, w_c, w_s))
        obs = make_observation(report.design, channels, cfg, w_c, w_s)
        filt = lmmse_gain_sensor(obs, priors, cfg)
        y, _ = sample_observations(obs, cfg, r_obs, 1)
        h_vec = estimate_channel(obs, filt, priors, y[:, 0])
    except NumericalError:
        return None
    res = bartlett_aoa(unvec(h_vec, cfg.m_S, cfg.m_A), grid_step)
    return res.estimated_angle_deg


def _run_batch(fn, tasks):
    if _worker_count() <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=_worker_count()) as pool:
        return list(pool.map(fn, tasks))


# -- sweeps -----------------------------------------------------------------

def _aggregate_row(param: str, value, scenario: str, ris: int, records,
                   seed: int) -> dict:
    ok = [r for r in records if not r.failed]
    row = {c: "" for c in CSV_COLUMNS}
    row.update(sweep_param=param, sweep_value=value, scenario=scenario,
               ris=ris, trials=len(ok), seed=seed)
    if ok:
        analytic = np.array([r.nmse_analytic for r in ok])
        row["nmse_analytic_mean"] = float(analytic.mean())
        row["nmse_mc_mean"] = float(np.mean([r.nmse_mc for r in ok]))
        # spread of the exact per-trial values; the MC column carries
        # additional observation noise on top of the same draws
        row["nmse_stderr"] = (float(analytic.std(ddof=1) / np.sqrt(len(ok)))
                              if len(ok) > 1 else 0.0)
        row["rate_mean"] = float(np.mean([r.rate for r in ok]))
        row["residual_mean"] = float(np.mean([r.residual for r in ok]))
    return row


def run_sweep(spec: SweepSpec, config: SystemConfig):
    """Run every sweep point and aggregate. Returns (rows, per-point records)."""
    base = config if spec.ris_enabled else replace(config, m_R=0)
    rows = []
    point_records = []
    for value in spec.values:
        tasks = [(base, (spec.param, value), spec.scenario,
                  (config.seed, ti), spec.n_mc)
                 for ti in range(spec.trials)]
        records = _run_batch(_trial_task, tasks)
        point_records.append(records)
        rows.append(_aggregate_row(spec.param, value, spec.scenario,
                                   int(spec.ris_enabled), records,
                                   config.seed))
    return rows, point_records


# -- direction finding ------------------------------------------------------

def bartlett_aoa(h_mat: np.ndarray, grid_step: float = 0.1) -> AoaResult:
    """Scan the classic beamformer spectrum of an estimated channel matrix.

    Ties break toward the first grid point, i.e. the smallest angle.
    """
    m_s, m_a = h_mat.shape
    if m_s < 2:
        raise ValueError("direction finding needs at least two sensor antennas")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    cov = h_mat @ h_mat.conj().T / m_a
    grid = np.arange(-90.0, 90.0 + 0.5 * grid_step, grid_step)
    steer = np.exp(1j * np.pi * np.sin(np.radians(grid))[:, None]
                   * np.arange(m_s)[None, :])
    power = np.real(np.einsum("gs,st,gt->g", steer.conj(), cov, steer))
    idx = int(np.argmax(power))
    return AoaResult(true_angle_deg=float("nan"),
                     estimated_angle_deg=float(grid[idx]),
                     grid_deg=grid, spectrum=power)


def transmitter_bearing_deg(config: SystemConfig) -> float:
    """True bearing of the transmitter seen from the sensor array axis."""
    u = config.position("A") - config.position("S")
    u = u / np.linalg.norm(u)
    return float(np.degrees(np.arcsin(u[0])))


def run_aoa_study(config: SystemConfig, trials: int = 100,
                  scenario: str = "imperfect_S", grid_step: float = 0.1,
                  with_surface: bool = True):
    """Paired with/without-surface localization error at the sensor.

    Both arms reuse the same per-trial entropy, so the direct-link draws
    coincide and the comparison is paired. Returns (rows, true_angle_deg).
    with_surface=False keeps only the bare-channel arm.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if scenario not in PRIOR_SCENARIOS:
        raise ValueError(f"unknown prior scenario {scenario!r}")
    true_deg = transmitter_bearing_deg(config)
    arms = [(1, config)] if with_surface else []
    arms.append((0, replace(config, m_R=0)))
    rows = []
    for ris, cfg in arms:
        tasks = [(cfg, scenario, (config.seed, ti), grid_step)
                 for ti in range(trials)]
        estimates = [e for e in _run_batch(_aoa_task, tasks) if e is not None]
        row = {c: "" for c in CSV_COLUMNS}
        row.update(sweep_param="aoa", sweep_value=watt_to_dbm(config.p_max),
                   scenario=scenario, ris=ris, trials=len(estimates),
                   seed=config.seed)
        if estimates:
            dev = np.array(estimates) - true_deg
            row["aoa_rmse"] = float(np.sqrt(np.mean(dev ** 2)))
        rows.append(row)
    return rows, true_deg


# -- convergence trace ------------------------------------------------------

def run_convergence(config: SystemConfig, scenario: str,
                    rng: np.random.Generator):
    """One optimized draw, reported iteration by iteration."""
    cfg = apply_prior_scenario(config, scenario)
    channels = sample_channels(cfg, rng)
    priors = derive_priors(cfg, rng)
    design0 = initial_design(cfg, rng)
    w_c = cgauss(rng, cfg.m_min, cfg.K)
    w_s = cgauss(rng, cfg.m_A, cfg.K)
    report = outer_loop(design0, ProblemContext(channels, priors, cfg, w_c, w_s))
    rows = [dict(iteration=i, objective=p.objective,
                 augmented_objective=p.augmented, residual=p.residual,
                 rate=p.rate)
            for i, p in enumerate(report.trajectory)]
    return rows, report


# -- CSV --------------------------------------------------------------------

def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".12g")


def write_csv(path, rows, columns=None) -> None:
    """Write rows (dicts) in a fixed column order with stable formatting."""
    cols = CSV_COLUMNS if columns is None else columns
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_format_cell(row.get(c, "")) for c in cols])
