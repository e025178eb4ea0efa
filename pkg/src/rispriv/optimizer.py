"""Alternating projected-gradient solver inside a penalty-dual outer loop.

The inner loop cycles {precoder ascent step, surface-phase ascent step,
closed-form slack update} on the augmented objective
g = xibar - nu f - f^2 / (2 rho); the outer loop updates the multiplier
nu <- nu + f / rho and shrinks the penalty rho <- kappa rho until the rate
residual is driven to zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .comm import Design, achievable_rate
from .gradients import EvalRecord, Workspace
from .linalg import NumericalError, cgauss
from .scenario import ChannelSet, PriorSet, SystemConfig
from .sensing import ObservationBlock

INNER_REL_TOL = 1e-6
INNER_MAX_ITER = 500
OUTER_RESIDUAL_TOL = 1e-4
OUTER_MAX_ITER = 30
RHO_FLOOR = 1e-12
ARMIJO_C = 1e-4
ARMIJO_BETA = 0.5
ARMIJO_MAX_HALVINGS = 40


@dataclass
class PddState:
    """Mutable solver state: multiplier, penalty, slack, step settings."""

    nu: float = 0.0
    rho: float = 10.0
    tau: float = 0.0
    kappa: float = 0.1
    mu_F: float = 100.0
    mu_theta: float = 100.0
    # False: within one inner round each line search starts from twice the
    # last accepted step (re-widening to mu_F/mu_theta when that fails),
    # which trims dozens of halvings per cycle. True restores a full
    # restart at every cycle; both reach the same ascent condition.
    reset_step: bool = False
    inner_iter: int = 0
    outer_iter: int = 0

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")


@dataclass
class IterPoint:
    """One inner-iteration snapshot of the trajectory."""

    augmented: float
    objective: float
    residual: float
    rate: float


@dataclass
class OptimizerReport:
    """Full run record: trajectory, outer boundaries, final design."""

    trajectory: list
    design: Design
    outer_boundaries: list
    reason: str


@dataclass
class ProblemContext:
    """Immutable per-run inputs plus the shared evaluation workspace."""

    channels: ChannelSet
    priors: PriorSet
    config: SystemConfig
    W_c: np.ndarray
    W_s: np.ndarray
    workspace: Workspace = field(init=False)

    def __post_init__(self):
        self.workspace = Workspace(self.channels, self.priors, self.config,
                                   self.W_c, self.W_s)

    @classmethod
    def from_observation(cls, channels, priors, config, obs: ObservationBlock):
        return cls(channels, priors, config, obs.W_c, obs.W_s)


def _context(channels, priors, obs, config) -> ProblemContext:
    return ProblemContext(channels, priors, config, obs.W_c, obs.W_s)


def augmented_objective(design: Design, channels: ChannelSet, priors: PriorSet,
                        obs: ObservationBlock, config: SystemConfig,
                        state: PddState) -> float:
    """g = xibar - nu f - f^2/(2 rho) at the given design and slack."""
    ws = _context(channels, priors, obs, config).workspace
    return ws.evaluate(design, state.tau, state.nu, state.rho).g


def grad_F(design: Design, channels: ChannelSet, priors: PriorSet,
           obs: ObservationBlock, config: SystemConfig, state: PddState):
    """Gradients of g with respect to conj(F_c) and conj(F_s)."""
    ws = _context(channels, priors, obs, config).workspace
    rec = ws.evaluate(design, state.tau, state.nu, state.rho)
    g_fc, g_fs, _ = ws.gradient(rec, state.nu, state.rho)
    return g_fc, g_fs


def grad_theta(design: Design, channels: ChannelSet, priors: PriorSet,
               obs: ObservationBlock, config: SystemConfig,
               state: PddState) -> np.ndarray:
    """Gradient of g with respect to conj(theta); needs at least one element."""
    if design.theta.shape[0] == 0:
        raise ValueError("grad_theta requires m_R >= 1")
    ws = _context(channels, priors, obs, config).workspace
    rec = ws.evaluate(design, state.tau, state.nu, state.rho)
    return ws.gradient(rec, state.nu, state.rho)[2]


def project_precoder(f_tilde: np.ndarray, p_max: float) -> np.ndarray:
    """Scale into the Frobenius power ball: sqrt(p) F / max(||F||, sqrt(p))."""
    norm = float(np.linalg.norm(f_tilde))
    root = math.sqrt(p_max)
    return f_tilde * (root / max(norm, root))


def project_phases(theta_tilde: np.ndarray) -> np.ndarray:
    """Normalize each entry to unit modulus; zeros map to phase 0."""
    mag = np.abs(theta_tilde)
    out = np.where(mag > 0.0, theta_tilde / np.where(mag > 0.0, mag, 1.0), 1.0)
    return out.astype(complex)


def update_tau(design: Design, channels: ChannelSet, config: SystemConfig,
               state: PddState) -> float:
    """Closed-form slack maximizer max{0, rate/threshold - 1 - nu rho}."""
    rate = achievable_rate(design, channels, config)
    return max(0.0, rate / config.rate_threshold - 1.0 - state.nu * state.rho)


def armijo_step(direction: np.ndarray, evaluate, mu0: float) -> float:
    """Backtracking search for g(project(x + mu d)) >= g(x) + c mu ||d||^2.

    evaluate(mu) must return the (projected) objective value at step mu, with
    evaluate(0) the current value. Returns the accepted step, or 0.0 when all
    candidates down to mu0 * 0.5**40 fail the sufficient-increase test.
    """
    if mu0 <= 0:
        raise ValueError("mu0 must be > 0")
    norm2 = float(np.vdot(direction, direction).real)
    g0 = evaluate(0.0)
    if not np.isfinite(g0):
        raise NumericalError("line search: objective not finite at current point")
    mu = mu0
    for _ in range(ARMIJO_MAX_HALVINGS + 1):
        val = evaluate(mu)
        if not np.isfinite(val):
            raise NumericalError(f"line search: objective not finite at step {mu:g}")
        if val >= g0 + ARMIJO_C * mu * norm2:
            return mu
        mu *= ARMIJO_BETA
    return 0.0


def initial_design(config: SystemConfig, rng: np.random.Generator) -> Design:
    """Random start: even power split across the precoders, uniform phases."""
    f_c = cgauss(rng, config.m_A, config.m_min)
    f_s = cgauss(rng, config.m_A, config.m_A)
    half = math.sqrt(config.p_max / 2.0)
    f_c *= half / np.linalg.norm(f_c)
    f_s *= half / np.linalg.norm(f_s)
    theta = np.exp(2j * math.pi * rng.random(config.m_R))
    return Design(F_c=f_c, F_s=f_s, theta=theta)


def _split(stack: np.ndarray, m_min: int):
    return stack[:, :m_min], stack[:, m_min:]


def inner_loop(design: Design, state: PddState, problem: ProblemContext):
    """Alternating ascent at fixed (nu, rho); returns the refined design,
    final slack, the per-iteration trajectory, and the stop reason."""
    ws = problem.workspace
    config = problem.config
    nu, rho = state.nu, state.rho
    m_min = config.m_min
    # step sizes start from the configured values each round; within a round
    # they track the last accepted step unless reset_step asks otherwise
    mu_f_cur = state.mu_F
    mu_t_cur = state.mu_theta
    rec = ws.evaluate(design, state.tau, nu, rho)
    # entry snapshot: makes the reset under fresh (nu, rho) visible in plots
    trajectory = [IterPoint(augmented=rec.g, objective=rec.xibar,
                            residual=rec.f, rate=rec.rate)]
    reason = "max-inner"
    for _ in range(INNER_MAX_ITER):
        g_prev = rec.g

        # precoder block
        g_fc, g_fs, g_th = ws.gradient(rec, nu, rho)
        d_stack = np.hstack([g_fc, g_fs])
        stack0 = np.hstack([design.F_c, design.F_s])
        cache = {}

        def eval_f(mu, _stack0=stack0, _d=d_stack, _rec=rec):
            if mu == 0.0:
                return _rec.g
            cand = project_precoder(_stack0 + mu * _d, config.p_max)
            f_c, f_s = _split(cand, m_min)
            cand_rec = ws.evaluate(Design(f_c, f_s, design.theta), state.tau,
                                   nu, rho)
            cache[mu] = (Design(f_c, f_s, design.theta), cand_rec)
            return cand_rec.g

        step = armijo_step(d_stack, eval_f, mu_f_cur)
        if step == 0.0 and mu_f_cur < state.mu_F:
            # warm start too small for this cycle: re-search the full range
            step = armijo_step(d_stack, eval_f, state.mu_F)
        moved_f = step > 0.0
        if moved_f:
            design, rec = cache[step]
            if not state.reset_step:
                mu_f_cur = min(state.mu_F, 2.0 * step)
        else:
            mu_f_cur = state.mu_F

        # surface block
        moved_t = False
        if config.m_R > 0:
            if moved_f:
                # the cycle-top gradient was taken before the precoder step
                _, _, g_th = ws.gradient(rec, nu, rho)
            cache_t = {}

            def eval_t(mu, _rec=rec):
                if mu == 0.0:
                    return _rec.g
                theta = project_phases(design.theta + mu * g_th)
                cand_rec = ws.evaluate(Design(design.F_c, design.F_s, theta),
                                       state.tau, nu, rho, xc=_rec.xc)
                cache_t[mu] = (Design(design.F_c, design.F_s, theta), cand_rec)
                return cand_rec.g

            step_t = armijo_step(g_th, eval_t, mu_t_cur)
            if step_t == 0.0 and mu_t_cur < state.mu_theta:
                step_t = armijo_step(g_th, eval_t, state.mu_theta)
            moved_t = step_t > 0.0
            if moved_t:
                design, rec = cache_t[step_t]
                if not state.reset_step:
                    mu_t_cur = min(state.mu_theta, 2.0 * step_t)
            else:
                mu_t_cur = state.mu_theta

        # slack block, exact maximizer of the tau-concave augmented objective
        state.tau = max(0.0, rec.rate / config.rate_threshold - 1.0 - nu * rho)
        f_now, g_now = ws.rescore(rec, state.tau, nu, rho)
        rec = replace(rec, f=f_now, g=g_now, tau=state.tau)

        state.inner_iter += 1
        trajectory.append(IterPoint(augmented=g_now, objective=rec.xibar,
                                    residual=f_now, rate=rec.rate))
        if abs(g_now - g_prev) <= INNER_REL_TOL * (1.0 + abs(g_now)):
            reason = "converged"
            break
        if not moved_f and not moved_t:
            reason = "stall"
            break
    return design, state.tau, trajectory, reason


def outer_loop(design: Design, problem: ProblemContext,
               state: PddState | None = None) -> OptimizerReport:
    """Penalty-dual iteration around inner_loop.

    Stops once the residual satisfies |f| <= 1e-4 with a converged inner
    solve, the penalty underflows ("penalty-floor"), the inner loop makes no
    progress at a small residual ("stall"), or 30 outer rounds elapse.
    """
    if state is None:
        state = PddState()
    ws = problem.workspace
    trajectory = []
    boundaries = []
    reason = "max-outer"
    for outer in range(OUTER_MAX_ITER):
        state.outer_iter = outer
        design, _, frag, inner_reason = inner_loop(design, state, problem)
        trajectory.extend(frag)
        boundaries.append(len(trajectory))
        f_now = frag[-1].residual if frag else ws.evaluate(
            design, state.tau, state.nu, state.rho).f
        small = abs(f_now) <= OUTER_RESIDUAL_TOL
        if small and inner_reason == "converged":
            reason = "converged"
            break
        if small and inner_reason == "stall":
            reason = "stall"
            break
        state.nu += f_now / state.rho
        state.rho *= state.kappa
        if state.rho < RHO_FLOOR:
            reason = "penalty-floor"
            break
    return OptimizerReport(trajectory=trajectory, design=design,
                           outer_boundaries=boundaries, reason=reason)


def optimize(channels: ChannelSet, priors: PriorSet, config: SystemConfig,
             w_c: np.ndarray, w_s: np.ndarray, rng: np.random.Generator,
             state: PddState | None = None) -> OptimizerReport:
    """Convenience wrapper: random feasible start, then the full outer loop."""
    problem = ProblemContext(channels, priors, config, w_c, w_s)
    return outer_loop(initial_design(config, rng), problem, state)
