"""Finite-difference referee for the closed-form gradients.

Differentiates the augmented objective entry by entry with central
differences and compares against the analytic expressions, under the same
d/d(conj) convention. The instances are synthetic with order-one statistics:
at physical scales the filter's regularizer sits many decades below the
signal terms and the difference quotient loses most of its precision, while
the formulas under test are scale-free.
"""
from __future__ import annotations

import numpy as np

from .comm import Design
from .gradients import Workspace
from .linalg import cgauss, herm
from .optimizer import project_phases, project_precoder
from .scenario import ChannelSet, KronFactors, PriorSet, SystemConfig, desk_config

GRADCHECK_DIMS = dict(m_A=2, m_min=2, m_B=3, m_S=2, m_R=4, K=3)
FD_STEP = 1e-6
GRADCHECK_TOL = 1e-5


def _random_psd(rng: np.random.Generator, n: int, ridge: float = 0.2) -> np.ndarray:
    a = cgauss(rng, n, n)
    return herm(a @ a.conj().T / n) + ridge * np.eye(n)


def synthetic_config(**dims) -> SystemConfig:
    merged = {**GRADCHECK_DIMS, **dims}
    return desk_config(sigma2_B=0.3, sigma2_S=0.5, varsigma2_AB=0.15,
                       varsigma2_RB=0.1, prior_var=0.25, p_max=4.0,
                       rate_threshold=1.5, **merged)


def synthetic_instance(rng: np.random.Generator, structured: bool = True,
                       **dims):
    """Random channels and priors with order-one scales.

    structured=False drops the Kronecker factorization of the reflected
    covariance so the dense evaluation path gets exercised too.
    """
    cfg = synthetic_config(**dims)
    channels = ChannelSet(
        H_AB=cgauss(rng, cfg.m_B, cfg.m_A),
        H_AS=cgauss(rng, cfg.m_S, cfg.m_A),
        H_AR=cgauss(rng, cfg.m_R, cfg.m_A),
        H_RB=cgauss(rng, cfg.m_B, cfg.m_R),
        H_RS=cgauss(rng, cfg.m_S, cfg.m_R),
        Hhat_AB=cgauss(rng, cfg.m_B, cfg.m_A),
        Hhat_RB=cgauss(rng, cfg.m_B, cfg.m_R),
        Hhat_S_AR=cgauss(rng, cfg.m_R, cfg.m_A),
    )
    n_as = cfg.m_S * cfg.m_A
    n_rs = cfg.m_S * cfg.m_R
    t = _random_psd(rng, cfg.m_R)
    r = _random_psd(rng, cfg.m_S)
    sigma_as = _random_psd(rng, n_as)
    sigma_rs = np.kron(t, r)
    ridge = 0.25
    priors = PriorSet(
        mu_AS=cgauss(rng, n_as),
        Sigma_AS=sigma_as,
        Sigma_RS=sigma_rs,
        muhat_A_AS=cgauss(rng, n_as),
        muhat_S_AS=cgauss(rng, n_as),
        Sigmahat_A_AS=sigma_as + ridge * np.eye(n_as),
        Sigmahat_S_AS=sigma_as + ridge * np.eye(n_as),
        Sigmahat_A_RS=sigma_rs + ridge * np.eye(n_rs),
        Sigmahat_S_RS=sigma_rs + ridge * np.eye(n_rs),
        rs_factors=(KronFactors(T=t, R=r, ridge_A=ridge, ridge_S=ridge)
                    if structured else None),
    )
    w_c = cgauss(rng, cfg.m_min, cfg.K)
    w_s = cgauss(rng, cfg.m_A, cfg.K)
    return channels, priors, cfg, w_c, w_s


def random_design(rng: np.random.Generator, config: SystemConfig) -> Design:
    f_c = project_precoder(cgauss(rng, config.m_A, config.m_min),
                           0.45 * config.p_max)
    f_s = project_precoder(cgauss(rng, config.m_A, config.m_A),
                           0.45 * config.p_max)
    theta = project_phases(cgauss(rng, config.m_R))
    return Design(F_c=f_c, F_s=f_s, theta=theta)


def fd_gradient(fn, z: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient d fn / d(conj z), entry by entry."""
    zf = z.astype(complex).reshape(-1).copy()
    shape = z.shape
    out = np.zeros(zf.size, dtype=complex)

    def value(i, delta):
        orig = zf[i]
        zf[i] = orig + delta
        val = fn(zf.reshape(shape))
        zf[i] = orig
        return val

    for i in range(zf.size):
        d_re = (value(i, step) - value(i, -step)) / (2.0 * step)
        d_im = (value(i, 1j * step) - value(i, -1j * step)) / (2.0 * step)
        out[i] = 0.5 * (d_re + 1j * d_im)
    return out.reshape(shape)


def _block_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(reference)), 1e-30)
    return float(np.linalg.norm(analytic - reference)) / denom


def run_gradcheck(n_points: int = 20, seed: int = 0, step: float = FD_STEP,
                  structured: bool = True, dims: dict | None = None) -> dict:
    """Compare analytic and finite-difference gradients at random points.

    Returns the worst relative error per block and overall. Each point gets
    a fresh instance, design, slack, and multiplier state.
    """
    rng = np.random.default_rng(seed)
    per_block = {"F_c": 0.0, "F_s": 0.0, "theta": 0.0}
    for _ in range(n_points):
        channels, priors, cfg, w_c, w_s = synthetic_instance(
            rng, structured=structured, **(dims or {}))
        ws = Workspace(channels, priors, cfg, w_c, w_s)
        design = random_design(rng, cfg)
        tau = float(rng.uniform(0.0, 0.5))
        nu = float(rng.uniform(0.2, 1.0))
        rho = float(rng.uniform(2.0, 20.0))
        rec = ws.evaluate(design, tau, nu, rho)
        g_fc, g_fs, g_th = ws.gradient(rec, nu, rho)

        def g_at(f_c=None, f_s=None, theta=None):
            cand = Design(F_c=design.F_c if f_c is None else f_c,
                          F_s=design.F_s if f_s is None else f_s,
                          theta=design.theta if theta is None else theta)
            return ws.evaluate(cand, tau, nu, rho).g

        fd_fc = fd_gradient(lambda z: g_at(f_c=z), design.F_c, step)
        fd_fs = fd_gradient(lambda z: g_at(f_s=z), design.F_s, step)
        fd_th = fd_gradient(lambda z: g_at(theta=z), design.theta, step)
        per_block["F_c"] = max(per_block["F_c"], _block_error(g_fc, fd_fc))
        per_block["F_s"] = max(per_block["F_s"], _block_error(g_fs, fd_fs))
        per_block["theta"] = max(per_block["theta"], _block_error(g_th, fd_th))
    return {"max_rel_error": max(per_block.values()), "per_block": per_block,
            "points": n_points, "structured": structured}
