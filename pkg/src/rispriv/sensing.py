"""Sensor-side channel estimation: lifted observation operators, mismatched
linear MMSE filters, and the exact error statistics both sides can evaluate.

The sensor stacks K received blocks into y = Xtil h_AS + Xbrk h_RS + n where
Xtil = X^T kron I_mS lifts the transmit block and Xbrk is the same lift of
the surface-reflected block. The transmitter predicts the sensor's filter
with its own priors and the true reflect operator; the sensor builds its
filter from its presumed statistics and its own (possibly erroneous) copy of
the A-to-surface channel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .comm import Design
from .linalg import NumericalError, cgauss, herm, kron2, kron_eye, psd_sqrt
from .scenario import ChannelSet, KronFactors, PriorSet, SystemConfig, true_sensing_stats


@dataclass
class ObservationBlock:
    """Symbol blocks and the lifted operators for one coherence window.

    B and B_S cache the K-column reflect factors (Xbrk = B^T kron I_mS) so
    covariance products can run in the Kronecker-factored form.
    """

    W_c: np.ndarray
    W_s: np.ndarray
    X: np.ndarray
    Xtil: np.ndarray
    Xbrk: np.ndarray
    Xbrk_S: np.ndarray
    B: np.ndarray
    B_S: np.ndarray


@dataclass
class LmmseFilter:
    """Linear estimator gain with its normal-equation factors and prior mean."""

    gain: np.ndarray
    inner_cov: np.ndarray
    cross: np.ndarray
    mu: np.ndarray


def make_observation(design: Design, channels: ChannelSet,
                     config: SystemConfig, W_c: np.ndarray,
                     W_s: np.ndarray) -> ObservationBlock:
    """Lifted operators for a given design and fixed symbol blocks."""
    x = design.F_c @ W_c + design.F_s @ W_s
    b = design.theta[:, None] * (channels.H_AR @ x)
    b_s = design.theta[:, None] * (channels.Hhat_S_AR @ x)
    m_s = config.m_S
    return ObservationBlock(
        W_c=W_c, W_s=W_s, X=x,
        Xtil=kron_eye(x.T, m_s),
        Xbrk=kron_eye(b.T, m_s),
        Xbrk_S=kron_eye(b_s.T, m_s),
        B=b, B_S=b_s,
    )


def build_observation(design: Design, channels: ChannelSet,
                      config: SystemConfig, rng: np.random.Generator) -> ObservationBlock:
    """Draw fresh unit-variance Gaussian symbol blocks and lift them."""
    w_c = cgauss(rng, config.m_min, config.K)
    w_s = cgauss(rng, config.m_A, config.K)
    return make_observation(design, channels, config, w_c, w_s)


def reflect_cov(b: np.ndarray, xbrk: np.ndarray, sigma_rs: np.ndarray,
                factors: KronFactors | None, ridge: float,
                m_s: int) -> np.ndarray:
    """Xbrk Sigma Xbrk^H for Sigma = sigma_rs, factored when possible.

    With Sigma = kron(T, R) + ridge I the product is
    (B^T T conj(B)) kron R + ridge (B^T conj(B)) kron I, which avoids the
    dense m_R-sized covariance entirely.
    """
    if factors is not None:
        bc = b.conj()
        core = b.T @ (factors.T @ bc)
        out = kron2(core, factors.R)
        if ridge != 0.0:
            out = out + ridge * kron_eye(b.T @ bc, m_s)
        return out
    return xbrk @ sigma_rs @ xbrk.conj().T


def _build_filter(xtil, xbrk, b, sig_as, mu_hat, sig_rs, factors, ridge,
                  sigma2, m_s) -> LmmseFilter:
    cross = sig_as @ xtil.conj().T
    inner = herm(xtil @ cross + reflect_cov(b, xbrk, sig_rs, factors, ridge, m_s))
    inner = inner + sigma2 * np.eye(inner.shape[0])
    try:
        factor = cho_factor(inner, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("lmmse inner covariance is not positive definite") from exc
    gain_h = cho_solve(factor, cross.conj().T, check_finite=False)
    return LmmseFilter(gain=gain_h.conj().T, inner_cov=inner, cross=cross,
                       mu=mu_hat)


def lmmse_gain_sensor(obs: ObservationBlock, priors: PriorSet,
                      config: SystemConfig) -> LmmseFilter:
    """The sensor's filter: its presumed statistics, its own CSI copy."""
    factors = priors.rs_factors
    ridge = factors.ridge_S if factors is not None else 0.0
    return _build_filter(
        obs.Xtil, obs.Xbrk_S, obs.B_S,
        priors.Sigmahat_S_AS, priors.muhat_S_AS, priors.Sigmahat_S_RS,
        factors, ridge, config.sigma2_S, config.m_S,
    )


def lmmse_gain_transmitter(obs: ObservationBlock, priors: PriorSet,
                           config: SystemConfig) -> LmmseFilter:
    """The transmitter's prediction of the filter, from its own priors."""
    factors = priors.rs_factors
    ridge = factors.ridge_A if factors is not None else 0.0
    return _build_filter(
        obs.Xtil, obs.Xbrk, obs.B,
        priors.Sigmahat_A_AS, priors.muhat_A_AS, priors.Sigmahat_A_RS,
        factors, ridge, config.sigma2_S, config.m_S,
    )


def estimate_channel(obs: ObservationBlock, filt: LmmseFilter,
                     priors: PriorSet, y_s: np.ndarray) -> np.ndarray:
    """Apply the filter: muhat + gain (y - Xtil muhat). Accepts a batch."""
    mu = filt.mu
    pred = obs.Xtil @ mu
    if y_s.ndim == 2:
        return mu[:, None] + filt.gain @ (y_s - pred[:, None])
    return mu + filt.gain @ (y_s - pred)


def error_mean(obs: ObservationBlock, filt: LmmseFilter,
               priors: PriorSet) -> np.ndarray:
    """Mean of (estimate - truth): (I - gain Xtil)(mu_presumed - mu_true)."""
    diff = filt.mu - priors.mu_AS
    return diff - filt.gain @ (obs.Xtil @ diff)


def error_covariance(obs: ObservationBlock, filt: LmmseFilter,
                     priors: PriorSet, config: SystemConfig) -> np.ndarray:
    """Error covariance under the true statistics and true reflect operator."""
    n = priors.Sigma_AS.shape[0]
    t = np.eye(n) - filt.gain @ obs.Xtil
    direct = t @ priors.Sigma_AS @ t.conj().T
    noise = reflect_cov(obs.B, obs.Xbrk, priors.Sigma_RS, priors.rs_factors,
                        0.0, config.m_S)
    noise = noise + config.sigma2_S * np.eye(noise.shape[0])
    return herm(direct + filt.gain @ noise @ filt.gain.conj().T)


def filter_mse(obs: ObservationBlock, filt: LmmseFilter, priors: PriorSet,
               config: SystemConfig) -> float:
    """Exact mean squared error of an arbitrary affine filter."""
    bias = error_mean(obs, filt, priors)
    cov = error_covariance(obs, filt, priors, config)
    return float(np.sum(np.abs(bias) ** 2) + np.real(np.trace(cov)))


def true_mse(design: Design, channels: ChannelSet, priors: PriorSet,
             obs: ObservationBlock, config: SystemConfig) -> float:
    """MSE the sensor actually attains with its mismatched filter."""
    filt = lmmse_gain_sensor(obs, priors, config)
    return filter_mse(obs, filt, priors, config)


def _predicted_traces(obs: ObservationBlock, filt: LmmseFilter,
                      priors: PriorSet, config: SystemConfig) -> float:
    n = priors.Sigmahat_A_AS.shape[0]
    t = np.eye(n) - filt.gain @ obs.Xtil
    term1 = np.real(np.trace(t @ priors.Sigmahat_A_AS @ t.conj().T))
    factors = priors.rs_factors
    ridge = factors.ridge_A if factors is not None else 0.0
    noise = reflect_cov(obs.B, obs.Xbrk, priors.Sigmahat_A_RS, factors,
                        ridge, config.m_S)
    noise = noise + config.sigma2_S * np.eye(noise.shape[0])
    term2 = np.real(np.trace(filt.gain @ noise @ filt.gain.conj().T))
    return float(term1 + term2)


def predicted_objective(design: Design, channels: ChannelSet, priors: PriorSet,
                        obs: ObservationBlock, config: SystemConfig) -> float:
    """The transmitter's computable error surrogate (trace terms only)."""
    filt = lmmse_gain_transmitter(obs, priors, config)
    return _predicted_traces(obs, filt, priors, config)


def predicted_mse_full(design: Design, channels: ChannelSet, priors: PriorSet,
                       obs: ObservationBlock, config: SystemConfig) -> float:
    """Diagnostic: surrogate plus the bias term against the true mean."""
    filt = lmmse_gain_transmitter(obs, priors, config)
    bias = filt.mu - priors.mu_AS
    bias = bias - filt.gain @ (obs.Xtil @ bias)
    return float(np.sum(np.abs(bias) ** 2)) + _predicted_traces(obs, filt, priors, config)


def normalized_objective(design: Design, channels: ChannelSet, priors: PriorSet,
                         obs: ObservationBlock, config: SystemConfig) -> float:
    """Predicted objective normalized by the prior-only error energy."""
    return (predicted_objective(design, channels, priors, obs, config)
            / float(np.real(np.trace(priors.Sigma_AS))))


def sample_observations(obs: ObservationBlock, config: SystemConfig,
                        rng: np.random.Generator, count: int):
    """Draw `count` observations with fresh channels and noise.

    Returns (Y, H) where Y has one observation per column and H the matching
    true vectorized A-to-S channels. Draw order: direct channels, reflected
    channels, noise.
    """
    mu, sigma_as, sigma_rs, _, _ = true_sensing_stats(config)
    root_as = psd_sqrt(sigma_as)
    root_rs = psd_sqrt(sigma_rs)
    h_as = mu[:, None] + root_as @ cgauss(rng, mu.shape[0], count)
    h_rs = root_rs @ cgauss(rng, sigma_rs.shape[0], count)
    noise = np.sqrt(config.sigma2_S) * cgauss(rng, obs.Xtil.shape[0], count)
    y = obs.Xtil @ h_as + obs.Xbrk @ h_rs + noise
    return y, h_as


def simulate_observation(design: Design, channels: ChannelSet,
                         config: SystemConfig, obs: ObservationBlock,
                         rng: np.random.Generator) -> np.ndarray:
    """One received vector at the sensor for the given observation window."""
    y, _ = sample_observations(obs, config, rng, 1)
    return y[:, 0]
