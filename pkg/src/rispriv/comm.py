"""Legitimate-link metrics: composite channel, interference-plus-noise
covariance under imperfect CSI, achievable rate, and the QoS residual.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import chol_logdet, chol_solve, herm
from .scenario import ChannelSet, SystemConfig


@dataclass
class Design:
    """Transmit design: data precoder, noise precoder, surface phases."""

    F_c: np.ndarray
    F_s: np.ndarray
    theta: np.ndarray

    def power(self) -> float:
        """Total transmit power ||F_c||_F^2 + ||F_s||_F^2."""
        return float(np.sum(np.abs(self.F_c) ** 2) + np.sum(np.abs(self.F_s) ** 2))

    def copy(self) -> "Design":
        return Design(self.F_c.copy(), self.F_s.copy(), self.theta.copy())


@dataclass
class RateContext:
    """Rate evaluation intermediates reused by the gradient code."""

    Zhat_AB: np.ndarray
    Q_AB: np.ndarray
    E_AB: np.ndarray
    D_AB: np.ndarray
    rate: float


def composite_channel(channels: ChannelSet, theta: np.ndarray) -> np.ndarray:
    """Estimated effective A-to-B channel through the reflecting surface.

    Hhat_AB + Hhat_RB diag(theta) H_AR; with no surface elements this is just
    the direct estimate.
    """
    if theta.shape[0] == 0:
        return channels.Hhat_AB.copy()
    return channels.Hhat_AB + (channels.Hhat_RB * theta[None, :]) @ channels.H_AR


def _csi_penalty(design: Design, channels: ChannelSet,
                 config: SystemConfig) -> float:
    """Residual interference power per receive antenna from CSI errors."""
    tr_p = design.power()
    hf_c = channels.H_AR @ design.F_c
    hf_s = channels.H_AR @ design.F_s
    tr_hp = float(np.sum(np.abs(hf_c) ** 2) + np.sum(np.abs(hf_s) ** 2))
    return (config.sigma2_B + config.varsigma2_AB * tr_p
            + config.varsigma2_RB * tr_hp)


def interference_covariance(design: Design, channels: ChannelSet,
                            config: SystemConfig) -> np.ndarray:
    """Covariance of noise, artificial noise, and CSI-error leakage at B."""
    zhat = composite_channel(channels, design.theta)
    zs = zhat @ design.F_s
    return herm(zs @ zs.conj().T) + _csi_penalty(design, channels, config) * np.eye(config.m_B)


def rate_context(design: Design, channels: ChannelSet,
                 config: SystemConfig) -> RateContext:
    """Achievable-rate evaluation with the intermediates kept.

    rate = logdet(E) - logdet(Q) where E = Q + (Zhat F_c)(Zhat F_c)^H; D is
    the difference of the two inverses (positive semidefinite).
    """
    zhat = composite_channel(channels, design.theta)
    zs = zhat @ design.F_s
    zc = zhat @ design.F_c
    q = herm(zs @ zs.conj().T) + _csi_penalty(design, channels, config) * np.eye(config.m_B)
    e = q + herm(zc @ zc.conj().T)
    low_q, logdet_q = chol_logdet(q)
    low_e, logdet_e = chol_logdet(e)
    eye = np.eye(config.m_B)
    d = herm(chol_solve(low_q, eye) - chol_solve(low_e, eye))
    return RateContext(Zhat_AB=zhat, Q_AB=q, E_AB=e, D_AB=d,
                       rate=float(logdet_e - logdet_q))


def achievable_rate(design: Design, channels: ChannelSet,
                    config: SystemConfig) -> float:
    """Legitimate-link rate in nats/s/Hz."""
    return rate_context(design, channels, config).rate


def qos_residual(design: Design, channels: ChannelSet, config: SystemConfig,
                 tau: float) -> float:
    """Slack-shifted rate-constraint residual 1 + tau - rate / threshold."""
    rate = achievable_rate(design, channels, config)
    return 1.0 + tau - rate / config.rate_threshold
