"""Fast augmented-objective evaluation and its closed-form gradients.

A Workspace pins one problem instance (channels, priors, symbol blocks) and
evaluates candidate designs repeatedly, which is what the line searches need.
Gradients follow the convention grad = d/d(conj(X)).

The conjugate-Kronecker chain rules are evaluated as partial traces over the
sensor-antenna index instead of materializing commutation matrices: for a
coefficient matrix N of d(Xtil^H), entry (a, c) of the precoder gradient is
sum_s N[(k,s),(a,s)] contracted against the symbols, and the surface gradient
reads the diagonal blocks of the reflect-side coefficient. The reflect
covariance keeps its Kronecker factorization so the per-element cost of the
surface gradient stays linear in m_R.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .comm import Design
from .linalg import NumericalError, block_trace, kron2, kron_eye
from .scenario import ChannelSet, PriorSet, SystemConfig


@dataclass
class XCache:
    """Quantities fixed while only the surface phases move."""

    F_c: np.ndarray
    F_s: np.ndarray
    X: np.ndarray
    Xtil: np.ndarray
    xt_sa: np.ndarray
    direct_cov: np.ndarray
    hx: np.ndarray
    bfc: np.ndarray
    bfs: np.ndarray
    q_extra: float


@dataclass
class EvalRecord:
    """One objective evaluation with the intermediates gradients reuse."""

    g: float
    xibar: float
    f: float
    rate: float
    tau: float
    theta: np.ndarray
    xc: XCache
    gain_h: np.ndarray
    b: np.ndarray
    zhat: np.ndarray
    zc: np.ndarray
    zs: np.ndarray
    q: np.ndarray
    e: np.ndarray


@dataclass
class ThetaContext:
    """Precomputed m_R-independent inputs of the surface-gradient kernel."""

    u2: np.ndarray
    hx: np.ndarray
    theta: np.ndarray
    l_mat: np.ndarray
    coef: float


class Workspace:
    """Evaluation context for one (channels, priors, symbols) instance."""

    def __init__(self, channels: ChannelSet, priors: PriorSet,
                 config: SystemConfig, w_c: np.ndarray, w_s: np.ndarray):
        self.config = config
        self.w_c = w_c
        self.w_s = w_s
        self.m_s = config.m_S
        self.cbar = config.rate_threshold
        self.sigma2_s = config.sigma2_S
        self.sa = priors.Sigmahat_A_AS
        self.tr_sa = float(np.real(np.trace(self.sa)))
        self.tr_sigma = float(np.real(np.trace(priors.Sigma_AS)))
        self.sr = priors.Sigmahat_A_RS
        self.factors = priors.rs_factors
        self.ridge = self.factors.ridge_A if self.factors is not None else 0.0
        self.h_ar = channels.H_AR
        self.h_ar_ct = self.h_ar.conj().T
        self.hhat_ab = channels.Hhat_AB
        self.hhat_rb = channels.Hhat_RB
        self.hhat_rb_ct = self.hhat_rb.conj().T
        self.bracket = (config.varsigma2_AB * np.eye(config.m_A)
                        + config.varsigma2_RB * (self.h_ar_ct @ self.h_ar))
        self.eye_b = np.eye(config.m_B)
        self.eye_inner = np.eye(config.K * config.m_S)

    # -- caches ------------------------------------------------------------

    def x_cache(self, f_c: np.ndarray, f_s: np.ndarray) -> XCache:
        x = f_c @ self.w_c + f_s @ self.w_s
        xtil = kron_eye(x.T, self.m_s)
        xt_sa = xtil @ self.sa
        direct = xt_sa @ xtil.conj().T
        bfc = self.bracket @ f_c
        bfs = self.bracket @ f_s
        q_extra = self.config.sigma2_B + float(
            np.vdot(f_c, bfc).real + np.vdot(f_s, bfs).real)
        return XCache(F_c=f_c, F_s=f_s, X=x, Xtil=xtil, xt_sa=xt_sa,
                      direct_cov=direct, hx=self.h_ar @ x, bfc=bfc, bfs=bfs,
                      q_extra=q_extra)

    def _reflect_product(self, b: np.ndarray) -> np.ndarray:
        """Xbrk Sigmahat_A_RS as a (K m_S) x (m_S m_R) matrix."""
        if self.factors is not None:
            out = kron2(b.T @ self.factors.T, self.factors.R)
            if self.ridge != 0.0:
                out = out + self.ridge * kron_eye(b.T, self.m_s)
            return out
        return kron_eye(b.T, self.m_s) @ self.sr

    def _reflect_quad(self, b: np.ndarray) -> np.ndarray:
        """Xbrk Sigmahat_A_RS Xbrk^H without the dense reflect covariance."""
        if self.factors is not None:
            bc = b.conj()
            quad = kron2(b.T @ (self.factors.T @ bc), self.factors.R)
            if self.ridge != 0.0:
                quad = quad + self.ridge * kron_eye(b.T @ bc, self.m_s)
            return quad
        xbrk = kron_eye(b.T, self.m_s)
        return xbrk @ self.sr @ xbrk.conj().T

    # -- objective ---------------------------------------------------------

    def evaluate(self, design: Design, tau: float, nu: float, rho: float,
                 xc: XCache | None = None) -> EvalRecord:
        """Augmented objective g = xibar - nu f - f^2 / (2 rho) at a design."""
        if xc is None:
            xc = self.x_cache(design.F_c, design.F_s)
        theta = design.theta
        b = theta[:, None] * xc.hx
        inner = xc.direct_cov + self._reflect_quad(b) + self.sigma2_s * self.eye_inner
        try:
            gain_h = np.linalg.solve(inner, xc.xt_sa)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("objective: inner covariance is singular") from exc
        # matched-filter identity: the two error traces collapse to
        # tr(Sigmahat) - tr(gain Xtil Sigmahat)
        xi = self.tr_sa - float(np.vdot(gain_h, xc.xt_sa).real)
        xibar = xi / self.tr_sigma

        if theta.shape[0] == 0:
            zhat = self.hhat_ab
        else:
            zhat = self.hhat_ab + (self.hhat_rb * theta[None, :]) @ self.h_ar
        zc = zhat @ xc.F_c
        zs = zhat @ xc.F_s
        q = zs @ zs.conj().T + xc.q_extra * self.eye_b
        e = q + zc @ zc.conj().T
        _, logdet_q = np.linalg.slogdet(q)
        _, logdet_e = np.linalg.slogdet(e)
        rate = float(np.real(logdet_e - logdet_q))
        if not np.isfinite(rate):
            raise NumericalError("objective: rate evaluation not finite")

        f = 1.0 + tau - rate / self.cbar
        g = xibar - nu * f - f * f / (2.0 * rho)
        return EvalRecord(g=g, xibar=xibar, f=f, rate=rate, tau=tau,
                          theta=theta, xc=xc, gain_h=gain_h, b=b, zhat=zhat,
                          zc=zc, zs=zs, q=q, e=e)

    def rescore(self, rec: EvalRecord, tau: float, nu: float, rho: float):
        """Residual and augmented objective at the same design, new slack."""
        f = 1.0 + tau - rec.rate / self.cbar
        g = rec.xibar - nu * f - f * f / (2.0 * rho)
        return f, g

    # -- gradients ---------------------------------------------------------

    def _rate_pieces(self, rec: EvalRecord):
        q_inv = np.linalg.inv(rec.q)
        e_inv = np.linalg.inv(rec.e)
        d = q_inv - e_inv
        return d, e_inv, float(np.real(np.trace(d)))

    def gradient(self, rec: EvalRecord, nu: float, rho: float):
        """Gradients of g with respect to conj(F_c), conj(F_s), conj(theta)."""
        gain_h = rec.gain_h
        u2 = gain_h @ gain_h.conj().T
        k_til = u2 @ rec.xc.xt_sa - gain_h @ self.sa
        pt_til = block_trace(k_til, self.m_s)
        with_ris = rec.theta.shape[0] > 0
        if with_ris:
            k_brk = u2 @ self._reflect_product(rec.b)
            pt_brk = block_trace(k_brk, self.m_s)
            gx = pt_til.T + self.h_ar_ct @ (rec.theta.conj()[:, None] * pt_brk.T)
        else:
            gx = pt_til.T
        g_fc = (gx @ self.w_c.conj().T) / self.tr_sigma
        g_fs = (gx @ self.w_s.conj().T) / self.tr_sigma

        d, e_inv, tr_d = self._rate_pieces(rec)
        zhat_h = rec.zhat.conj().T
        coef = nu + rec.f / rho
        scale = coef / self.cbar
        g_fc = g_fc - scale * (tr_d * rec.xc.bfc - zhat_h @ (e_inv @ rec.zc))
        g_fs = g_fs - scale * (zhat_h @ (d @ rec.zs) + tr_d * rec.xc.bfs)

        if not with_ris:
            return g_fc, g_fs, np.zeros(0, dtype=complex)
        g_th = np.einsum("rk,kr->r", rec.xc.hx.conj(), pt_brk) / self.tr_sigma
        l_mat = d @ rec.zs @ rec.xc.F_s.conj().T - e_inv @ rec.zc @ rec.xc.F_c.conj().T
        g_th = g_th - scale * np.einsum(
            "ra,ar->r", self.hhat_rb_ct @ l_mat, self.h_ar_ct)
        return g_fc, g_fs, g_th

    # -- surface-gradient kernel (exposed for complexity measurement) ------

    def theta_context(self, rec: EvalRecord, nu: float, rho: float) -> ThetaContext:
        """Everything the surface gradient needs except the m_R-sized work."""
        gain_h = rec.gain_h
        d, e_inv, _ = self._rate_pieces(rec)
        l_mat = d @ rec.zs @ rec.xc.F_s.conj().T - e_inv @ rec.zc @ rec.xc.F_c.conj().T
        return ThetaContext(
            u2=gain_h @ gain_h.conj().T,
            hx=rec.xc.hx,
            theta=rec.theta,
            l_mat=l_mat,
            coef=nu + rec.f / rho,
        )

    def theta_gradient(self, ctx: ThetaContext) -> np.ndarray:
        """Surface-phase gradient; this is the region whose cost is measured.

        Work: one (K m_S)^2 by (m_S m_R) product for the reflect coefficient,
        its block partial trace, and two m_R-row contractions. Everything is
        linear in m_R except the K x m_R^2 factor mix in _reflect_product.
        """
        b = ctx.theta[:, None] * ctx.hx
        k_brk = ctx.u2 @ self._reflect_product(b)
        pt_brk = block_trace(k_brk, self.m_s)
        g_th = np.einsum("rk,kr->r", ctx.hx.conj(), pt_brk) / self.tr_sigma
        g_th = g_th - ctx.coef / self.cbar * np.einsum(
            "ra,ar->r", self.hhat_rb_ct @ ctx.l_mat, self.h_ar_ct)
        return g_th
