"""Scenario description: geometry, path loss, spatial correlation, channel
sampling, and the prior statistics each side presumes about the sensing links.

Node names: A (transmitter), B (legitimate receiver), R (the reflecting
surface), S (the passive sensor). Link keys combine endpoints, e.g. "AS" is
the A-to-S channel. All powers are linear watts, distances in metres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import toeplitz

from .linalg import cgauss, herm, kron2, psd_sqrt, vec

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

LINK_KEYS = ("AB", "AS", "AR", "RB", "RS")
NODE_KEYS = ("A", "B", "R", "S")

PRIOR_SCENARIOS = ("perfect", "imperfect_both", "imperfect_A", "imperfect_S")


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    """Static description of one four-node scenario instance."""

    m_A: int
    m_B: int
    m_S: int
    m_R: int
    m_min: int
    K: int
    p_max: float
    rate_threshold: float
    sigma2_B: float
    sigma2_S: float
    varsigma2_AB: float
    varsigma2_RB: float
    varsigma2_A_AS: float
    varsigma2_S_AS: float
    varsigma2_A_RS: float
    varsigma2_S_RS: float
    varsigma2_S_AR: float
    carrier_hz: float
    bandwidth_hz: float
    rician_factor_db: float
    corr_coeff: float
    ris_spacing_wavelengths: float
    pathloss_exponents: dict = field(default_factory=dict)
    positions: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for name in ("m_A", "m_B", "m_S", "K"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.m_R < 0:
            raise ValueError("m_R must be >= 0")
        if not 1 <= self.m_min <= min(self.m_A, self.m_B):
            raise ValueError("m_min must satisfy 1 <= m_min <= min(m_A, m_B)")
        for name in ("p_max", "rate_threshold", "carrier_hz", "bandwidth_hz",
                     "ris_spacing_wavelengths"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("sigma2_B", "sigma2_S", "varsigma2_AB", "varsigma2_RB",
                     "varsigma2_A_AS", "varsigma2_S_AS", "varsigma2_A_RS",
                     "varsigma2_S_RS", "varsigma2_S_AR"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.corr_coeff < 1.0:
            raise ValueError("corr_coeff must lie in [0, 1)")
        if set(self.pathloss_exponents) != set(LINK_KEYS):
            raise ValueError(f"pathloss_exponents must have keys {LINK_KEYS}")
        if set(self.positions) != set(NODE_KEYS):
            raise ValueError(f"positions must have keys {NODE_KEYS}")
        for node, pos in self.positions.items():
            if len(pos) != 3:
                raise ValueError(f"position of {node} must be a 3-vector")

    @property
    def wavelength(self) -> float:
        return 299792458.0 / self.carrier_hz

    @property
    def rician_factor(self) -> float:
        return 10.0 ** (self.rician_factor_db / 10.0)

    def position(self, node: str) -> np.ndarray:
        return np.asarray(self.positions[node], dtype=float)

    def distance(self, a: str, b: str) -> float:
        return float(np.linalg.norm(self.position(a) - self.position(b)))


@dataclass
class ChannelSet:
    """One realization of every channel plus the erroneous CSI copies.

    Hhat_* = H_* minus an i.i.d. complex Gaussian error matrix, so the error
    statistics can be checked empirically against the configured variances.
    """

    H_AB: np.ndarray
    H_AS: np.ndarray
    H_AR: np.ndarray
    H_RB: np.ndarray
    H_RS: np.ndarray
    Hhat_AB: np.ndarray
    Hhat_RB: np.ndarray
    Hhat_S_AR: np.ndarray


@dataclass
class KronFactors:
    """Kronecker structure of the reflected-link covariance.

    Sigma_RS = kron(T, R); each side's presumed copy adds ridge_* times the
    identity. Carried alongside the dense matrices so hot paths can use the
    factored form.
    """

    T: np.ndarray
    R: np.ndarray
    ridge_A: float
    ridge_S: float


@dataclass
class PriorSet:
    """True sensing-link statistics plus each side's presumed copies."""

    mu_AS: np.ndarray
    Sigma_AS: np.ndarray
    Sigma_RS: np.ndarray
    muhat_A_AS: np.ndarray
    muhat_S_AS: np.ndarray
    Sigmahat_A_AS: np.ndarray
    Sigmahat_S_AS: np.ndarray
    Sigmahat_A_RS: np.ndarray
    Sigmahat_S_RS: np.ndarray
    rs_factors: KronFactors | None = None


def path_loss_db(distance_m: float, alpha: float) -> float:
    """Distance-dependent loss in dB, -30 - 10 * alpha * log10(d / 1 m).

    Only far-field distances of at least 1 m are meaningful.
    """
    if distance_m < 1.0:
        raise ValueError(f"distance must be >= 1 m, got {distance_m}")
    return -30.0 - 10.0 * alpha * math.log10(distance_m)


def path_loss_lin(distance_m: float, alpha: float) -> float:
    return 10.0 ** (path_loss_db(distance_m, alpha) / 10.0)


def ula_correlation(n: int, r: float) -> np.ndarray:
    """Exponential correlation r**|i-j| for an n-element uniform linear array."""
    if not 0.0 <= r < 1.0:
        raise ValueError(f"correlation coefficient must lie in [0, 1), got {r}")
    first = r ** np.arange(n)
    return toeplitz(first)


def _ris_grid(m_R: int, spacing_wl: float) -> np.ndarray:
    """Element coordinates (in wavelengths) of the reflecting surface.

    Elements fill the most nearly square n_x x n_z grid whose side lengths
    divide m_R (exact square when m_R is a perfect square), row-major in the
    local x-z plane with the first element at the origin.
    """
    if m_R == 0:
        return np.zeros((0, 2))
    n_z = next(d for d in range(math.isqrt(m_R), 0, -1) if m_R % d == 0)
    n_x = m_R // n_z
    ix = np.arange(m_R) % n_x
    iz = np.arange(m_R) // n_x
    return spacing_wl * np.stack([ix, iz], axis=1)


def ris_correlation(m_R: int, spacing_wl: float) -> np.ndarray:
    """sinc-kernel spatial correlation of the surface grid.

    Entry (i, j) is sinc(2 d_ij / lambda) with d_ij the element distance;
    np.sinc is the normalized sinc so the argument is 2 * d in wavelengths.
    """
    if m_R <= 0:
        raise ValueError(f"m_R must be positive, got {m_R}")
    grid = _ris_grid(m_R, spacing_wl)
    dist = np.linalg.norm(grid[:, None, :] - grid[None, :, :], axis=2)
    return np.sinc(2.0 * dist)


def _unit_toward(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    d = dst - src
    return d / np.linalg.norm(d)


def ula_steering(n: int, ux: float) -> np.ndarray:
    """Steering vector of an x-axis ULA at half-wavelength spacing.

    ux is the x-component of the unit propagation vector toward the far node;
    the first element is the phase reference.
    """
    return np.exp(1j * math.pi * ux * np.arange(n))


def ris_steering(m_R: int, spacing_wl: float, u: np.ndarray) -> np.ndarray:
    """Steering vector of the surface grid for unit direction u (3-vector)."""
    grid = _ris_grid(m_R, spacing_wl)
    phase = 2.0 * math.pi * (grid[:, 0] * u[0] + grid[:, 1] * u[2])
    return np.exp(1j * phase)


def _los_matrix(config: SystemConfig, rx: str, tx: str,
                n_rx: int, n_tx: int) -> np.ndarray:
    """Rank-one line-of-sight factor a_rx a_tx^H between two nodes."""
    p_rx, p_tx = config.position(rx), config.position(tx)
    u_rx = _unit_toward(p_rx, p_tx)
    u_tx = _unit_toward(p_tx, p_rx)
    sp = config.ris_spacing_wavelengths
    a_rx = ris_steering(n_rx, sp, u_rx) if rx == "R" else ula_steering(n_rx, u_rx[0])
    a_tx = ris_steering(n_tx, sp, u_tx) if tx == "R" else ula_steering(n_tx, u_tx[0])
    return np.outer(a_rx, a_tx.conj())


def _node_corr(config: SystemConfig, node: str) -> np.ndarray:
    sizes = {"A": config.m_A, "B": config.m_B, "S": config.m_S}
    if node == "R":
        if config.m_R == 0:
            return np.zeros((0, 0))
        return ris_correlation(config.m_R, config.ris_spacing_wavelengths)
    return ula_correlation(sizes[node], config.corr_coeff)


def _rician(config: SystemConfig, rng: np.random.Generator, rx: str, tx: str,
            link: str, los: bool = True) -> np.ndarray:
    """Draw one correlated Rician (or Rayleigh when los=False) channel."""
    sizes = {"A": config.m_A, "B": config.m_B, "S": config.m_S, "R": config.m_R}
    n_rx, n_tx = sizes[rx], sizes[tx]
    pl = path_loss_lin(config.distance(rx, tx), config.pathloss_exponents[link])
    root_rx = psd_sqrt(_node_corr(config, rx))
    root_tx = psd_sqrt(_node_corr(config, tx))
    scatter = root_rx @ cgauss(rng, n_rx, n_tx) @ root_tx
    if not los:
        return math.sqrt(pl) * scatter
    kappa = config.rician_factor
    h_los = _los_matrix(config, rx, tx, n_rx, n_tx)
    return math.sqrt(pl) * (
        math.sqrt(kappa / (1.0 + kappa)) * h_los
        + math.sqrt(1.0 / (1.0 + kappa)) * scatter
    )


def sample_channels(config: SystemConfig, rng: np.random.Generator) -> ChannelSet:
    """Draw one realization of every link plus the erroneous CSI copies.

    The A-R link is purely deterministic line of sight (constant-modulus
    entries); reflections R-S are Rayleigh. Draw order is fixed (AB, AS, RB,
    RS, then the CSI error matrices) so a given rng state reproduces bitwise.
    """
    h_ab = _rician(config, rng, "B", "A", "AB")
    h_as = _rician(config, rng, "S", "A", "AS")
    pl_ar = path_loss_lin(config.distance("A", "R"),
                          config.pathloss_exponents["AR"])
    h_ar = math.sqrt(pl_ar) * _los_matrix(config, "R", "A", config.m_R, config.m_A)
    h_rb = _rician(config, rng, "B", "R", "RB")
    h_rs = _rician(config, rng, "S", "R", "RS", los=False)

    d_ab = math.sqrt(config.varsigma2_AB) * cgauss(rng, config.m_B, config.m_A)
    d_rb = math.sqrt(config.varsigma2_RB) * cgauss(rng, config.m_B, config.m_R)
    d_ar = math.sqrt(config.varsigma2_S_AR) * cgauss(rng, config.m_R, config.m_A)
    return ChannelSet(
        H_AB=h_ab, H_AS=h_as, H_AR=h_ar, H_RB=h_rb, H_RS=h_rs,
        Hhat_AB=h_ab - d_ab, Hhat_RB=h_rb - d_rb, Hhat_S_AR=h_ar - d_ar,
    )


def true_sensing_stats(config: SystemConfig):
    """Exact mean and covariances of the vectorized A-S and R-S channels.

    Deterministic given the config: mu_AS comes from the line-of-sight part,
    Sigma_AS = pl/(1+kappa) * kron(R_A^T, R_S), Sigma_RS = pl * kron(R_R^T, R_S).
    """
    kappa = config.rician_factor
    pl_as = path_loss_lin(config.distance("A", "S"),
                          config.pathloss_exponents["AS"])
    pl_rs = path_loss_lin(config.distance("R", "S"),
                          config.pathloss_exponents["RS"])
    r_a = ula_correlation(config.m_A, config.corr_coeff)
    r_s = ula_correlation(config.m_S, config.corr_coeff)
    mu = math.sqrt(pl_as * kappa / (1.0 + kappa)) * vec(
        _los_matrix(config, "S", "A", config.m_S, config.m_A))
    sigma_as = pl_as / (1.0 + kappa) * kron2(r_a.T, r_s)
    if config.m_R > 0:
        t_factor = pl_rs * _node_corr(config, "R").T
    else:
        t_factor = np.zeros((0, 0))
    sigma_rs = kron2(t_factor, r_s)
    return mu, sigma_as, sigma_rs, t_factor, r_s


def derive_priors(config: SystemConfig, rng: np.random.Generator) -> PriorSet:
    """True statistics plus each side's presumed (possibly inflated) copies.

    Presumed covariance = true + varsigma2 * I; presumed mean = true +
    sqrt(varsigma2) * r with r a standard complex Gaussian vector. The two
    perturbation vectors (transmitter side first, then sensor side) are drawn
    unconditionally so the stream stays aligned across prior scenarios.
    """
    mu, sigma_as, sigma_rs, t_factor, r_s = true_sensing_stats(config)
    n = config.m_S * config.m_A
    r_a_vec = cgauss(rng, n)
    r_s_vec = cgauss(rng, n)
    eye_as = np.eye(n)
    eye_rs = np.eye(config.m_S * config.m_R)
    return PriorSet(
        mu_AS=mu,
        Sigma_AS=sigma_as,
        Sigma_RS=sigma_rs,
        muhat_A_AS=mu + math.sqrt(config.varsigma2_A_AS) * r_a_vec,
        muhat_S_AS=mu + math.sqrt(config.varsigma2_S_AS) * r_s_vec,
        Sigmahat_A_AS=sigma_as + config.varsigma2_A_AS * eye_as,
        Sigmahat_S_AS=sigma_as + config.varsigma2_S_AS * eye_as,
        Sigmahat_A_RS=sigma_rs + config.varsigma2_A_RS * eye_rs,
        Sigmahat_S_RS=sigma_rs + config.varsigma2_S_RS * eye_rs,
        rs_factors=KronFactors(T=t_factor, R=r_s,
                               ridge_A=config.varsigma2_A_RS,
                               ridge_S=config.varsigma2_S_RS),
    )


def apply_prior_scenario(config: SystemConfig, scenario: str) -> SystemConfig:
    """Zero out the prior-mismatch variances the scenario declares perfect."""
    if scenario not in PRIOR_SCENARIOS:
        raise ValueError(f"unknown prior scenario {scenario!r}")
    changes = {}
    if scenario in ("perfect", "imperfect_S"):
        changes["varsigma2_A_AS"] = 0.0
        changes["varsigma2_A_RS"] = 0.0
    if scenario in ("perfect", "imperfect_A"):
        changes["varsigma2_S_AS"] = 0.0
        changes["varsigma2_S_RS"] = 0.0
    return replace(config, **changes) if changes else config


_BASE_GEOMETRY = dict(
    carrier_hz=2e9,
    bandwidth_hz=20e6,
    rician_factor_db=3.0,
    corr_coeff=0.5,
    ris_spacing_wavelengths=0.25,
    pathloss_exponents={"AB": 3.6, "AS": 3.6, "AR": 2.2, "RB": 2.2, "RS": 2.2},
    positions={"A": (0.0, 0.0, 0.0), "B": (100.0, 20.0, 5.0),
               "R": (50.0, 10.0, 5.0), "S": (20.0, 5.0, 0.0)},
)

# Thermal noise floor: -174 dBm/Hz over the 20 MHz bandwidth.
NOISE_WATT = dbm_to_watt(-174.0) * 20e6


def _build_config(dims: dict, **overrides) -> SystemConfig:
    base = dict(_BASE_GEOMETRY)
    base.update(dims)
    base.setdefault("sigma2_B", NOISE_WATT)
    base.setdefault("sigma2_S", NOISE_WATT)
    base.setdefault("varsigma2_AB", 100.0 * NOISE_WATT)
    base.setdefault("varsigma2_RB", 100.0 * NOISE_WATT)
    prior_var = overrides.pop("prior_var", 5e5 * NOISE_WATT)
    for key in ("varsigma2_A_AS", "varsigma2_S_AS",
                "varsigma2_A_RS", "varsigma2_S_RS"):
        base.setdefault(key, prior_var)
    base.setdefault("varsigma2_S_AR", 0.0)
    base.update(overrides)
    if "m_min" not in base:
        base["m_min"] = min(base["m_A"], base["m_B"])
    return SystemConfig(**base)


def desk_config(**overrides) -> SystemConfig:
    """Small default instance sized for CI and interactive use.

    Besides the smaller arrays, the geometry differs from the full-size
    layout: the surface sits a few metres from the sensor, so the reflected
    path carries non-negligible power relative to the direct one even with
    only 16 elements, and the sensor sees the transmitter at a bearing a
    two-antenna array can resolve. The rate floor is set so the constraint
    stays satisfiable at a 0 dBm budget.
    """
    dims = dict(m_A=2, m_B=4, m_S=2, m_R=16, K=4,
                p_max=dbm_to_watt(10.0), rate_threshold=1.4, seed=0,
                positions={"A": (0.0, 0.0, 0.0), "B": (100.0, 20.0, 5.0),
                           "R": (13.5, 19.0, 1.2), "S": (12.0, 17.0, 0.0)})
    return _build_config(dims, **overrides)


def paper_scale_config(**overrides) -> SystemConfig:
    """Full-size instance matching the reference experimental setup."""
    dims = dict(m_A=4, m_B=16, m_S=4, m_R=64, K=16,
                p_max=dbm_to_watt(10.0), rate_threshold=5.0, seed=0)
    return _build_config(dims, **overrides)


_CONFIG_TABLES = ("sweep", "aoa", "harness")


def config_from_dict(data: dict, base: SystemConfig | None = None) -> SystemConfig:
    """Build a SystemConfig from a flat mapping of field names.

    Unknown keys are rejected. p_max may be given either directly in watts
    or as p_max_dbm; harness tables (sweep/aoa/harness) are ignored here.
    """
    fields = set(SystemConfig.__dataclass_fields__)
    payload = {}
    for key, value in data.items():
        if key in _CONFIG_TABLES:
            continue
        if key == "p_max_dbm":
            if "p_max" in data:
                raise ValueError("give p_max or p_max_dbm, not both")
            payload["p_max"] = dbm_to_watt(float(value))
        elif key in fields:
            if key == "positions":
                payload[key] = {k: tuple(v) for k, v in value.items()}
            elif key == "pathloss_exponents":
                payload[key] = dict(value)
            else:
                payload[key] = value
        else:
            raise ValueError(f"unknown config key {key!r}")
    if base is not None:
        merged = {name: getattr(base, name) for name in fields}
        merged.update(payload)
        return SystemConfig(**merged)
    if "m_min" not in payload and "m_A" in payload and "m_B" in payload:
        payload["m_min"] = min(payload["m_A"], payload["m_B"])
    return SystemConfig(**payload)


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def config_from_toml(path, base: SystemConfig | None = None) -> SystemConfig:
    """Read a TOML file whose top-level keys mirror SystemConfig fields."""
    return config_from_dict(load_toml(path), base=base)
