"""Air-to-ground channel, packet error rate and warden detection model.

All functions are pure and operate on scalars or numpy arrays.

Sign conventions: ``path_loss`` and ``expected_channel_gain`` return *loss*
factors (>= 1 for physical geometries).  Received power is transmit power
divided by the combined loss, see :func:`received_power`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy.special import digamma

ArrayLike = Union[float, np.ndarray]

LIGHT_SPEED = 3.0e8


@dataclass(frozen=True)
class ChannelEnv:
    """Environment constants of the probabilistic LoS/NLoS channel.

    ``env_a``/``env_b`` are the S-curve constants of the LoS probability
    (urban defaults); attenuation coefficients are linear factors.
    """

    env_a: float = 9.61
    env_b: float = 0.16
    carrier_hz: float = 2.0e9
    light_speed_mps: float = LIGHT_SPEED
    atten_los: float = 10 ** 0.1
    atten_nlos: float = 10 ** 2.0
    noise_bs: float = 1e-13
    noise_willie: float = 1e-12

    def __post_init__(self):
        if self.env_a <= 0 or self.env_b <= 0:
            raise ValueError("S-curve constants must be positive")
        if not (self.atten_nlos >= self.atten_los > 0):
            raise ValueError("need atten_nlos >= atten_los > 0")
        if self.noise_bs <= 0 or self.noise_willie <= 0:
            raise ValueError("noise variances must be positive")
        if self.carrier_hz <= 0 or self.light_speed_mps <= 0:
            raise ValueError("carrier frequency and light speed must be positive")


@dataclass(frozen=True)
class LinkGeometry:
    horiz_dist_m: float
    altitude_m: float
    tx_power_w: float = 0.1

    def __post_init__(self):
        if self.horiz_dist_m < 0:
            raise ValueError("horizontal distance must be >= 0")
        if self.altitude_m <= 0:
            raise ValueError("altitude must be > 0")
        if self.tx_power_w < 0:
            raise ValueError("transmit power must be >= 0")


class LinkCondition(str, Enum):
    LOS = "los"
    NLOS = "nlos"


class ThresholdMode(str, Enum):
    FIXED = "fixed"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class DetectionConfig:
    """Warden threshold strategy.

    ``FIXED`` uses ``threshold``; ``UNIFORM`` draws the threshold uniformly
    on ``[threshold_lo, threshold_hi]``.
    """

    mode: ThresholdMode = ThresholdMode.UNIFORM
    threshold: float = 0.0
    threshold_lo: float = 1e-12
    threshold_hi: float = 1e-9
    prior_h0: float = 0.5
    prior_h1: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "mode", ThresholdMode(self.mode))
        if abs(self.prior_h0 + self.prior_h1 - 1.0) > 1e-12:
            raise ValueError("priors must sum to 1")
        if self.mode is ThresholdMode.FIXED and self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.mode is ThresholdMode.UNIFORM and not self.threshold_lo < self.threshold_hi:
            raise ValueError("uniform threshold range needs threshold_lo < threshold_hi")


@dataclass(frozen=True)
class PerConfig:
    mod_c: float = 1.0
    mod_beta: float = 0.5
    packet_bits: int = 1024

    def __post_init__(self):
        if self.mod_c <= 0 or self.mod_beta <= 0:
            raise ValueError("modulation constants must be positive")
        if self.packet_bits < 1:
            raise ValueError("packet_bits must be >= 1")
        if self.mod_c * self.packet_bits <= 1:
            raise ValueError("need mod_c * packet_bits > 1 so that ln(CN) > 0")


# -- geometry -----------------------------------------------------------------

def elevation_angle(geom: LinkGeometry) -> float:
    """Elevation angle in radians; pi/2 directly overhead."""
    return math.atan2(geom.altitude_m, geom.horiz_dist_m)


def dist3d(geom: LinkGeometry) -> float:
    return math.hypot(geom.horiz_dist_m, geom.altitude_m)


def los_probability(angle_rad: ArrayLike, env: ChannelEnv) -> ArrayLike:
    deg = np.degrees(angle_rad)
    p = 1.0 / (1.0 + env.env_a * np.exp(-env.env_b * (deg - env.env_a)))
    return float(p) if np.ndim(p) == 0 else p


def path_loss(dist3d_m: ArrayLike, env: ChannelEnv,
              condition: LinkCondition = LinkCondition.LOS) -> ArrayLike:
    d = np.asarray(dist3d_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("3D distance must be > 0 (degenerate geometry)")
    atten = env.atten_los if LinkCondition(condition) is LinkCondition.LOS else env.atten_nlos
    loss = (4.0 * np.pi * env.carrier_hz * d / env.light_speed_mps) ** 2 * atten
    return float(loss) if loss.ndim == 0 else loss


def expected_channel_gain(geom: LinkGeometry, env: ChannelEnv) -> float:
    """LoS-probability weighted combination of the LoS and NLoS path losses."""
    p_los = los_probability(elevation_angle(geom), env)
    d = dist3d(geom)
    return (path_loss(d, env, LinkCondition.LOS) * p_los
            + path_loss(d, env, LinkCondition.NLOS) * (1.0 - p_los))


def received_power(geom: LinkGeometry, env: ChannelEnv) -> float:
    """Transmit power times channel power gain, with gain = 1 / combined loss."""
    return geom.tx_power_w / expected_channel_gain(geom, env)


def sinr(signal_w: ArrayLike, interference_w: ArrayLike, noise_w: float) -> ArrayLike:
    if noise_w <= 0:
        raise ValueError("noise power must be > 0")
    out = np.asarray(signal_w, dtype=float) / (np.asarray(interference_w, dtype=float) + noise_w)
    return float(out) if out.ndim == 0 else out


def sinr_at_bs(target: LinkGeometry, interferers: list[LinkGeometry], env: ChannelEnv) -> float:
    """SINR of one scheduled UAV with the remaining UAVs as aggregate interference."""
    interference = sum(received_power(g, env) for g in interferers)
    return sinr(received_power(target, env), interference, env.noise_bs)


def db_to_linear(db: ArrayLike) -> ArrayLike:
    out = 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


# -- packet error rate ----------------------------------------------------------

# Lanczos approximation, g = 7, n = 9 (Numerical Recipes / Godfrey coefficients).
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def log_gamma_fn(x: ArrayLike) -> ArrayLike:
    """ln Gamma(x) for x > 0.5 via the Lanczos series, finite for large x."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.5):
        raise ValueError("gamma is only implemented for x > 0.5")
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc = acc + c / (z + i)
    t = z + _LANCZOS_G + 0.5
    out = 0.5 * math.log(2.0 * math.pi) + (z + 0.5) * np.log(t) - t + np.log(acc)
    return float(out) if out.ndim == 0 else out


def gamma_fn(x: ArrayLike) -> ArrayLike:
    """Gamma function for x > 0.5 (exponentiated :func:`log_gamma_fn`).

    Relative error is below 1e-13 on (1, 3]; arguments above ~171.6 overflow to inf.
    """
    with np.errstate(over="ignore"):
        out = np.exp(np.asarray(log_gamma_fn(x)))
    return float(out) if out.ndim == 0 else out


def packet_error_rate(snr: ArrayLike, cfg: PerConfig, packet_bits: int | None = None) -> ArrayLike:
    """PER of an N-bit packet at linear SINR ``snr``.

    ``packet_bits`` overrides ``cfg.packet_bits`` (per-abstraction-level sizes).
    """
    ups = np.asarray(snr, dtype=float)
    if np.any(ups <= 0):
        raise ValueError("SINR must be > 0")
    n_bits = cfg.packet_bits if packet_bits is None else packet_bits
    if cfg.mod_c * n_bits <= 1:
        raise ValueError("need mod_c * packet_bits > 1")
    inv = 1.0 / (cfg.mod_beta * ups)
    log_cn = math.log(cfg.mod_c * n_bits)
    # product of a vanishing exponential and a huge Gamma at low SINR: combine in log space
    log_success = -log_cn * inv + log_gamma_fn(1.0 + inv)
    # past psi(1 + x) = ln(CN) the expression turns back up; saturate PER at 1 there
    beyond = digamma(1.0 + inv) >= log_cn
    per = np.where(beyond, 1.0, 1.0 - np.exp(np.minimum(log_success, 0.0)))
    per = np.clip(per, 0.0, 1.0)
    return float(per) if per.ndim == 0 else per


# -- warden detection -----------------------------------------------------------

def detection_epsilon(threshold_w: float, noise_willie_w: float, rx_power_w: float) -> float:
    """Warden detection probability for a given threshold: 1.0 inside the band, else 0.5."""
    if noise_willie_w <= threshold_w <= rx_power_w + noise_willie_w:
        return 1.0
    return 0.5


def covert_probability(cfg: DetectionConfig, noise_willie_w: float, rx_power_w: float) -> float:
    """Probability that the warden's detection fails, 1 - Pr{epsilon = 1}."""
    if cfg.mode is ThresholdMode.FIXED:
        return 0.0 if detection_epsilon(cfg.threshold, noise_willie_w, rx_power_w) == 1.0 else 1.0
    if not cfg.threshold_lo < cfg.threshold_hi:
        raise ValueError("uniform threshold range needs threshold_lo < threshold_hi")
    band_lo, band_hi = noise_willie_w, noise_willie_w + rx_power_w
    overlap = max(0.0, min(band_hi, cfg.threshold_hi) - max(band_lo, cfg.threshold_lo))
    return 1.0 - overlap / (cfg.threshold_hi - cfg.threshold_lo)
