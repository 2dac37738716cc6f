"""Expected-observables channel model for a fiber link with threshold detectors.

Bob uses active basis choice and two detectors. For an intensity ``k`` sent
with probability ``P_k`` in basis ``W`` (conditional probability ``P_{W|k}``)
and measured by Bob in the same basis with probability ``P_W``::

    D_k     = 1 - (1 - 2 p_dc) exp(-eta k)
    n_{W,k} = N P_k P_{W|k} P_W D_k (1 + p_ap)
    m_{W,k} = N P_k P_{W|k} P_W [p_dc + e_mis (1 - exp(-eta k)) + p_ap D_k / 2]

with ``eta = eta_b * 10 ** (-alpha L / 10)``. After-pulses inflate the click
count and are random in value, hence the ``p_ap D_k / 2`` error share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .bounds import ObservedCounts, SourceConfig


@dataclass(frozen=True)
class SystemParams:
    """Detector and link constants. Defaults are the reference fiber system."""

    p_dc: float = 6e-7
    p_ap: float = 0.04
    e_mis: float = 5e-3
    eta_b: float = 0.1
    alpha: float = 0.2  # dB/km
    length_km: float = 0.0
    n_pulses: float = 1e9

    def __post_init__(self):
        for name in ("p_dc", "p_ap", "e_mis", "eta_b"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.length_km < 0:
            raise ValueError("length_km must be non-negative")
        if self.n_pulses < 1:
            raise ValueError("n_pulses must be >= 1")

    def at(self, length_km: float) -> "SystemParams":
        return replace(self, length_km=length_km)


def transmittance(sys: SystemParams) -> float:
    """Overall transmittance: detector efficiency times fiber loss."""
    return sys.eta_b * 10.0 ** (-sys.alpha * sys.length_km / 10.0)


def detection_probability(k: float, sys: SystemParams) -> float:
    """Click probability per pulse of mean photon number ``k`` (no after-pulses)."""
    eta = transmittance(sys)
    # 1 - (1 - 2 p_dc) e^{-eta k}, written to stay accurate for tiny eta k
    return -math.expm1(-eta * k) + 2.0 * sys.p_dc * math.exp(-eta * k)


def error_probability(k: float, sys: SystemParams) -> float:
    """Bit-error probability per pulse (after-pulse share included)."""
    eta = transmittance(sys)
    d = detection_probability(k, sys)
    return sys.p_dc + sys.e_mis * -math.expm1(-eta * k) + sys.p_ap * d / 2.0


def sifted(k: float, weight: float, sys: SystemParams) -> tuple[float, float]:
    """Expected (detections, errors) for a class sent with total probability ``weight``.

    ``weight`` is ``P_k P_{W|k} P_W``, the chance a pulse is intensity ``k``,
    prepared in ``W`` and measured in ``W``.
    """
    base = sys.n_pulses * weight
    n = base * detection_probability(k, sys) * (1.0 + sys.p_ap)
    m = base * error_probability(k, sys)
    return n, m


def expected_counts(cfg, sys: SystemParams) -> ObservedCounts:
    """Expected sifted counts for a four- or three-intensity source config."""
    from .baseline3 import SourceConfig3

    if isinstance(cfg, SourceConfig3):
        return _expected_counts3(cfg, sys)
    if not isinstance(cfg, SourceConfig):
        raise TypeError(f"unsupported config type {type(cfg).__name__}")
    pz, px = cfg.p_z_bob, cfg.p_x_bob
    n_z_mu, m_z_mu = sifted(cfg.mu, cfg.p_mu * pz, sys)
    n_z_v1, m_z_v1 = sifted(cfg.v1, cfg.p_v1 * pz, sys)
    n_z_w, m_z_w = sifted(cfg.omega, cfg.p_omega * cfg.p_z_given_omega * pz, sys)
    n_x_v2, m_x_v2 = sifted(cfg.v2, cfg.p_v2 * px, sys)
    n_x_w, m_x_w = sifted(cfg.omega, cfg.p_omega * (1.0 - cfg.p_z_given_omega) * px, sys)
    return ObservedCounts(
        n_z_mu=n_z_mu,
        n_z_v1=n_z_v1,
        n_z_omega=n_z_w,
        m_z_mu=m_z_mu,
        m_z_v1=m_z_v1,
        m_z_omega=m_z_w,
        n_x_v2=n_x_v2,
        n_x_omega=n_x_w,
        m_x_v2=m_x_v2,
        m_x_omega=m_x_w,
    )


def _expected_counts3(cfg, sys: SystemParams) -> ObservedCounts:
    zz = cfg.p_z_alice * cfg.p_z_bob
    xx = (1.0 - cfg.p_z_alice) * (1.0 - cfg.p_z_bob)
    out = {}
    for name, k, p in (("mu", cfg.mu, cfg.p_mu), ("v1", cfg.v, cfg.p_v), ("omega", cfg.omega, cfg.p_omega)):
        out[f"n_z_{name}"], out[f"m_z_{name}"] = sifted(k, p * zz, sys)
        out[f"n_x_{name}"], out[f"m_x_{name}"] = sifted(k, p * xx, sys)
    return ObservedCounts(**out)
