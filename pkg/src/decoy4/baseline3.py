"""Efficient three-intensity decoy BB84, the comparison baseline.

Intensities ``mu > v + omega`` are each sent in both bases with an
intensity-independent bias ``p_z_alice``; Bob measures Z with ``p_z_bob``.
The X-basis single-photon count comes from the same decoy formulas used for Z
(run on X statistics), so the analysis composes 21 error terms instead of 17.

Counts follow the :class:`~decoy4.bounds.ObservedCounts` convention with the
shared decoy ``v`` stored in the ``v1`` fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bounds import (
    THREE_INTENSITY_TERMS,
    DegenerateEstimate,
    Estimates,
    KeyRateReport,
    ObservedCounts,
    SecurityParams,
    lambda_ec,
    n_bound,
    phase_error_rate,
    single_photon_errors_upper,
    single_photon_lower,
    smooth_key_length,
    solve_key_length,
    vacuum_lower,
)

BASELINE_SECURITY = SecurityParams(error_terms=THREE_INTENSITY_TERMS)


@dataclass(frozen=True)
class SourceConfig3:
    mu: float
    v: float
    omega: float
    p_mu: float
    p_v: float
    p_omega: float
    p_z_alice: float
    p_z_bob: float

    def __post_init__(self):
        if not (self.v > self.omega >= 0 and self.mu > self.v + self.omega):
            raise ValueError(f"need mu > v + omega and v > omega >= 0: {self}")
        probs = (self.p_mu, self.p_v, self.p_omega)
        if any(not 0.0 < p < 1.0 for p in probs):
            raise ValueError(f"intensity probabilities must lie in (0, 1): {probs}")
        if not math.isclose(sum(probs), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"intensity probabilities sum to {sum(probs)}, not 1")
        for name in ("p_z_alice", "p_z_bob"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")

    @classmethod
    def from_free(
        cls, mu: float, v: float, p_mu: float, p_v: float, p_z: float, omega: float = 2e-4
    ) -> "SourceConfig3":
        """Five optimised variables; Alice and Bob share the basis bias ``p_z``."""
        return cls(mu, v, omega, p_mu, p_v, 1.0 - p_mu - p_v, p_z, p_z)

    def tau(self, i: int) -> float:
        """Photon-number probability summed over intensities (basis-free)."""
        return sum(
            p * math.exp(-k) * k**i / math.factorial(i)
            for k, p in ((self.mu, self.p_mu), (self.v, self.p_v), (self.omega, self.p_omega))
        )


def _decoy_pair(cfg: SourceConfig3, n: dict, total: float, p_basis: float, eps, terms):
    """Vacuum and single-photon lower bounds from one basis' statistics."""

    def bound(name, k, p, sign):
        return n_bound(n[name], total, k, p, p_basis, eps, terms, sign)

    tau0, tau1 = cfg.tau(0), cfg.tau(1)
    s0 = vacuum_lower(
        tau0,
        cfg.v,
        cfg.omega,
        bound("omega", cfg.omega, cfg.p_omega, -1),
        bound("v", cfg.v, cfg.p_v, +1),
    )
    s0 = max(s0, 0.0)
    s1 = single_photon_lower(
        tau0,
        tau1,
        cfg.mu,
        cfg.v,
        cfg.omega,
        n_v_minus=bound("v", cfg.v, cfg.p_v, -1),
        n_w_plus=bound("omega", cfg.omega, cfg.p_omega, +1),
        n_mu_plus=bound("mu", cfg.mu, cfg.p_mu, +1),
        s0=s0,
    )
    return s0, s1


def estimate_parameters3(
    cfg: SourceConfig3,
    counts: ObservedCounts,
    eps_sec: float,
    terms: int = THREE_INTENSITY_TERMS,
    cap_v_x1: bool = False,
) -> Estimates:
    # tau carries no basis factor, so both the counts and tau are read per basis.
    pza, pxa = cfg.p_z_alice, 1.0 - cfg.p_z_alice
    z_counts = {"mu": counts.n_z_mu, "v": counts.n_z_v1, "omega": counts.n_z_omega}
    x_counts = {"mu": counts.n_x_mu, "v": counts.n_x_v1, "omega": counts.n_x_omega}
    flags = []
    s_z0, s_z1 = _decoy_pair(cfg, z_counts, counts.n_z, pza, eps_sec, terms)
    s_z0, s_z1 = s_z0 * pza, s_z1 * pza
    if s_z0 == 0.0:
        flags.append("s_z0_clamped")
    if not s_z1 > 0:
        raise DegenerateEstimate(f"s_z1 lower bound {s_z1} <= 0")
    _, s_x1 = _decoy_pair(cfg, x_counts, counts.n_x, pxa, eps_sec, terms)
    s_x1 *= pxa
    if not s_x1 > 0:
        raise DegenerateEstimate(f"s_x1 lower bound {s_x1} <= 0")

    mx = counts.m_x
    m_v_plus = n_bound(counts.m_x_v1, mx, cfg.v, cfg.p_v, pxa, eps_sec, terms, +1)
    m_w_minus = n_bound(counts.m_x_omega, mx, cfg.omega, cfg.p_omega, pxa, eps_sec, terms, -1)
    v_x1 = single_photon_errors_upper(cfg.tau(1) * pxa, cfg.v, cfg.omega, m_v_plus, m_w_minus)
    if v_x1 < 0:
        flags.append("v_x1_clamped_low")
        v_x1 = 0.0
    elif v_x1 > mx:
        flags.append("v_x1_exceeds_m_x")
        if cap_v_x1:
            v_x1 = mx
    e1 = phase_error_rate(s_x1, v_x1, s_z1, eps_sec, terms)
    if e1 >= 0.5:
        flags.append("e1_capped")
    return Estimates(s_z0, s_z1, s_x1, v_x1, e1, tuple(flags))


def _check_terms(sec: SecurityParams):
    if sec.error_terms != THREE_INTENSITY_TERMS:
        raise ValueError(f"baseline analysis composes 21 error terms, got {sec.error_terms}")


def evaluate3(
    cfg: SourceConfig3,
    counts: ObservedCounts,
    n_pulses: float,
    sec: SecurityParams = BASELINE_SECURITY,
) -> KeyRateReport:
    """Secret key length and rate of the three-intensity baseline."""
    _check_terms(sec)
    if counts.n_z <= 0 or counts.n_x <= 0:
        return KeyRateReport.infeasible(("no_detections",))
    leak = lambda_ec(counts.n_z, min(counts.e_z, 0.5), sec.f_ec)
    return solve_key_length(
        lambda eps: estimate_parameters3(cfg, counts, eps, sec.error_terms, sec.cap_v_x1),
        leak,
        n_pulses,
        sec,
        sec.error_terms,
    )


def evaluate3_smooth(
    cfg: SourceConfig3,
    counts: ObservedCounts,
    n_pulses: float,
    sec: SecurityParams = BASELINE_SECURITY,
) -> float:
    _check_terms(sec)
    if counts.n_z <= 0 or counts.n_x <= 0:
        return -math.inf
    leak = lambda_ec(counts.n_z, min(counts.e_z, 0.5), sec.f_ec)
    return smooth_key_length(
        lambda eps: estimate_parameters3(cfg, counts, eps, sec.error_terms, sec.cap_v_x1),
        leak,
        n_pulses,
        sec,
        sec.error_terms,
    )
