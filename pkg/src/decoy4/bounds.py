"""Finite-key estimators and key length for efficient four-intensity decoy BB84.

Every function here is pure. Counts may be real-valued (expected counts from
the channel model) or integers (Monte Carlo tallies); nothing is rounded
except the final floor of the key length.

Terminology used throughout:

* ``terms`` is the number of error terms composed into ``eps_sec``; every
  concentration bound runs at failure probability ``eps_sec / terms``.
* A "degenerate" estimate is one whose defining expression is undefined or
  non-positive where positivity is required. Those raise
  :class:`DegenerateEstimate`, which :func:`evaluate` turns into
  ``feasible=False``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Callable, Literal

FOUR_INTENSITY_TERMS = 17
THREE_INTENSITY_TERMS = 21

# fixed-point iteration for eps_sec = kappa * l
EPS_SEED_FRACTION = 1e-3
MAX_FIXED_POINT_ITER = 50

# Multiplier of the sampling deviation in the s_X1 bound, N1X*z - factor*N1X*g.
# The closed form carries 2. With 1 the published optimal rates and the
# four/three gain are reproduced, but g alone is then only a Gaussian-tail
# estimate: a hypergeometric check shows it holds when the log inside g is
# large (every operating point used here) and fails for loose failure
# probabilities. 2 held in every case tested.
DEFAULT_SAMPLING_FACTOR = 1.0

Basis = Literal["Z", "X"]


class DegenerateEstimate(ValueError):
    """An estimator left its domain (zero denominator, empty sample, ...)."""


@dataclass(frozen=True)
class SourceConfig:
    """Alice's intensities and selection probabilities plus Bob's basis bias.

    ``mu`` and ``v1`` are sent only in Z, ``v2`` only in X, and ``omega`` in Z
    with probability ``p_z_given_omega``.
    """

    mu: float
    v1: float
    v2: float
    omega: float
    p_mu: float
    p_v1: float
    p_v2: float
    p_omega: float
    p_z_given_omega: float
    p_z_bob: float

    def __post_init__(self):
        if not (self.v1 > self.omega >= 0 and self.v2 > self.omega):
            raise ValueError(
                f"need v1 > omega >= 0 and v2 > omega, got v1={self.v1}, "
                f"v2={self.v2}, omega={self.omega}"
            )
        if not self.mu > self.v1 + self.omega:
            raise ValueError(f"need mu > v1 + omega, got mu={self.mu}")
        probs = (self.p_mu, self.p_v1, self.p_v2, self.p_omega)
        if any(not 0.0 < p < 1.0 for p in probs):
            raise ValueError(f"intensity probabilities must lie in (0, 1): {probs}")
        if not math.isclose(sum(probs), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"intensity probabilities sum to {sum(probs)}, not 1")
        for name in ("p_z_given_omega", "p_z_bob"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")

    @classmethod
    def from_free(
        cls,
        mu: float,
        v1: float,
        v2: float,
        p_mu: float,
        p_v1: float,
        p_v2: float,
        p_z: float,
        omega: float = 2e-4,
    ) -> "SourceConfig":
        """Build a config from the seven optimised variables.

        ``p_omega`` is the simplex remainder and ``p_z_given_omega`` is tied
        to Bob's ``p_z``.
        """
        return cls(
            mu=mu,
            v1=v1,
            v2=v2,
            omega=omega,
            p_mu=p_mu,
            p_v1=p_v1,
            p_v2=p_v2,
            p_omega=1.0 - p_mu - p_v1 - p_v2,
            p_z_given_omega=p_z,
            p_z_bob=p_z,
        )

    @property
    def p_x_bob(self) -> float:
        return 1.0 - self.p_z_bob

    def z_terms(self) -> list[tuple[float, float]]:
        """``(intensity, P_k * P_{Z|k})`` for every intensity sent in Z."""
        return [
            (self.mu, self.p_mu),
            (self.v1, self.p_v1),
            (self.omega, self.p_omega * self.p_z_given_omega),
        ]

    def x_terms(self) -> list[tuple[float, float]]:
        """``(intensity, P_k * P_{X|k})`` for every intensity sent in X."""
        return [
            (self.v2, self.p_v2),
            (self.omega, self.p_omega * (1.0 - self.p_z_given_omega)),
        ]


@dataclass(frozen=True)
class ObservedCounts:
    """Sifted detections (``n_*``) and bit errors (``m_*``) per basis/intensity.

    The four-intensity protocol fills the Z fields for ``mu``, ``v1``,
    ``omega`` and the X fields for ``v2``, ``omega``. The three-intensity
    baseline sends every intensity in both bases; it stores its shared decoy
    ``v`` in the ``v1`` slots and additionally uses ``n_x_mu``, ``n_x_v1``,
    ``m_x_mu`` and ``m_x_v1``.
    """

    n_z_mu: float = 0.0
    n_z_v1: float = 0.0
    n_z_omega: float = 0.0
    m_z_mu: float = 0.0
    m_z_v1: float = 0.0
    m_z_omega: float = 0.0
    n_x_v2: float = 0.0
    n_x_omega: float = 0.0
    m_x_v2: float = 0.0
    m_x_omega: float = 0.0
    n_x_mu: float = 0.0
    n_x_v1: float = 0.0
    m_x_mu: float = 0.0
    m_x_v1: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not value >= 0:
                raise ValueError(f"{f.name} must be non-negative, got {value}")
        for suffix in ("z_mu", "z_v1", "z_omega", "x_v2", "x_omega", "x_mu", "x_v1"):
            n, m = getattr(self, "n_" + suffix), getattr(self, "m_" + suffix)
            if m > n * (1 + 1e-12):
                raise ValueError(f"m_{suffix}={m} exceeds n_{suffix}={n}")

    @property
    def n_z(self) -> float:
        return self.n_z_mu + self.n_z_v1 + self.n_z_omega

    @property
    def m_z(self) -> float:
        return self.m_z_mu + self.m_z_v1 + self.m_z_omega

    @property
    def n_x(self) -> float:
        return self.n_x_mu + self.n_x_v1 + self.n_x_v2 + self.n_x_omega

    @property
    def m_x(self) -> float:
        return self.m_x_mu + self.m_x_v1 + self.m_x_v2 + self.m_x_omega

    @property
    def e_z(self) -> float:
        """Aggregate Z-basis error rate over all Z intensities."""
        return self.m_z / self.n_z if self.n_z > 0 else 0.0


@dataclass(frozen=True)
class SecurityParams:
    """Security targets and analysis options.

    ``eps_sec`` is not a field: it is tied to the key length as
    ``kappa * l``. ``sampling_factor`` scales the sampling deviation in the
    X-basis single-photon bound; ``cap_v_x1`` additionally caps the
    single-photon error bound at the total X-basis error count.
    """

    eps_cor: float = 1e-15
    kappa: float = 1e-15
    f_ec: float = 1.16
    error_terms: int = FOUR_INTENSITY_TERMS
    sampling_factor: float = DEFAULT_SAMPLING_FACTOR
    cap_v_x1: bool = False

    def __post_init__(self):
        if not 0 < self.eps_cor < 1 or not 0 < self.kappa < 1:
            raise ValueError("eps_cor and kappa must lie in (0, 1)")
        if self.f_ec < 1:
            raise ValueError("error-correction efficiency f_ec must be >= 1")
        if self.error_terms not in (FOUR_INTENSITY_TERMS, THREE_INTENSITY_TERMS):
            raise ValueError(f"error_terms must be 17 or 21, got {self.error_terms}")
        if self.sampling_factor < 0:
            raise ValueError("sampling_factor must be non-negative")


@dataclass(frozen=True)
class Estimates:
    """Intermediate estimates at one fixed ``eps_sec``."""

    s_z0: float
    s_z1: float
    s_x1: float
    v_x1: float
    e1_pz: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class KeyRateReport:
    s_z0: float
    s_z1: float
    s_x1: float
    v_x1: float
    e1_pz: float
    lambda_ec: float
    l: int
    rate: float
    feasible: bool
    eps_sec: float = 0.0
    flags: tuple[str, ...] = field(default=())

    @classmethod
    def infeasible(cls, flags: tuple[str, ...] = (), **partial) -> "KeyRateReport":
        values = dict(s_z0=0.0, s_z1=0.0, s_x1=0.0, v_x1=0.0, e1_pz=0.5, lambda_ec=0.0)
        values.update(partial)
        return cls(**values, l=0, rate=0.0, feasible=False, flags=flags)


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy in bits, with H(0) = H(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy needs x in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def _poisson_weighted(terms: list[tuple[float, float]], i: int) -> float:
    return sum(w * math.exp(-k) * k**i / math.factorial(i) for k, w in terms)


def tau(cfg: SourceConfig, basis: Basis, i: int) -> float:
    """Probability that Alice sends an ``i``-photon pulse prepared in ``basis``."""
    if i < 0:
        raise ValueError("photon number must be non-negative")
    if basis == "Z":
        return _poisson_weighted(cfg.z_terms(), i)
    if basis == "X":
        return _poisson_weighted(cfg.x_terms(), i)
    raise ValueError(f"unknown basis {basis!r}")


def _hoeffding_deviation(total: float, eps_sec: float, terms: int) -> float:
    if eps_sec <= 0 or eps_sec > terms:
        raise ValueError(f"eps_sec must lie in (0, {terms}], got {eps_sec}")
    return math.sqrt(total / 2.0 * math.log(terms / eps_sec))


def n_bound(
    count: float,
    total: float,
    k: float,
    p_k: float,
    p_z_given_k: float,
    eps_sec: float,
    terms: int,
    sign: int,
) -> float:
    """Bound on the Z-basis detection count of intensity ``k``, rescaled.

    ``(e^k / (P_k P_{Z|k})) * (n_{Z,k} +/- sqrt(n_Z / 2 * ln(terms / eps_sec)))``.
    The deviation uses the total Z count ``total``; ``sign`` is +1 or -1.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    delta = _hoeffding_deviation(total, eps_sec, terms)
    return math.exp(k) / (p_k * p_z_given_k) * (count + sign * delta)


def m_bound(
    count: float,
    total: float,
    k: float,
    p_k: float,
    p_x_given_k: float,
    eps_sec: float,
    terms: int,
    sign: int,
) -> float:
    """X-basis error-count analogue of :func:`n_bound` (deviation on ``m_X``)."""
    return n_bound(count, total, k, p_k, p_x_given_k, eps_sec, terms, sign)


# The three decoy formulas below are shared with the three-intensity baseline.
# Rescaled lower bounds on counts are floored at zero before use; expected
# counts are non-negative, so the floored value is still a valid bound.


def vacuum_lower(tau0: float, v: float, w: float, n_w_minus: float, n_v_plus: float) -> float:
    """Unclamped vacuum-event lower bound from the two weakest intensities."""
    return tau0 * (v * max(n_w_minus, 0.0) - w * n_v_plus) / (v - w)


def single_photon_lower(
    tau0: float,
    tau1: float,
    mu: float,
    v: float,
    w: float,
    n_v_minus: float,
    n_w_plus: float,
    n_mu_plus: float,
    s0: float,
) -> float:
    """Unclamped single-photon-event lower bound."""
    denom = mu * (v - w) - v * v + w * w
    if denom <= 0:
        raise DegenerateEstimate(f"single-photon denominator {denom} <= 0")
    inner = max(n_v_minus, 0.0) - n_w_plus - (v * v - w * w) / mu**2 * (n_mu_plus - s0 / tau0)
    return tau1 * mu * inner / denom


def single_photon_errors_upper(
    tau1: float, v: float, w: float, m_v_plus: float, m_w_minus: float
) -> float:
    """Unclamped upper bound on single-photon bit errors in the test basis."""
    return tau1 * (m_v_plus - max(m_w_minus, 0.0)) / (v - w)


def s_z0_lower(
    cfg: SourceConfig,
    counts: ObservedCounts,
    eps_sec: float,
    terms: int = FOUR_INTENSITY_TERMS,
    clamp: bool = True,
) -> float:
    """Lower bound on Z-basis vacuum events."""
    nz = counts.n_z
    pzw = cfg.p_z_given_omega
    n_w_minus = n_bound(counts.n_z_omega, nz, cfg.omega, cfg.p_omega, pzw, eps_sec, terms, -1)
    n_v_plus = n_bound(counts.n_z_v1, nz, cfg.v1, cfg.p_v1, 1.0, eps_sec, terms, +1)
    value = vacuum_lower(tau(cfg, "Z", 0), cfg.v1, cfg.omega, n_w_minus, n_v_plus)
    return max(value, 0.0) if clamp else value


def s_z1_lower(
    cfg: SourceConfig,
    counts: ObservedCounts,
    s_z0: float,
    eps_sec: float,
    terms: int = FOUR_INTENSITY_TERMS,
    clamp: bool = True,
) -> float:
    """Lower bound on Z-basis single-photon events given the vacuum bound ``s_z0``."""
    nz = counts.n_z
    pzw = cfg.p_z_given_omega
    value = single_photon_lower(
        tau(cfg, "Z", 0),
        tau(cfg, "Z", 1),
        cfg.mu,
        cfg.v1,
        cfg.omega,
        n_v_minus=n_bound(counts.n_z_v1, nz, cfg.v1, cfg.p_v1, 1.0, eps_sec, terms, -1),
        n_w_plus=n_bound(counts.n_z_omega, nz, cfg.omega, cfg.p_omega, pzw, eps_sec, terms, +1),
        n_mu_plus=n_bound(counts.n_z_mu, nz, cfg.mu, cfg.p_mu, 1.0, eps_sec, terms, +1),
        s0=s_z0,
    )
    return max(value, 0.0) if clamp else value


def sampling_correction(x: float, y: float, z: float) -> float:
    """Stirling correction factor C(x, y, z) of the sampling tail bound."""
    return math.exp(
        1.0 / (8.0 * (x + y))
        + 1.0 / (12.0 * y)
        - 1.0 / (12.0 * y * z + 1.0)
        - 1.0 / (12.0 * y * (1.0 - z) + 1.0)
    )


def sampling_deviation(x: float, y: float, z: float, eps: float) -> float:
    """Deviation g(x, y, z, eps) between the fractions of two random subsets.

    ``x`` and ``y`` are the subset sizes, ``z`` the tagged fraction observed in
    the ``y`` subset. The unsubscripted logarithm is taken base 2.
    """
    if x <= 0 or y <= 0:
        raise DegenerateEstimate(f"sampling sizes must be positive, got {x}, {y}")
    zz = z * (1.0 - z)
    if not zz > 0:
        raise DegenerateEstimate(f"sampling fraction {z} outside (0, 1)")
    arg = math.sqrt(x + y) * sampling_correction(x, y, z) / (
        math.sqrt(2.0 * math.pi * x * y * zz) * eps
    )
    log_term = math.log2(arg)
    if log_term <= 0:
        return 0.0
    return math.sqrt(2.0 * (x + y) * zz / (x * y) * log_term)


def single_photon_pulses(cfg: SourceConfig, n_pulses: float, basis: Basis) -> float:
    """Expected number of single-photon pulses sent and measured in ``basis``."""
    p_bob = cfg.p_z_bob if basis == "Z" else cfg.p_x_bob
    return n_pulses * tau(cfg, basis, 1) * p_bob


def s_x1_lower(
    cfg: SourceConfig,
    n_pulses: float,
    s_z1: float,
    eps_sec: float,
    terms: int = FOUR_INTENSITY_TERMS,
    factor: float = DEFAULT_SAMPLING_FACTOR,
    clamp: bool = True,
) -> float:
    """Lower bound on X-basis single-photon events, sampled from the Z-basis ones.

    ``factor`` multiplies the sampling deviation; 0 gives the exact
    proportional scaling ``N1X * s_z1 / N1Z``.
    """
    n1z = single_photon_pulses(cfg, n_pulses, "Z")
    n1x = single_photon_pulses(cfg, n_pulses, "X")
    if not (n1z > 0 and n1x > 0):
        raise DegenerateEstimate("no single-photon pulses in one of the bases")
    z = s_z1 / n1z
    if not 0.0 < z < 1.0:
        raise DegenerateEstimate(f"single-photon yield {z} outside (0, 1)")
    dev = 0.0
    if factor:
        dev = factor * n1x * sampling_deviation(n1x, n1z, z, eps_sec / terms)
    value = n1x * z - dev
    return max(value, 0.0) if clamp else value


def v_x1_upper(
    cfg: SourceConfig,
    counts: ObservedCounts,
    eps_sec: float,
    terms: int = FOUR_INTENSITY_TERMS,
    clamp: bool = True,
) -> float:
    """Upper bound on bit errors among X-basis single-photon events.

    Clamped to ``[0, m_X]`` unless ``clamp`` is false.
    """
    mx = counts.m_x
    pxw = 1.0 - cfg.p_z_given_omega
    m_v_plus = m_bound(counts.m_x_v2, mx, cfg.v2, cfg.p_v2, 1.0, eps_sec, terms, +1)
    m_w_minus = m_bound(counts.m_x_omega, mx, cfg.omega, cfg.p_omega, pxw, eps_sec, terms, -1)
    value = single_photon_errors_upper(tau(cfg, "X", 1), cfg.v2, cfg.omega, m_v_plus, m_w_minus)
    return min(max(value, 0.0), mx) if clamp else value


def phase_error_deviation(a: float, b: float, c: float, d: float) -> float:
    """gamma(a, b, c, d): sampling deviation of the error rate between two sets.

    ``a`` is the failure probability, ``b`` the observed error rate on the
    ``c``-sized set, ``d`` the size of the other set. Returns 0 when the
    logarithm is non-positive (``a`` too large to constrain anything).
    """
    if not (c > 0 and d > 0 and 0.0 < b < 1.0 and a > 0):
        raise DegenerateEstimate(f"gamma undefined for a={a}, b={b}, c={c}, d={d}")
    spread = (c + d) * (1.0 - b) * b
    # summed in log space so tiny a or b cannot overflow the quotient
    log_term = (
        math.log2(c + d) - math.log2(c) - math.log2(d)
        - math.log2(b) - math.log2(1.0 - b) - 2.0 * math.log2(a)
    )
    if log_term <= 0:
        return 0.0
    return math.sqrt(spread / (c * d * math.log(2.0)) * log_term)


def phase_error_rate(
    s_x1: float,
    v_x1: float,
    s_z1: float,
    eps_sec: float,
    terms: int = FOUR_INTENSITY_TERMS,
) -> float:
    """Upper bound on the single-photon phase error rate in Z, capped at 1/2.

    Inside gamma an observed error ratio below half an error (in particular
    zero) is replaced by ``1/(2 s_x1)``, so a finite sample never yields a
    vacuous zero bound.
    """
    if not (s_x1 > 0 and s_z1 > 0):
        raise DegenerateEstimate(f"need s_x1 > 0 and s_z1 > 0, got {s_x1}, {s_z1}")
    if v_x1 < 0:
        raise ValueError("v_x1 must be non-negative")
    b = v_x1 / s_x1
    if b >= 0.5:
        return 0.5
    b_gamma = max(b, 0.5 / s_x1)
    if b_gamma >= 0.5:
        return 0.5
    return min(b + phase_error_deviation(eps_sec / terms, b_gamma, s_x1, s_z1), 0.5)


def lambda_ec(n_z: float, e_z: float, f_ec: float) -> float:
    """Error-correction leakage ``f * n_Z * H(E_Z)`` in bits."""
    if not 0.0 <= e_z <= 0.5:
        raise ValueError(f"E_Z must lie in [0, 1/2], got {e_z}")
    return f_ec * n_z * binary_entropy(e_z)


def key_length_raw(
    s_z0: float,
    s_z1: float,
    e1_pz: float,
    lambda_ec: float,
    eps_sec: float,
    eps_cor: float,
    terms: int = FOUR_INTENSITY_TERMS,
) -> float:
    """Key length before the floor and the clamp at zero."""
    return (
        s_z0
        + s_z1 * (1.0 - binary_entropy(e1_pz))
        - lambda_ec
        - 6.0 * math.log2(terms / eps_sec)
        - math.log2(2.0 / eps_cor)
    )


def key_length(
    s_z0: float,
    s_z1: float,
    e1_pz: float,
    lambda_ec: float,
    eps_sec: float,
    eps_cor: float,
    terms: int = FOUR_INTENSITY_TERMS,
) -> int:
    raw = key_length_raw(s_z0, s_z1, e1_pz, lambda_ec, eps_sec, eps_cor, terms)
    if not math.isfinite(raw):
        return 0
    return max(math.floor(raw), 0)


def estimate_parameters(
    cfg: SourceConfig,
    counts: ObservedCounts,
    n_pulses: float,
    eps_sec: float,
    terms: int = FOUR_INTENSITY_TERMS,
    sampling_factor: float = DEFAULT_SAMPLING_FACTOR,
    cap_v_x1: bool = False,
) -> Estimates:
    """Run the whole estimator chain at a fixed ``eps_sec``.

    Raises :class:`DegenerateEstimate` when the single-photon bounds vanish
    or the phase error rate is undefined.
    """
    flags = []
    s_z0 = s_z0_lower(cfg, counts, eps_sec, terms, clamp=False)
    if s_z0 < 0:
        flags.append("s_z0_clamped")
        s_z0 = 0.0
    s_z1 = s_z1_lower(cfg, counts, s_z0, eps_sec, terms, clamp=False)
    if not s_z1 > 0:
        raise DegenerateEstimate(f"s_z1 lower bound {s_z1} <= 0")
    s_x1 = s_x1_lower(cfg, n_pulses, s_z1, eps_sec, terms, sampling_factor, clamp=False)
    if not s_x1 > 0:
        raise DegenerateEstimate(f"s_x1 lower bound {s_x1} <= 0")
    v_x1 = v_x1_upper(cfg, counts, eps_sec, terms, clamp=False)
    if v_x1 < 0:
        flags.append("v_x1_clamped_low")
        v_x1 = 0.0
    elif v_x1 > counts.m_x:
        flags.append("v_x1_exceeds_m_x")
        if cap_v_x1:
            v_x1 = counts.m_x
    e1 = phase_error_rate(s_x1, v_x1, s_z1, eps_sec, terms)
    if e1 >= 0.5:
        flags.append("e1_capped")
    return Estimates(s_z0, s_z1, s_x1, v_x1, e1, tuple(flags))


def solve_key_length(
    estimate: Callable[[float], Estimates],
    leak: float,
    n_pulses: float,
    sec: SecurityParams,
    terms: int,
) -> KeyRateReport:
    """Resolve ``eps_sec = kappa * l`` by fixed-point iteration.

    ``estimate`` maps an ``eps_sec`` to the estimator chain at that value.
    Iteration starts from ``kappa * N * 1e-3`` and stops when ``l`` moves by
    at most one bit.
    """
    eps = sec.kappa * n_pulses * EPS_SEED_FRACTION
    prev = None
    est = None
    for _ in range(MAX_FIXED_POINT_ITER):
        try:
            est = estimate(eps)
        except DegenerateEstimate:
            return KeyRateReport.infeasible(("degenerate",), lambda_ec=leak, eps_sec=eps)
        l = key_length(est.s_z0, est.s_z1, est.e1_pz, leak, eps, sec.eps_cor, terms)
        if l == 0:
            return _report(est, leak, 0, n_pulses, eps, feasible=True)
        if prev is not None and abs(l - prev) <= 1:
            return _report(est, leak, l, n_pulses, eps, feasible=True)
        prev = l
        eps = sec.kappa * l
    return KeyRateReport.infeasible(
        ("nonconvergent",) + est.flags,
        s_z0=est.s_z0,
        s_z1=est.s_z1,
        s_x1=est.s_x1,
        v_x1=est.v_x1,
        e1_pz=est.e1_pz,
        lambda_ec=leak,
        eps_sec=eps,
    )


def _report(est: Estimates, leak: float, l: int, n_pulses: float, eps: float, feasible: bool):
    return KeyRateReport(
        s_z0=est.s_z0,
        s_z1=est.s_z1,
        s_x1=est.s_x1,
        v_x1=est.v_x1,
        e1_pz=est.e1_pz,
        lambda_ec=leak,
        l=l,
        rate=l / n_pulses,
        feasible=feasible,
        eps_sec=eps,
        flags=est.flags,
    )


def smooth_key_length(
    estimate: Callable[[float], Estimates],
    leak: float,
    n_pulses: float,
    sec: SecurityParams,
    terms: int,
    iterations: int = 4,
) -> float:
    """Unfloored, unclamped key length for optimisation.

    Same fixed point as :func:`solve_key_length` but on the real-valued
    length; a non-positive length stops the iteration and is returned as-is
    so the search still sees a slope. Degenerate estimates give ``-inf``.
    """
    eps = sec.kappa * n_pulses * EPS_SEED_FRACTION
    raw = -math.inf
    for _ in range(iterations):
        try:
            est = estimate(eps)
        except DegenerateEstimate:
            return -math.inf
        raw = key_length_raw(est.s_z0, est.s_z1, est.e1_pz, leak, eps, sec.eps_cor, terms)
        if raw <= 1.0:
            return raw
        new_eps = sec.kappa * raw
        if abs(new_eps - eps) <= sec.kappa:
            break
        eps = new_eps
    return raw


def _leakage(counts: ObservedCounts, sec: SecurityParams) -> float:
    return lambda_ec(counts.n_z, min(counts.e_z, 0.5), sec.f_ec)


def evaluate(
    cfg: SourceConfig,
    counts: ObservedCounts,
    n_pulses: float,
    sec: SecurityParams = SecurityParams(),
) -> KeyRateReport:
    """Secret key length and rate of the four-intensity protocol.

    >>> from decoy4.channel import SystemParams, expected_counts
    >>> cfg = SourceConfig.from_free(0.47, 0.183, 0.32, 0.16, 0.407, 0.22, 0.82)
    >>> sys = SystemParams(length_km=100, n_pulses=1e9)
    >>> evaluate(cfg, expected_counts(cfg, sys), sys.n_pulses).rate > 1e-5
    True
    """
    if counts.n_z <= 0:
        return KeyRateReport.infeasible(("no_detections",))
    terms = sec.error_terms
    leak = _leakage(counts, sec)

    def estimate(eps: float) -> Estimates:
        return estimate_parameters(
            cfg, counts, n_pulses, eps, terms, sec.sampling_factor, sec.cap_v_x1
        )

    return solve_key_length(estimate, leak, n_pulses, sec, terms)


def evaluate_smooth(
    cfg: SourceConfig,
    counts: ObservedCounts,
    n_pulses: float,
    sec: SecurityParams = SecurityParams(),
) -> float:
    """Real-valued key length used as the optimiser objective."""
    if counts.n_z <= 0:
        return -math.inf
    terms = sec.error_terms

    def estimate(eps: float) -> Estimates:
        return estimate_parameters(
            cfg, counts, n_pulses, eps, terms, sec.sampling_factor, sec.cap_v_x1
        )

    return smooth_key_length(estimate, _leakage(counts, sec), n_pulses, sec, terms)
