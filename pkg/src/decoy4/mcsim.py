"""Event-level Monte Carlo of the four-intensity protocol.

The simulation is exact in distribution for the channel model of
:mod:`decoy4.channel` but avoids a Python loop over pulses: the pulse
classes (intensity, Alice basis, Bob basis) are drawn as one multinomial,
each class is split by photon number with a second multinomial, and clicks,
errors and after-pulses are binomial thinnings of those tallies. Photon loss
is collapsed into the per-pulse click probability
``1 - (1 - 2 p_dc) (1 - eta)^n``, which is exact for threshold detectors.

For an ``n``-photon click the bit is wrong with probability
``(p_dc + e_mis (1 - (1 - eta)^n)) / D_n``, which averages to the channel
model's error rate over the Poisson photon number. Each click triggers an
after-pulse with probability ``p_ap``; the after-pulse is another sifted
event of the same pulse with a uniformly random bit.

Randomness comes from :class:`numpy.random.SeedSequence` (a 64-bit or larger
integer seed) feeding PCG64 streams; trial ``i`` of :func:`validate_bounds`
uses the ``i``-th spawned child, so trials are independent and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

from .bounds import (
    FOUR_INTENSITY_TERMS,
    DegenerateEstimate,
    ObservedCounts,
    SourceConfig,
    estimate_parameters,
    phase_error_deviation,
    sampling_deviation,
)
from .channel import SystemParams, transmittance

INTENSITIES = ("mu", "v1", "v2", "omega")
MAX_PHOTONS = 30  # last bin collects every n >= MAX_PHOTONS


@dataclass
class TruthTally:
    """Ground truth hidden from the estimators.

    ``events`` and ``errors`` map ``(basis, intensity)`` to arrays over photon
    number of sifted events and bit errors. ``sent`` maps each intensity to
    its photon-number histogram of emitted pulses.
    """

    s_z0: int
    s_z1: int
    s_x1: int
    v_x1: int
    c_z1: int
    pulses: dict[str, int]
    sent: dict[str, np.ndarray]
    events: dict[tuple[str, str], np.ndarray] = field(repr=False)
    errors: dict[tuple[str, str], np.ndarray] = field(repr=False)

    @property
    def phase_error_proxy(self) -> float:
        """Bit error fraction of Z-basis single-photon events."""
        return self.c_z1 / self.s_z1 if self.s_z1 else 0.0


def _classes(cfg: SourceConfig):
    """(intensity name, mean photon number, Alice basis, Bob basis, probability)."""
    alice = [
        ("mu", cfg.mu, "Z", cfg.p_mu),
        ("v1", cfg.v1, "Z", cfg.p_v1),
        ("v2", cfg.v2, "X", cfg.p_v2),
        ("omega", cfg.omega, "Z", cfg.p_omega * cfg.p_z_given_omega),
        ("omega", cfg.omega, "X", cfg.p_omega * (1.0 - cfg.p_z_given_omega)),
    ]
    out = []
    for name, k, basis, p in alice:
        out.append((name, k, basis, "Z", p * cfg.p_z_bob))
        out.append((name, k, basis, "X", p * cfg.p_x_bob))
    return out


def _photon_pmf(k: float) -> np.ndarray:
    n = np.arange(MAX_PHOTONS + 1)
    pmf = poisson.pmf(n, k) if k > 0 else (n == 0).astype(float)
    pmf[-1] = max(0.0, 1.0 - pmf[:-1].sum())
    return pmf / pmf.sum()


def simulate(
    cfg: SourceConfig, sys: SystemParams, seed: int | np.random.SeedSequence
) -> tuple[ObservedCounts, TruthTally]:
    """Simulate ``sys.n_pulses`` pulses and return observed and true tallies."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n_total = int(round(sys.n_pulses))
    eta = transmittance(sys)
    n = np.arange(MAX_PHOTONS + 1)
    loss = (1.0 - eta) ** n
    click = 1.0 - (1.0 - 2.0 * sys.p_dc) * loss
    wrong = sys.p_dc + sys.e_mis * (1.0 - loss)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_wrong = np.where(click > 0, np.minimum(wrong / click, 1.0), 0.0)

    classes = _classes(cfg)
    probs = np.array([c[-1] for c in classes])
    per_class = rng.multinomial(n_total, probs / probs.sum())

    pulses = dict.fromkeys(INTENSITIES, 0)
    sent = {name: np.zeros(MAX_PHOTONS + 1, dtype=np.int64) for name in INTENSITIES}
    events: dict[tuple[str, str], np.ndarray] = {}
    errors: dict[tuple[str, str], np.ndarray] = {}
    for (name, k, a_basis, b_basis, _), count in zip(classes, per_class):
        by_n = rng.multinomial(count, _photon_pmf(k))
        pulses[name] += int(count)
        sent[name] += by_n
        if a_basis != b_basis:
            continue
        clicks = rng.binomial(by_n, click)
        errs = rng.binomial(clicks, p_wrong)
        after = rng.binomial(clicks, sys.p_ap)
        after_errs = rng.binomial(after, 0.5)
        key = (a_basis, name)
        events[key] = events.get(key, 0) + clicks + after
        errors[key] = errors.get(key, 0) + errs + after_errs

    def total(basis, name):
        return int(events[(basis, name)].sum())

    def wrong_total(basis, name):
        return int(errors[(basis, name)].sum())

    counts = ObservedCounts(
        n_z_mu=total("Z", "mu"),
        n_z_v1=total("Z", "v1"),
        n_z_omega=total("Z", "omega"),
        m_z_mu=wrong_total("Z", "mu"),
        m_z_v1=wrong_total("Z", "v1"),
        m_z_omega=wrong_total("Z", "omega"),
        n_x_v2=total("X", "v2"),
        n_x_omega=total("X", "omega"),
        m_x_v2=wrong_total("X", "v2"),
        m_x_omega=wrong_total("X", "omega"),
    )
    z_keys = [("Z", "mu"), ("Z", "v1"), ("Z", "omega")]
    x_keys = [("X", "v2"), ("X", "omega")]
    truth = TruthTally(
        s_z0=int(sum(events[k][0] for k in z_keys)),
        s_z1=int(sum(events[k][1] for k in z_keys)),
        s_x1=int(sum(events[k][1] for k in x_keys)),
        v_x1=int(sum(errors[k][1] for k in x_keys)),
        c_z1=int(sum(errors[k][1] for k in z_keys)),
        pulses=pulses,
        sent=sent,
        events=events,
        errors=errors,
    )
    return counts, truth


BOUND_NAMES = ("s_z0", "s_z1", "s_x1", "v_x1", "e1_pz")


@dataclass
class FailureReport:
    """Per-bound violation tallies from :func:`validate_bounds`."""

    trials: int
    eps_sec: float
    violations: dict[str, int]
    degenerate: int = 0

    @property
    def frequencies(self) -> dict[str, float]:
        return {k: v / self.trials for k, v in self.violations.items()}

    @property
    def total_frequency(self) -> float:
        return sum(self.violations.values()) / self.trials

    def passed(self) -> bool:
        return all(f <= self.eps_sec for f in self.frequencies.values())


def validate_bounds(
    cfg: SourceConfig,
    sys: SystemParams,
    eps_sec: float,
    trials: int,
    seed: int,
    terms: int = FOUR_INTENSITY_TERMS,
    sampling_factor: float | None = None,
) -> FailureReport:
    """Count how often each estimator is violated by the simulated truth.

    Every trial simulates the protocol, runs the estimators at the fixed
    ``eps_sec`` and checks lower bounds (vacuum, single-photon Z and X
    events) and upper bounds (single-photon X errors, phase error rate
    against the Z-basis single-photon bit error fraction). Trials whose
    estimates degenerate are counted separately and violate nothing.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    kwargs = {} if sampling_factor is None else {"sampling_factor": sampling_factor}
    violations = dict.fromkeys(BOUND_NAMES, 0)
    degenerate = 0
    for child in np.random.SeedSequence(seed).spawn(trials):
        counts, truth = simulate(cfg, sys, child)
        try:
            est = estimate_parameters(cfg, counts, sys.n_pulses, eps_sec, terms, **kwargs)
        except DegenerateEstimate:
            degenerate += 1
            continue
        violations["s_z0"] += truth.s_z0 < est.s_z0
        violations["s_z1"] += truth.s_z1 < est.s_z1
        violations["s_x1"] += truth.s_x1 < est.s_x1
        violations["v_x1"] += truth.v_x1 > est.v_x1
        violations["e1_pz"] += truth.phase_error_proxy > est.e1_pz
    return FailureReport(trials, eps_sec, violations, degenerate)


def sampling_failure_rate(
    n_x: int,
    n_z: int,
    tagged: int,
    eps: float,
    trials: int,
    seed: int,
    factor: float = 1.0,
) -> float:
    """Empirical failure rate of the random-sampling bound on tagged fractions.

    A population of ``n_x + n_z`` items holding ``tagged`` tagged ones is split
    uniformly at random into subsets of sizes ``n_x`` and ``n_z``. The bound
    fails when the ``n_x`` fraction falls below the ``n_z`` fraction minus
    ``factor * g``.
    """
    rng = np.random.default_rng(seed)
    in_x = rng.hypergeometric(tagged, n_x + n_z - tagged, n_x, size=trials)
    z = (tagged - in_x) / n_z
    failures = 0
    for kx, zz in zip(in_x, z):
        if not 0 < zz < 1:
            continue
        if kx / n_x < zz - factor * sampling_deviation(n_x, n_z, zz, eps):
            failures += 1
    return failures / trials


def phase_error_failure_rate(
    n_x: int, n_z: int, errors: int, eps: float, trials: int, seed: int
) -> float:
    """Empirical failure rate of the error-rate sampling deviation (gamma).

    ``errors`` erroneous items among ``n_x + n_z`` are split at random; the
    bound fails when the ``n_z`` side's error fraction exceeds the ``n_x``
    side's fraction plus gamma.
    """
    rng = np.random.default_rng(seed)
    in_x = rng.hypergeometric(errors, n_x + n_z - errors, n_x, size=trials)
    failures = 0
    for kx in in_x:
        b = kx / n_x
        if b <= 0:
            b_gamma = 0.5 / n_x
        elif b >= 1:
            continue
        else:
            b_gamma = b
        bound = b + phase_error_deviation(eps, b_gamma, n_x, n_z)
        if (errors - kx) / n_z > bound:
            failures += 1
    return failures / trials


def binomial_sigma(expected: float, n_pulses: float) -> float:
    """Binomial standard deviation of a count with mean ``expected`` over ``n_pulses``."""
    p = expected / n_pulses
    return math.sqrt(n_pulses * p * (1.0 - p))


def count_sigma(k: float, weight: float, sys: SystemParams, errors: bool = False) -> float:
    """Exact standard deviation of one sifted tally over ``sys.n_pulses`` pulses.

    A pulse contributes 0, 1 or 2 events (a click plus its after-pulse), so the
    per-pulse variance exceeds the binomial one. ``weight`` is the probability
    that a pulse falls in the tally's class (intensity, matching bases).
    """
    eta = transmittance(sys)
    loss = math.exp(-eta * k)
    d = 1.0 - (1.0 - 2.0 * sys.p_dc) * loss
    p = sys.p_ap
    if errors:
        w = sys.p_dc + sys.e_mis * (1.0 - loss)
        # click error X in {0,1}, after-pulse error Y in {0,1}; E[XY] = E[X] p / 2
        mean = weight * (w + p * d / 2.0)
        second = weight * (w + p * d / 2.0 + p * w)
    else:
        mean = weight * d * (1.0 + p)
        second = weight * d * (1.0 + 3.0 * p)
    return math.sqrt(sys.n_pulses * (second - mean * mean))
