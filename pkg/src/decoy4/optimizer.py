"""Source-parameter optimisation for both protocols.

The search is a multi-start Nelder-Mead in an unconstrained coordinate
system: intensities are written as positive gaps on a log scale
(``v1 = omega + e^a``, ``mu = v1 + omega + e^b``, ...), the intensity
probabilities as a softmax against ``p_omega`` and the basis bias as a
logit. Every point of that space satisfies the ordering and simplex
constraints; the user boxes are enforced by rejection.

Starting points are screened from a scrambled Sobol pool of at least
``SCREEN_POOL`` points: the pool is scored once and the local searches start
from the best ``restarts`` of them. Far from the source, most of the box
yields no key, and a simplex started on that flat penalty cannot move.
Because the pool does not depend on ``restarts`` (up to ``SCREEN_POOL / 4``),
more restarts never give a worse result. The objective is the unfloored key
length.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .baseline3 import BASELINE_SECURITY, SourceConfig3, evaluate3, evaluate3_smooth
from .bounds import KeyRateReport, SecurityParams, SourceConfig, evaluate, evaluate_smooth
from .channel import SystemParams, expected_counts

Protocol = Literal["four", "three"]

PENALTY = 1e30
SCREEN_POOL = 64
DEFAULT_OMEGA = 2e-4

FOUR_BOXES = {
    "mu": (1e-3, 1.5),
    "v1": (1e-4, 1.0),
    "v2": (1e-4, 1.5),
    "p_mu": (1e-4, 0.9999),
    "p_v1": (1e-4, 0.9999),
    "p_v2": (1e-4, 0.9999),
    "p_omega": (1e-4, 0.9999),
    "p_z": (0.01, 0.9999),
    "omega": (1e-7, 1e-2),
}
THREE_BOXES = {
    "mu": (1e-3, 1.5),
    "v": (1e-4, 1.0),
    "p_mu": (1e-4, 0.9999),
    "p_v": (1e-4, 0.9999),
    "p_omega": (1e-4, 0.9999),
    "p_z": (0.01, 0.9999),
    "omega": (1e-7, 1e-2),
}


@dataclass(frozen=True)
class OptProblem:
    """What to optimise.

    ``omega=None`` makes the weakest intensity a free variable inside its
    box; otherwise it is held fixed. Missing ``boxes`` entries fall back to
    the protocol defaults.
    """

    sys: SystemParams = SystemParams()
    sec: SecurityParams | None = None
    protocol: Protocol = "four"
    omega: float | None = DEFAULT_OMEGA
    boxes: dict[str, tuple[float, float]] = field(default_factory=dict)
    restarts: int = 20
    max_evals: int = 3000

    def __post_init__(self):
        if self.protocol not in ("four", "three"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.restarts < 1:
            raise ValueError("need at least one restart")
        unknown = set(self.boxes) - set(self.default_boxes())
        if unknown:
            raise ValueError(f"unknown box parameters {sorted(unknown)}")
        for name, (lo, hi) in self.all_boxes().items():
            if not lo < hi:
                raise ValueError(f"empty box for {name}: ({lo}, {hi})")
        if self.omega is not None:
            lo, hi = self.all_boxes()["omega"]
            if not lo <= self.omega <= hi and self.omega != 0.0:
                raise ValueError(f"omega={self.omega} outside its box")

    def default_boxes(self) -> dict[str, tuple[float, float]]:
        return FOUR_BOXES if self.protocol == "four" else THREE_BOXES

    def all_boxes(self) -> dict[str, tuple[float, float]]:
        return {**self.default_boxes(), **self.boxes}

    @property
    def security(self) -> SecurityParams:
        if self.sec is not None:
            return self.sec
        return SecurityParams() if self.protocol == "four" else BASELINE_SECURITY

    def at(self, length_km: float | None = None, omega: float | None | str = "keep"):
        prob = self
        if length_km is not None:
            prob = replace(prob, sys=prob.sys.at(length_km))
        if omega != "keep":
            prob = replace(prob, omega=omega)
        return prob


@dataclass
class OptResult:
    cfg: SourceConfig | SourceConfig3 | None
    report: KeyRateReport
    protocol: Protocol
    evaluations: int = 0
    converged: bool = False
    restart_rates: list[float] = field(default_factory=list)

    @property
    def rate(self) -> float:
        return self.report.rate


# --- coordinates -----------------------------------------------------------


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _sigmoid(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def _softmax_tail(a: Sequence[float]) -> list[float]:
    # probabilities for len(a) named intensities plus p_omega (logit 0)
    top = max(0.0, *a)
    w = [math.exp(x - top) for x in a] + [math.exp(-top)]
    s = sum(w)
    return [x / s for x in w]


def decode(theta: Sequence[float], prob: OptProblem):
    """Map search coordinates to a source config (may raise ValueError)."""
    theta = [float(t) for t in theta]
    if prob.omega is None:
        omega = math.exp(theta[-1])
    else:
        omega = prob.omega
    if prob.protocol == "four":
        v1 = omega + math.exp(theta[0])
        mu = v1 + omega + math.exp(theta[1])
        v2 = omega + math.exp(theta[2])
        p_mu, p_v1, p_v2, p_w = _softmax_tail(theta[3:6])
        p_z = _sigmoid(theta[6])
        return SourceConfig(mu, v1, v2, omega, p_mu, p_v1, p_v2, p_w, p_z, p_z)
    v = omega + math.exp(theta[0])
    mu = v + omega + math.exp(theta[1])
    p_mu, p_v, p_w = _softmax_tail(theta[2:4])
    p_z = _sigmoid(theta[4])
    return SourceConfig3(mu, v, omega, p_mu, p_v, p_w, p_z, p_z)


def encode(cfg, prob: OptProblem) -> np.ndarray:
    """Inverse of :func:`decode` for a valid config."""
    w = cfg.omega
    if isinstance(cfg, SourceConfig):
        theta = [
            math.log(cfg.v1 - w),
            math.log(cfg.mu - cfg.v1 - w),
            math.log(cfg.v2 - w),
            math.log(cfg.p_mu / cfg.p_omega),
            math.log(cfg.p_v1 / cfg.p_omega),
            math.log(cfg.p_v2 / cfg.p_omega),
            _logit(cfg.p_z_bob),
        ]
    else:
        theta = [
            math.log(cfg.v - w),
            math.log(cfg.mu - cfg.v - w),
            math.log(cfg.p_mu / cfg.p_omega),
            math.log(cfg.p_v / cfg.p_omega),
            _logit(cfg.p_z_bob),
        ]
    if prob.omega is None:
        theta.append(math.log(w))
    return np.array(theta)


def _named(cfg) -> dict[str, float]:
    if isinstance(cfg, SourceConfig):
        return dict(
            mu=cfg.mu, v1=cfg.v1, v2=cfg.v2, p_mu=cfg.p_mu, p_v1=cfg.p_v1,
            p_v2=cfg.p_v2, p_omega=cfg.p_omega, p_z=cfg.p_z_bob, omega=cfg.omega,
        )
    return dict(
        mu=cfg.mu, v=cfg.v, p_mu=cfg.p_mu, p_v=cfg.p_v, p_omega=cfg.p_omega,
        p_z=cfg.p_z_bob, omega=cfg.omega,
    )


def in_boxes(cfg, prob: OptProblem) -> bool:
    boxes = prob.all_boxes()
    for name, value in _named(cfg).items():
        if name == "omega" and prob.omega is not None:
            continue
        lo, hi = boxes[name]
        if not lo <= value <= hi:
            return False
    return True


def _sobol_starts(prob: OptProblem, n: int, seed: int) -> list[np.ndarray]:
    """Low-discrepancy starting configs, drawn inside the boxes."""
    boxes = prob.all_boxes()
    dim = 8 if prob.protocol == "four" else 6
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = sampler.random(2 ** max(1, math.ceil(math.log2(n))))[:n]
    starts = []
    for row in u:
        if prob.omega is None:
            lo, hi = boxes["omega"]
            omega = math.exp(math.log(lo) + row[-1] * (math.log(hi) - math.log(lo)))
        else:
            omega = prob.omega
        theta = _unit_to_theta(row, prob, omega)
        starts.append(theta)
    return starts


def _screened_starts(prob: OptProblem, seed: int) -> list[np.ndarray]:
    """The ``prob.restarts`` best points of a fixed Sobol pool (ties keep pool order)."""
    pool = _sobol_starts(prob, max(SCREEN_POOL, 4 * prob.restarts), seed)
    scores = [smooth_objective(theta, prob) for theta in pool]
    order = sorted(range(len(pool)), key=lambda i: (scores[i], i))
    return [pool[i] for i in order[: prob.restarts]]


def _unit_to_theta(row, prob: OptProblem, omega: float) -> np.ndarray:
    # Map a unit-cube point to moderate intensities and a stick-broken simplex.
    boxes = prob.all_boxes()
    p_z = boxes["p_z"][0] + (boxes["p_z"][1] - boxes["p_z"][0]) * (0.5 + 0.5 * row[0])
    if prob.protocol == "four":
        v1 = omega + 0.02 + 0.4 * row[1]
        mu = v1 + omega + 0.05 + 0.6 * row[2]
        v2 = omega + 0.02 + 0.8 * row[3]
        sticks = row[4:7]
    else:
        v1 = omega + 0.02 + 0.4 * row[1]
        mu = v1 + omega + 0.05 + 0.6 * row[2]
        sticks = row[3:5]
    remaining, probs = 1.0, []
    for s in sticks:
        p = remaining * (0.1 + 0.8 * s)
        probs.append(p)
        remaining -= p
    probs.append(remaining)
    if prob.protocol == "four":
        cfg = SourceConfig(mu, v1, v2, omega, *probs, p_z, p_z)
    else:
        cfg = SourceConfig3(mu, v1, omega, *probs, p_z, p_z)
    return encode(cfg, prob)


# --- objective -------------------------------------------------------------


def smooth_objective(theta: Sequence[float], prob: OptProblem) -> float:
    """Negative unfloored key length in bits, or a penalty when rejected."""
    try:
        cfg = decode(theta, prob)
    except (ValueError, OverflowError):
        return PENALTY
    if not in_boxes(cfg, prob):
        return PENALTY
    counts = expected_counts(cfg, prob.sys)
    smooth = evaluate_smooth if prob.protocol == "four" else evaluate3_smooth
    value = smooth(cfg, counts, prob.sys.n_pulses, prob.security)
    if not math.isfinite(value):
        return PENALTY
    return -value


def report_for(cfg, prob: OptProblem) -> KeyRateReport:
    """Floored, reported evaluation of ``cfg`` under ``prob``."""
    counts = expected_counts(cfg, prob.sys)
    if prob.protocol == "four":
        return evaluate(cfg, counts, prob.sys.n_pulses, prob.security)
    return evaluate3(cfg, counts, prob.sys.n_pulses, prob.security)


def _local_search(theta0: np.ndarray, prob: OptProblem):
    res = minimize(
        smooth_objective,
        theta0,
        args=(prob,),
        method="Nelder-Mead",
        options=dict(maxfev=prob.max_evals, xatol=1e-5, fatol=1e-2, adaptive=True),
    )
    return np.asarray(res.x), float(res.fun), int(res.nfev), bool(res.success)


def _rank_key(cfg, report: KeyRateReport, fun: float):
    return (report.rate, -fun, astuple(cfg))


def optimize(
    prob: OptProblem,
    seed: int = 0,
    warm_starts: Sequence = (),
    workers: int = 1,
) -> OptResult:
    """Maximise the key rate of ``prob``; deterministic for a given seed.

    ``warm_starts`` are source configs tried in addition to the Sobol
    restarts. Returns a zero-rate result when no point yields a key.
    """
    starts = [encode(c, prob) for c in warm_starts if _compatible(c, prob)]
    starts += _screened_starts(prob, seed)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_local_search, starts, [prob] * len(starts)))
    else:
        outcomes = [_local_search(t, prob) for t in starts]

    best = None
    evaluations = 0
    rates = []
    for theta, fun, nfev, success in outcomes:
        evaluations += nfev
        if fun >= PENALTY:
            rates.append(0.0)
            continue
        cfg = decode(theta, prob)
        report = report_for(cfg, prob)
        rates.append(report.rate)
        key = _rank_key(cfg, report, fun)
        if best is None or key > best[0]:
            best = (key, cfg, report, success)

    if best is None or best[2].rate <= 0:
        cfg = best[1] if best else None
        report = best[2] if best else KeyRateReport.infeasible(("no_feasible_point",))
        return OptResult(cfg, report, prob.protocol, evaluations, False, rates)
    _, cfg, report, success = best
    return OptResult(cfg, report, prob.protocol, evaluations, success, rates)


def _compatible(cfg, prob: OptProblem) -> bool:
    if cfg is None:
        return False
    kind = SourceConfig if prob.protocol == "four" else SourceConfig3
    if not isinstance(cfg, kind):
        return False
    if prob.omega is not None and cfg.omega != prob.omega:
        cfg = replace(cfg, omega=prob.omega)
    try:
        encode(cfg, prob)
    except ValueError:
        return False
    return True


@dataclass
class ScanRow:
    distance_km: float
    omega: float | None
    protocol: Protocol
    result: OptResult
    error: str = ""


def scan(
    template: OptProblem,
    distances: Sequence[float],
    omegas: Sequence[float] | None = None,
    seed: int = 0,
    workers: int = 1,
) -> list[ScanRow]:
    """Optimise on a (omega, distance) grid, warm-starting from the previous point.

    Distances are visited in ascending order for each omega. A failing grid
    point is recorded with a zero-rate result and the scan carries on.
    """
    if not len(distances):
        raise ValueError("need at least one distance")
    omega_grid = list(omegas) if omegas is not None else [template.omega]
    if not omega_grid:
        raise ValueError("need at least one omega")
    rows = []
    for omega in omega_grid:
        previous = None
        for d in sorted(distances):
            prob = template.at(length_km=d, omega=omega)
            warm = [_with_omega(previous, omega)] if previous is not None else []
            try:
                res = optimize(prob, seed=seed, warm_starts=warm, workers=workers)
                error = ""
            except Exception as exc:  # per-point failure must not end the scan
                res = OptResult(None, KeyRateReport.infeasible(("error",)), prob.protocol)
                error = f"{type(exc).__name__}: {exc}"
            rows.append(ScanRow(d, omega, prob.protocol, res, error))
            if res.cfg is not None and res.rate > 0:
                previous = res.cfg
    return rows


def _with_omega(cfg, omega):
    if omega is None or cfg.omega == omega:
        return cfg
    try:
        return replace(cfg, omega=omega)
    except ValueError:
        return None
