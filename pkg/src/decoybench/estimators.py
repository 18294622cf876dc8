"""Single-photon yield lower bounds for the vacuum + weak decoy scheme.

Also hosts the truncated multi-intensity solver, which inverts observed click
rates for per-photon-number yields and reports how badly conditioned that
inversion becomes as the truncation grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .channel import PulseSet
from .photon_stats import check_intensity, multi_photon_fraction, poisson_pmf

EXACT = "exact"
PAPER_APPROX = "paper_approx"
MODES = (EXACT, PAPER_APPROX)

MIN_WEAK_MU = 1e-15
SOLVER_TOL = 1e-12


class DegenerateInputError(ValueError):
    pass


class UnderdeterminedError(ValueError):
    pass


class ResidualError(ValueError):
    pass


@dataclass(frozen=True)
class Truth:
    n0: int
    n1: int
    nm: int


@dataclass(frozen=True)
class ObservedCounts:
    """Total clicks of one pulse set; ``truth`` is only filled by the simulator."""

    set_label: str
    n_t: int
    truth: Optional[Truth] = None

    def __post_init__(self):
        if self.n_t < 0:
            raise ValueError(f"n_t must be nonnegative, got {self.n_t}")
        if self.truth is not None:
            t = self.truth
            if t.n0 + t.n1 + t.nm != self.n_t:
                raise ValueError(
                    f"truth decomposition {t.n0}+{t.n1}+{t.nm} does not sum to n_t={self.n_t}"
                )

    def check_against(self, pulse_set: PulseSet) -> None:
        if self.n_t > pulse_set.count:
            raise ValueError(
                f"{self.set_label}: n_t={self.n_t} exceeds pulse count {pulse_set.count}"
            )


@dataclass(frozen=True)
class YieldBound:
    s1_lower: float
    n1_lower: float
    mode: str
    clipped: bool
    dark_corrected: bool


@dataclass(frozen=True)
class YieldVector:
    y: np.ndarray
    condition_number: float
    residual: float


def weak_decoy_bound_nodark(
    q_v: float, mu_v: float, mode: str = EXACT, eta: Optional[float] = None
) -> YieldBound:
    """Lower bound on the single-photon yield from a weak decoy, ignoring darks.

    Every multi-photon pulse is assumed to have clicked. In ``exact`` mode the
    remaining click rate is divided by the single-photon fraction. In
    ``paper_approx`` mode the first-order result ``eta - mu_v/2`` is returned,
    with ``eta`` recovered from ``q_v = 1 - exp(-eta*mu_v)`` unless given.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not 0.0 <= q_v <= 1.0:
        raise ValueError(f"q_v must lie in [0, 1], got {q_v}")
    mu_v = check_intensity(mu_v)
    if mu_v < MIN_WEAK_MU:
        raise DegenerateInputError(f"mu_v={mu_v} too small: single-photon fraction underflows")

    single = mu_v * math.exp(-mu_v)
    if mode == EXACT:
        raw = (q_v - multi_photon_fraction(mu_v)) / single
    else:
        if eta is None:
            eta = -math.log1p(-q_v) / mu_v if q_v < 1.0 else math.inf
        raw = eta - mu_v / 2.0
    clipped = raw < 0.0
    s1 = min(max(raw, 0.0), 1.0)
    return YieldBound(s1_lower=s1, n1_lower=s1 * single, mode=mode, clipped=clipped, dark_corrected=False)


def weak_decoy_bound_dark(obs_v: ObservedCounts, set_v: PulseSet, s0_hat: float) -> YieldBound:
    """Dark-corrected bound: ``n1 >= n_t - N s0_hat e^-mu - N P(n>=2)``.

    ``s0_hat`` is an estimate (typically from the vacuum set); the bound is
    only as good as that estimate, which is the whole point.
    """
    if not 0.0 <= s0_hat < 1.0:
        raise ValueError(f"s0_hat must lie in [0, 1), got {s0_hat}")
    obs_v.check_against(set_v)
    mu_v = set_v.mu
    if mu_v < MIN_WEAK_MU:
        raise DegenerateInputError(f"mu_v={mu_v} too small: single-photon fraction underflows")
    n = set_v.count
    vac = math.exp(-mu_v)
    raw = obs_v.n_t - n * s0_hat * vac - n * multi_photon_fraction(mu_v)
    clipped = raw < 0.0
    n1 = max(raw, 0.0)
    s1 = min(n1 / (n * mu_v * vac), 1.0)
    return YieldBound(s1_lower=s1, n1_lower=n1, mode=EXACT, clipped=clipped, dark_corrected=True)


@dataclass(frozen=True)
class Validity:
    valid: bool
    margin: float


def scheme_validity(eta: float, mu_v: float, target_fraction: float = 0.5) -> Validity:
    """Whether ``eta - mu_v/2 >= target_fraction * eta``, i.e. ``mu_v <= 2(1-t) eta``."""
    if not 0.0 < target_fraction < 1.0:
        raise ValueError(f"target_fraction must lie in (0, 1), got {target_fraction}")
    limit = 2.0 * (1.0 - target_fraction) * eta
    return Validity(valid=mu_v <= limit, margin=limit - mu_v)


def estimate_dark_rate(obs_0: ObservedCounts, set_0: PulseSet) -> float:
    if set_0.mu != 0.0:
        raise ValueError(f"dark rate needs a vacuum set, {set_0.label!r} has mu={set_0.mu}")
    obs_0.check_against(set_0)
    return obs_0.n_t / set_0.count


def coefficient_matrix(intensities: Sequence[float], n_max: int) -> np.ndarray:
    return np.array([[poisson_pmf(n, mu) for n in range(n_max + 1)] for mu in intensities])


def condition_number(matrix: np.ndarray) -> float:
    sv = np.linalg.svd(matrix, compute_uv=False)
    return math.inf if sv[-1] == 0.0 else float(sv[0] / sv[-1])


def truncated_yield_solver(
    observations: Sequence[tuple[float, float]],
    n_max: int,
    max_residual: Optional[float] = None,
) -> YieldVector:
    """Fit yields ``Y_0..Y_n_max`` in ``[0, 1]`` to ``q_i = sum_n Y_n P(n | mu_i)``.

    Raises:
        UnderdeterminedError: fewer distinct intensities than unknowns.
        ResidualError: ``max_residual`` given and the fit residual exceeds it.
    """
    if n_max < 0:
        raise ValueError(f"n_max must be nonnegative, got {n_max}")
    intensities = [check_intensity(mu) for mu, _ in observations]
    q = np.array([float(q) for _, q in observations])
    if np.any((q < 0.0) | (q > 1.0)):
        raise ValueError("observed click rates must lie in [0, 1]")
    if len(set(intensities)) < n_max + 1:
        raise UnderdeterminedError(
            f"{len(set(intensities))} distinct intensities for {n_max + 1} unknown yields"
        )

    a = coefficient_matrix(intensities, n_max)
    fit = lsq_linear(a, q, bounds=(0.0, 1.0), method="bvls", tol=SOLVER_TOL, lsmr_tol=None)
    y = np.clip(fit.x, 0.0, 1.0)
    residual = float(np.linalg.norm(a @ y - q))
    if max_residual is not None and residual > max_residual:
        raise ResidualError(f"residual {residual:.3e} exceeds {max_residual:.3e}")
    return YieldVector(y=y, condition_number=condition_number(a), residual=residual)
