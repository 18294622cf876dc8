"""How many pulses are needed before dark-count fluctuation stops mattering.

The tail bound used throughout is the multiplicative Chernoff form

    P(|X - m| >= delta*m) <= sides * exp(-delta^2 m / c),   delta <= 1,

with ``c = 3`` and ``sides = 2`` by default, where ``X`` is the dark count of a
set and ``m = N s0 e^-mu`` its expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .channel import ChannelParams, PulseSet, click_probability, expected_dark_counts

ONE_SIDED = "one_sided"
TWO_SIDED = "two_sided"
SIDEDNESS = (ONE_SIDED, TWO_SIDED)

SECONDS_PER_DAY = 86400.0
CHERNOFF_CONSTANT = 3.0
#: "much less than" read as one order of magnitude
DEFAULT_SEPARATION = 10.0
#: derived deviations are capped well inside the Chernoff form's delta <= 1
MAX_DERIVED_REL_DEV = 0.5


@dataclass(frozen=True)
class ConfidenceSpec:
    """Relative deviation ``rel_dev`` allowed with failure probability ``exp(-log_fail)``."""

    rel_dev: float
    log_fail: float
    sidedness: str = TWO_SIDED
    constant: float = CHERNOFF_CONSTANT

    def __post_init__(self):
        if not 0.0 < self.rel_dev < 1.0:
            raise ValueError(f"rel_dev must lie in (0, 1), got {self.rel_dev}")
        if not self.log_fail > 0.0:
            raise ValueError(f"log_fail (k) must be positive, got {self.log_fail}")
        if self.sidedness not in SIDEDNESS:
            raise ValueError(f"sidedness must be one of {SIDEDNESS}, got {self.sidedness!r}")
        if not self.constant > 0.0:
            raise ValueError(f"Chernoff constant must be positive, got {self.constant}")

    @property
    def exponent(self) -> float:
        """``k`` plus ``ln 2`` when both tails are bounded together."""
        return self.log_fail + (math.log(2.0) if self.sidedness == TWO_SIDED else 0.0)


@dataclass(frozen=True)
class FeasibilityReport:
    required_N: float
    expected_darks: float
    expected_signal: float
    dark_margin: float
    production_seconds: float
    production_days: float
    max_days: Optional[float] = None
    feasible: Optional[bool] = None


@dataclass(frozen=True)
class SignalDarkComparison:
    expected_signal: float
    expected_darks: float
    ratio: float


def tail_bound(m: float, deviation: float, spec: ConfidenceSpec) -> float:
    """Chernoff upper bound on ``P(|X - m| >= deviation)``."""
    sides = 2.0 if spec.sidedness == TWO_SIDED else 1.0
    return min(1.0, sides * math.exp(-deviation**2 / (spec.constant * m)))


def required_dark_mean(spec: ConfidenceSpec) -> float:
    return spec.constant * spec.exponent / spec.rel_dev**2


def required_pulses(s0: float, mu_v: float, spec: ConfidenceSpec) -> float:
    """Smallest N whose expected dark count meets ``spec`` under the Chernoff bound."""
    if not s0 > 0.0:
        raise ValueError(f"s0 must be positive, got {s0}")
    return required_dark_mean(spec) / (s0 * math.exp(-mu_v))


def fluctuation_margin(n: float, s0: float, mu_v: float, spec: ConfidenceSpec) -> float:
    """Absolute dark-count deviation exceeded with probability at most ``exp(-k)``."""
    m = n * s0 * math.exp(-mu_v)
    return math.sqrt(spec.constant * m * spec.exponent)


def signal_vs_dark_comparison(params: ChannelParams, set_v: PulseSet) -> SignalDarkComparison:
    signal = set_v.count * click_probability(set_v.mu, params, include_dark=False)
    darks = expected_dark_counts(set_v, params.s0)
    ratio = darks / signal if signal > 0.0 else math.inf
    return SignalDarkComparison(expected_signal=signal, expected_darks=darks, ratio=ratio)


def signal_limited_rel_dev(
    params: ChannelParams, mu_v: float, separation: float = DEFAULT_SEPARATION
) -> float:
    """Relative dark deviation that keeps the dark margin ``separation`` times below the signal.

    At ``eta = mu_v = 1e-4`` and ``s0 = 1e-6`` this is about 1e-3. Where darks
    are already subdominant the value is capped at ``MAX_DERIVED_REL_DEV``.
    """
    if not params.s0 > 0.0:
        raise ValueError("a signal-limited deviation needs s0 > 0")
    signal_rate = click_probability(mu_v, params, include_dark=False)
    dark_rate = params.s0 * math.exp(-mu_v)
    return min(signal_rate / (separation * dark_rate), MAX_DERIVED_REL_DEV)


def production_time(n: float, rep_rate: float) -> tuple[float, float]:
    """Seconds and days needed to emit ``n`` pulses at ``rep_rate`` per second."""
    if not rep_rate > 0.0:
        raise ValueError(f"rep_rate must be positive, got {rep_rate}")
    seconds = n / rep_rate
    return seconds, seconds / SECONDS_PER_DAY


def feasibility(
    params: ChannelParams,
    mu_v: float,
    spec: ConfidenceSpec,
    rep_rate: float,
    max_days: Optional[float] = None,
) -> FeasibilityReport:
    n = required_pulses(params.s0, mu_v, spec)
    darks = n * params.s0 * math.exp(-mu_v)
    signal = n * click_probability(mu_v, params, include_dark=False)
    seconds, days = production_time(n, rep_rate)
    return FeasibilityReport(
        required_N=n,
        expected_darks=darks,
        expected_signal=signal,
        dark_margin=spec.rel_dev * darks,
        production_seconds=seconds,
        production_days=days,
        max_days=max_days,
        feasible=None if max_days is None else days <= max_days,
    )
