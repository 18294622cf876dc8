"""Expected counting statistics of pulse sets through a lossy channel with dark counts.

Two dark-count conventions coexist here. ``fock_yield`` and
``click_probability(include_dark=True)`` use the OR model: a pulse clicks if a
photon is detected or the detector fires spuriously. ``expected_dark_counts``
follows the bookkeeping of the weak-decoy argument and attributes darks only to
the vacuum component of a set. The gap between them is of order
``s0 * (1 - exp(-eta*mu))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .photon_stats import check_intensity, poisson_pmf, truncation_cutoff

#: distance labels only, there is no fiber-loss model behind them
DISTANCE_LABELS = {1e-4: "120-130 km"}


@dataclass(frozen=True)
class ChannelParams:
    """Overall transmittance ``eta`` and per-pulse dark-count probability ``s0``.

    ``eta`` folds channel, device and detection loss into one number.
    """

    eta: float
    s0: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if not 0.0 <= self.s0 < 1.0:
            raise ValueError(f"s0 must lie in [0, 1), got {self.s0}")

    @property
    def distance_label(self) -> Optional[str]:
        return DISTANCE_LABELS.get(self.eta)


@dataclass(frozen=True)
class PulseSet:
    label: str
    mu: float
    count: int

    def __post_init__(self):
        check_intensity(self.mu)
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"set {self.label!r}: count must be a positive integer, got {self.count}")
        object.__setattr__(self, "count", int(self.count))


@dataclass(frozen=True)
class DecoyScheme:
    vacuum_set: PulseSet
    weak_set: PulseSet
    signal_set: Optional[PulseSet] = None

    def __post_init__(self):
        if self.vacuum_set.mu != 0.0:
            raise ValueError(f"vacuum set must have mu = 0, got {self.vacuum_set.mu}")
        if not self.weak_set.mu > 0.0:
            raise ValueError("weak set must have mu > 0")
        labels = [s.label for s in self.sets]
        if len(set(labels)) != len(labels):
            raise ValueError(f"set labels must be unique, got {labels}")

    @property
    def sets(self) -> list[PulseSet]:
        out = [self.vacuum_set, self.weak_set]
        if self.signal_set is not None:
            out.append(self.signal_set)
        return out


def click_probability(mu: float, params: ChannelParams, include_dark: bool = True) -> float:
    """Probability that a pulse of intensity ``mu`` produces a click."""
    mu = check_intensity(mu)
    if not include_dark:
        return -math.expm1(-params.eta * mu)
    # 1 - (1-s0) e^(-eta mu)
    return -math.expm1(math.log1p(-params.s0) - params.eta * mu)


def expected_dark_counts(pulse_set: PulseSet, s0: float) -> float:
    """Dark counts credited to the vacuum part of a set, ``N s0 e^-mu``."""
    return pulse_set.count * s0 * math.exp(-pulse_set.mu)


def fock_yield(n: int, params: ChannelParams) -> float:
    """Click probability given exactly ``n`` photons were sent."""
    if n < 0:
        raise ValueError(f"photon number must be nonnegative, got {n}")
    if params.eta == 1.0:
        return 1.0 if n >= 1 else params.s0
    # 1 - (1-s0)(1-eta)^n via log1p/expm1; stays accurate for tiny eta and s0
    return -math.expm1(math.log1p(-params.s0) + n * math.log1p(-params.eta))


def stratified_expected_counts(pulse_set: PulseSet, params: ChannelParams, tail_tol: float = 1e-15) -> float:
    """Expected clicks summed photon number by photon number."""
    n_max = truncation_cutoff(pulse_set.mu, tail_tol)
    terms = [poisson_pmf(n, pulse_set.mu) * fock_yield(n, params) for n in range(n_max + 1)]
    return pulse_set.count * math.fsum(terms)


def expected_counts(pulse_set: PulseSet, params: ChannelParams) -> tuple[float, float]:
    """Expected total clicks of a set: ``(aggregate, fock_stratified)``.

    Both forms are the same identity; they must agree to 1e-9 relative.
    """
    aggregate = pulse_set.count * click_probability(pulse_set.mu, params, include_dark=True)
    return aggregate, stratified_expected_counts(pulse_set, params)
