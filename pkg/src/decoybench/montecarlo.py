"""Stratified Monte Carlo of decoy sessions and coverage experiments.

Each trial draws from its own Philox stream keyed by ``(seed, trial, crc32(label))``,
so results do not depend on how trials are scheduled across workers.
"""

from __future__ import annotations

import math
import zlib
from functools import lru_cache
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelParams, DecoyScheme, PulseSet, fock_yield
from .estimators import (
    ObservedCounts,
    Truth,
    YieldBound,
    estimate_dark_rate,
    weak_decoy_bound_dark,
)
from .fluctuation import (
    MAX_DERIVED_REL_DEV,
    ConfidenceSpec,
    feasibility,
    signal_limited_rel_dev,
    signal_vs_dark_comparison,
)
from .photon_stats import poisson_pmf, truncation_cutoff

INT64_MAX = 2**63 - 1
TAIL_TOL = 1e-15
SWEEP_AXES = ("eta", "mu_v", "s0", "N", "rel_dev", "k")


@dataclass(frozen=True)
class Scenario:
    params: ChannelParams
    scheme: DecoyScheme
    rep_rate: float
    seed: int
    trials: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.rep_rate > 0:
            raise ValueError(f"rep_rate must be positive, got {self.rep_rate}")


@dataclass(frozen=True)
class TrialOutcome:
    trial: int
    vacuum: ObservedCounts
    weak: ObservedCounts
    s0_hat: float
    bound: YieldBound

    @property
    def violated(self) -> bool:
        return self.bound.n1_lower > self.weak.truth.n1


@dataclass(frozen=True)
class CoverageReport:
    scenario: Scenario
    outcomes: list[TrialOutcome]

    @property
    def violation_rate(self) -> float:
        return sum(o.violated for o in self.outcomes) / len(self.outcomes)

    @property
    def clip_rate(self) -> float:
        return sum(o.bound.clipped for o in self.outcomes) / len(self.outcomes)

    @property
    def relative_errors(self) -> np.ndarray:
        """``(n1_lower - n1) / n1`` per trial; nan where the true n1 is zero."""
        out = np.full(len(self.outcomes), np.nan)
        for i, o in enumerate(self.outcomes):
            n1 = o.weak.truth.n1
            if n1 > 0:
                out[i] = (o.bound.n1_lower - n1) / n1
        return out


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream(seed: int, trial: int, label: str) -> np.random.Generator:
    """Independent counter-based generator for one (seed, trial, set) triple."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, trial, label_key(label)])
    return np.random.Generator(np.random.Philox(ss))


@lru_cache(maxsize=256)
def stratum_probabilities(mu: float, tail_tol: float = TAIL_TOL) -> np.ndarray:
    """Poisson masses up to the cutoff with the leftover tail folded into the top stratum."""
    n_max = truncation_cutoff(mu, tail_tol)
    probs = np.array([poisson_pmf(n, mu) for n in range(n_max + 1)])
    probs[-1] += max(0.0, 1.0 - math.fsum(probs))
    probs.flags.writeable = False
    return probs


def photon_histogram(count: int, probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Multinomial draw via sequential conditional binomials."""
    hist = np.zeros(len(probs), dtype=np.int64)
    remaining = count
    rest = 1.0
    for n, p in enumerate(probs[:-1]):
        if remaining == 0:
            break
        frac = min(1.0, max(0.0, p / rest)) if rest > 0.0 else 1.0
        hist[n] = rng.binomial(remaining, frac)
        remaining -= int(hist[n])
        rest -= p
    hist[-1] += remaining
    return hist


def simulate_set(pulse_set: PulseSet, params: ChannelParams, rng: np.random.Generator) -> ObservedCounts:
    """Exact-in-distribution click count of a set, with its photon-number decomposition."""
    if pulse_set.count > INT64_MAX:
        raise OverflowError(f"set {pulse_set.label!r}: count {pulse_set.count} exceeds 2^63-1")
    hist = photon_histogram(pulse_set.count, stratum_probabilities(pulse_set.mu), rng)
    clicks = [int(rng.binomial(int(nn), fock_yield(n, params))) if nn else 0 for n, nn in enumerate(hist)]
    n0 = clicks[0]
    n1 = clicks[1] if len(clicks) > 1 else 0
    nm = sum(clicks[2:])
    return ObservedCounts(pulse_set.label, n0 + n1 + nm, Truth(n0, n1, nm))


def run_trial(scenario: Scenario, trial: int) -> TrialOutcome:
    scheme = scenario.scheme
    vac = simulate_set(scheme.vacuum_set, scenario.params, stream(scenario.seed, trial, scheme.vacuum_set.label))
    weak = simulate_set(scheme.weak_set, scenario.params, stream(scenario.seed, trial, scheme.weak_set.label))
    s0_hat = estimate_dark_rate(vac, scheme.vacuum_set)
    bound = weak_decoy_bound_dark(weak, scheme.weak_set, s0_hat)
    return TrialOutcome(trial=trial, vacuum=vac, weak=weak, s0_hat=s0_hat, bound=bound)


def run_coverage(scenario: Scenario, workers: int = 1) -> CoverageReport:
    """Simulate every trial, estimate darks from the vacuum set, bound n1 on the weak set."""
    trials = range(scenario.trials)
    if workers <= 1:
        outcomes = [run_trial(scenario, t) for t in trials]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda t: run_trial(scenario, t), trials))
    outcomes.sort(key=lambda o: o.trial)
    return CoverageReport(scenario=scenario, outcomes=outcomes)


def simulate_scheme(scenario: Scenario, workers: int = 1) -> list[list[ObservedCounts]]:
    """Per trial, the observed counts of every set in the scheme."""

    def one(trial: int) -> list[ObservedCounts]:
        return [
            simulate_set(s, scenario.params, stream(scenario.seed, trial, s.label))
            for s in scenario.scheme.sets
        ]

    if workers <= 1:
        return [one(t) for t in range(scenario.trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(scenario.trials)))


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    expected_darks: float
    expected_signal: float
    rel_dev: float
    required_N: float
    production_days: float
    violation_rate: float
    clip_rate: float


def apply_axis(
    scenario: Scenario, spec: Optional[ConfidenceSpec], axis: str, value: float
) -> tuple[Scenario, Optional[ConfidenceSpec]]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    scheme = scenario.scheme
    if axis == "eta":
        return replace(scenario, params=replace(scenario.params, eta=value)), spec
    if axis == "s0":
        return replace(scenario, params=replace(scenario.params, s0=value)), spec
    if axis == "mu_v":
        return replace(scenario, scheme=replace(scheme, weak_set=replace(scheme.weak_set, mu=value))), spec
    if axis == "N":
        count = int(value)
        scheme = replace(
            scheme,
            vacuum_set=replace(scheme.vacuum_set, count=count),
            weak_set=replace(scheme.weak_set, count=count),
        )
        return replace(scenario, scheme=scheme), spec
    if spec is None:
        raise ValueError(f"sweeping {axis!r} needs a confidence spec")
    if axis == "rel_dev":
        return scenario, replace(spec, rel_dev=value)
    return scenario, replace(spec, log_fail=value)


def sweep_point(
    scenario: Scenario,
    spec: Optional[ConfidenceSpec],
    axis: str,
    value: float,
    workers: int = 1,
    derive_rel_dev: bool = False,
) -> SweepRow:
    """One sweep row.

    With ``derive_rel_dev`` (or no ``spec``) the relative deviation is re-derived
    at every point from that point's signal-to-dark ratio.
    """
    if spec is None:
        spec, derive_rel_dev = ConfidenceSpec(rel_dev=MAX_DERIVED_REL_DEV, log_fail=25.0), True
    point, point_spec = apply_axis(scenario, spec, axis, value)
    weak = point.scheme.weak_set
    if derive_rel_dev:
        point_spec = replace(point_spec, rel_dev=signal_limited_rel_dev(point.params, weak.mu))
    feas = feasibility(point.params, weak.mu, point_spec, point.rep_rate)
    cmp = signal_vs_dark_comparison(point.params, weak)
    cov = run_coverage(point, workers=workers)
    return SweepRow(
        axis=axis,
        value=value,
        expected_darks=cmp.expected_darks,
        expected_signal=cmp.expected_signal,
        rel_dev=point_spec.rel_dev,
        required_N=feas.required_N,
        production_days=feas.production_days,
        violation_rate=cov.violation_rate,
        clip_rate=cov.clip_rate,
    )


def sweep(
    scenario: Scenario,
    spec: Optional[ConfidenceSpec],
    axis: str,
    values: Sequence[float],
    workers: int = 1,
    derive_rel_dev: bool = False,
) -> list[SweepRow]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    if derive_rel_dev and axis == "rel_dev":
        raise ValueError("cannot sweep rel_dev while deriving it from the signal")
    return [
        sweep_point(scenario, spec, axis, v, workers=workers, derive_rel_dev=derive_rel_dev)
        for v in values
    ]
