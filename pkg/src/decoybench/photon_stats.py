"""Poisson photon-number statistics of weak coherent pulses."""

from __future__ import annotations

import math

MU_MAX = 100.0
TRUNCATION_CAP = 50
SERIES_THRESHOLD = 1e-4


class TruncationError(ValueError):
    """Raised when the Poisson tail cannot be cut below tolerance within the cap."""


def check_intensity(mu: float) -> float:
    mu = float(mu)
    if not (mu >= 0.0) or mu > MU_MAX:
        raise ValueError(f"intensity must lie in [0, {MU_MAX}], got {mu}")
    return mu


def poisson_pmf(n: int, mu: float) -> float:
    """Probability of ``n`` photons in a coherent pulse of mean ``mu``.

    The factorial is evaluated through ``lgamma`` so large ``n`` cannot overflow.
    """
    if n < 0:
        raise ValueError(f"photon number must be nonnegative, got {n}")
    mu = check_intensity(mu)
    if mu == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(mu) - mu - math.lgamma(n + 1))


def vacuum_fraction(mu: float) -> float:
    return math.exp(-check_intensity(mu))


def single_photon_fraction(mu: float) -> float:
    mu = check_intensity(mu)
    return mu * math.exp(-mu)


def multi_photon_fraction(mu: float) -> float:
    """Probability of two or more photons, ``1 - e^-mu - mu e^-mu``.

    Below ``SERIES_THRESHOLD`` the closed form cancels catastrophically, so the
    alternating series ``mu^2/2 - mu^3/3 + mu^4/8 - ...`` is summed instead.
    """
    mu = check_intensity(mu)
    if mu == 0.0:
        return 0.0
    if mu < SERIES_THRESHOLD:
        # sum_{n>=2} mu^n/n! times e^-mu, expanded: term_j = (-1)^j (j+1) mu^(j+2) / (j+2)!
        total = 0.0
        for j in range(6):
            total += (-1) ** j * (j + 1) * mu ** (j + 2) / math.factorial(j + 2)
        return total
    return -math.expm1(-mu) - mu * math.exp(-mu)


def truncation_cutoff(mu: float, tail_tol: float) -> int:
    """Smallest ``n_max`` whose Poisson tail mass beyond it is below ``tail_tol``."""
    if not 0.0 < tail_tol < 1.0:
        raise ValueError(f"tail_tol must lie in (0, 1), got {tail_tol}")
    mu = check_intensity(mu)
    if mu == 0.0:
        return 0
    # tail beyond n computed by summing forward; avoids 1 - cdf cancellation
    pmfs = [poisson_pmf(n, mu) for n in range(TRUNCATION_CAP + 200)]
    for n_max in range(TRUNCATION_CAP + 1):
        tail = math.fsum(pmfs[n_max + 1:])
        if tail < tail_tol:
            return n_max
    raise TruncationError(
        f"Poisson({mu}) tail exceeds {tail_tol} beyond the cap of {TRUNCATION_CAP}"
    )
