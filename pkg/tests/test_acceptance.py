"""Exit criteria. Each test prints one PASS/FAIL line; run with ``pytest -s`` to see them."""

import math
import time

import numpy as np
import pytest

from decoybench.channel import ChannelParams, DecoyScheme, PulseSet, click_probability
from decoybench.cli import main
from decoybench.estimators import (
    EXACT,
    PAPER_APPROX,
    scheme_validity,
    truncated_yield_solver,
    weak_decoy_bound_nodark,
)
from decoybench.fluctuation import (
    ConfidenceSpec,
    production_time,
    required_pulses,
    signal_vs_dark_comparison,
)
from decoybench.montecarlo import Scenario, run_coverage, simulate_set, stream
from decoybench.photon_stats import poisson_pmf


def report(number, name, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} -- {detail}")
    assert ok, detail


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_01_paper_bound_formula():
    eta = mu_v = 1e-4
    q_v = -math.expm1(-eta * mu_v)
    with Timer() as t:
        approx = weak_decoy_bound_nodark(q_v, mu_v, mode=PAPER_APPROX).s1_lower
        exact = weak_decoy_bound_nodark(q_v, mu_v, mode=EXACT).s1_lower
    ok = (
        approx == pytest.approx(eta - mu_v / 2, rel=1e-12, abs=0)
        and abs(exact - approx) <= 1e-8
        and t.seconds < 1
    )
    report(1, "paper bound formula", ok,
           f"paper_approx={approx:.12g} exact={exact:.12g} |diff|={abs(exact - approx):.3g}")


def test_02_validity_frontier():
    eta = 1e-4
    with Timer() as t:
        ratios = np.linspace(0.5, 2.0, 100)
        mismatches = [r for r in ratios if scheme_validity(eta, r * eta, 0.5).valid != (r * eta <= eta)]
        boundary = scheme_validity(eta, eta, 0.5)
        above = scheme_validity(eta, np.nextafter(eta, 1.0), 0.5)
    ok = not mismatches and boundary.valid and not above.valid and t.seconds < 1
    report(2, "validity frontier mu_v <= eta", ok,
           f"{len(mismatches)} grid mismatches, boundary valid={boundary.valid}, next float valid={above.valid}")


def test_03_required_pulses():
    with Timer() as t:
        n = required_pulses(1e-6, 0.0, ConfidenceSpec(rel_dev=1e-3, log_fail=25.0))
    ok = 1e13 <= n <= 1e15 and t.seconds < 1
    report(3, "required N near 1e14", ok, f"N={n:.3g}")


def test_04_production_time():
    seconds, days = production_time(1e14, 8e7)
    ok = seconds == 1.25e6 and round(days, 2) == 14.47 and days >= 14
    report(4, "production time", ok, f"{seconds:.6g} s = {days:.4f} days")


def test_05_dark_vs_signal_ratio():
    with Timer() as t:
        cmp = signal_vs_dark_comparison(ChannelParams(1e-4, 1e-6), PulseSet("weak", 1e-4, 10**14))
    ok = cmp.ratio >= 100 * 0.95 and t.seconds < 1
    report(5, "darks / signal >= 100", ok, f"ratio={cmp.ratio:.4f}")


def coverage(eta, mu_v, n, trials, seed):
    scheme = DecoyScheme(PulseSet("vacuum", 0.0, n), PulseSet("weak", mu_v, n))
    return run_coverage(Scenario(ChannelParams(eta, 1e-6), scheme, 8e7, seed, trials), workers=4)


def test_06_destruction_experiment():
    with Timer() as t:
        paper = coverage(1e-4, 1e-4, 10**10, 200, 20041104)
        benign = coverage(1e-2, 1e-3, 10**9, 200, 20041104)
    ok = paper.clip_rate > 0.5 and benign.violation_rate <= 0.01 and t.seconds < 300
    report(6, "destruction experiment", ok,
           f"paper clip_rate={paper.clip_rate:.3f} (violation_rate={paper.violation_rate:.3f}); "
           f"benign violation_rate={benign.violation_rate:.3f}; {t.seconds:.1f} s")


def test_07_simulator_vs_analytic():
    rng = np.random.default_rng(7)
    n, trials = 10**7, 5
    failures = []
    with Timer() as t:
        for i in range(20):
            mu = float(rng.uniform(0.0, 1.0))
            eta = float(10 ** rng.uniform(-4, 0))
            s0 = float(10 ** rng.uniform(-7, -3))
            params, pset = ChannelParams(eta, s0), PulseSet("weak", mu, n)
            obs = [simulate_set(pset, params, stream(7, k, f"scenario-{i}")) for k in range(trials)]
            if any(o.truth.n0 + o.truth.n1 + o.truth.nm != o.n_t for o in obs):
                failures.append((i, "truth"))
            q = click_probability(mu, params)
            rate = sum(o.n_t for o in obs) / (n * trials)
            se = math.sqrt(q * (1 - q) / (n * trials))
            if abs(rate - q) > 4 * se:
                failures.append((i, f"{(rate - q) / se:.2f} se"))
    ok = not failures and t.seconds < 60
    report(7, "simulator vs analytic", ok, f"failures={failures}; {t.seconds:.1f} s")


def test_08_solver_oracle():
    with Timer() as t:
        yields = [0.0, 0.5, 0.75]
        mus = [0.0, 0.1, 0.2]
        q = [math.fsum(y * poisson_pmf(k, mu) for k, y in enumerate(yields)) for mu in mus]
        rec = truncated_yield_solver(list(zip(mus, q)), 2)
        conds = [
            truncated_yield_solver([(mu, 0.0) for mu in np.linspace(0, 1, m + 1)], m).condition_number
            for m in range(2, 11)
        ]
    err = float(np.max(np.abs(rec.y - yields)))
    increasing = all(b > a for a, b in zip(conds, conds[1:]))
    ok = err <= 1e-8 and increasing and t.seconds < 1
    report(8, "solver oracle", ok,
           f"max |Y - Y_true|={err:.2g}; cond(2)={conds[0]:.3g} -> cond(10)={conds[-1]:.3g}, increasing={increasing}")


def test_09_determinism(tmp_path, presets, capsys):
    cfg = presets / "paper_120km.cfg"
    outs = {}
    with Timer() as t:
        for name, workers in (("a", 1), ("b", 1), ("threads", 8)):
            outs[name] = tmp_path / f"{name}.csv"
            assert main(["coverage", "--config", str(cfg), "--out", str(outs[name]),
                         "--trials", "50", "--workers", str(workers)]) == 0
    capsys.readouterr()
    data = {k: p.read_bytes() for k, p in outs.items()}
    ok = data["a"] == data["b"] == data["threads"] and t.seconds < 60
    report(9, "determinism", ok,
           f"rerun identical={data['a'] == data['b']}, 1 vs 8 threads identical={data['a'] == data['threads']}")
