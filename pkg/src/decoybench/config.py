"""Strict INI scenario configuration.

Layout::

    [channel]       eta, s0
    [set.<label>]   mu, count                  (one section per pulse set)
    [confidence]    rel_dev ("auto" allowed), k, sidedness?
    [run]           seed, rep_rate, trials?, max_days?
    [solver]        intensities, n_max?, rates?
    [sweep]         axis, values

Keys marked ``?`` are optional. Anything else is rejected with its line number.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from .channel import ChannelParams, DecoyScheme, PulseSet
from .fluctuation import TWO_SIDED, ConfidenceSpec, signal_limited_rel_dev
from .montecarlo import SWEEP_AXES, Scenario

SET_PREFIX = "set."

REQUIRED = {
    "channel": {"eta", "s0"},
    "set": {"mu", "count"},
    "confidence": {"rel_dev", "k"},
    "run": {"seed", "rep_rate"},
    "solver": {"intensities"},
    "sweep": {"axis", "values"},
}
OPTIONAL = {
    "channel": set(),
    "set": set(),
    "confidence": {"sidedness"},
    "run": {"trials", "max_days"},
    "solver": {"n_max", "rates"},
    "sweep": set(),
}
DEFAULTS = {"sidedness": TWO_SIDED, "trials": 1, "max_days": 1.0}
AUTO = "auto"

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^([^\s=:#;\[][^=:]*?)\s*[=:]")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int
    rep_rate: float
    trials: int = 1
    max_days: float = 1.0


@dataclass(frozen=True)
class SolverConfig:
    intensities: tuple[float, ...]
    n_max: int
    rates: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class SweepConfig:
    axis: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ConfidenceConfig:
    rel_dev: Union[float, str]
    k: float
    sidedness: str = TWO_SIDED

    def resolve(self, params: ChannelParams, mu_v: float) -> ConfidenceSpec:
        rel_dev = signal_limited_rel_dev(params, mu_v) if self.rel_dev == AUTO else self.rel_dev
        return ConfidenceSpec(rel_dev=rel_dev, log_fail=self.k, sidedness=self.sidedness)


@dataclass(frozen=True)
class ScenarioConfig:
    channel: ChannelParams
    sets: tuple[PulseSet, ...]
    confidence: Optional[ConfidenceConfig] = None
    run: Optional[RunConfig] = None
    solver: Optional[SolverConfig] = None
    sweep: Optional[SweepConfig] = None
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    def line_of(self, section: str, key: Optional[str] = None) -> Optional[int]:
        return self.lines.get((section, key))

    def where(self, section: str, key: Optional[str] = None) -> str:
        line = self.line_of(section, key)
        name = f"{section}.{key}" if key else section
        return f"{name} (line {line})" if line else name

    def scheme(self) -> DecoyScheme:
        """Vacuum set (mu = 0), weak set (smallest positive mu), optional signal set."""
        vacuum = [s for s in self.sets if s.mu == 0.0]
        positive = sorted((s for s in self.sets if s.mu > 0.0), key=lambda s: s.mu)
        if len(vacuum) != 1:
            raise ConfigError(f"sets: exactly one vacuum set (mu = 0) required, found {len(vacuum)}")
        if not positive:
            raise ConfigError("sets: a weak set with mu > 0 is required")
        if len(positive) > 2:
            raise ConfigError("sets: at most a weak and a signal set may accompany the vacuum set")
        signal = positive[1] if len(positive) == 2 else None
        return DecoyScheme(vacuum_set=vacuum[0], weak_set=positive[0], signal_set=signal)

    def weak_set(self) -> PulseSet:
        positive = sorted((s for s in self.sets if s.mu > 0.0), key=lambda s: s.mu)
        if not positive:
            raise ConfigError("sets: a weak set with mu > 0 is required")
        return positive[0]

    def confidence_spec(self) -> ConfidenceSpec:
        if self.confidence is None:
            raise ConfigError("confidence: section required for this command")
        try:
            return self.confidence.resolve(self.channel, self.weak_set().mu)
        except ValueError as exc:
            raise ConfigError(f"{self.where('confidence', 'rel_dev')}: {exc}") from exc

    def scenario(self) -> Scenario:
        if self.run is None:
            raise ConfigError("run: section required for this command")
        return Scenario(
            params=self.channel,
            scheme=self.scheme(),
            rep_rate=self.run.rep_rate,
            seed=self.run.seed,
            trials=self.run.trials,
        )

    def with_overrides(self, seed: Optional[int] = None, trials: Optional[int] = None) -> "ScenarioConfig":
        if seed is None and trials is None:
            return self
        if self.run is None:
            raise ConfigError("run: section required to override seed/trials")
        run = self.run
        if seed is not None:
            run = replace(run, seed=seed)
        if trials is not None:
            if trials < 1:
                raise ConfigError(f"--trials must be >= 1, got {trials}")
            run = replace(run, trials=trials)
        return replace(self, run=run)

    def to_dict(self) -> dict:
        out: dict = {"channel": {"eta": self.channel.eta, "s0": self.channel.s0}}
        out["sets"] = [{"label": s.label, "mu": s.mu, "count": s.count} for s in self.sets]
        if self.confidence is not None:
            c = self.confidence
            out["confidence"] = {"rel_dev": c.rel_dev, "k": c.k, "sidedness": c.sidedness}
        if self.run is not None:
            r = self.run
            out["run"] = {"seed": r.seed, "rep_rate": r.rep_rate, "trials": r.trials, "max_days": r.max_days}
        if self.solver is not None:
            s = self.solver
            out["solver"] = {"intensities": list(s.intensities), "n_max": s.n_max}
            if s.rates is not None:
                out["solver"]["rates"] = list(s.rates)
        if self.sweep is not None:
            out["sweep"] = {"axis": self.sweep.axis, "values": list(self.sweep.values)}
        return out

    def to_ini(self) -> str:
        """Fully resolved config text; loading it back yields an equal config."""
        d = self.to_dict()
        lines = []

        def section(name: str, items: dict) -> None:
            lines.append(f"[{name}]")
            for key, value in items.items():
                if isinstance(value, list):
                    value = ", ".join(repr(v) for v in value)
                elif isinstance(value, float):
                    value = repr(value)
                lines.append(f"{key} = {value}")
            lines.append("")

        section("channel", d["channel"])
        for s in d["sets"]:
            section(SET_PREFIX + s["label"], {"mu": s["mu"], "count": s["count"]})
        for name in ("confidence", "run", "solver", "sweep"):
            if name in d:
                section(name, d[name])
        return "\n".join(lines)


def _locate(text: str) -> dict:
    lines: dict = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(raw)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), i)
            continue
        m = _KEY_RE.match(raw)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), i)
    return lines


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, lines: dict):
        self.parser = parser
        self.lines = lines

    def where(self, section: str, key: Optional[str] = None) -> str:
        line = self.lines.get((section, key))
        name = f"{section}.{key}" if key else section
        return f"{name} (line {line})" if line else name

    def fail(self, section: str, key: Optional[str], msg: str) -> ConfigError:
        return ConfigError(f"{self.where(section, key)}: {msg}")

    def raw(self, section: str, key: str) -> Optional[str]:
        return self.parser.get(section, key, fallback=None)

    def number(self, section: str, key: str, default=None) -> Optional[float]:
        raw = self.raw(section, key)
        if raw is None:
            return default
        try:
            value = float(raw)
        except ValueError:
            raise self.fail(section, key, f"expected a number, got {raw!r}") from None
        if not math.isfinite(value):
            raise self.fail(section, key, f"expected a finite number, got {raw!r}")
        return value

    def integer(self, section: str, key: str, default=None) -> Optional[int]:
        raw = self.raw(section, key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            pass
        value = self.number(section, key)
        if value != int(value):
            raise self.fail(section, key, f"expected an integer, got {raw!r}")
        return int(value)

    def numbers(self, section: str, key: str) -> Optional[tuple[float, ...]]:
        raw = self.raw(section, key)
        if raw is None:
            return None
        try:
            values = tuple(float(v) for v in raw.replace(",", " ").split())
        except ValueError:
            raise self.fail(section, key, f"expected a list of numbers, got {raw!r}") from None
        if not values:
            raise self.fail(section, key, "expected at least one value")
        return values

    def check_keys(self, section: str, kind: str) -> None:
        present = set(self.parser.options(section))
        for key in sorted(present - REQUIRED[kind] - OPTIONAL[kind]):
            raise self.fail(section, key, "unknown key")
        for key in sorted(REQUIRED[kind] - present):
            raise self.fail(section, None, f"missing required key {key!r}")


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="\x00defaults")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    lines = _locate(text)
    r = _Reader(parser, lines)

    kinds = {}
    for section in parser.sections():
        if section.startswith(SET_PREFIX):
            if not section[len(SET_PREFIX):]:
                raise r.fail(section, None, "set label must be non-empty")
            kinds[section] = "set"
        elif section in REQUIRED:
            if section == "set":
                raise r.fail(section, None, "set sections are named [set.<label>]")
            kinds[section] = section
        else:
            raise r.fail(section, None, "unknown section")
        r.check_keys(section, kinds[section])

    if "channel" not in kinds:
        raise ConfigError("channel: section required")
    try:
        channel = ChannelParams(eta=r.number("channel", "eta"), s0=r.number("channel", "s0"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise r.fail("channel", None, str(exc)) from None

    sets = []
    for section, kind in kinds.items():
        if kind != "set":
            continue
        try:
            sets.append(
                PulseSet(
                    label=section[len(SET_PREFIX):],
                    mu=r.number(section, "mu"),
                    count=r.integer(section, "count"),
                )
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise r.fail(section, None, str(exc)) from None
    if not sets:
        raise ConfigError("sets: at least one required")

    confidence = None
    if "confidence" in kinds:
        raw = r.raw("confidence", "rel_dev").strip().lower()
        rel_dev: Union[float, str] = AUTO if raw == AUTO else r.number("confidence", "rel_dev")
        confidence = ConfidenceConfig(
            rel_dev=rel_dev,
            k=r.number("confidence", "k"),
            sidedness=r.raw("confidence", "sidedness") or DEFAULTS["sidedness"],
        )
        try:
            # validate everything except an "auto" rel_dev, which resolves later
            ConfidenceSpec(
                rel_dev=0.5 if rel_dev == AUTO else rel_dev,
                log_fail=confidence.k,
                sidedness=confidence.sidedness,
            )
        except ValueError as exc:
            raise r.fail("confidence", None, str(exc)) from None

    run = None
    if "run" in kinds:
        run = RunConfig(
            seed=r.integer("run", "seed"),
            rep_rate=r.number("run", "rep_rate"),
            trials=r.integer("run", "trials", DEFAULTS["trials"]),
            max_days=r.number("run", "max_days", DEFAULTS["max_days"]),
        )
        if not 0 <= run.seed < 2**64:
            raise r.fail("run", "seed", "must be a 64-bit unsigned integer")
        if not run.rep_rate > 0:
            raise r.fail("run", "rep_rate", "must be positive")
        if run.trials < 1:
            raise r.fail("run", "trials", "must be >= 1")
        if not run.max_days > 0:
            raise r.fail("run", "max_days", "must be positive")

    solver = None
    if "solver" in kinds:
        intensities = r.numbers("solver", "intensities")
        n_max = r.integer("solver", "n_max", len(intensities) - 1)
        rates = r.numbers("solver", "rates")
        if n_max < 0:
            raise r.fail("solver", "n_max", "must be nonnegative")
        if rates is not None and len(rates) != len(intensities):
            raise r.fail("solver", "rates", f"expected {len(intensities)} values, got {len(rates)}")
        solver = SolverConfig(intensities=intensities, n_max=n_max, rates=rates)

    sweep = None
    if "sweep" in kinds:
        axis = r.raw("sweep", "axis").strip()
        if axis not in SWEEP_AXES:
            raise r.fail("sweep", "axis", f"unknown axis {axis!r}; expected one of {SWEEP_AXES}")
        sweep = SweepConfig(axis=axis, values=r.numbers("sweep", "values"))

    return ScenarioConfig(
        channel=channel,
        sets=tuple(sets),
        confidence=confidence,
        run=run,
        solver=solver,
        sweep=sweep,
        lines=lines,
    )


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror or exc}") from exc
    return parse_config(text)
