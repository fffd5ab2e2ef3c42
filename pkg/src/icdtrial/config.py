"""Trial configuration: file format, validation, defaults, echo.

A trial spec is plain ``key = value`` text, one pair per line, ``#``
comments. Unknown and duplicate keys are rejected with their line number.
Device parameters take a ``gdt.`` / ``mdt.`` prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .devices import DetectionConfig, GDT_DEFAULT, MDT_DEFAULT
from .errors import ConfigError
from .sprt import SprtConfig

_DEVICE_FIELDS = {
    "vt_interval_threshold": float,
    "svt_upper_interval": float,
    "detection_window": int,
    "detection_count": int,
    "duration_ms": float,
    "stability_ms": float,
    "morphology_vote": "vote",
}

_TOP_FIELDS = {
    "trial_id": int,
    "seed": int,
    "time_bound_ms": float,
    "alpha": float,
    "beta": float,
    "delta": float,
    "max_iterations": int,
    "cohort_n": int,
    "out_dir": str,
    "trace": "bool",
    "population_file": str,
    "persistence_ms": float,
    "lookback_ms": float,
    "synthetic": "pair",
}


@dataclass(frozen=True)
class TrialSpec:
    trial_id: int
    seed: int = 0
    time_bound_ms: float = 1_000_000.0
    alpha: float = 0.05
    beta: float = 0.05
    delta: float = 0.05
    max_iterations: int = 100_000
    cohort_n: int | None = None
    out_dir: str = "results"
    trace: bool = False
    population_file: str | None = None
    persistence_ms: float = 1000.0
    lookback_ms: float = 3000.0
    synthetic: tuple[float, float] | None = None
    gdt: DetectionConfig = field(default_factory=lambda: GDT_DEFAULT)
    mdt: DetectionConfig = field(default_factory=lambda: MDT_DEFAULT)

    def validate(self) -> None:
        if self.trial_id not in (1, 2, 3, 4):
            raise ConfigError("trial_id must be 1, 2, 3 or 4")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.time_bound_ms <= 0:
            raise ConfigError("time_bound_ms must be > 0")
        if not 0 < self.alpha < 0.5:
            raise ConfigError("alpha must lie in (0, 0.5)")
        if not 0 < self.beta < 0.5:
            raise ConfigError("beta must lie in (0, 0.5)")
        if not 0 < self.delta < 0.5:
            raise ConfigError("delta must lie in (0, 0.5)")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.trial_id in (3, 4):
            if self.cohort_n is None:
                raise ConfigError(
                    f"trial {self.trial_id} requires cohort_n (>= 1)")
            if self.cohort_n < 1:
                raise ConfigError("cohort_n must be >= 1")
        if self.persistence_ms <= 0 or self.lookback_ms <= 0:
            raise ConfigError("persistence_ms and lookback_ms must be > 0")
        if self.synthetic is not None:
            p1, p2 = self.synthetic
            if not (0.0 <= p1 <= 1.0 and 0.0 <= p2 <= 1.0):
                raise ConfigError("synthetic probabilities must lie in [0, 1]")

    def sprt_config(self) -> SprtConfig:
        return SprtConfig(alpha=self.alpha, beta=self.beta, delta=self.delta,
                          max_iterations=self.max_iterations)

    def render(self) -> str:
        """Echo the fully resolved configuration; feeding this text back as a
        config file reproduces the run byte for byte."""
        lines = [
            f"trial_id = {self.trial_id}",
            f"seed = {self.seed}",
            f"time_bound_ms = {self.time_bound_ms!r}",
            f"alpha = {self.alpha!r}",
            f"beta = {self.beta!r}",
            f"delta = {self.delta!r}",
            f"max_iterations = {self.max_iterations}",
        ]
        if self.cohort_n is not None:
            lines.append(f"cohort_n = {self.cohort_n}")
        lines.append(f"out_dir = {self.out_dir}")
        lines.append(f"trace = {'true' if self.trace else 'false'}")
        if self.population_file is not None:
            lines.append(f"population_file = {self.population_file}")
        lines.append(f"persistence_ms = {self.persistence_ms!r}")
        lines.append(f"lookback_ms = {self.lookback_ms!r}")
        if self.synthetic is not None:
            lines.append(f"synthetic = {self.synthetic[0]!r},{self.synthetic[1]!r}")
        for prefix, cfg in (("gdt", self.gdt), ("mdt", self.mdt)):
            lines.append(f"{prefix}.vt_interval_threshold = {cfg.vt_interval_threshold!r}")
            lines.append(f"{prefix}.svt_upper_interval = {cfg.svt_upper_interval!r}")
            lines.append(f"{prefix}.detection_window = {cfg.detection_window}")
            lines.append(f"{prefix}.detection_count = {cfg.detection_count}")
            lines.append(f"{prefix}.duration_ms = {cfg.duration_ms!r}")
            lines.append(f"{prefix}.stability_ms = {cfg.stability_ms!r}")
            lines.append(f"{prefix}.morphology_vote = "
                         f"{cfg.morphology_vote[0]},{cfg.morphology_vote[1]}")
        return "\n".join(lines) + "\n"


def _coerce(key: str, kind, raw: str, lineno: int):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "pair":
            parts = raw.split(",")
            if len(parts) != 2:
                raise ValueError("expected 'p1,p2'")
            return (float(parts[0]), float(parts[1]))
        if kind == "vote":
            parts = raw.split(",")
            if len(parts) != 2:
                raise ValueError("expected 'x,y'")
            return (int(parts[0]), int(parts[1]))
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: key {key!r}: {exc}") from None
    raise AssertionError(f"unhandled kind {kind!r}")


def parse_trial_spec(path) -> TrialSpec:
    """Parse and fully validate a trial spec file."""
    top: dict[str, object] = {}
    device: dict[str, dict[str, object]] = {"gdt": {}, "mdt": {}}
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not value:
                raise ConfigError(f"line {lineno}: key {key!r} has no value")
            if key in seen:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            seen.add(key)
            if "." in key:
                prefix, _, fname = key.partition(".")
                if prefix not in device or fname not in _DEVICE_FIELDS:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                device[prefix][fname] = _coerce(key, _DEVICE_FIELDS[fname],
                                                value, lineno)
            else:
                if key not in _TOP_FIELDS:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                top[key] = _coerce(key, _TOP_FIELDS[key], value, lineno)

    if "trial_id" not in top:
        raise ConfigError("missing required key 'trial_id'")
    try:
        gdt = replace(GDT_DEFAULT, **device["gdt"])
        mdt = replace(MDT_DEFAULT, **device["mdt"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spec = TrialSpec(gdt=gdt, mdt=mdt, **top)
    spec.validate()
    return spec


def apply_overrides(spec: TrialSpec, **overrides) -> TrialSpec:
    """CLI-flag overrides on top of a parsed spec; re-validates."""
    clean = {k: v for k, v in overrides.items() if v is not None}
    new = replace(spec, **clean)
    new.validate()
    return new
