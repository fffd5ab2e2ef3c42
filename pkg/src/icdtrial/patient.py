"""Virtual-patient construction: parameter sampling and rhythm-mode switching.

A patient is a vector of physiological parameters sampled independently from
truncated normal distributions. Two mode-switch automata (atrial and
ventricular) dwell exponentially in each rhythm mode and, on every mode
entry, rewrite the heart-model variables in place and announce the new mode
on a ground-truth channel (``mode_a`` / ``mode_v``) that devices never see.
Both switches jump back to sinus rhythm when Therapy is delivered.

The population table below is a documented reconstruction: the source
literature for the published distribution values is not reproduced here, so
every entry is overridable through a population spec file
(``name mean std lo hi`` per line).
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from typing import Mapping

from .errors import ConfigError
from .heart import (
    MODE_A,
    MODE_V,
    HeartModel,
    MorphologyChannel,
    NodeParameters,
    PathParameters,
    THERAPY,
    build_heart,
)
from .sta import Automaton, Edge, Emit, Location, Network, Receive

ATRIAL_MODES = ("NSR_A", "AT")
VENTRICULAR_MODES = ("NSR_V", "VT")


@dataclass(frozen=True)
class RhythmMode:
    """One combined patient condition; the two chambers switch independently."""

    atrial: str = "NSR_A"
    ventricular: str = "NSR_V"

    def __post_init__(self):
        if self.atrial not in ATRIAL_MODES:
            raise ValueError(f"unknown atrial mode {self.atrial!r}")
        if self.ventricular not in VENTRICULAR_MODES:
            raise ValueError(f"unknown ventricular mode {self.ventricular!r}")


@dataclass(frozen=True)
class ModeSwitchSpec:
    """Exponential dwell rates (1/ms) and successor weights per mode."""

    dwell_rate: Mapping[str, float]
    transition_weights: Mapping[str, Mapping[str, float]]

    def __post_init__(self):
        for mode, rate in self.dwell_rate.items():
            if rate <= 0:
                raise ValueError(f"mode {mode!r}: dwell rate must be > 0")
            weights = self.transition_weights.get(mode)
            if not weights:
                raise ValueError(f"mode {mode!r}: needs at least one successor")
            if any(w <= 0 for w in weights.values()):
                raise ValueError(f"mode {mode!r}: successor weights must be > 0")


@dataclass(frozen=True)
class ParamSpec:
    mean: float
    std: float
    lo: float
    hi: float


#: Sampled per patient. Shared by both trial arms of one iteration.
DEFAULT_POPULATION: dict[str, ParamSpec] = {
    # atrial node, per atrial mode (ms)
    "nsr_a_cycle_min": ParamSpec(800.0, 40.0, 600.0, 1000.0),
    "nsr_a_cycle_max": ParamSpec(1200.0, 40.0, 1000.0, 1500.0),
    "nsr_a_erp": ParamSpec(250.0, 20.0, 150.0, 350.0),
    "at_cycle_min": ParamSpec(320.0, 25.0, 240.0, 450.0),
    "at_cycle_max": ParamSpec(380.0, 25.0, 260.0, 500.0),
    "at_a_erp": ParamSpec(190.0, 15.0, 120.0, 230.0),
    # AV conduction, per atrial mode (ms); av_erp lower bound stays above
    # delay_max upper bound so a conduction always finishes before the next
    # forwarded impulse
    "nsr_av_delay_min": ParamSpec(150.0, 10.0, 100.0, 220.0),
    "nsr_av_delay_max": ParamSpec(170.0, 10.0, 110.0, 240.0),
    "nsr_av_erp": ParamSpec(300.0, 20.0, 250.0, 400.0),
    "at_av_delay_min": ParamSpec(160.0, 10.0, 100.0, 220.0),
    "at_av_delay_max": ParamSpec(180.0, 10.0, 110.0, 240.0),
    "at_av_erp": ParamSpec(280.0, 20.0, 250.0, 380.0),
    # ventricular node, per ventricular mode (ms)
    "vt_cycle_min": ParamSpec(300.0, 20.0, 220.0, 380.0),
    "vt_cycle_max": ParamSpec(340.0, 20.0, 240.0, 420.0),
    "vt_v_erp": ParamSpec(180.0, 10.0, 120.0, 219.0),
    "nsr_v_cycle_min": ParamSpec(1400.0, 60.0, 1000.0, 2000.0),
    "nsr_v_cycle_max": ParamSpec(1600.0, 60.0, 1100.0, 2200.0),
    "nsr_v_erp": ParamSpec(250.0, 20.0, 150.0, 350.0),
    # shock-channel morphology verdict
    "morph_sensitivity": ParamSpec(0.95, 0.02, 0.85, 1.0),
    "morph_one_minus_specificity": ParamSpec(0.05, 0.02, 0.0, 0.15),
    # mode dwell means (ms); sinus dwell deliberately short so that several
    # tachycardia episodes fall inside one simulation bound
    "nsr_a_dwell_mean": ParamSpec(30000.0, 3000.0, 10000.0, 60000.0),
    "at_dwell_mean": ParamSpec(20000.0, 2000.0, 8000.0, 40000.0),
    "nsr_v_dwell_mean": ParamSpec(30000.0, 3000.0, 10000.0, 60000.0),
    "vt_dwell_mean": ParamSpec(15000.0, 1500.0, 6000.0, 30000.0),
}

# (min, max) pairs re-sorted after independent sampling.
_ORDERED_PAIRS = (
    ("nsr_a_cycle_min", "nsr_a_cycle_max"),
    ("at_cycle_min", "at_cycle_max"),
    ("vt_cycle_min", "vt_cycle_max"),
    ("nsr_v_cycle_min", "nsr_v_cycle_max"),
    ("nsr_av_delay_min", "nsr_av_delay_max"),
    ("at_av_delay_min", "at_av_delay_max"),
)

_REJECTION_CAP = 10_000


@dataclass(frozen=True)
class PatientParameters:
    """One sampled parameter vector; the unit of pairing between arms."""

    values: Mapping[str, float]

    def digest(self) -> str:
        blob = json.dumps({k: repr(v) for k, v in sorted(self.values.items())})
        return hashlib.sha256(blob.encode()).hexdigest()

    def atrial_node(self, mode: str = "NSR_A") -> NodeParameters:
        p = "nsr_a" if mode == "NSR_A" else "at"
        return NodeParameters(self.values[f"{p}_cycle_min"],
                              self.values[f"{p}_cycle_max"],
                              self.values[f"{p}_a_erp" if p == "at" else "nsr_a_erp"])

    def ventricular_node(self, mode: str = "NSR_V") -> NodeParameters:
        p = "nsr_v" if mode == "NSR_V" else "vt"
        erp_key = "nsr_v_erp" if mode == "NSR_V" else "vt_v_erp"
        return NodeParameters(self.values[f"{p}_cycle_min"],
                              self.values[f"{p}_cycle_max"],
                              self.values[erp_key])

    def av_path(self, mode: str = "NSR_A") -> PathParameters:
        p = "nsr" if mode == "NSR_A" else "at"
        return PathParameters(self.values[f"{p}_av_delay_min"],
                              self.values[f"{p}_av_delay_max"],
                              self.values[f"{p}_av_erp"])

    def morphology(self) -> MorphologyChannel:
        return MorphologyChannel(self.values["morph_sensitivity"],
                                 self.values["morph_one_minus_specificity"])

    def dwell_mean(self, mode: str) -> float:
        key = {"NSR_A": "nsr_a_dwell_mean", "AT": "at_dwell_mean",
               "NSR_V": "nsr_v_dwell_mean", "VT": "vt_dwell_mean"}[mode]
        return self.values[key]


def sample_patient(population: Mapping[str, ParamSpec],
                   rng: random.Random) -> PatientParameters:
    """Draw one parameter vector.

    Each parameter is drawn from Normal(mean, std) truncated to [lo, hi] by
    rejection; (min, max) pairs are re-sorted afterwards if sampling
    inverted them. Deterministic given the RNG state.
    """
    values: dict[str, float] = {}
    for name, spec in population.items():
        if spec.lo > spec.hi:
            raise ConfigError(f"parameter {name!r}: empty truncation interval "
                              f"[{spec.lo}, {spec.hi}]")
        if spec.std == 0.0:
            if not spec.lo <= spec.mean <= spec.hi:
                raise ConfigError(f"parameter {name!r}: degenerate mean "
                                  f"{spec.mean} outside [{spec.lo}, {spec.hi}]")
            values[name] = spec.mean
            continue
        for _ in range(_REJECTION_CAP):
            v = rng.gauss(spec.mean, spec.std)
            if spec.lo <= v <= spec.hi:
                values[name] = v
                break
        else:
            raise ConfigError(f"parameter {name!r}: truncation interval "
                              f"[{spec.lo}, {spec.hi}] carries almost no mass")
    for lo_name, hi_name in _ORDERED_PAIRS:
        if lo_name in values and hi_name in values \
                and values[lo_name] > values[hi_name]:
            values[lo_name], values[hi_name] = values[hi_name], values[lo_name]
    return PatientParameters(values)


def load_population_file(path) -> dict[str, ParamSpec]:
    """Merge a population spec file over the default table.

    Format: one ``name mean std lo hi`` per line, ``#`` comments. Unknown
    parameter names are rejected.
    """
    table = dict(DEFAULT_POPULATION)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 5:
                raise ConfigError(f"{path}:{lineno}: expected "
                                  "'name mean std lo hi'")
            name = fields[0]
            if name not in table:
                raise ConfigError(f"{path}:{lineno}: unknown parameter {name!r}")
            try:
                mean, std, lo, hi = (float(x) for x in fields[1:])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
            if std < 0:
                raise ConfigError(f"{path}:{lineno}: std must be >= 0")
            table[name] = ParamSpec(mean, std, lo, hi)
    return table


def _atrial_updates(params: PatientParameters, mode: str):
    node = params.atrial_node(mode)
    path = params.av_path(mode)
    return (
        ("a_cycle_min", node.cycle_min),
        ("a_cycle_max", node.cycle_max),
        ("a_erp", node.erp),
        ("av_delay_min", path.delay_min),
        ("av_delay_max", path.delay_max),
        ("av_erp", path.av_erp),
    )


def _ventricular_updates(params: PatientParameters, mode: str,
                         ventricular_escape: bool):
    node = params.ventricular_node(mode)
    intrinsic = 1.0 if (mode == "VT" or ventricular_escape) else 0.0
    return (
        ("v_cycle_min", node.cycle_min),
        ("v_cycle_max", node.cycle_max),
        ("v_erp", node.erp),
        ("v_intrinsic_on", intrinsic),
    )


def _build_switch(name: str, channel: str, spec: ModeSwitchSpec,
                  initial_mode: str, nsr_mode: str,
                  entry: Mapping[str, tuple], clock_resets: tuple[str, ...]
                  ) -> Automaton:
    """Generic two-layer switch: entering mode m passes through an urgent
    ``announce_m`` location whose exit edge emits the ground-truth mode
    event and rewrites the heart variables."""
    locations = []
    edges = []
    for mode, rate in spec.dwell_rate.items():
        locations.append(Location(f"announce_{mode}"))
        locations.append(Location(mode, exit_rate=rate))
        edges.append(Edge(f"announce_{mode}", mode,
                          sync=Emit(channel, {"mode": mode}),
                          updates=entry[mode], resets=clock_resets))
        for successor, weight in spec.transition_weights[mode].items():
            edges.append(Edge(mode, f"announce_{successor}", weight=weight))
    for loc in locations:
        edges.append(Edge(loc.name, f"announce_{nsr_mode}", sync=Receive(THERAPY)))
    return Automaton(name, locations, edges, initial=f"announce_{initial_mode}")


def atrial_switch_spec(params: PatientParameters) -> ModeSwitchSpec:
    return ModeSwitchSpec(
        dwell_rate={"NSR_A": 1.0 / params.dwell_mean("NSR_A"),
                    "AT": 1.0 / params.dwell_mean("AT")},
        transition_weights={"NSR_A": {"AT": 1.0}, "AT": {"NSR_A": 1.0}},
    )


def ventricular_switch_spec(params: PatientParameters) -> ModeSwitchSpec:
    return ModeSwitchSpec(
        dwell_rate={"NSR_V": 1.0 / params.dwell_mean("NSR_V"),
                    "VT": 1.0 / params.dwell_mean("VT")},
        transition_weights={"NSR_V": {"VT": 1.0}, "VT": {"NSR_V": 1.0}},
    )


def build_mode_switches(params: PatientParameters, *,
                        ventricular_escape: bool = False
                        ) -> tuple[Automaton, Automaton]:
    """The HA/HV mode-switch automata for one patient."""
    ha_switch = _build_switch(
        "HA_Switch", MODE_A, atrial_switch_spec(params),
        initial_mode="NSR_A", nsr_mode="NSR_A",
        entry={m: _atrial_updates(params, m) for m in ATRIAL_MODES},
        clock_resets=("ax",),
    )
    hv_switch = _build_switch(
        "HV_Switch", MODE_V, ventricular_switch_spec(params),
        initial_mode="NSR_V", nsr_mode="NSR_V",
        entry={m: _ventricular_updates(params, m, ventricular_escape)
               for m in VENTRICULAR_MODES},
        clock_resets=("vx",),
    )
    return ha_switch, hv_switch


def build_patient_network(params: PatientParameters, *,
                          ventricular_escape: bool = False,
                          record=None) -> Network:
    """Heart plus mode switches, ready to attach a device to."""
    heart: HeartModel = build_heart(
        params.atrial_node("NSR_A"), params.ventricular_node("NSR_V"),
        params.av_path("NSR_A"), params.morphology(),
        intrinsic_ventricular=ventricular_escape,
    )
    ha_switch, hv_switch = build_mode_switches(
        params, ventricular_escape=ventricular_escape)
    return Network(heart.automata + [ha_switch, hv_switch],
                   variables=heart.variables, clock_init=heart.clock_init,
                   record=record)


def duplicate_for_arms(params: PatientParameters, *, record=None
                       ) -> tuple[Network, Network]:
    """Two independent networks built from the identical parameter vector.

    The arms share parameters, not random streams: each network is run with
    its own seed, so the two virtual patients are stochastically independent
    given the same physiology.
    """
    return (build_patient_network(params, record=record),
            build_patient_network(params, record=record))
