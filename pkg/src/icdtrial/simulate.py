"""Per-arm simulation machinery shared by the trial runner and the cohort
builder: build a patient network, couple a device, run to the bound,
adjudicate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .adjudicate import ArmOutcome, adjudicate_arm
from .devices import (
    DetectionConfig,
    GDT_DEFAULT,
    GdtDiscriminator,
    MDT_DEFAULT,
    MdtDiscriminator,
    attach_device,
)
from .heart import INTERFACE_CHANNELS, MODE_A, MODE_V
from .patient import (
    DEFAULT_POPULATION,
    ParamSpec,
    PatientParameters,
    build_patient_network,
    sample_patient,
)
from .rng import derive_seed, stream
from .sta import EventTrace, RunConfig, run


@dataclass
class TrialContext:
    """Everything an iteration needs besides its index."""

    master_seed: int
    time_bound: float = 1_000_000.0
    persistence_ms: float = 1000.0
    lookback_ms: float = 3000.0
    gdt_config: DetectionConfig = field(default_factory=lambda: GDT_DEFAULT)
    mdt_config: DetectionConfig = field(default_factory=lambda: MDT_DEFAULT)
    population: Mapping[str, ParamSpec] = field(
        default_factory=lambda: DEFAULT_POPULATION)
    record_all: bool = False

    def sample_patient_for(self, iteration: int, patient: int = 0
                           ) -> PatientParameters:
        return sample_patient(
            self.population,
            stream(self.master_seed, "iter", iteration, "patient", patient))

    def device_for(self, group: str):
        if group == "GDT":
            return GdtDiscriminator(self.gdt_config)
        return MdtDiscriminator(self.mdt_config)

    def arm_seed(self, iteration: int, patient: int, group: str) -> int:
        return derive_seed(self.master_seed, "iter", iteration,
                           "patient", patient, "arm", group)


def simulate_arm(params: PatientParameters, device, context: TrialContext, *,
                 seed: int, keep_trace: bool = False
                 ) -> ArmOutcome | tuple[ArmOutcome, EventTrace]:
    """Run one closed-loop arm and adjudicate it."""
    record = None if context.record_all else set(INTERFACE_CHANNELS)
    network = build_patient_network(params, record=record)
    attach_device(network, device, name=type(device).__name__)
    # Mode annotations are consumed offline by the adjudicator.
    observers = ((MODE_A, _ignore), (MODE_V, _ignore))
    trace = run(network, RunConfig(seed=seed, time_bound=context.time_bound),
                observers=observers)
    outcome = adjudicate_arm(trace, context.time_bound,
                             persistence_ms=context.persistence_ms,
                             lookback_ms=context.lookback_ms)
    if keep_trace:
        return outcome, trace
    return outcome


def _ignore(_event) -> None:
    return None


def simulate_pair(context: TrialContext, iteration: int, *,
                  keep_traces: bool = False):
    """One paired iteration for trials 1-2: the same patient under both
    devices, independently seeded arms."""
    params = context.sample_patient_for(iteration)
    results = {}
    traces = {}
    for group in ("GDT", "MDT"):
        out = simulate_arm(params, context.device_for(group), context,
                           seed=context.arm_seed(iteration, 0, group),
                           keep_trace=keep_traces)
        if keep_traces:
            results[group], traces[group] = out
        else:
            results[group] = out
    if keep_traces:
        return results["GDT"], results["MDT"], traces
    return results["GDT"], results["MDT"]
