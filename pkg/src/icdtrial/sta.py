"""Stochastic timed-automata network engine with racing semantics.

Each component of a network sits in one location and competes for the next
transition by sampling a delay from its location's regime:

* bounded by an invariant: uniform over the interval of delays at which some
  outgoing edge is enabled,
* unbounded with an exit rate: exponential, shifted by the earliest delay at
  which an edge becomes enabled,
* neither: fire as soon as an edge is enabled (delay 0 when enabled now).

The smallest sampled delay wins (ties broken uniformly among the minimizers
with a dedicated stream), and the winner fires one enabled edge chosen with
probability proportional to edge weight. An emitting edge delivers its
broadcast to every enabled receiver in the same instant; receive edges never
take part in the delay race.

Delays are committed when a component's state is sampled and invalidated
whenever a clock or variable the component reads changes. For uniform and
exponential regimes this is distribution-identical to resampling the race at
every step, and it makes runs cheap: only components whose dependencies
changed are resampled.

Determinism: every component draws from its own stream derived from
(run seed, component name), so a run is a pure function of (network, seed)
and does not depend on the order components were added.

Clocks are real-valued milliseconds. Equality guards compare with absolute
tolerance ``TIME_TOL``.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import DeadComponentError, DeadlockError, EngineError
from .rng import derive_seed

log = logging.getLogger(__name__)

TIME_TOL = 1e-9  # ms; absolute tolerance for clock-guard comparisons

# Consecutive zero-delay firings before we assume a livelock.
_MAX_ZERO_DELAY_STEPS = 100_000

Bound = float | str  # a constant, or the name of a discrete variable


@dataclass(frozen=True)
class ClockAtom:
    """One clock comparison: ``clock <op> bound``."""

    clock: str
    op: str  # 'ge' | 'le' | 'eq' | 'lt' | 'gt'
    bound: Bound


@dataclass(frozen=True)
class VarAtom:
    """One discrete-variable comparison: ``var <op> value``."""

    var: str
    op: str  # 'eq' | 'ne' | 'ge' | 'le' | 'lt' | 'gt'
    value: float


def clock_ge(clock: str, bound: Bound) -> ClockAtom:
    return ClockAtom(clock, "ge", bound)


def clock_le(clock: str, bound: Bound) -> ClockAtom:
    return ClockAtom(clock, "le", bound)


def clock_eq(clock: str, bound: Bound) -> ClockAtom:
    return ClockAtom(clock, "eq", bound)


def clock_lt(clock: str, bound: Bound) -> ClockAtom:
    return ClockAtom(clock, "lt", bound)


def var_eq(var: str, value: float) -> VarAtom:
    return VarAtom(var, "eq", value)


@dataclass(frozen=True)
class Emit:
    channel: str
    payload: Mapping[str, Any] | None = None


@dataclass(frozen=True)
class Receive:
    channel: str


@dataclass(frozen=True)
class Edge:
    """A transition between two locations of one automaton.

    ``guard`` is a conjunction of clock and variable atoms. ``resets`` zero
    the named clocks; ``updates`` assign constants to discrete variables.
    ``weight`` only matters when several edges are enabled simultaneously.
    """

    source: str
    target: str
    guard: tuple[ClockAtom | VarAtom, ...] = ()
    sync: Emit | Receive | None = None
    resets: tuple[str, ...] = ()
    updates: tuple[tuple[str, float], ...] = ()
    weight: float = 1.0

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError(f"edge {self.source}->{self.target}: weight must be > 0")


@dataclass(frozen=True)
class Location:
    """A control location.

    ``invariant`` is a conjunction of upper bounds (``clock <= bound``);
    ``exit_rate`` is the exponential rate (per ms) used when the invariant
    leaves the delay unbounded. A location has at most one delay regime.
    """

    name: str
    invariant: tuple[ClockAtom, ...] = ()
    exit_rate: float | None = None

    def __post_init__(self):
        for atom in self.invariant:
            if atom.op != "le":
                raise ValueError(
                    f"location {self.name!r}: invariants must be upper bounds"
                )
        if self.exit_rate is not None:
            if self.exit_rate <= 0:
                raise ValueError(f"location {self.name!r}: exit_rate must be > 0")
            if self.invariant:
                raise ValueError(
                    f"location {self.name!r}: at most one delay regime "
                    "(invariant or exit rate)"
                )


class Automaton:
    """Static description of one component: locations plus outgoing edges."""

    def __init__(self, name: str, locations: Sequence[Location],
                 edges: Sequence[Edge], initial: str):
        self.name = name
        self.locations = {loc.name: loc for loc in locations}
        if len(self.locations) != len(locations):
            raise ValueError(f"automaton {name!r}: duplicate location names")
        if initial not in self.locations:
            raise ValueError(f"automaton {name!r}: unknown initial location {initial!r}")
        self.initial = initial
        self.edges = list(edges)

        self.delay_edges: dict[str, list[Edge]] = {n: [] for n in self.locations}
        self.receive_edges: dict[tuple[str, str], list[Edge]] = {}
        for e in self.edges:
            if e.source not in self.locations or e.target not in self.locations:
                raise ValueError(f"automaton {name!r}: edge references unknown location")
            if isinstance(e.sync, Receive):
                self.receive_edges.setdefault((e.source, e.sync.channel), []).append(e)
            else:
                self.delay_edges[e.source].append(e)

        # Per-location read sets, used to invalidate committed delays when
        # another component touches something this location depends on.
        self._reads: dict[str, tuple[frozenset[str], frozenset[str]]] = {}
        for loc_name, loc in self.locations.items():
            clocks: set[str] = set()
            variables: set[str] = set()
            atoms: list[ClockAtom | VarAtom] = list(loc.invariant)
            for e in self.delay_edges[loc_name]:
                atoms.extend(e.guard)
            for atom in atoms:
                if isinstance(atom, ClockAtom):
                    clocks.add(atom.clock)
                    if isinstance(atom.bound, str):
                        variables.add(atom.bound)
                else:
                    variables.add(atom.var)
            self._reads[loc_name] = (frozenset(clocks), frozenset(variables))

    def reads(self, location: str) -> tuple[frozenset[str], frozenset[str]]:
        return self._reads[location]


@dataclass(frozen=True)
class RunConfig:
    """Reproducibility contract for one run."""

    seed: int
    time_bound: float  # ms

    def __post_init__(self):
        if self.time_bound < 0:
            raise ValueError("time_bound must be >= 0")


@dataclass(frozen=True)
class TraceEvent:
    time: float
    component: str
    channel: str
    payload: Mapping[str, Any] | None = None


class EventTrace:
    """Timestamped channel events observed during one run."""

    def __init__(self, events: list[TraceEvent], time_bound: float):
        self.events = events
        self.time_bound = time_bound

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def of(self, *channels: str) -> list[TraceEvent]:
        wanted = set(channels)
        return [e for e in self.events if e.channel in wanted]

    def dump_tsv(self, path) -> None:
        """One line per event: ``time_ms  component  channel  payload``.

        Times are written at full precision so offline replays reproduce the
        live stream exactly.
        """
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.events:
                payload = "-" if e.payload is None else json.dumps(
                    dict(e.payload), sort_keys=True, separators=(",", ":"))
                fh.write(f"{e.time!r}\t{e.component}\t{e.channel}\t{payload}\n")


@dataclass
class StepResult:
    elapsed: float
    fired: list[tuple[str, Edge]] = field(default_factory=list)
    emitted: list[str] = field(default_factory=list)


class _Component:
    __slots__ = ("auto", "location", "rng", "fire_at", "dirty")

    def __init__(self, auto: Automaton):
        self.auto = auto
        self.location = auto.initial
        self.rng: random.Random = random.Random()
        self.fire_at = math.inf
        self.dirty = True


def sample_delay(network: "Network", component: str,
                 rng: random.Random | None = None) -> float:
    """Sample the delay after which `component` would fire, in ms.

    ``math.inf`` means the component is passive in its current location (no
    outgoing edge can ever become enabled without outside help). Raises
    :class:`DeadComponentError` when the invariant forces an exit before any
    edge is enabled.
    """
    comp = network._components[component]
    return network._sample_delay(comp, rng or comp.rng)


class Network:
    """A set of automata sharing clocks, discrete variables, and channels."""

    def __init__(self, automata: Sequence[Automaton], *,
                 variables: Mapping[str, float] | None = None,
                 clock_init: Mapping[str, float] | None = None,
                 record: Iterable[str] | None = None):
        names = [a.name for a in automata]
        if len(set(names)) != len(names):
            raise ValueError("duplicate automaton names")
        self._automata = list(automata)
        self._init_vars = dict(variables or {})
        self._clock_init = dict(clock_init or {})
        # None = record every channel.
        self._record = None if record is None else frozenset(record)

        self._components: dict[str, _Component] = {}
        self._order: list[_Component] = []
        self.time = 0.0
        self.vars: dict[str, float] = {}
        self._clock_start: dict[str, float] = {}
        self._observers: dict[str, list[Callable[[TraceEvent], None]]] = {}
        self._trace: list[TraceEvent] = []
        self._pending_inject: list[TraceEvent] = []
        self._tiebreak: random.Random = random.Random()
        self._warned_channels: set[str] = set()
        self._running = False
        self.reset(seed=0)

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int) -> None:
        """Restore initial locations/clocks/variables and reseed all streams."""
        self.time = 0.0
        self.vars = dict(self._init_vars)
        self._clock_start = {}
        for clock, value in self._clock_init.items():
            # Implicit start time so the clock reads `value` at t=0.
            self._clock_start[clock] = -value
        self._components = {}
        self._order = []
        for auto in self._automata:
            comp = _Component(auto)
            comp.rng = random.Random(derive_seed(seed, "component", auto.name))
            self._components[auto.name] = comp
            self._order.append(comp)
        self._tiebreak = random.Random(derive_seed(seed, "tiebreak"))
        self._trace = []
        self._pending_inject = []
        self._warned_channels = set()

    def subscribe(self, channel: str, callback: Callable[[TraceEvent], None]) -> None:
        self._observers.setdefault(channel, []).append(callback)

    def component_location(self, name: str) -> str:
        return self._components[name].location

    def clock_value(self, clock: str) -> float:
        return self.time - self._clock_start.get(clock, 0.0)

    # -- guard evaluation ----------------------------------------------------

    def _bound(self, bound: Bound) -> float:
        if isinstance(bound, str):
            return self.vars[bound]
        return bound

    def _vars_ok(self, edge: Edge) -> bool:
        for atom in edge.guard:
            if isinstance(atom, VarAtom):
                v = self.vars[atom.var]
                if atom.op == "eq" and not v == atom.value:
                    return False
                if atom.op == "ne" and not v != atom.value:
                    return False
                if atom.op == "ge" and not v >= atom.value:
                    return False
                if atom.op == "le" and not v <= atom.value:
                    return False
                if atom.op == "lt" and not v < atom.value:
                    return False
                if atom.op == "gt" and not v > atom.value:
                    return False
        return True

    def _guard_ok_now(self, edge: Edge) -> bool:
        if not self._vars_ok(edge):
            return False
        for atom in edge.guard:
            if isinstance(atom, ClockAtom):
                v = self.clock_value(atom.clock)
                b = self._bound(atom.bound)
                if atom.op == "ge" and not v >= b - TIME_TOL:
                    return False
                if atom.op == "le" and not v <= b + TIME_TOL:
                    return False
                if atom.op == "eq" and not abs(v - b) <= TIME_TOL:
                    return False
                if atom.op == "lt" and not v < b - TIME_TOL:
                    return False
                if atom.op == "gt" and not v > b + TIME_TOL:
                    return False
        return True

    # -- delay sampling ------------------------------------------------------

    def _sample_delay(self, comp: _Component, rng: random.Random) -> float:
        loc = comp.auto.locations[comp.location]
        lo_all = math.inf
        hi_all = -math.inf
        eligible = False
        for edge in comp.auto.delay_edges[comp.location]:
            if not self._vars_ok(edge):
                continue
            lo_e, hi_e = 0.0, math.inf
            for atom in edge.guard:
                if not isinstance(atom, ClockAtom):
                    continue
                offset = self._bound(atom.bound) - self.clock_value(atom.clock)
                if atom.op in ("ge", "gt"):
                    lo_e = max(lo_e, offset)
                elif atom.op in ("le", "lt"):
                    hi_e = min(hi_e, offset)
                else:  # eq
                    lo_e = max(lo_e, offset)
                    hi_e = min(hi_e, offset)
            if hi_e < -TIME_TOL or lo_e > hi_e + TIME_TOL:
                continue  # window empty or already passed
            eligible = True
            lo_all = min(lo_all, lo_e)
            hi_all = max(hi_all, hi_e)
        if not eligible or lo_all == math.inf:
            # Passive: nothing to race on. The invariant of a passive
            # location does not constrain the network (receivers are waited
            # on, not forced).
            return math.inf

        inv_hi = math.inf
        for atom in loc.invariant:
            inv_hi = min(inv_hi, self._bound(atom.bound) - self.clock_value(atom.clock))
        if inv_hi < -TIME_TOL:
            raise DeadComponentError(comp.auto.name, comp.location,
                                     "invariant already violated")
        lo = max(lo_all, 0.0)
        hi = min(inv_hi, hi_all)
        if hi < lo - TIME_TOL:
            raise DeadComponentError(
                comp.auto.name, comp.location,
                f"enabled interval empty (lo={lo:.6g}, hi={hi:.6g})")
        if hi < math.inf:
            if hi <= lo:
                return lo
            return rng.uniform(lo, hi)
        if loc.exit_rate is not None:
            return lo + rng.expovariate(loc.exit_rate)
        return lo  # urgent / eager: fire as soon as enabled

    # -- firing --------------------------------------------------------------

    def _invalidate(self, changed_clocks: set[str], changed_vars: set[str]) -> None:
        if not changed_clocks and not changed_vars:
            return
        for comp in self._order:
            clocks, variables = comp.auto.reads(comp.location)
            if clocks & changed_clocks or variables & changed_vars:
                comp.dirty = True

    def _apply_edge(self, comp: _Component, edge: Edge,
                    changed_clocks: set[str], changed_vars: set[str]) -> None:
        comp.location = edge.target
        comp.dirty = True
        for clock in edge.resets:
            self._clock_start[clock] = self.time
            changed_clocks.add(clock)
        for name, value in edge.updates:
            self.vars[name] = value
            changed_vars.add(name)

    def _notify(self, event: TraceEvent) -> None:
        if self._record is None or event.channel in self._record:
            self._trace.append(event)
        for cb in self._observers.get(event.channel, ()):
            cb(event)

    def _deliver(self, source: str, channel: str,
                 payload: Mapping[str, Any] | None, result: StepResult,
                 changed_clocks: set[str], changed_vars: set[str]) -> None:
        """Broadcast one emission: record it, fire all enabled receivers
        against the pre-broadcast state, then notify observers."""
        event = TraceEvent(self.time, source, channel, payload)
        firing: list[tuple[_Component, Edge]] = []
        for comp in self._order:
            if comp.auto.name == source:
                continue
            edges = comp.auto.receive_edges.get((comp.location, channel))
            if not edges:
                continue
            enabled = [e for e in edges if self._guard_ok_now(e)]
            if enabled:
                firing.append((comp, self._choose(comp.rng, enabled)))
        if not firing and channel not in self._observers \
                and channel not in self._warned_channels:
            self._warned_channels.add(channel)
            log.warning("emission on %r at t=%.3f has no enabled receiver",
                        channel, self.time)
        for comp, edge in firing:
            self._apply_edge(comp, edge, changed_clocks, changed_vars)
            result.fired.append((comp.auto.name, edge))
        result.emitted.append(channel)
        self._notify(event)

    @staticmethod
    def _choose(rng: random.Random, edges: list[Edge]) -> Edge:
        if len(edges) == 1:
            return edges[0]
        total = sum(e.weight for e in edges)
        r = rng.random() * total
        acc = 0.0
        for e in edges:
            acc += e.weight
            if r < acc:
                return e
        return edges[-1]

    def inject(self, channel: str, payload: Mapping[str, Any] | None = None,
               source: str = "external") -> None:
        """Queue a broadcast to deliver at the current instant.

        Used by closed-loop observers (e.g. a device emitting Therapy).
        Injections are drained at the end of the step that triggered them,
        before simulated time advances.
        """
        self._pending_inject.append(TraceEvent(self.time, source, channel, payload))

    def next_fire_time(self) -> float:
        """Earliest committed fire time over all components (inf if none)."""
        for comp in self._order:
            if comp.dirty:
                delay = self._sample_delay(comp, comp.rng)
                comp.fire_at = self.time + delay if delay < math.inf else math.inf
                comp.dirty = False
        return min((c.fire_at for c in self._order), default=math.inf)

    def step(self) -> StepResult:
        """Advance to the next firing and execute it.

        The winning component fires one enabled edge chosen by weight; any
        emission is broadcast atomically; injections raised by observers are
        delivered before returning. Raises :class:`DeadlockError` when no
        component can ever fire.
        """
        t = self.next_fire_time()
        if t == math.inf:
            raise DeadlockError(self.time)
        winners = [c for c in self._order if c.fire_at == t]
        if len(winners) > 1:
            winners.sort(key=lambda c: c.auto.name)
            winner = winners[self._tiebreak.randrange(len(winners))]
        else:
            winner = winners[0]

        elapsed = t - self.time
        self.time = t
        result = StepResult(elapsed=elapsed)
        changed_clocks: set[str] = set()
        changed_vars: set[str] = set()

        enabled = [e for e in winner.auto.delay_edges[winner.location]
                   if self._guard_ok_now(e)]
        if not enabled:
            raise EngineError(
                f"component {winner.auto.name!r} sampled a delay at which no "
                f"edge is enabled in location {winner.location!r} (t={t})")
        edge = self._choose(winner.rng, enabled)
        self._apply_edge(winner, edge, changed_clocks, changed_vars)
        result.fired.insert(0, (winner.auto.name, edge))
        if isinstance(edge.sync, Emit):
            self._deliver(winner.auto.name, edge.sync.channel, edge.sync.payload,
                          result, changed_clocks, changed_vars)

        # Closed-loop injections triggered by observers of this step.
        while self._pending_inject:
            ev = self._pending_inject.pop(0)
            self._deliver(ev.component, ev.channel, ev.payload,
                          result, changed_clocks, changed_vars)

        self._invalidate(changed_clocks, changed_vars)
        return result

    def run(self, config: RunConfig,
            observers: Iterable[tuple[str, Callable[[TraceEvent], None]]] = ()
            ) -> EventTrace:
        """Run until global time reaches ``config.time_bound``.

        Identical (network, seed) pairs yield bit-identical traces. Events
        falling exactly on the bound are included. A deadlock before the
        bound raises :class:`DeadlockError` carrying the partial trace.
        """
        self.reset(config.seed)
        extra = list(observers)
        for channel, callback in extra:
            self.subscribe(channel, callback)
        try:
            zero_streak = 0
            last_t = -1.0
            while True:
                t = self.next_fire_time()
                if t == math.inf:
                    if not self._order:
                        self.time = config.time_bound
                        break
                    raise DeadlockError(self.time,
                                        EventTrace(self._trace, config.time_bound))
                if t > config.time_bound:
                    self.time = config.time_bound
                    break
                if t == last_t:
                    zero_streak += 1
                    if zero_streak > _MAX_ZERO_DELAY_STEPS:
                        raise EngineError(f"zero-delay livelock at t={t} ms")
                else:
                    zero_streak = 0
                    last_t = t
                self.step()
        finally:
            for channel, callback in extra:
                self._observers[channel].remove(callback)
        return EventTrace(self._trace, config.time_bound)


def run(network: Network, config: RunConfig,
        observers: Iterable[tuple[str, Callable[[TraceEvent], None]]] = ()
        ) -> EventTrace:
    """Module-level convenience wrapper around :meth:`Network.run`."""
    return network.run(config, observers)
