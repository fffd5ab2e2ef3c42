"""Dual-chamber heart model as a five-automaton sub-network.

Two node automata generate contractions (``HA_Heart`` atrial, ``HV_Heart``
ventricular), two path automata conduct them (``Path_A2AV`` instantaneous
relay into the AV node, ``Path_AV2V`` carrying the conduction delay), and
``HAV_Heart`` gates conduction with the AV refractory window: impulses
arriving within ``av_erp`` of the last forwarded one vanish.

The interface to a device is three channels: ``A_in``, ``V_in`` (whose
payload carries the ground-truth origin plus the shock-channel morphology
verdict), and ``Therapy``, which resets every node/path clock, cancels
in-flight conductions, and is also heard by the mode switches.

All physiological quantities are read from network variables so the mode
switches can rewrite them in place:

    a_cycle_min a_cycle_max a_erp         atrial node
    av_delay_min av_delay_max av_erp      conduction path / AV node
    v_cycle_min v_cycle_max v_erp         ventricular node
    v_intrinsic_on                        1 while the ventricle fires on its own
"""

from __future__ import annotations

from dataclasses import dataclass

from .sta import (
    Automaton,
    ClockAtom,
    Edge,
    Emit,
    Location,
    Network,
    Receive,
    clock_ge,
    clock_le,
    clock_lt,
    var_eq,
)

A_IN = "A_in"
V_IN = "V_in"
THERAPY = "Therapy"
AV_NODE_IN = "av_node_in"
AV_OUT = "av_out"
V_CONDUCT = "v_conduct"

MODE_A = "mode_a"
MODE_V = "mode_v"

INTERFACE_CHANNELS = (A_IN, V_IN, THERAPY, MODE_A, MODE_V)
INTERNAL_CHANNELS = (AV_NODE_IN, AV_OUT, V_CONDUCT)

# Clocks start "long ago" where the model needs the first beat to pass a
# refractory guard.
_FAR_PAST = 1e12


@dataclass(frozen=True)
class NodeParameters:
    """Intrinsic firing interval bounds and refractory period of one node."""

    cycle_min: float
    cycle_max: float
    erp: float

    def __post_init__(self):
        if not 0 < self.cycle_min <= self.cycle_max:
            raise ValueError("need 0 < cycle_min <= cycle_max")
        if self.erp < 0 or self.erp >= self.cycle_min:
            raise ValueError("need 0 <= erp < cycle_min")


@dataclass(frozen=True)
class PathParameters:
    """Conduction delay bounds and the AV-node blocking window."""

    delay_min: float
    delay_max: float
    av_erp: float

    def __post_init__(self):
        if not 0 < self.delay_min <= self.delay_max:
            raise ValueError("need 0 < delay_min <= delay_max")
        if self.av_erp < 0:
            raise ValueError("av_erp must be >= 0")


@dataclass(frozen=True)
class MorphologyChannel:
    """Per-beat Bernoulli model of the shock-channel morphology verdict.

    ``sensitivity`` is the probability that a ventricular-origin beat is
    flagged tachycardic; ``one_minus_specificity`` the probability that a
    conducted beat is.
    """

    sensitivity: float
    one_minus_specificity: float

    def __post_init__(self):
        if not 0.0 <= self.sensitivity <= 1.0:
            raise ValueError("sensitivity must be in [0, 1]")
        if not 0.0 <= self.one_minus_specificity <= 1.0:
            raise ValueError("one_minus_specificity must be in [0, 1]")


@dataclass
class HeartModel:
    """Automata plus the variable/clock environment they expect."""

    automata: list[Automaton]
    variables: dict[str, float]
    clock_init: dict[str, float]

    def network(self, **kwargs) -> Network:
        return Network(self.automata, variables=self.variables,
                       clock_init=self.clock_init, **kwargs)


def _marker_edges(source: str, target: str, origin: str, p_true: float,
                  resets: tuple[str, ...],
                  guard: tuple = ()) -> list[Edge]:
    """Weighted V_in emission branch pair implementing the Bernoulli verdict."""
    edges = []
    if p_true > 0.0:
        edges.append(Edge(source, target, guard=guard,
                          sync=Emit(V_IN, {"origin": origin, "tachy": True}),
                          resets=resets, weight=p_true))
    if p_true < 1.0:
        edges.append(Edge(source, target, guard=guard,
                          sync=Emit(V_IN, {"origin": origin, "tachy": False}),
                          resets=resets, weight=1.0 - p_true))
    return edges


def build_heart(atrial: NodeParameters, ventricular: NodeParameters,
                av_path: PathParameters, morphology: MorphologyChannel, *,
                intrinsic_ventricular: bool = False) -> HeartModel:
    """Wire the five heart automata.

    ``atrial`` and ``ventricular`` give the initial node parameters (a mode
    switch may rewrite the corresponding variables later). Intrinsic
    ventricular firing starts disabled unless ``intrinsic_ventricular`` is
    set; conduction then dominates, as in sinus rhythm.

    Therapy handling is built in: every automaton listens on ``Therapy``,
    resets its clocks, and drops anything in flight.
    """
    ha = Automaton(
        "HA_Heart",
        locations=[Location("A_wait", invariant=(clock_le("ax", "a_cycle_max"),))],
        edges=[
            Edge("A_wait", "A_wait",
                 guard=(clock_ge("ax", "a_cycle_min"), clock_ge("ax", "a_erp")),
                 sync=Emit(A_IN, {"origin": "atrial"}), resets=("ax",)),
            Edge("A_wait", "A_wait", sync=Receive(THERAPY), resets=("ax",)),
        ],
        initial="A_wait",
    )

    path_a2av = Automaton(
        "Path_A2AV",
        locations=[Location("idle"), Location("relay")],
        edges=[
            Edge("idle", "relay", sync=Receive(A_IN)),
            Edge("relay", "idle", sync=Emit(AV_NODE_IN)),
            Edge("idle", "idle", sync=Receive(THERAPY)),
            Edge("relay", "idle", sync=Receive(THERAPY)),
        ],
        initial="idle",
    )

    hav = Automaton(
        "HAV_Heart",
        locations=[Location("gate"), Location("forward")],
        edges=[
            Edge("gate", "forward", guard=(clock_ge("gx", "av_erp"),),
                 sync=Receive(AV_NODE_IN)),
            Edge("gate", "gate", guard=(clock_lt("gx", "av_erp"),),
                 sync=Receive(AV_NODE_IN)),  # blocked impulses vanish
            Edge("forward", "gate", sync=Emit(AV_OUT), resets=("gx",)),
            Edge("gate", "gate", sync=Receive(THERAPY), resets=("gx",)),
            Edge("forward", "gate", sync=Receive(THERAPY), resets=("gx",)),
        ],
        initial="gate",
    )

    path_av2v = Automaton(
        "Path_AV2V",
        locations=[Location("idle"), Location("conducting")],
        edges=[
            Edge("idle", "conducting", sync=Receive(AV_OUT), resets=("py",)),
            Edge("conducting", "idle",
                 guard=(clock_ge("py", "av_delay_min"),
                        clock_le("py", "av_delay_max")),
                 sync=Emit(V_CONDUCT)),
            Edge("idle", "idle", sync=Receive(THERAPY)),
            Edge("conducting", "idle", sync=Receive(THERAPY)),  # cancel in flight
        ],
        initial="idle",
    )

    intrinsic_guard = (clock_ge("vx", "v_cycle_min"), clock_le("vx", "v_cycle_max"),
                       clock_ge("vr", "v_erp"), var_eq("v_intrinsic_on", 1))
    hv_edges = _marker_edges("V_wait", "V_wait", "ventricular",
                             morphology.sensitivity, resets=("vx", "vr"),
                             guard=intrinsic_guard)
    hv_edges += [
        Edge("V_wait", "conducted_fire", guard=(clock_ge("vr", "v_erp"),),
             sync=Receive(V_CONDUCT)),
        Edge("V_wait", "V_wait", guard=(clock_lt("vr", "v_erp"),),
             sync=Receive(V_CONDUCT)),  # absorbed inside the refractory window
    ]
    hv_edges += _marker_edges("conducted_fire", "V_wait", "conducted",
                              morphology.one_minus_specificity,
                              resets=("vx", "vr"))
    hv_edges += [
        Edge("V_wait", "V_wait", sync=Receive(THERAPY), resets=("vx", "vr")),
        Edge("conducted_fire", "V_wait", sync=Receive(THERAPY), resets=("vx", "vr")),
    ]
    hv = Automaton(
        "HV_Heart",
        locations=[Location("V_wait"), Location("conducted_fire")],
        edges=hv_edges,
        initial="V_wait",
    )

    variables = {
        "a_cycle_min": atrial.cycle_min,
        "a_cycle_max": atrial.cycle_max,
        "a_erp": atrial.erp,
        "av_delay_min": av_path.delay_min,
        "av_delay_max": av_path.delay_max,
        "av_erp": av_path.av_erp,
        "v_cycle_min": ventricular.cycle_min,
        "v_cycle_max": ventricular.cycle_max,
        "v_erp": ventricular.erp,
        "v_intrinsic_on": 1.0 if intrinsic_ventricular else 0.0,
    }
    clock_init = {"ax": 0.0, "gx": _FAR_PAST, "py": 0.0, "vx": 0.0,
                  "vr": _FAR_PAST}
    return HeartModel([ha, path_a2av, hav, path_av2v, hv], variables, clock_init)
