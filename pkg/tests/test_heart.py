"""Heart-model fixtures and physiological invariants."""

import math

import pytest

from icdtrial.heart import (
    A_IN,
    AV_OUT,
    MODE_A,
    MODE_V,
    THERAPY,
    V_IN,
    MorphologyChannel,
    NodeParameters,
    PathParameters,
    build_heart,
)
from icdtrial.patient import (
    DEFAULT_POPULATION,
    ParamSpec,
    build_mode_switches,
    build_patient_network,
    sample_patient,
)
from icdtrial.rng import stream
from icdtrial.sta import (
    Automaton,
    Edge,
    Emit,
    Location,
    Network,
    RunConfig,
    clock_ge,
    clock_le,
    run,
)

NOISELESS = MorphologyChannel(sensitivity=1.0, one_minus_specificity=0.0)


def fixed_heart(*, a_cycle=(1000.0, 1000.0), conduction=(150.0, 150.0),
                av_erp=250.0, v_erp=200.0, a_erp=150.0,
                morphology=NOISELESS, intrinsic=False, v_cycle=(1400.0, 1400.0)):
    atrial = NodeParameters(a_cycle[0], a_cycle[1], a_erp)
    vent = NodeParameters(v_cycle[0], v_cycle[1], v_erp)
    path = PathParameters(conduction[0], conduction[1], av_erp)
    return build_heart(atrial, vent, path, morphology,
                       intrinsic_ventricular=intrinsic)


def shocker(at_times):
    """Test automaton that broadcasts Therapy at fixed times."""
    locations = [Location(f"w{i}", invariant=(clock_le("shock_clk", t),))
                 for i, t in enumerate(at_times)] + [Location("done")]
    edges = []
    names = [f"w{i}" for i in range(len(at_times))] + ["done"]
    for i, t in enumerate(at_times):
        edges.append(Edge(names[i], names[i + 1],
                          guard=(clock_ge("shock_clk", t),), sync=Emit(THERAPY)))
    return Automaton("shocker", locations, edges, initial=names[0])


def test_deterministic_conduction_schedule():
    # atrial cycle [1000,1000], conduction [150,150]: the third conduction
    # would land at 3150, beyond the bound
    net = fixed_heart().network()
    trace = run(net, RunConfig(seed=5, time_bound=3000.0))
    assert [e.time for e in trace.of(A_IN)] == [1000.0, 2000.0, 3000.0]
    v = trace.of(V_IN)
    assert [e.time for e in v] == [1150.0, 2150.0]
    assert all(e.payload["origin"] == "conducted" for e in v)


def test_two_to_one_av_block_schedule():
    # av_erp 600 with atrial cycle [300,300]: every second impulse blocked
    net = fixed_heart(a_cycle=(300.0, 300.0), av_erp=600.0, a_erp=200.0).network()
    trace = run(net, RunConfig(seed=5, time_bound=2000.0))
    assert [e.time for e in trace.of(A_IN)] == [300.0, 600.0, 900.0,
                                                1200.0, 1500.0, 1800.0]
    assert [e.time for e in trace.of(V_IN)] == [450.0, 1050.0, 1650.0]


def test_noiseless_morphology_tags_by_origin():
    net = fixed_heart(a_cycle=(900.0, 900.0), intrinsic=True,
                      v_cycle=(400.0, 400.0)).network()
    trace = run(net, RunConfig(seed=2, time_bound=20_000.0))
    v = trace.of(V_IN)
    origins = {e.payload["origin"] for e in v}
    assert origins == {"conducted", "ventricular"}
    for e in v:
        assert e.payload["tachy"] == (e.payload["origin"] == "ventricular")


def test_conducted_beats_yield_at_most_one_v_per_a():
    net = fixed_heart(a_cycle=(800.0, 1200.0)).network()
    trace = run(net, RunConfig(seed=11, time_bound=200_000.0))
    assert len(trace.of(V_IN)) <= len(trace.of(A_IN))


def test_therapy_resets_rhythm_phase():
    # Therapy at 2500 restarts the atrial cycle: beats move from the
    # 1000-grid to the 3500-grid
    heart = fixed_heart()
    net = Network(heart.automata + [shocker([2500.0])],
                  variables=heart.variables, clock_init=heart.clock_init)
    trace = run(net, RunConfig(seed=5, time_bound=5000.0))
    assert [e.time for e in trace.of(A_IN)] == [1000.0, 2000.0, 3500.0, 4500.0]


def test_two_therapies_one_ms_apart_are_idempotent():
    heart = fixed_heart()
    net = Network(heart.automata + [shocker([2500.0, 2501.0])],
                  variables=heart.variables, clock_init=heart.clock_init)
    trace = run(net, RunConfig(seed=5, time_bound=5000.0))
    assert [e.time for e in trace.of(A_IN)] == [1000.0, 2000.0, 3501.0, 4501.0]
    assert len(trace.of(THERAPY)) == 2  # delivered twice, no event duplication


def test_therapy_cancels_inflight_conduction():
    # impulse forwarded at 1000 would arrive at 1150; Therapy at 1100 kills it
    heart = fixed_heart()
    net = Network(heart.automata + [shocker([1100.0])],
                  variables=heart.variables, clock_init=heart.clock_init)
    trace = run(net, RunConfig(seed=5, time_bound=2500.0))
    assert [e.time for e in trace.of(V_IN)] == [2250.0]  # 1100 + 1000 + 150


def test_therapy_during_vt_restores_conducted_rhythm():
    # shock on the first intrinsic beat at least 2 s into a VT episode (an
    # observer injecting Therapy, like a device would); the switch must be
    # back in NSR at the shock instant and the next ventricular activity
    # must be a conducted sinus beat
    params = sample_patient(DEFAULT_POPULATION, stream("vt-fixture"))
    net = build_patient_network(params)
    state = {"vt_since": None, "shock_at": None}

    def on_mode(event):
        state["vt_since"] = (event.time if event.payload["mode"] == "VT"
                             else None)

    def on_v(event):
        if state["shock_at"] is not None:
            return
        s = state["vt_since"]
        if s is not None and event.payload["origin"] == "ventricular" \
                and event.time >= s + 2000.0:
            state["shock_at"] = event.time
            net.inject(THERAPY, source="test")

    trace = run(net, RunConfig(seed=3, time_bound=200_000.0),
                observers=((MODE_V, on_mode), (V_IN, on_v)))
    t_shock = state["shock_at"]
    assert t_shock is not None, "no VT episode long enough in this window"
    assert [e.time for e in trace.of(THERAPY)] == [t_shock]
    nsr_at_shock = [e for e in trace.of(MODE_V)
                    if e.time == t_shock and e.payload["mode"] == "NSR_V"]
    assert nsr_at_shock
    after = [e for e in trace.of(V_IN) if e.time > t_shock]
    assert after and after[0].payload["origin"] == "conducted"


def test_ventricular_erp_spacing_and_conduction_bounds():
    params = sample_patient(DEFAULT_POPULATION, stream("erp-check"))
    net = build_patient_network(params, record=None)  # record everything
    trace = run(net, RunConfig(seed=17, time_bound=1_000_000.0))

    v_times = [e.time for e in trace.of(V_IN)]
    min_erp = min(params.values["nsr_v_erp"], params.values["vt_v_erp"])
    gaps = [b - a for a, b in zip(v_times, v_times[1:])]
    assert all(g >= min_erp - 1e-6 for g in gaps)

    # every conducted V_in sits within the sampled delay window of the
    # latest AV forward
    lo = min(params.values["nsr_av_delay_min"], params.values["at_av_delay_min"])
    hi = max(params.values["nsr_av_delay_max"], params.values["at_av_delay_max"])
    forwards = [e.time for e in trace.of(AV_OUT)]
    for e in trace.of(V_IN):
        if e.payload["origin"] != "conducted":
            continue
        prior = [t for t in forwards if t <= e.time]
        assert prior, "conducted beat without a forwarded impulse"
        delay = e.time - prior[-1]
        assert lo - 1e-6 <= delay <= hi + 1e-6


def test_atrial_intervals_match_active_mode():
    params = sample_patient(DEFAULT_POPULATION, stream("mode-intervals"))
    net = build_patient_network(params)
    trace = run(net, RunConfig(seed=23, time_bound=1_000_000.0))
    interesting = [e for e in trace.events
                   if e.channel in (A_IN, MODE_A, THERAPY)]
    bounds = {"NSR_A": (params.values["nsr_a_cycle_min"],
                        params.values["nsr_a_cycle_max"]),
              "AT": (params.values["at_cycle_min"],
                     params.values["at_cycle_max"])}
    mode = None
    prev_a = None
    checked = 0
    for e in interesting:
        if e.channel == A_IN:
            if prev_a is not None and mode is not None:
                lo, hi = bounds[mode]
                assert lo - 1e-6 <= e.time - prev_a <= hi + 1e-6
                checked += 1
            prev_a = e.time
        else:
            # mode switch or therapy resets the atrial phase: skip the
            # spanning interval
            mode = e.payload["mode"] if e.channel == MODE_A else mode
            prev_a = None
    assert checked > 200


def test_morphology_marker_frequencies():
    # conducted channel: flag rate ~ one_minus_specificity over 1e4 beats
    noisy = MorphologyChannel(sensitivity=0.9, one_minus_specificity=0.1)
    net = fixed_heart(a_cycle=(900.0, 1100.0), morphology=noisy).network()
    trace = run(net, RunConfig(seed=31, time_bound=11_000_000.0))
    v = trace.of(V_IN)
    n = len(v)
    assert n >= 10_000
    rate = sum(e.payload["tachy"] for e in v) / n
    sigma = math.sqrt(0.1 * 0.9 / n)
    assert abs(rate - 0.1) <= 3 * sigma

    # ventricular channel: flag rate ~ sensitivity
    net2 = fixed_heart(a_cycle=(900.0, 1100.0), morphology=noisy,
                       intrinsic=True, v_cycle=(350.0, 450.0)).network()
    trace2 = run(net2, RunConfig(seed=37, time_bound=5_000_000.0))
    vent = [e for e in trace2.of(V_IN) if e.payload["origin"] == "ventricular"]
    n2 = len(vent)
    assert n2 >= 10_000
    rate2 = sum(e.payload["tachy"] for e in vent) / n2
    sigma2 = math.sqrt(0.9 * 0.1 / n2)
    assert abs(rate2 - 0.9) <= 3 * sigma2


def test_parameter_validation():
    with pytest.raises(ValueError):
        NodeParameters(0.0, 100.0, 10.0)
    with pytest.raises(ValueError):
        NodeParameters(100.0, 90.0, 10.0)
    with pytest.raises(ValueError):
        NodeParameters(100.0, 200.0, 150.0)  # erp >= cycle_min
    with pytest.raises(ValueError):
        PathParameters(0.0, 100.0, 10.0)
    with pytest.raises(ValueError):
        MorphologyChannel(1.5, 0.0)
