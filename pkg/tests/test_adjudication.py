"""Correctness adjudication against ground truth and the check() tables."""

import random

import pytest

from icdtrial.adjudicate import (
    ArmOutcome,
    Check,
    adjudicate_arm,
    compare_any_inappropriate,
    compare_hazard_ratio,
    compare_mean_survival,
    compare_survival_time,
)
from icdtrial.errors import AdjudicationError
from icdtrial.heart import MODE_V, THERAPY
from icdtrial.sta import EventTrace, TraceEvent


def make_trace(mode_changes, therapy_times, bound):
    """Synthetic annotated trace: mode_changes is [(time, mode)]."""
    events = [TraceEvent(t, "HV_Switch", MODE_V, {"mode": m})
              for t, m in mode_changes]
    events += [TraceEvent(t, "device", THERAPY, {"source": "device"})
               for t in therapy_times]
    events.sort(key=lambda e: e.time)
    return EventTrace(events, bound)


def outcome(trace, bound, **kw):
    return adjudicate_arm(trace, bound, **kw)


def test_no_therapy_survives_to_bound():
    trace = make_trace([(0.0, "NSR_V")], [], 1_000_000.0)
    out = outcome(trace, 1_000_000.0)
    assert out.n_inappropriate == 0
    assert out.first_inappropriate_ms is None
    assert out.survival_time_ms == 1_000_000.0


def test_therapy_in_sinus_is_inappropriate():
    trace = make_trace([(0.0, "NSR_V")], [5000.0], 1_000_000.0)
    out = outcome(trace, 1_000_000.0)
    assert out.n_inappropriate == 1
    assert out.first_inappropriate_ms == 5000.0
    assert out.survival_time_ms == 5000.0


def test_therapy_in_persistent_vt_is_appropriate():
    trace = make_trace([(0.0, "NSR_V"), (4000.0, "VT")], [5200.0], 10_000.0)
    out = outcome(trace, 10_000.0, persistence_ms=1000.0)
    assert out.n_inappropriate == 0
    assert out.n_appropriate == 1


def test_therapy_just_after_vt_exit_is_inappropriate():
    trace = make_trace([(0.0, "NSR_V"), (4000.0, "VT"), (9000.0, "NSR_V")],
                       [9100.0], 20_000.0)
    out = outcome(trace, 20_000.0)
    assert out.n_inappropriate == 1
    assert out.n_missed == 1  # the episode itself went untreated


def test_therapy_that_terminates_vt_counts_as_treating_it():
    # the mode annotation flips to NSR at the same instant the therapy lands
    trace = make_trace([(0.0, "NSR_V"), (4000.0, "VT"), (7000.0, "NSR_V")],
                       [7000.0], 20_000.0)
    out = outcome(trace, 20_000.0)
    assert out.n_appropriate == 1
    assert out.n_missed == 0


def test_untreated_persistent_vt_counts_missed():
    trace = make_trace([(0.0, "NSR_V"), (4000.0, "VT"), (5500.0, "NSR_V"),
                        (8000.0, "VT"), (8300.0, "NSR_V")], [], 20_000.0)
    out = outcome(trace, 20_000.0, persistence_ms=1000.0)
    assert out.n_missed == 1  # the 300 ms episode is below persistence


def test_vt_running_into_the_bound_is_adjudicable():
    trace = make_trace([(0.0, "NSR_V"), (9000.0, "VT")], [9500.0], 10_000.0,)
    out = outcome(trace, 10_000.0, persistence_ms=1000.0, lookback_ms=3000.0)
    # 500 ms into VT: inside the lookback window, still in VT -> appropriate
    assert out.n_appropriate == 1


def test_missing_annotations_raise():
    trace = EventTrace([TraceEvent(5.0, "device", THERAPY, None)], 100.0)
    with pytest.raises(AdjudicationError):
        adjudicate_arm(trace, 100.0)


def test_short_vt_outside_lookback_requires_persistence():
    # persistence tighter than lookback: a therapy 400 ms into VT is only
    # appropriate because of the lookback branch; with lookback shrunk it
    # becomes inappropriate
    trace = make_trace([(0.0, "NSR_V"), (4000.0, "VT")], [4400.0], 10_000.0)
    lenient = outcome(trace, 10_000.0, persistence_ms=1000.0, lookback_ms=3000.0)
    assert lenient.n_appropriate == 1
    strict = outcome(trace, 10_000.0, persistence_ms=1000.0, lookback_ms=100.0)
    assert strict.n_inappropriate == 1


# -- check() tables ------------------------------------------------------------

def arm(n_inapp, st, bound=1_000_000.0):
    first = None if n_inapp == 0 else st
    return ArmOutcome(n_inapp, first, st if first is not None else bound,
                      n_appropriate=0, n_missed=0)


def test_trial1_check_table():
    assert compare_any_inappropriate(arm(0, 0), arm(3, 100.0)) == Check.GDT_WIN
    assert compare_any_inappropriate(arm(2, 50.0), arm(2, 60.0)) == Check.TIE
    assert compare_any_inappropriate(arm(1, 9.0), arm(0, 0)) == Check.MDT_WIN
    assert compare_any_inappropriate(arm(0, 0), arm(0, 0)) == Check.TIE


def test_trial2_check_table():
    t = 1_000_000.0
    assert compare_survival_time(arm(0, 0, t), arm(0, 0, t)) == Check.TIE
    assert compare_survival_time(arm(1, 800_000.0), arm(1, 300_000.0)) == Check.GDT_WIN
    assert compare_survival_time(arm(1, 200_000.0), arm(1, 900_000.0)) == Check.MDT_WIN


def test_trial3_check_table():
    assert compare_mean_survival(5.0, 5.0) == Check.TIE
    assert compare_mean_survival(7.0, 5.0) == Check.GDT_WIN
    assert compare_mean_survival(5.0, 7.0) == Check.MDT_WIN


def test_trial4_check_table():
    assert compare_hazard_ratio(1.4) == Check.MDT_WIN
    assert compare_hazard_ratio(0.6) == Check.GDT_WIN
    assert compare_hazard_ratio(1.0) == Check.TIE
    assert compare_hazard_ratio(None) == Check.TIE  # degenerate iteration


_SWAP = {Check.TIE: Check.TIE, Check.GDT_WIN: Check.MDT_WIN,
         Check.MDT_WIN: Check.GDT_WIN}


def test_check_antisymmetry_under_arm_swap():
    rng = random.Random(1234)
    for _ in range(1000):
        bound = 1_000_000.0
        n_g, n_m = rng.randrange(4), rng.randrange(4)
        st_g = rng.uniform(1.0, bound) if n_g else bound
        st_m = rng.uniform(1.0, bound) if n_m else bound
        g, m = arm(n_g, st_g, bound), arm(n_m, st_m, bound)
        assert compare_any_inappropriate(m, g) == \
            _SWAP[compare_any_inappropriate(g, m)]
        assert compare_survival_time(m, g) == \
            _SWAP[compare_survival_time(g, m)]
        mst_g, mst_m = rng.uniform(0, bound), rng.uniform(0, bound)
        assert compare_mean_survival(mst_m, mst_g) == \
            _SWAP[compare_mean_survival(mst_g, mst_m)]
        hr = rng.lognormvariate(0.0, 1.0)
        assert compare_hazard_ratio(1.0 / hr) == _SWAP[compare_hazard_ratio(hr)]


def test_survival_time_invariants():
    bound = 1_000_000.0
    rng = random.Random(7)
    for _ in range(200):
        n = rng.randrange(3)
        st = rng.uniform(1.0, bound) if n else bound
        out = arm(n, st, bound)
        assert out.survival_time_ms <= bound
        assert (out.n_inappropriate == 0) == (out.survival_time_ms == bound)
