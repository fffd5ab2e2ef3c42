"""Kaplan-Meier, restricted mean survival time, Cox hazard ratio.

The Cox oracle here is independent of the implementation: a naive
partial-likelihood evaluator over explicit risk sets, maximized by grid
search.
"""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icdtrial.errors import NonIdentifiableHazardError
from icdtrial.simulate import TrialContext
from icdtrial.survival import (
    GROUP_GDT,
    GROUP_MDT,
    SurvivalCurve,
    SurvivalRecord,
    build_cohort,
    cox_hazard_ratio,
    curves_by_group,
    kaplan_meier,
    mean_survival_time,
    records_to_csv_rows,
    synthetic_cohort,
)


def rec(time, event, group=GROUP_GDT):
    return SurvivalRecord(time, event, group)


FIXTURE = [rec(2, True), rec(3, True), rec(3, True), rec(5, False), rec(7, True)]


# -- Kaplan-Meier ---------------------------------------------------------------

def test_km_product_limit_fixture():
    # {2, 3, 3, 5+, 7}: S(2) = 4/5, S(3) = S(2) * (1 - 2/4), S(7) = 0
    curve = kaplan_meier(FIXTURE)
    assert curve.knots == ((0.0, 1.0), (2.0, 0.8), (3.0, pytest.approx(0.4)),
                           (7.0, pytest.approx(0.0)))
    assert curve.at(2.5) == pytest.approx(0.8)
    assert curve.at(6.999) == pytest.approx(0.4)


def test_km_all_censored_is_flat_one():
    curve = kaplan_meier([rec(5, False), rec(9, False)])
    assert curve.knots == ((0.0, 1.0),)
    assert curve.at(100.0) == 1.0


def test_km_single_event():
    curve = kaplan_meier([rec(5, True)])
    assert curve.at(4.999) == 1.0
    assert curve.at(5.0) == 0.0


def test_km_empty_input_rejected():
    with pytest.raises(ValueError):
        kaplan_meier([])


@given(st.lists(st.integers(1, 30), min_size=1, max_size=40))
@settings(max_examples=200, deadline=None)
def test_km_without_censoring_equals_empirical_survival(times):
    records = [rec(float(t), True) for t in times]
    curve = kaplan_meier(records)
    n = len(times)
    for probe in range(0, 32):
        empirical = sum(1 for t in times if t > probe) / n
        assert curve.at(float(probe)) == pytest.approx(empirical)


# -- restricted mean survival time ----------------------------------------------

def test_mst_fixture_rectangle_sum():
    curve = kaplan_meier(FIXTURE)
    assert mean_survival_time(curve, 7.0) == pytest.approx(4.4)


def test_mst_of_flat_curve_is_horizon():
    curve = kaplan_meier([rec(5, False), rec(9, False)])
    assert mean_survival_time(curve, 123.0) == 123.0


def test_mst_immediate_events_vanishes():
    curve = kaplan_meier([rec(1e-6, True), rec(1e-6, True)])
    assert mean_survival_time(curve, 100.0) < 0.01


def test_mst_invariant_under_knot_refinement():
    curve = kaplan_meier(FIXTURE)
    refined_knots = []
    for (t0, s0), (t1, _) in zip(curve.knots, curve.knots[1:]):
        refined_knots.append((t0, s0))
        refined_knots.append(((t0 + t1) / 2, s0))  # extra knot, same level
    refined_knots.append(curve.knots[-1])
    refined = SurvivalCurve(tuple(refined_knots))
    assert mean_survival_time(refined, 7.0) == \
        pytest.approx(mean_survival_time(curve, 7.0))


def test_mst_horizon_must_cover_curve():
    with pytest.raises(ValueError):
        mean_survival_time(kaplan_meier(FIXTURE), 5.0)


# -- Cox hazard ratio -------------------------------------------------------------

def oracle_partial_loglik(records, beta):
    """Naive Breslow partial log-likelihood over explicit risk sets."""
    total = 0.0
    for t in sorted({r.time for r in records if r.event}):
        deaths = [r for r in records if r.event and r.time == t]
        risk = [r for r in records if r.time >= t]
        denom = sum(math.exp(beta * (r.group == GROUP_GDT)) for r in risk)
        for d in deaths:
            total += beta * (d.group == GROUP_GDT)
        total -= len(deaths) * math.log(denom)
    return total


def oracle_hr(records, lo=-5.0, hi=5.0, step=1e-4):
    # tabulate the risk sets once, then grid-search the likelihood
    terms = []
    for t in sorted({r.time for r in records if r.event}):
        risk = [r for r in records if r.time >= t]
        d_g = sum(1 for r in records if r.event and r.time == t
                  and r.group == GROUP_GDT)
        d = sum(1 for r in records if r.event and r.time == t)
        n_g = sum(1 for r in risk if r.group == GROUP_GDT)
        terms.append((d_g, d, n_g, len(risk) - n_g))
    best_beta, best = 0.0, -math.inf
    beta = lo
    while beta <= hi:
        eb = math.exp(beta)
        ll = sum(beta * d_g - d * math.log(n_g * eb + n_m)
                 for d_g, d, n_g, n_m in terms)
        if ll > best:
            best, best_beta = ll, beta
        beta += step
    return math.exp(best_beta)


SIX_SUBJECTS = [
    rec(2.0, True, GROUP_GDT), rec(4.0, True, GROUP_GDT), rec(9.0, True, GROUP_GDT),
    rec(3.0, True, GROUP_MDT), rec(7.0, True, GROUP_MDT), rec(12.0, True, GROUP_MDT),
]


def test_cox_matches_grid_oracle():
    hr = cox_hazard_ratio(SIX_SUBJECTS)
    hr_oracle = oracle_hr(SIX_SUBJECTS)
    assert abs(hr - hr_oracle) / hr_oracle < 1e-3


def test_cox_score_vanishes_at_optimum():
    hr = cox_hazard_ratio(SIX_SUBJECTS)
    beta = math.log(hr)
    eps = 1e-4
    left = oracle_partial_loglik(SIX_SUBJECTS, beta - eps)
    right = oracle_partial_loglik(SIX_SUBJECTS, beta + eps)
    centre = oracle_partial_loglik(SIX_SUBJECTS, beta)
    assert centre >= left and centre >= right  # local maximum


def test_cox_label_swap_gives_reciprocal():
    swapped = [rec(r.time, r.event,
                   GROUP_MDT if r.group == GROUP_GDT else GROUP_GDT)
               for r in SIX_SUBJECTS]
    hr = cox_hazard_ratio(SIX_SUBJECTS)
    hr_swapped = cox_hazard_ratio(swapped)
    assert abs(hr_swapped - 1.0 / hr) < 1e-9


def test_cox_identical_groups_give_unity():
    records = [rec(3.0, True, GROUP_GDT), rec(5.0, False, GROUP_GDT),
               rec(7.5, True, GROUP_GDT),
               rec(3.0, True, GROUP_MDT), rec(5.0, False, GROUP_MDT),
               rec(7.5, True, GROUP_MDT)]
    assert cox_hazard_ratio(records) == pytest.approx(1.0, abs=1e-12)


def test_cox_random_fixtures_match_oracle():
    rng = random.Random(321)
    for _ in range(10):
        records = []
        for i in range(8):
            group = GROUP_GDT if i % 2 == 0 else GROUP_MDT
            scale = 5.0 if group == GROUP_GDT else 9.0
            t = rng.expovariate(1.0 / scale) + 0.1
            records.append(rec(round(t, 3), rng.random() < 0.8, group))
        try:
            hr = cox_hazard_ratio(records)
        except NonIdentifiableHazardError:
            continue
        if not 1e-2 < hr < 1e2:
            continue  # outside the oracle's grid
        assert abs(hr - oracle_hr(records)) / oracle_hr(records) < 1e-3


def test_cox_unbounded_beta_raises():
    records = [rec(1.0, True, GROUP_GDT), rec(2.0, True, GROUP_GDT),
               rec(10.0, False, GROUP_MDT), rec(11.0, False, GROUP_MDT)]
    with pytest.raises(NonIdentifiableHazardError):
        cox_hazard_ratio(records)


def test_cox_single_group_at_risk_raises():
    records = [rec(5.0, True, GROUP_GDT), rec(6.0, True, GROUP_GDT),
               rec(1.0, False, GROUP_MDT)]
    with pytest.raises(NonIdentifiableHazardError):
        cox_hazard_ratio(records)


def test_cox_requires_both_groups():
    with pytest.raises(ValueError):
        cox_hazard_ratio([rec(1.0, True, GROUP_GDT)])


# -- cohorts ---------------------------------------------------------------------

class _StubContext(TrialContext):
    """Patches the device factory with a silent stub."""

    def device_for(self, group):
        class NeverFires:
            def step(self, beat):
                return None
        return NeverFires()


def test_build_cohort_sizes():
    ctx = _StubContext(master_seed=1, time_bound=50_000.0)
    records = build_cohort(1, ctx, iteration=0)
    assert len(records) == 2
    with pytest.raises(ValueError):
        build_cohort(0, ctx, iteration=0)


def test_build_cohort_with_silent_device_censors_everything():
    ctx = _StubContext(master_seed=2, time_bound=50_000.0)
    records = build_cohort(3, ctx, iteration=0)
    assert len(records) == 6
    assert all(not r.event for r in records)
    assert all(r.time == 50_000.0 for r in records)


def test_build_cohort_full_size():
    ctx = _StubContext(master_seed=3, time_bound=20_000.0)
    records = build_cohort(25, ctx, iteration=0)
    assert len(records) == 50
    groups = {r.group for r in records}
    assert groups == {GROUP_GDT, GROUP_MDT}


def test_synthetic_cohort_probabilities():
    records = synthetic_cohort(4000, (0.2, 0.4), 1000.0, ("syn", 1))
    g = [r for r in records if r.group == GROUP_GDT]
    m = [r for r in records if r.group == GROUP_MDT]
    rate_g = sum(r.event for r in g) / len(g)
    rate_m = sum(r.event for r in m) / len(m)
    assert rate_g == pytest.approx(0.2, abs=3 * math.sqrt(0.2 * 0.8 / 4000))
    assert rate_m == pytest.approx(0.4, abs=3 * math.sqrt(0.4 * 0.6 / 4000))


def test_record_serialization():
    rows = records_to_csv_rows([rec(1234.5, True), rec(50_000.0, False, GROUP_MDT)])
    assert rows == ["1234.500000,1,GDT", "50000.000000,0,MDT"]


def test_curves_by_group_splits():
    records = [rec(10.0, True, GROUP_GDT), rec(20.0, False, GROUP_GDT),
               rec(15.0, True, GROUP_MDT), rec(20.0, False, GROUP_MDT)]
    curves = curves_by_group(records)
    assert curves[GROUP_GDT].at(10.0) == 0.5
    assert curves[GROUP_MDT].at(10.0) == 1.0
