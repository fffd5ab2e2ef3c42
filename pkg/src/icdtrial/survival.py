"""Cohort survival statistics: Kaplan-Meier, restricted mean survival time,
and the two-group Cox proportional-hazards ratio.

Every subject still event-free at the simulation bound T is censored there,
so the mean survival time is the restricted one by construction (the area
under the product-limit curve on [0, T]). Cox ties use the Breslow
correction; with continuous simulated times ties are rare anyway.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import NonIdentifiableHazardError
from .rng import stream

GROUP_GDT = "GDT"
GROUP_MDT = "MDT"

_SCORE_TOL = 1e-8
_BETA_BRACKET = 20.0


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: event time (or censoring time) and arm label."""

    time: float
    event: bool  # True: inappropriate therapy at `time`; False: censored
    group: str

    def __post_init__(self):
        if self.time <= 0:
            raise ValueError("survival time must be > 0")


@dataclass(frozen=True)
class SurvivalCurve:
    """Right-continuous step function S(t), knots starting at (0, 1)."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.knots or self.knots[0] != (0.0, 1.0):
            raise ValueError("curve must start at (0, 1)")
        last = 1.0
        for _, s in self.knots:
            if s > last + 1e-12 or not 0.0 <= s <= 1.0:
                raise ValueError("survival curve must be non-increasing in [0, 1]")
            last = s

    def at(self, t: float) -> float:
        times = [k[0] for k in self.knots]
        i = bisect.bisect_right(times, t) - 1
        return self.knots[max(i, 0)][1]


def kaplan_meier(records: Sequence[SurvivalRecord]) -> SurvivalCurve:
    """Product-limit estimator for one group of records.

    At each distinct event time t with d events among n subjects at risk,
    S multiplies by (1 - d/n). Subjects censored at t are still at risk at
    t (events before censorings on ties) and leave the risk set after.
    """
    if not records:
        raise ValueError("kaplan_meier needs at least one record")
    n_at_risk = len(records)
    by_time: dict[float, list[bool]] = {}
    for r in records:
        by_time.setdefault(r.time, []).append(r.event)
    knots = [(0.0, 1.0)]
    s = 1.0
    for t in sorted(by_time):
        marks = by_time[t]
        d = sum(marks)
        if d:
            s *= 1.0 - d / n_at_risk
            knots.append((t, s))
        n_at_risk -= len(marks)
    return SurvivalCurve(tuple(knots))


def mean_survival_time(curve: SurvivalCurve, horizon: float) -> float:
    """Exact area under the step function on [0, horizon]."""
    if horizon < curve.knots[-1][0]:
        raise ValueError("horizon must cover the last knot")
    area = 0.0
    for (t0, s0), (t1, _) in zip(curve.knots, curve.knots[1:]):
        area += s0 * (t1 - t0)
    area += curve.knots[-1][1] * (horizon - curve.knots[-1][0])
    return area


def _cox_score_terms(records: Sequence[SurvivalRecord]
                     ) -> list[tuple[int, int, int, int]]:
    """Per distinct event time: (d_gdt, d_total, n_gdt_at_risk, n_at_risk)."""
    times = sorted({r.time for r in records if r.event})
    terms = []
    for t in times:
        d_g = sum(1 for r in records if r.event and r.time == t
                  and r.group == GROUP_GDT)
        d = sum(1 for r in records if r.event and r.time == t)
        n_g = sum(1 for r in records if r.time >= t and r.group == GROUP_GDT)
        n = sum(1 for r in records if r.time >= t)
        terms.append((d_g, d, n_g, n))
    return terms


def cox_hazard_ratio(records: Sequence[SurvivalRecord]) -> float:
    """Hazard ratio exp(beta) maximizing the Breslow partial likelihood with
    the single binary covariate group == GDT.

    The score is strictly decreasing in beta, so a safeguarded Newton
    iteration (bisection fallback) on [-20, 20] converges whenever the
    maximizer is finite; otherwise raises
    :class:`NonIdentifiableHazardError`.
    """
    groups = {r.group for r in records}
    if not {GROUP_GDT, GROUP_MDT} <= groups:
        raise ValueError("records must cover both groups")
    terms = _cox_score_terms(records)
    if not terms:
        raise NonIdentifiableHazardError("no events in either group")
    if all(n_g == 0 or n_g == n for _, _, n_g, n in terms):
        raise NonIdentifiableHazardError(
            "only one group at risk at every event time")

    def score(beta: float) -> float:
        eb = math.exp(beta)
        total = 0.0
        for d_g, d, n_g, n in terms:
            w = n_g * eb
            total += d_g - d * w / (w + (n - n_g))
        return total

    lo, hi = -_BETA_BRACKET, _BETA_BRACKET
    f_lo, f_hi = score(lo), score(hi)
    if f_lo < 0.0 or f_hi > 0.0:
        raise NonIdentifiableHazardError(
            "partial likelihood is monotone: hazard ratio unbounded")

    beta = 0.0
    for _ in range(200):
        f = score(beta)
        if abs(f) < _SCORE_TOL:
            break
        eb = math.exp(beta)
        d2 = 0.0
        for d_g, d, n_g, n in terms:
            w = n_g * eb
            other = n - n_g
            d2 -= d * w * other / (w + other) ** 2
        step = f / d2 if d2 < 0.0 else None
        candidate = beta - step if step is not None else None
        if f > 0.0:
            lo = beta
        else:
            hi = beta
        if candidate is None or not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)  # bisection safeguard
        beta = candidate
    return math.exp(beta)


def build_cohort(n: int, context, iteration: int) -> list[SurvivalRecord]:
    """Simulate a 2n-record cohort: n sampled patients, each duplicated onto
    both devices. ``context`` is a :class:`icdtrial.simulate.TrialContext`.
    """
    from . import simulate  # runtime import keeps the module layering flat

    if n < 1:
        raise ValueError("cohort size must be >= 1")
    records: list[SurvivalRecord] = []
    for k in range(n):
        params = context.sample_patient_for(iteration, k)
        for group in (GROUP_GDT, GROUP_MDT):
            outcome = simulate.simulate_arm(
                params, context.device_for(group), context,
                seed=context.arm_seed(iteration, k, group))
            records.append(SurvivalRecord(
                time=outcome.survival_time_ms,
                event=outcome.first_inappropriate_ms is not None,
                group=group))
    return records


def synthetic_cohort(n: int, p_event: tuple[float, float], horizon: float,
                     seed_parts: Iterable[object]) -> list[SurvivalRecord]:
    """Stub cohort for validating the statistics stack: each arm suffers an
    event with its own probability, at a time uniform on (0, horizon)."""
    rng = stream(*seed_parts)
    records = []
    for _ in range(n):
        for group, p in zip((GROUP_GDT, GROUP_MDT), p_event):
            if rng.random() < p:
                records.append(SurvivalRecord(rng.uniform(1e-6, horizon), True, group))
            else:
                records.append(SurvivalRecord(horizon, False, group))
    return records


def curves_by_group(records: Sequence[SurvivalRecord]
                    ) -> dict[str, SurvivalCurve]:
    return {g: kaplan_meier([r for r in records if r.group == g])
            for g in (GROUP_GDT, GROUP_MDT)}


def records_to_csv_rows(records: Sequence[SurvivalRecord]) -> list[str]:
    """Serializable form for offline re-analysis: time_ms,event,group."""
    return [f"{r.time:.6f},{int(r.event)},{r.group}" for r in records]
