"""Ground-truth adjudication of therapies and cross-arm comparison checks.

Correctness adjudication replays one arm's trace against the ventricular
mode-switch annotations: a therapy is appropriate iff the patient was in VT
when it was delivered and the episode either already persisted for
``persistence_ms`` or began within ``lookback_ms``. Everything else is
inappropriate and defines the survival endpoint (time of first inappropriate
therapy, censored at the simulation bound).

Comparison adjudication reduces a pair (or cohort) of arm outcomes to the
three-valued check statistic consumed by the sequential test: 0 tie,
1 first arm (GDT) wins, 2 second arm (MDT) wins.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import AdjudicationError
from .heart import MODE_V, THERAPY
from .sta import EventTrace

_TOL = 1e-9


class Check(enum.IntEnum):
    TIE = 0
    GDT_WIN = 1
    MDT_WIN = 2


@dataclass(frozen=True)
class ArmOutcome:
    """Adjudicated result of one device arm over one simulation."""

    n_inappropriate: int
    first_inappropriate_ms: float | None
    survival_time_ms: float
    n_appropriate: int
    n_missed: int


def _vt_intervals(trace: EventTrace, t_bound: float) -> list[tuple[float, float]]:
    """Half-open [entry, exit) ventricular-tachycardia windows."""
    annotations = trace.of(MODE_V)
    if not annotations:
        raise AdjudicationError("trace carries no ventricular mode annotations")
    intervals = []
    vt_since: float | None = None
    for e in annotations:
        mode = e.payload["mode"]
        if mode == "VT" and vt_since is None:
            vt_since = e.time
        elif mode != "VT" and vt_since is not None:
            intervals.append((vt_since, e.time))
            vt_since = None
    if vt_since is not None:
        intervals.append((vt_since, t_bound))
    return intervals


def adjudicate_arm(trace: EventTrace, t_bound: float, *,
                   persistence_ms: float = 1000.0,
                   lookback_ms: float = 3000.0) -> ArmOutcome:
    """Classify every therapy in the trace and derive the arm outcome.

    A therapy at time t is judged against the rhythm state just before t:
    it is appropriate iff some VT window [s, e) satisfies s < t <= e and
    either t - s >= persistence_ms or t - s <= lookback_ms. A VT window of
    dwell >= persistence_ms containing no therapy counts as missed.
    """
    intervals = _vt_intervals(trace, t_bound)
    therapy_times = [e.time for e in trace.of(THERAPY)]

    n_appropriate = 0
    n_inappropriate = 0
    first_inappropriate: float | None = None
    for t in therapy_times:
        appropriate = False
        for s, e in intervals:
            if s < t <= e + _TOL:
                dwell = t - s
                if dwell >= persistence_ms - _TOL or dwell <= lookback_ms + _TOL:
                    appropriate = True
                break
        if appropriate:
            n_appropriate += 1
        else:
            n_inappropriate += 1
            if first_inappropriate is None:
                first_inappropriate = t

    n_missed = 0
    for s, e in intervals:
        if e - s >= persistence_ms - _TOL:
            if not any(s < t <= e + _TOL for t in therapy_times):
                n_missed += 1

    survival = first_inappropriate if first_inappropriate is not None else t_bound
    return ArmOutcome(n_inappropriate=n_inappropriate,
                      first_inappropriate_ms=first_inappropriate,
                      survival_time_ms=survival,
                      n_appropriate=n_appropriate,
                      n_missed=n_missed)


def compare_any_inappropriate(gdt: ArmOutcome, mdt: ArmOutcome) -> Check:
    """Trial-1 check: which arm stayed free of inappropriate therapy."""
    g, m = gdt.n_inappropriate, mdt.n_inappropriate
    if g == 0 and m > 0:
        return Check.GDT_WIN
    if g > 0 and m == 0:
        return Check.MDT_WIN
    return Check.TIE


def compare_survival_time(gdt: ArmOutcome, mdt: ArmOutcome) -> Check:
    """Trial-2 check: longer event-free survival time wins."""
    if gdt.survival_time_ms > mdt.survival_time_ms:
        return Check.GDT_WIN
    if gdt.survival_time_ms < mdt.survival_time_ms:
        return Check.MDT_WIN
    return Check.TIE


def compare_mean_survival(mst_gdt: float, mst_mdt: float) -> Check:
    """Trial-3 check: larger cohort mean survival time wins."""
    if mst_gdt > mst_mdt:
        return Check.GDT_WIN
    if mst_gdt < mst_mdt:
        return Check.MDT_WIN
    return Check.TIE


def compare_hazard_ratio(hr: float | None) -> Check:
    """Trial-4 check on the GDT/MDT hazard ratio; a degenerate iteration
    (no estimable ratio) scores a tie so the pair stream stays aligned."""
    if hr is None:
        return Check.TIE
    if hr < 1.0:
        return Check.GDT_WIN
    if hr > 1.0:
        return Check.MDT_WIN
    return Check.TIE
