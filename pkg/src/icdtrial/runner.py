"""Trial orchestration: iterate paired simulations, feed the sequential
test, persist per-iteration rows, and report.

Each iteration is reproducible standalone: all its randomness derives from
hash(master_seed, iteration index, ...), so row i never depends on rows
0..i-1 having been computed.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .adjudicate import (
    Check,
    compare_any_inappropriate,
    compare_hazard_ratio,
    compare_mean_survival,
    compare_survival_time,
)
from .config import TrialSpec
from .errors import NonIdentifiableHazardError
from .patient import load_population_file
from .rng import derive_seed, stream
from .simulate import TrialContext, simulate_pair
from .sprt import Decision, SprtState, expected_iterations_given_q, ingest_pair, map_check_to_pair
from .survival import (
    GROUP_GDT,
    GROUP_MDT,
    build_cohort,
    cox_hazard_ratio,
    curves_by_group,
    mean_survival_time,
    records_to_csv_rows,
    synthetic_cohort,
)

log = logging.getLogger(__name__)

CSV_HEADER = ("iter,seed,n_inapp_gdt,n_inapp_mdt,st_gdt,st_mdt,"
              "mst_g,mst_m,hr,check,x1,x2,log_lr,decision")


@dataclass
class IterationRow:
    iteration: int
    seed: int
    n_inapp_gdt: int | None = None
    n_inapp_mdt: int | None = None
    st_gdt: float | None = None
    st_mdt: float | None = None
    mst_g: float | None = None
    mst_m: float | None = None
    hr: float | None = None
    check: int | None = None
    x1: int = 0
    x2: int = 0
    log_lr: float = 0.0
    decision: str = Decision.UNDECIDED.value
    degenerate: bool = False
    records: list | None = None  # survival records (trials 3-4 only)

    def csv(self) -> str:
        def num(v, fmt="{:.6f}"):
            return "" if v is None else (fmt.format(v) if isinstance(v, float)
                                         else str(v))
        fields = [
            str(self.iteration), str(self.seed),
            num(self.n_inapp_gdt), num(self.n_inapp_mdt),
            num(self.st_gdt), num(self.st_mdt),
            num(self.mst_g), num(self.mst_m), num(self.hr),
            num(self.check), str(self.x1), str(self.x2),
            f"{self.log_lr:.6f}", self.decision,
        ]
        return ",".join(fields)


@dataclass
class TrialReport:
    trial_id: int
    decision: str
    decision_text: str
    iterations_used: int
    discordant_count: int
    t_count: int
    degenerate_iterations: int
    csv_path: str
    config_echo: str
    duration_seconds: float
    engine_version: str
    predicted_iterations: float | None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


_DIRECTION = {
    1: ("chance of inappropriate therapy",
        "the GDT algorithm has a higher chance of inappropriate therapy "
        "than the MDT algorithm",
        "the GDT algorithm does not have a higher chance of inappropriate "
        "therapy than the MDT algorithm"),
    2: ("event-free survival time",
        "the GDT algorithm has shorter event-free survival time than the "
        "MDT algorithm",
        "the GDT algorithm does not have shorter event-free survival time "
        "than the MDT algorithm"),
    3: ("mean survival time",
        "the GDT algorithm has shorter mean event-free survival time than "
        "the MDT algorithm",
        "the GDT algorithm does not have shorter mean event-free survival "
        "time than the MDT algorithm"),
    4: ("hazard ratio",
        "the GDT algorithm has higher hazard than the MDT algorithm",
        "the GDT algorithm does not have higher hazard than the MDT "
        "algorithm"),
}


def decision_text(trial_id: int, decision: Decision, cap: int) -> str:
    _, h1_text, h0_text = _DIRECTION[trial_id]
    if decision is Decision.ACCEPT_H1:
        return f"H0 rejected, H1 accepted: {h1_text}."
    if decision is Decision.ACCEPT_H0:
        return f"H0 accepted: {h0_text}."
    return f"No decision within the iteration cap ({cap})."


def _context(spec: TrialSpec) -> TrialContext:
    population = (load_population_file(spec.population_file)
                  if spec.population_file else None)
    ctx = TrialContext(master_seed=spec.seed, time_bound=spec.time_bound_ms,
                       persistence_ms=spec.persistence_ms,
                       lookback_ms=spec.lookback_ms,
                       gdt_config=spec.gdt, mdt_config=spec.mdt,
                       record_all=spec.trace)
    if population is not None:
        ctx.population = population
    return ctx


def compute_iteration(spec: TrialSpec, context: TrialContext,
                      iteration: int) -> IterationRow:
    """One full iteration, independent of every other iteration."""
    row = IterationRow(iteration=iteration,
                       seed=derive_seed(spec.seed, "iter", iteration))

    if spec.synthetic is not None and spec.trial_id in (1, 2):
        p1, p2 = spec.synthetic
        rng = stream(spec.seed, "iter", iteration, "synthetic")
        row.x1 = int(rng.random() < p1)
        row.x2 = int(rng.random() < p2)
        return row

    if spec.trial_id in (1, 2):
        gdt, mdt = simulate_pair(context, iteration)
        row.n_inapp_gdt = gdt.n_inappropriate
        row.n_inapp_mdt = mdt.n_inappropriate
        row.st_gdt = gdt.survival_time_ms
        row.st_mdt = mdt.survival_time_ms
        check = (compare_any_inappropriate(gdt, mdt) if spec.trial_id == 1
                 else compare_survival_time(gdt, mdt))
    else:
        if spec.synthetic is not None:
            records = synthetic_cohort(
                spec.cohort_n, spec.synthetic, spec.time_bound_ms,
                (spec.seed, "iter", iteration, "synthetic-cohort"))
        else:
            records = build_cohort(spec.cohort_n, context, iteration)
        row.records = records
        curves = curves_by_group(records)
        row.mst_g = mean_survival_time(curves[GROUP_GDT], spec.time_bound_ms)
        row.mst_m = mean_survival_time(curves[GROUP_MDT], spec.time_bound_ms)
        if spec.trial_id == 3:
            check = compare_mean_survival(row.mst_g, row.mst_m)
        else:
            try:
                row.hr = cox_hazard_ratio(records)
            except NonIdentifiableHazardError:
                row.hr = None
                row.degenerate = True
                log.info("iteration %d: degenerate hazard ratio, scored as tie",
                         iteration)
            check = compare_hazard_ratio(row.hr)

    row.check = int(check)
    row.x1, row.x2 = map_check_to_pair(int(check))
    return row


def run_trial(spec: TrialSpec) -> TrialReport:
    """Run one trial to its sequential decision (or the cap) and persist
    the per-iteration CSV plus the structured result file."""
    spec.validate()
    context = _context(spec)
    sprt_config = spec.sprt_config()
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "iterations.csv"

    started = time.perf_counter()
    state = SprtState()
    degenerate = 0
    last_row: IterationRow | None = None
    with open(csv_path, "w", encoding="utf-8") as csv:
        csv.write(CSV_HEADER + "\n")
        for i in range(spec.max_iterations):
            row = compute_iteration(spec, context, i)
            state = ingest_pair(state, row.x1, row.x2, sprt_config)
            row.log_lr = state.log_lr
            row.decision = state.decision.value
            degenerate += int(row.degenerate)
            csv.write(row.csv() + "\n")
            last_row = row
            if state.decision is not Decision.UNDECIDED:
                break
    duration = time.perf_counter() - started

    predicted = None
    if state.m_discordant > 0 and state.n_pairs > 0:
        q_hat = state.t_count / state.m_discordant
        disc_rate = state.m_discordant / state.n_pairs
        predicted = expected_iterations_given_q(q_hat, disc_rate, sprt_config)
        if predicted == float("inf"):
            predicted = None

    report = TrialReport(
        trial_id=spec.trial_id,
        decision=state.decision.value,
        decision_text=decision_text(spec.trial_id, state.decision,
                                    spec.max_iterations),
        iterations_used=state.n_pairs,
        discordant_count=state.m_discordant,
        t_count=state.t_count,
        degenerate_iterations=degenerate,
        csv_path=str(csv_path),
        config_echo=spec.render(),
        duration_seconds=duration,
        engine_version=__version__,
        predicted_iterations=predicted,
    )
    _write_artifacts(spec, report, last_row, out_dir)
    return report


def _write_artifacts(spec: TrialSpec, report: TrialReport,
                     last_row: IterationRow | None, out_dir: Path) -> None:
    (out_dir / "result.json").write_text(report.to_json() + "\n",
                                         encoding="utf-8")
    if spec.trial_id in (3, 4) and last_row is not None and last_row.records:
        curves = curves_by_group(last_row.records)
        for group, fname in ((GROUP_GDT, "survival_gdt.csv"),
                             (GROUP_MDT, "survival_mdt.csv")):
            lines = ["time_ms,survival"]
            lines += [f"{t:.6f},{s:.9f}" for t, s in curves[group].knots]
            (out_dir / fname).write_text("\n".join(lines) + "\n",
                                         encoding="utf-8")
        rows = ["time_ms,event,group"] + records_to_csv_rows(last_row.records)
        (out_dir / "cohort_records.csv").write_text("\n".join(rows) + "\n",
                                                    encoding="utf-8")


def summarize(report: TrialReport) -> str:
    disc = (report.discordant_count / report.iterations_used
            if report.iterations_used else 0.0)
    lines = [
        f"trial {report.trial_id}: {report.decision}",
        report.decision_text,
        f"iterations: {report.iterations_used} "
        f"(discordant: {report.discordant_count}, fraction {disc:.3f})",
        f"wall clock: {report.duration_seconds:.1f} s",
        f"per-iteration log: {report.csv_path}",
    ]
    if report.predicted_iterations is not None:
        lines.insert(3, "expected iterations at the observed discordant "
                        f"proportion: {report.predicted_iterations:.0f}")
    return "\n".join(lines)
