"""Paired sequential probability ratio test over check() outcomes.

The comparison query "does arm 1 satisfy its property at least as often as
arm 2" is reduced to a Bernoulli SPRT on the discordant pairs: conditioned
on exactly one arm winning, let q be the probability that it was arm 1.
The hypotheses H0: p1 >= p2 and H1: p1 < p2 become q >= 1/2 versus
q < 1/2, tested with indifference half-width delta as q0 = 1/2 + delta
against q1 = 1/2 - delta. Concordant pairs carry no comparative information
and leave the likelihood ratio untouched.

Wald's thresholds give the error guarantees: accept H1 when the
log-likelihood ratio reaches log((1-beta)/alpha), accept H0 at
log(beta/(1-alpha)). The accumulated ratio is recomputed from the integer
discordant counts at every step, so it equals the closed form
t*log(q1/q0) + (m-t)*log((1-q1)/(1-q0)) exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import ProtocolError


class Decision(enum.Enum):
    UNDECIDED = "undecided"
    ACCEPT_H0 = "accept_H0"
    ACCEPT_H1 = "accept_H1"
    INCONCLUSIVE_CAP = "inconclusive_cap"


@dataclass(frozen=True)
class SprtConfig:
    alpha: float = 0.05  # bound on P(accept H1 | H0)
    beta: float = 0.05   # bound on P(accept H0 | H1)
    delta: float = 0.05  # indifference half-width on the discordant proportion
    max_iterations: int = 100_000

    def __post_init__(self):
        if not 0 < self.alpha < 0.5 or not 0 < self.beta < 0.5:
            raise ValueError("alpha and beta must lie in (0, 0.5)")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 0.5)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @property
    def q0(self) -> float:
        return 0.5 + self.delta

    @property
    def q1(self) -> float:
        return 0.5 - self.delta

    @property
    def upper_threshold(self) -> float:
        return math.log((1.0 - self.beta) / self.alpha)

    @property
    def lower_threshold(self) -> float:
        return math.log(self.beta / (1.0 - self.alpha))

    @property
    def increment_first_wins(self) -> float:
        """log-LR contribution of a (1, 0) pair."""
        return math.log(self.q1 / self.q0)

    @property
    def increment_second_wins(self) -> float:
        """log-LR contribution of a (0, 1) pair."""
        return math.log((1.0 - self.q1) / (1.0 - self.q0))


@dataclass(frozen=True)
class SprtState:
    log_lr: float = 0.0
    m_discordant: int = 0
    t_count: int = 0  # discordant pairs won by arm 1
    n_pairs: int = 0
    decision: Decision = Decision.UNDECIDED


def ingest_pair(state: SprtState, x1: int, x2: int,
                config: SprtConfig) -> SprtState:
    """Fold one paired outcome into the test.

    Concordant pairs only advance the iteration counter. Raises
    :class:`ProtocolError` if the test already decided.
    """
    if state.decision is not Decision.UNDECIDED:
        raise ProtocolError(f"pair ingested after decision {state.decision.value}")
    if x1 not in (0, 1) or x2 not in (0, 1):
        raise ValueError(f"pair components must be bits, got ({x1}, {x2})")

    m, t = state.m_discordant, state.t_count
    if x1 != x2:
        m += 1
        if x1 == 1:
            t += 1
    log_lr = (t * config.increment_first_wins
              + (m - t) * config.increment_second_wins)
    n = state.n_pairs + 1

    decision = Decision.UNDECIDED
    if log_lr >= config.upper_threshold:
        decision = Decision.ACCEPT_H1
    elif log_lr <= config.lower_threshold:
        decision = Decision.ACCEPT_H0
    elif n >= config.max_iterations:
        decision = Decision.INCONCLUSIVE_CAP
    return SprtState(log_lr=log_lr, m_discordant=m, t_count=t, n_pairs=n,
                     decision=decision)


def map_check_to_pair(check_value: int) -> tuple[int, int]:
    """check() outcome to (x1, x2): 1 means arm 1 satisfied its property."""
    mapping = {0: (0, 0), 1: (1, 0), 2: (0, 1)}
    try:
        return mapping[int(check_value)]
    except (KeyError, ValueError):
        raise ValueError(f"check value must be 0, 1 or 2, got {check_value!r}") \
            from None


def run_test(pair_source: Iterable[tuple[int, int]],
             config: SprtConfig) -> tuple[SprtState, int]:
    """Pull pairs in iteration order until the test decides or caps out.

    Returns the final state and the number of pairs consumed. A source that
    dries up first leaves the state undecided.
    """
    state = SprtState()
    source: Iterator[tuple[int, int]] = iter(pair_source)
    for x1, x2 in source:
        state = ingest_pair(state, x1, x2, config)
        if state.decision is not Decision.UNDECIDED:
            break
    return state, state.n_pairs


def expected_iterations_given_q(q: float, discordant_rate: float,
                                config: SprtConfig) -> float:
    """Wald's expected-sample-size approximation, in total iterations.

    ``q`` is the probability that arm 1 wins a discordant pair and
    ``discordant_rate`` the probability that a pair is discordant at all.
    Returns ``inf`` when the expected per-pair increment vanishes (q at the
    centre of the indifference region).
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    if not 0.0 < discordant_rate <= 1.0:
        raise ValueError("discordant_rate must lie in (0, 1]")
    drift = (q * config.increment_first_wins
             + (1.0 - q) * config.increment_second_wins)
    if abs(drift) < 1e-12:
        return math.inf
    boundary = config.upper_threshold if drift > 0 else config.lower_threshold
    return (boundary / drift) / discordant_rate


def expected_iterations(p1: float, p2: float, config: SprtConfig) -> float:
    """Expected iterations for independent Bernoulli arms (p1, p2)."""
    discordant = p1 * (1.0 - p2) + p2 * (1.0 - p1)
    if discordant == 0.0:
        return math.inf
    q = p1 * (1.0 - p2) / discordant
    return expected_iterations_given_q(q, discordant, config)
