"""
Continuous simulation: blocks of t_check noisy rounds, two clean capping
rounds, matching, a logical check across the correlation cut, then the cap
is dropped and old rounds are committed and deleted.
"""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from tcsloss.decoder import DecodeResult, WeightTemplate, decode
from tcsloss.errmodel import (
    ErrorModelParams, RandomStream, apply_loss_interactions, loss_slots, propagate, sample_round,
)
from tcsloss.errors import TcsLossError, ValidationError
from tcsloss.lattice import PRIMAL, build_lattice
from tcsloss.syndrome import MeasurementRecord, SyndromeWindow, cut_parity

logger = logging.getLogger(__name__)

MAX_T_CHECK = 10_000
ADAPT_WINDOW = 8
ADAPT_MIN_BLOCKS = 4
CAP_ROUNDS = 2
FORCE_FACTOR = 2


@dataclass(frozen=True)
class RunConfig:
    d: int
    params: ErrorModelParams = field(default_factory=ErrorModelParams)
    t_check: int | None = None  # None: adaptive, starting at 1
    t_delete: int | None = None  # None: 5d
    max_blocks: int | None = None
    target_failures: int | None = None
    max_rounds: int = 10_000_000
    time_limit: float | None = None
    seed: int = 0
    workers: int = 1
    retain_all: bool = False

    def __post_init__(self):
        build_lattice(self.d)
        if self.t_check is not None and self.t_check < 1:
            raise ValidationError("t_check must be >= 1")
        if self.t_delete is not None and self.t_delete < 1:
            raise ValidationError("t_delete must be >= 1")
        if self.t_check is not None and self.t_delete is not None and self.t_delete < self.t_check + CAP_ROUNDS:
            raise ValidationError(f"t_delete ({self.t_delete}) must be >= t_check + 2 ({self.t_check + CAP_ROUNDS})")
        if self.max_blocks is None and self.target_failures is None:
            raise ValidationError("give max_blocks and/or target_failures")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")

    @property
    def adaptive(self) -> bool:
        return self.t_check is None

    @property
    def delete_after(self) -> int:
        return self.t_delete if self.t_delete is not None else 5 * self.d

    def retention(self, t_check: int) -> int:
        return max(self.delete_after, t_check + CAP_ROUNDS)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["params"] = self.params.as_dict()
        out["t_check"] = "auto" if self.t_check is None else self.t_check
        out["t_delete"] = self.delete_after
        return out


@dataclass
class BlockOutcome:
    failed: bool
    cause: str | None
    rounds: int
    mismatch: int
    detection_events: int
    spanning: int


@dataclass
class RunResult:
    d: int
    params: ErrorModelParams
    failures: int
    blocks: int
    rounds: int
    p_round: float
    ci_low: float
    ci_high: float
    p_d_rounds: float
    ci_d_low: float
    ci_d_high: float
    status: str = "ok"
    wall_time: float = 0.0
    breakdown: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1

    @property
    def rounds_per_second(self) -> float:
        return self.rounds / self.wall_time if self.wall_time > 0 else 0.0

    def row(self) -> dict:
        """Deterministic CSV row (no timing columns)."""
        return {
            "d": self.d,
            "p_comp": self.params.p_comp,
            "p_loss": self.params.p_loss,
            "p_lint": self.params.p_lint,
            "rounds": self.rounds,
            "blocks": self.blocks,
            "failures": self.failures,
            "P_L": self.p_round,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "P_L_d_rounds": self.p_d_rounds,
            "ci_d_low": self.ci_d_low,
            "ci_d_high": self.ci_d_high,
            "matching_failures": self.breakdown.get("matching_failures", 0),
            "spanning_failures": self.breakdown.get("spanning_failures", 0),
            "status": self.status,
            "seed": self.seed,
        }


def wilson_interval(failures: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + confidence / 2)
    p = failures / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


def per_round_rate(p_total: float, rounds: float) -> float:
    """Per-round flip rate whose odd-count probability over `rounds` is p_total."""
    if rounds < 1:
        raise ValidationError("rounds must be >= 1")
    p_total = min(max(p_total, 0.0), 0.5)
    return (1 - (1 - 2 * p_total) ** (1 / rounds)) / 2


def pooled_per_round_rate(by_length: Mapping[int, Sequence[int]]) -> float:
    """
    Maximum-likelihood per-round rate q from (blocks, failures) counts keyed by
    block length n, where a block of n rounds fails with probability
    (1 - (1 - 2q)^n) / 2.
    """
    buckets = [(int(n), int(b), int(f)) for n, (b, f) in by_length.items() if b > 0]
    blocks = sum(b for _, b, _ in buckets)
    failures = sum(f for _, _, f in buckets)
    if failures == 0:
        return 0.0
    if len(buckets) == 1:
        return per_round_rate(failures / blocks, buckets[0][0])

    def score(q):
        s = 1 - 2 * q
        total = 0.0
        for n, b, f in buckets:
            p = (1 - s ** n) / 2
            total += n * s ** (n - 1) * (f / p - (b - f) / (1 - p))
        return total

    lo, hi = 1e-12, 0.5 - 1e-9
    if score(hi) >= 0:
        return 0.5
    return float(brentq(score, lo, hi))


def _effective_length(p_block: float, p_round: float, fallback: float) -> float:
    """Block length that maps p_block onto p_round; used to convert the interval."""
    if 0 < p_block < 0.5 and 0 < p_round < 0.5:
        return max(1.0, math.log(1 - 2 * p_block) / math.log(1 - 2 * p_round))
    return max(1.0, fallback)


def _per_rounds(p: float, rounds: int) -> float:
    return 1 - (1 - p) ** rounds


def adapt_t_check(t_check: int, history: list[bool]) -> int:
    """Double when few recent blocks failed, halve when most did."""
    recent = history[-ADAPT_WINDOW:]
    if len(recent) < ADAPT_MIN_BLOCKS:
        return t_check
    rate = sum(recent) / len(recent)
    if rate < 0.1:
        t_check *= 2
    elif rate > 0.5:
        t_check //= 2
    return int(min(max(t_check, 1), MAX_T_CHECK))


class TrialState:
    """One growing cluster and everything carried between blocks."""

    def __init__(self, config: RunConfig, trial: int = 0, template: WeightTemplate | None = None,
                 keep_events: bool = False):
        self.config = config
        self.lattice = build_lattice(config.d)
        self.schedule = self.lattice.schedule
        self.params = config.params
        self.stream = RandomStream(config.seed, trial)
        self.template = template or WeightTemplate(self.lattice, self.params, PRIMAL)
        self.lattice_type = PRIMAL

        self.next_round = 0
        self.events = {}
        self.losses = {}
        self.outcomes = {}
        self.lo = 0
        self.raw_parity = 0
        self.committed = 0
        self.last_mismatch = 0
        self.span_seen = set()
        self.spans_active = False
        self.toggled = set()  # cells cleared by corrections committed at a forced cut
        self.resync = False
        self.keep_events = keep_events
        self.t_check = config.t_check or 1

    # -------------------------------------------------------------- sampling

    def advance(self):
        r = self.next_round
        prev = self.losses.get(r - 1)
        events = sample_round(self.params, self.schedule, r, self.stream, prev)
        events += apply_loss_interactions(events, self.schedule, self.params, self.stream, r, prev)
        self.events[r] = events
        self.losses[r] = loss_slots(events, r, self.lattice.n_sites)
        self.next_round += 1
        if r >= 1:
            self._finalize(r - 1)

    def _finalize(self, r: int):
        evs = [e for k in (r - 1, r, r + 1) for e in self.events.get(k, ())]
        out = propagate(evs, self.schedule, [r], keep_events=self.keep_events)[r]
        self.outcomes[r] = out
        self.raw_parity ^= cut_parity(self.lattice, self.lattice_type, out)
        self.events.pop(r - 1, None)
        self.losses.pop(r - 1, None)

    # ----------------------------------------------------------------- check

    def check(self) -> BlockOutcome:
        last = self.next_round - 1
        evs = [e for k in (last - 1, last) for e in self.events.get(k, ())]
        capped = propagate(evs, self.schedule, [last, last + 1])
        outcomes = dict(self.outcomes)
        outcomes.update(capped)
        record = MeasurementRecord(self.lattice, outcomes)

        window = SyndromeWindow(self.lattice, self.lattice_type, self.lo, last + 1, record, self.toggled)
        result = decode(window, self.template)

        true_parity = self.raw_parity ^ window.pot_term()
        for out in capped.values():
            true_parity ^= cut_parity(self.lattice, self.lattice_type, out)
        mismatch = true_parity ^ self.committed ^ result.parity

        new_spans = [s for s in window.spanning if self.span_seen.isdisjoint(s.members)]
        for s in window.spanning:
            self.span_seen.update(s.members)
        suppress = self.spans_active or bool(window.spanning)
        self.spans_active = bool(window.spanning)

        if new_spans:
            failed, cause = True, "spanning"
        elif suppress or self.resync:
            failed, cause = False, None
        else:
            failed = mismatch != self.last_mismatch
            cause = "matching" if failed else None
        self.last_mismatch = mismatch
        self.resync = False

        if not self.config.retain_all and self._delete(window, result, last + 1) and not failed:
            failed, cause = True, "matching"
        return BlockOutcome(failed, cause, 0, mismatch, len(window.events), len(new_spans))

    # -------------------------------------------------------------- deletion

    def _delete(self, window: SyndromeWindow, result: DecodeResult, hi: int) -> bool:
        """
        Commit and drop rounds below a cut once the window outgrows its
        retention. The cut sits at a quiet round when there is one; past
        FORCE_FACTOR times the retention it is forced. Returns True when a
        forced cut had to split a merged region.
        """
        keep = self.config.retention(self.t_check)
        limit = hi + 1 - keep
        if limit <= self.lo:
            return False
        graph = result.graph
        nc = self.lattice.n_cells(self.lattice_type)

        def round_of(node):
            label = graph.label(node)
            return None if isinstance(label, str) else label // nc

        pair_rounds = []
        for a, b in result.matching.pairs:
            pair_rounds.append([x for x in (round_of(a), round_of(b)) if x is not None])
        by_pairs = _straddled((min(r), max(r)) for r in pair_rounds)
        by_regions = _straddled((min(s.members) // nc, max(s.members) // nc) for s in window.superstabilizers)

        # a cut at round c is quiet when nothing spans rounds c-1 and c
        floor = max(self.lo, hi + 1 - FORCE_FACTOR * keep)
        cut = next((c for c in range(limit, floor, -1) if c not in by_pairs and c not in by_regions), None)
        if cut is None:
            if floor == self.lo:
                return False
            cut = next((c for c in range(limit, floor, -1) if c not in by_regions), limit)
            logger.debug("no quiet round in %d..%d, forcing a cut at %d", self.lo + 1, limit, cut)
        first = cut * nc

        for (a, b), rounds, parity in zip(result.matching.pairs, pair_rounds, result.matching.pair_parity):
            if max(rounds) < cut:
                self.committed ^= parity
            elif min(rounds) < cut:
                # commit the correction and clear the event it ends on above the cut
                self.committed ^= parity
                upper = a if round_of(a) >= cut else b
                self.toggled ^= {graph.label(upper)}
        old = [s for s in window.superstabilizers if max(s.members) < first]
        self.committed ^= window.pot_term(old)
        split = [s for s in window.superstabilizers if min(s.members) < first <= max(s.members)]
        if split:
            self.committed ^= window.pot_term(split, before=first)
            self.resync = True

        self.toggled = {c for c in self.toggled if c >= first}
        self.span_seen = {c for c in self.span_seen if c >= first}
        for r in [r for r in self.outcomes if r < cut - 1]:
            del self.outcomes[r]
        logger.debug("deleted rounds below %d (window now %d..%d)", cut, cut, hi)
        self.lo = cut
        return bool(split)


def _straddled(spans) -> set[int]:
    """Rounds c such that some span covers both c - 1 and c."""
    out = set()
    for low, high in spans:
        out.update(range(low + 1, high + 1))
    return out


def run_block(state: TrialState, config: RunConfig | None = None) -> BlockOutcome:
    """t_check noisy rounds, then the capped check."""
    for _ in range(state.t_check):
        state.advance()
    outcome = state.check()
    outcome.rounds = state.t_check
    return outcome


def _run_trial(config: RunConfig, trial: int) -> dict:
    start = time.perf_counter()
    state = TrialState(config, trial)
    blocks = failures = rounds = events = 0
    causes = {"matching": 0, "spanning": 0}
    history = []
    by_length = {}
    status = "ok"
    while True:
        if config.max_blocks is not None and blocks >= config.max_blocks:
            break
        if config.target_failures is not None and failures >= config.target_failures:
            break
        if config.max_blocks is None and config.params.is_noiseless:
            logger.warning("zero error rates: %d failures can never be reached", config.target_failures)
            status = "timeout"
            break
        if rounds >= config.max_rounds or (
                config.time_limit is not None and time.perf_counter() - start > config.time_limit):
            status = "timeout"
            break
        outcome = run_block(state, config)
        blocks += 1
        rounds += outcome.rounds
        events += outcome.detection_events
        bucket = by_length.setdefault(outcome.rounds, [0, 0])
        bucket[0] += 1
        if outcome.failed:
            failures += 1
            causes[outcome.cause] += 1
            bucket[1] += 1
        history.append(outcome.failed)
        if config.adaptive:
            new = adapt_t_check(state.t_check, history)
            if new != state.t_check:
                logger.debug("t_check %d -> %d", state.t_check, new)
                state.t_check = new
                history.clear()
    return {
        "blocks": blocks, "failures": failures, "rounds": rounds, "events": events,
        "causes": causes, "by_length": by_length, "status": status, "wall_time": time.perf_counter() - start,
    }


def _split(config: RunConfig, workers: int) -> RunConfig:
    def share(n):
        return None if n is None else max(1, math.ceil(n / workers))
    return replace(config, workers=1, max_blocks=share(config.max_blocks),
                   target_failures=share(config.target_failures),
                   max_rounds=max(1, config.max_rounds // workers))


def _result(config: RunConfig, parts: list[dict], wall_time: float) -> RunResult:
    blocks = sum(p["blocks"] for p in parts)
    failures = sum(p["failures"] for p in parts)
    rounds = sum(p["rounds"] for p in parts)
    events = sum(p["events"] for p in parts)
    status = "timeout" if any(p["status"] != "ok" for p in parts) else "ok"

    by_length = {}
    for p in parts:
        for n, (b, f) in p["by_length"].items():
            bucket = by_length.setdefault(n, [0, 0])
            bucket[0] += b
            bucket[1] += f

    # each block is a parity check over its rounds; blocks of different lengths are pooled
    p_block = failures / blocks if blocks else 0.0
    lo_b, hi_b = wilson_interval(failures, blocks)
    p_round = pooled_per_round_rate(by_length)
    n_eff = _effective_length(p_block, p_round, rounds / blocks if blocks else 1.0)
    lo, hi = (per_round_rate(x, n_eff) for x in (lo_b, hi_b))
    d = config.d
    return RunResult(
        d=d, params=config.params, failures=failures, blocks=blocks, rounds=rounds,
        p_round=p_round, ci_low=min(lo, p_round), ci_high=max(hi, p_round),
        p_d_rounds=_per_rounds(p_round, d), ci_d_low=_per_rounds(min(lo, p_round), d),
        ci_d_high=_per_rounds(max(hi, p_round), d),
        status=status, wall_time=wall_time,
        breakdown={
            "lattice_type": PRIMAL,
            "matching_failures": sum(p["causes"]["matching"] for p in parts),
            "spanning_failures": sum(p["causes"]["spanning"] for p in parts),
            "detection_events_per_round": events / rounds if rounds else 0.0,
        },
        seed=config.seed, workers=config.workers,
    )


def estimate(config: RunConfig) -> RunResult:
    """Run blocks until the stop rule; trials spread over config.workers processes."""
    start = time.perf_counter()
    workers = config.workers
    if workers == 1:
        parts = [_run_trial(config, 0)]
    else:
        sub = _split(config, workers)
        with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1)) as pool:
            futures = [pool.submit(_run_trial, sub, k) for k in range(workers)]
            parts = []
            for k, fut in enumerate(futures):
                try:
                    parts.append(fut.result())
                except TcsLossError:
                    logger.error("trial %d failed", k)
                    raise
    result = _result(config, parts, time.perf_counter() - start)
    logger.info("d=%d %s: %d failures / %d blocks (%d rounds), status %s",
                config.d, config.params.as_dict(), result.failures, result.blocks, result.rounds, result.status)
    return result


def estimate_reference(config: RunConfig, rounds_per_shot: int, shots: int) -> RunResult:
    """
    Independent single-shot runs with full history, decoded once at the end.
    Used to cross-check the windowed simulation.
    """
    start = time.perf_counter()
    base = replace(config, retain_all=True, workers=1, t_check=rounds_per_shot,
                   t_delete=None if config.t_delete is None else max(config.t_delete, rounds_per_shot + CAP_ROUNDS))
    template = WeightTemplate(build_lattice(config.d), config.params, PRIMAL)
    failures = 0
    for shot in range(shots):
        state = TrialState(base, trial=shot, template=template)
        for _ in range(rounds_per_shot):
            state.advance()
        outcome = state.check()
        failures += int(outcome.mismatch == 1 or outcome.spanning > 0)
    p_shot = failures / shots if shots else 0.0
    lo, hi = wilson_interval(failures, shots)
    p = per_round_rate(p_shot, rounds_per_shot)
    lo, hi = per_round_rate(lo, rounds_per_shot), per_round_rate(hi, rounds_per_shot)
    return RunResult(
        d=config.d, params=config.params, failures=failures, blocks=shots, rounds=shots * rounds_per_shot,
        p_round=p, ci_low=min(lo, p), ci_high=max(hi, p),
        p_d_rounds=_per_rounds(p, config.d), ci_d_low=_per_rounds(min(lo, p), config.d),
        ci_d_high=_per_rounds(max(hi, p), config.d), wall_time=time.perf_counter() - start,
        breakdown={"lattice_type": PRIMAL}, seed=config.seed,
    )


def sample_history(config: RunConfig, rounds: int, trial: int = 0) -> np.ndarray:
    """Per-round raw cut parity of a run; a cheap fingerprint for reproducibility checks."""
    state = TrialState(replace(config, retain_all=True), trial)
    out = np.zeros(rounds, dtype=np.uint8)
    for _ in range(rounds + 1):
        state.advance()
    for r in range(rounds):
        out[r] = cut_parity(state.lattice, PRIMAL, state.outcomes[r])
    return out
