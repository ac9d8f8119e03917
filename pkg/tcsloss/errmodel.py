"""
Fault sampling and Pauli-frame propagation for one round of the cluster.

Slots per site: 0 init, 1-4 the C_Z gates in time order (idle where the
partner is missing), 5 measure. Loss at slot k means the qubit vanished
after gate k; it skips every later gate of the round.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from tcsloss.errors import ValidationError
from tcsloss.lattice import CZ_SLOTS, INIT_SLOT, MEASURE_SLOT, SLOTS_PER_SITE, Schedule

logger = logging.getLogger(__name__)

PAULIS = "IXYZ"
NOT_LOST = SLOTS_PER_SITE

# Philox counter word selecting the draw family
ROUND_DRAWS = 0
LINT_DRAWS = 1


class EventKind(str, Enum):
    PAULI = "pauli"
    LOSS = "loss"
    LOSS_INTERACTION = "loss_interaction"


@dataclass(frozen=True)
class ErrorModelParams:
    p_comp: float = 0.0
    p_loss: float = 0.0
    p_lint: float = 0.0

    def __post_init__(self):
        for name in ("p_comp", "p_loss", "p_lint"):
            value = getattr(self, name)
            if not 0.0 <= float(value) <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {value}")
            object.__setattr__(self, name, float(value))

    @property
    def is_noiseless(self) -> bool:
        return self.p_comp == 0.0 and self.p_loss == 0.0

    def as_dict(self) -> dict:
        return {"p_comp": self.p_comp, "p_loss": self.p_loss, "p_lint": self.p_lint}


@dataclass(frozen=True)
class ErrorEvent:
    """
    A sampled fault. For LOSS events `pauli` is the Z byproduct left on the
    partners that were already entangled ('Z' or 'I').
    """

    round: int
    site: int
    slot: int
    kind: EventKind
    pauli: str

    def __post_init__(self):
        if not 0 <= self.slot < SLOTS_PER_SITE:
            raise ValidationError(f"slot {self.slot} out of range")
        if self.kind == EventKind.LOSS_INTERACTION and self.slot not in CZ_SLOTS:
            raise ValidationError("interaction errors only happen at C_Z slots")

    def to_dict(self) -> dict:
        return {"round": self.round, "site": self.site, "slot": self.slot, "kind": self.kind.value, "pauli": self.pauli}


@dataclass
class RoundOutcome:
    """
    Measurement record of one round.

    erasures holds, for every site lost this round, the global ids of the
    partners that had already completed their C_Z with it. Those partners
    share one random Z byproduct.
    """

    round: int
    flips: np.ndarray  # uint8 X-measurement flips, zero on lost sites
    lost: np.ndarray  # bool
    erasures: tuple[tuple[int, ...], ...] = ()
    events: tuple = field(default=())

    @classmethod
    def clean(cls, round_index: int, n_sites: int) -> "RoundOutcome":
        return cls(round_index, np.zeros(n_sites, dtype=np.uint8), np.zeros(n_sites, dtype=bool))


class RandomStream:
    """Counter-based streams: one independent Philox generator per (trial, round, purpose)."""

    def __init__(self, seed: int, trial: int = 0):
        if seed < 0 or trial < 0:
            raise ValidationError("seed and trial must be non-negative")
        self.seed = int(seed)
        self.trial = int(trial)

    def generator(self, round_index: int, purpose: int = ROUND_DRAWS) -> np.random.Generator:
        bitgen = np.random.Philox(key=self.seed, counter=[0, round_index, purpose, self.trial])
        return np.random.Generator(bitgen)


def fault_draws(u_occurs: np.ndarray, u_choice: np.ndarray, p: float, alphabet: int):
    """Turn uniform pairs into (happened, symbol index) with a uniform symbol."""
    occurred = u_occurs < p
    choice = np.minimum((u_choice * alphabet).astype(np.int64), alphabet - 1)
    return occurred, choice


@dataclass(frozen=True)
class _GateTable:
    owner: np.ndarray
    owner_slot: np.ndarray
    partner: np.ndarray
    partner_dr: np.ndarray
    partner_slot: np.ndarray


@lru_cache(maxsize=32)
def _gate_table(schedule: Schedule) -> _GateTable:
    owned = schedule.owned
    return _GateTable(
        np.array([g.owner for g in owned], dtype=np.int64),
        np.array([g.owner_slot for g in owned], dtype=np.int64),
        np.array([g.partner for g in owned], dtype=np.int64),
        np.array([g.partner_dr for g in owned], dtype=np.int64),
        np.array([g.partner_slot for g in owned], dtype=np.int64),
    )


@lru_cache(maxsize=64)
def _single_qubit_slots(schedule: Schedule, first_round: bool) -> np.ndarray:
    """Slots drawing single-qubit noise: init, measure and idle gates."""
    mask = np.zeros((schedule.n_sites, SLOTS_PER_SITE), dtype=bool)
    mask[:, INIT_SLOT] = True
    mask[:, MEASURE_SLOT] = True
    for slot in CZ_SLOTS:
        idle = schedule.partner[:, slot] < 0
        if first_round:
            idle |= schedule.partner_dr[:, slot] < 0
        mask[:, slot] = idle
    return mask


def loss_slots(events: Iterable[ErrorEvent], round_index: int, n_sites: int) -> np.ndarray:
    """Per-site loss slot of one round (NOT_LOST where the site survived)."""
    out = np.full(n_sites, NOT_LOST, dtype=np.int64)
    for ev in events:
        if ev.kind == EventKind.LOSS and ev.round == round_index:
            out[ev.site] = ev.slot
    return out


def _partner_losses(table: _GateTable, lost_at: np.ndarray, previous: np.ndarray | None) -> np.ndarray:
    if previous is None:
        previous = np.full_like(lost_at, NOT_LOST)
    return np.where(table.partner_dr == 0, lost_at[table.partner], previous[table.partner])


def sample_round(params: ErrorModelParams, schedule: Schedule, round_index: int,
                 stream: RandomStream, previous_losses: np.ndarray | None = None) -> list[ErrorEvent]:
    """
    Draw gate errors and losses for the sites and gates owned by one round.

    previous_losses gives the loss slots of round_index - 1, needed for the
    temporal C_Z gates that reach back into that round.
    """
    n = schedule.n_sites
    gen = stream.generator(round_index, ROUND_DRAWS)
    u = gen.random((n, SLOTS_PER_SITE, 3))
    table = _gate_table(schedule)
    u_gate = gen.random((len(table.owner), 2))
    u_byproduct = gen.random(n)

    # 1. Losses: first slot whose draw fires
    lost_hits = u[:, :, 0] < params.p_loss
    lost_at = np.where(lost_hits.any(axis=1), lost_hits.argmax(axis=1), NOT_LOST)

    events = []

    # 2. Single-qubit faults at init, idle and measure slots
    occurred, choice = fault_draws(u[:, :, 1], u[:, :, 2], params.p_comp, 4)
    slots = np.arange(SLOTS_PER_SITE)[None, :]
    keep = occurred & _single_qubit_slots(schedule, round_index == 0) & (slots < lost_at[:, None]) & (choice > 0)
    for i, s in zip(*np.nonzero(keep)):
        events.append(ErrorEvent(round_index, int(i), int(s), EventKind.PAULI, PAULIS[choice[i, s]]))

    # 3. Two-qubit faults on executed C_Z gates
    valid = (table.partner_dr == 0) | (round_index > 0)
    partner_lost = _partner_losses(table, lost_at, previous_losses)
    executed = valid & (lost_at[table.owner] >= table.owner_slot) & (partner_lost >= table.partner_slot)
    occurred, pair = fault_draws(u_gate[:, 0], u_gate[:, 1], params.p_comp, 16)
    for e in np.nonzero(executed & occurred & (pair > 0))[0]:
        a, b = divmod(int(pair[e]), 4)
        if a and lost_at[table.owner[e]] > table.owner_slot[e]:
            events.append(ErrorEvent(round_index, int(table.owner[e]), int(table.owner_slot[e]),
                                     EventKind.PAULI, PAULIS[a]))
        if b and partner_lost[e] > table.partner_slot[e]:
            events.append(ErrorEvent(round_index + int(table.partner_dr[e]), int(table.partner[e]),
                                     int(table.partner_slot[e]), EventKind.PAULI, PAULIS[b]))

    # 4. Loss events, carrying the byproduct left on already-entangled partners
    for i in np.nonzero(lost_at < NOT_LOST)[0]:
        byproduct = "Z" if u_byproduct[i] < 0.5 else "I"
        events.append(ErrorEvent(round_index, int(i), int(lost_at[i]), EventKind.LOSS, byproduct))

    return sort_events(events, schedule)


def apply_loss_interactions(events: Sequence[ErrorEvent], schedule: Schedule, params: ErrorModelParams,
                            stream: RandomStream, round_index: int,
                            previous_losses: np.ndarray | None = None) -> list[ErrorEvent]:
    """Uniform I/X/Y/Z on the survivor of every skipped C_Z, with probability p_lint."""
    if params.p_lint == 0.0:
        return []
    n = schedule.n_sites
    lost_at = loss_slots(events, round_index, n)
    table = _gate_table(schedule)
    gen = stream.generator(round_index, LINT_DRAWS)
    v = gen.random((len(table.owner), 2, 2))

    valid = (table.partner_dr == 0) | (round_index > 0)
    partner_lost = _partner_losses(table, lost_at, previous_losses)
    owner_gone = lost_at[table.owner] < table.owner_slot
    partner_gone = partner_lost < table.partner_slot

    added = []
    # owner survives, partner already gone
    occurred, choice = fault_draws(v[:, 0, 0], v[:, 0, 1], params.p_lint, 4)
    for e in np.nonzero(valid & partner_gone & ~owner_gone & occurred)[0]:
        added.append(ErrorEvent(round_index, int(table.owner[e]), int(table.owner_slot[e]),
                                EventKind.LOSS_INTERACTION, PAULIS[choice[e]]))
    # partner survives, owner already gone
    occurred, choice = fault_draws(v[:, 1, 0], v[:, 1, 1], params.p_lint, 4)
    for e in np.nonzero(valid & owner_gone & ~partner_gone & occurred)[0]:
        added.append(ErrorEvent(round_index + int(table.partner_dr[e]), int(table.partner[e]),
                                int(table.partner_slot[e]), EventKind.LOSS_INTERACTION, PAULIS[choice[e]]))
    return sort_events(added, schedule)


def sort_events(events: Iterable[ErrorEvent], schedule: Schedule) -> list[ErrorEvent]:
    return sorted(events, key=lambda ev: (schedule.time(ev.round, ev.site, ev.slot), ev.site, ev.kind.value))


def deposit(schedule: Schedule, round_index: int, site: int, slot: int, pauli: str,
            alive: Callable[[int, int, int], bool] | None = None) -> Iterator[tuple[int, int]]:
    """
    Sites (round, index) whose X outcome a single Pauli at (site, slot) flips.

    Z parts flip the site itself; X parts become Z on every partner of a
    later executed C_Z. alive(round, site, slot) says whether a site still
    takes part in that slot (always true without losses).
    """
    if pauli in "ZY":
        yield round_index, site
    if pauli not in "XY":
        return
    for m in CZ_SLOTS:
        if m <= slot:
            continue
        if alive is not None and not alive(round_index, site, m):
            break
        other = schedule.partner_of(round_index, site, m)
        if other is None:
            continue
        pr, pj, ps = other
        if alive is None or alive(pr, pj, ps):
            yield pr, pj


def propagate(events: Iterable[ErrorEvent], schedule: Schedule, rounds: Iterable[int],
              keep_events: bool = False) -> dict[int, RoundOutcome]:
    """
    Measurement flips, losses and erasure groups for the target rounds.

    Flips on target rounds need the events of the neighbouring rounds as
    well; erasure groups are attached to the round of the lost site.
    """
    events = list(events)
    n = schedule.n_sites
    targets = sorted(set(rounds))
    lost_at = {}
    for ev in events:
        if ev.kind == EventKind.LOSS:
            lost_at.setdefault(ev.round, np.full(n, NOT_LOST, dtype=np.int64))[ev.site] = ev.slot

    def alive(r, i, slot):
        arr = lost_at.get(r)
        return arr is None or arr[i] >= slot

    flips = {r: np.zeros(n, dtype=np.uint8) for r in targets}
    groups = {r: [] for r in targets}

    for ev in events:
        if ev.kind == EventKind.LOSS:
            entangled = []
            for m in CZ_SLOTS:
                if m > ev.slot:
                    break
                other = schedule.partner_of(ev.round, ev.site, m)
                if other is None or not alive(*other):
                    continue
                pr, pj, _ = other
                entangled.append(pr * n + pj)
                if ev.pauli == "Z" and pr in flips:
                    flips[pr][pj] ^= 1
            if entangled and ev.round in groups:
                groups[ev.round].append(tuple(entangled))
            continue
        if ev.pauli == "I":
            continue
        for r, i in deposit(schedule, ev.round, ev.site, ev.slot, ev.pauli, alive):
            if r in flips:
                flips[r][i] ^= 1

    out = {}
    for r in targets:
        lost = lost_at.get(r, np.full(n, NOT_LOST)) < NOT_LOST
        f = flips[r]
        f[lost] = 0
        kept = tuple(ev for ev in events if ev.round == r) if keep_events else ()
        out[r] = RoundOutcome(r, f, lost, tuple(groups[r]), kept)
    return out
