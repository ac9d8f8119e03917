import numpy as np
import pytest

from tcsloss.errmodel import (
    NOT_LOST, ErrorEvent, ErrorModelParams, EventKind, RandomStream, apply_loss_interactions, deposit,
    fault_draws, loss_slots, propagate, sample_round,
)
from tcsloss.errors import ValidationError
from tcsloss.lattice import CZ_SLOTS, MEASURE_SLOT


def partners(schedule, r, i, after=-1):
    out = []
    for m in CZ_SLOTS:
        other = schedule.partner_of(r, i, m)
        if m > after and other is not None:
            out.append(other[:2])
    return out


def busy_site(lattice, r=2):
    """A site with four C_Z partners."""
    sched = lattice.schedule
    return next(i for i in range(lattice.n_sites) if len(partners(sched, r, i)) == 4)


class TestParams:
    @pytest.mark.parametrize("field", ["p_comp", "p_loss", "p_lint"])
    def test_range(self, field):
        with pytest.raises(ValidationError):
            ErrorModelParams(**{field: 1.5})
        with pytest.raises(ValidationError):
            ErrorModelParams(**{field: -0.1})

    def test_noiseless(self):
        assert ErrorModelParams().is_noiseless
        assert not ErrorModelParams(p_loss=0.1).is_noiseless

    def test_event_validation(self):
        with pytest.raises(ValidationError):
            ErrorEvent(0, 0, 7, EventKind.PAULI, "X")
        with pytest.raises(ValidationError):
            ErrorEvent(0, 0, MEASURE_SLOT, EventKind.LOSS_INTERACTION, "X")


class TestSampling:
    def test_zero_rates(self, lattice3):
        stream = RandomStream(1)
        for r in range(4):
            assert sample_round(ErrorModelParams(), lattice3.schedule, r, stream) == []

    def test_certain_loss(self, lattice3):
        events = sample_round(ErrorModelParams(p_loss=1.0), lattice3.schedule, 1, RandomStream(0))
        losses = [e for e in events if e.kind == EventKind.LOSS]
        assert len(losses) == lattice3.n_sites
        assert {e.slot for e in losses} == {0}
        assert all(e.kind == EventKind.LOSS for e in events)

    def test_reproducible(self, lattice3):
        params = ErrorModelParams(0.05, 0.05, 1.0)
        a = sample_round(params, lattice3.schedule, 5, RandomStream(42, trial=3))
        b = sample_round(params, lattice3.schedule, 5, RandomStream(42, trial=3))
        c = sample_round(params, lattice3.schedule, 5, RandomStream(42, trial=4))
        assert a == b
        assert a != c

    def test_round_draws_independent_of_order(self, lattice3):
        params = ErrorModelParams(p_comp=0.1)
        stream = RandomStream(9)
        late = sample_round(params, lattice3.schedule, 7, stream)
        sample_round(params, lattice3.schedule, 6, stream)
        assert sample_round(params, lattice3.schedule, 7, stream) == late

    def test_no_faults_after_loss(self, lattice3):
        params = ErrorModelParams(p_comp=0.5, p_loss=0.2)
        events = sample_round(params, lattice3.schedule, 3, RandomStream(5))
        lost = loss_slots(events, 3, lattice3.n_sites)
        for e in events:
            if e.kind == EventKind.PAULI and e.round == 3:
                assert e.slot <= lost[e.site]

    def test_loss_slots(self, lattice3):
        events = [ErrorEvent(2, 4, 3, EventKind.LOSS, "I")]
        slots = loss_slots(events, 2, lattice3.n_sites)
        assert slots[4] == 3
        assert (np.delete(slots, 4) == NOT_LOST).all()

    def test_interactions_need_lost_partner(self, lattice3):
        params = ErrorModelParams(p_lint=1.0)
        stream = RandomStream(0)
        assert apply_loss_interactions([], lattice3.schedule, params, stream, 2) == []
        i = busy_site(lattice3)
        events = [ErrorEvent(2, i, 0, EventKind.LOSS, "I")]
        added = apply_loss_interactions(events, lattice3.schedule, params, stream, 2)
        survivors = {(e.round, e.site) for e in added}
        # the gate up into round 3 belongs to round 3
        assert survivors == {p for p in partners(lattice3.schedule, 2, i) if p[0] <= 2}

    def test_fault_draws(self):
        occurred, choice = fault_draws(np.array([0.0, 0.5, 0.99]), np.array([0.0, 0.5, 0.999]), 0.6, 4)
        assert occurred.tolist() == [True, True, False]
        assert choice.tolist() == [0, 2, 3]


class TestPropagation:
    def test_z_flips_site(self, lattice3):
        assert list(deposit(lattice3.schedule, 1, 5, MEASURE_SLOT, "Z")) == [(1, 5)]

    def test_x_spreads_to_later_partners(self, lattice3):
        i = busy_site(lattice3)
        sched = lattice3.schedule
        assert list(deposit(sched, 2, i, 0, "X")) == partners(sched, 2, i)
        assert list(deposit(sched, 2, i, 2, "X")) == partners(sched, 2, i, after=2)
        assert list(deposit(sched, 2, i, MEASURE_SLOT, "X")) == []

    def test_single_error(self, lattice3):
        ev = ErrorEvent(1, 7, MEASURE_SLOT, EventKind.PAULI, "Z")
        out = propagate([ev], lattice3.schedule, [0, 1, 2])
        assert out[1].flips[7] == 1
        assert out[1].flips.sum() == 1
        assert out[0].flips.sum() == out[2].flips.sum() == 0
        assert out[1].events == ()

    def test_kept_events(self, lattice3):
        ev = ErrorEvent(1, 7, MEASURE_SLOT, EventKind.PAULI, "Z")
        out = propagate([ev], lattice3.schedule, [0, 1], keep_events=True)
        assert out[1].events == (ev,)
        assert out[0].events == ()
        assert ev.to_dict() == {"round": 1, "site": 7, "slot": MEASURE_SLOT, "kind": "pauli", "pauli": "Z"}

    def test_loss_after_all_gates(self, lattice3):
        i = busy_site(lattice3)
        sched = lattice3.schedule
        ev = ErrorEvent(2, i, MEASURE_SLOT, EventKind.LOSS, "Z")
        out = propagate([ev], sched, [1, 2, 3])
        assert out[2].lost[i]
        assert out[2].flips[i] == 0
        group = {lattice3.split_site(s) for s in out[2].erasures[0]}
        assert group == set(partners(sched, 2, i))
        flipped = {(r, int(j)) for r in (1, 2, 3) for j in np.nonzero(out[r].flips)[0]}
        assert flipped == group

    def test_loss_before_gates(self, lattice3):
        i = busy_site(lattice3)
        ev = ErrorEvent(2, i, 0, EventKind.LOSS, "Z")
        out = propagate([ev], lattice3.schedule, [2])
        assert out[2].erasures == ()
        assert out[2].flips.sum() == 0

    def test_lost_partner_blocks_spread(self, lattice3):
        i = busy_site(lattice3)
        sched = lattice3.schedule
        (pr, pj), *_ = partners(sched, 2, i)
        events = [
            ErrorEvent(pr, pj, 0, EventKind.LOSS, "I"),
            ErrorEvent(2, i, 0, EventKind.PAULI, "X"),
        ]
        out = propagate(events, sched, [1, 2, 3])
        flipped = {(r, int(j)) for r in (1, 2, 3) for j in np.nonzero(out[r].flips)[0]}
        assert flipped == set(partners(sched, 2, i)) - {(pr, pj)}
