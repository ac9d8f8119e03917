import json

import pytest

from tcsloss.conftest import site
from tcsloss.errors import MustMergeError
from tcsloss.lattice import PRIMAL
from tcsloss.syndrome import (
    Link, MeasurementRecord, SyndromeWindow, erasure_links, measurement_product, merge_lost,
)


def cells_of(lattice, x, y, t):
    return lattice.face_cells(PRIMAL, site(lattice, x, y, t))


class TestMeasurementProduct:
    def test_clean_cell(self, lattice3):
        record = MeasurementRecord(lattice3, {})
        (a, b), _ = cells_of(lattice3, 3, 2, 3)
        assert measurement_product(lattice3, PRIMAL, a, record) == 1

    def test_flipped_face_flips_both_cells(self, lattice3):
        record = MeasurementRecord.from_flips(lattice3, [site(lattice3, 3, 2, 3)])
        (a, b), _ = cells_of(lattice3, 3, 2, 3)
        assert measurement_product(lattice3, PRIMAL, a, record) == -1
        assert measurement_product(lattice3, PRIMAL, b, record) == -1

    def test_lost_face_must_merge(self, lattice3):
        record = MeasurementRecord.from_flips(lattice3, lost=[site(lattice3, 3, 2, 3)])
        (a, _), _ = cells_of(lattice3, 3, 2, 3)
        with pytest.raises(MustMergeError):
            measurement_product(lattice3, PRIMAL, a, record)


class TestMergeLost:
    def test_single_lost_face(self, lattice3):
        lost = site(lattice3, 3, 2, 3)
        (a, b), _ = cells_of(lattice3, 3, 2, 3)
        record = MeasurementRecord.from_flips(lattice3, lost=[lost])
        supers = merge_lost(lattice3, PRIMAL, [a, b], [lost], record)
        assert len(supers) == 1
        s = supers[0]
        assert s.members == (a, b)
        assert len(s.surviving_faces) == 10
        assert lost not in s.surviving_faces
        assert s.anchor == a
        assert not s.touches_boundary
        assert measurement_product(lattice3, PRIMAL, s, record) == 1

    def test_superstabilizer_sees_outer_flip(self, lattice3):
        lost = site(lattice3, 3, 2, 3)
        (a, b), _ = cells_of(lattice3, 3, 2, 3)
        record = MeasurementRecord.from_flips(lattice3, [site(lattice3, 2, 1, 3)], [lost])
        s, = merge_lost(lattice3, PRIMAL, [a, b], [lost], record)
        assert s.product == -1
        assert measurement_product(lattice3, PRIMAL, s, record) == -1

    def test_no_losses(self, lattice3):
        cells = range(lattice3.n_cells(PRIMAL))
        assert merge_lost(lattice3, PRIMAL, cells, []) == []
        trivial = merge_lost(lattice3, PRIMAL, cells, [], include_trivial=True)
        assert [s.members for s in trivial] == [(c,) for c in cells]

    def test_order_independent(self, lattice3):
        lost = [site(lattice3, 3, 2, 3), site(lattice3, 1, 2, 3), site(lattice3, 5, 1, 4)]
        cells = range(3 * lattice3.n_cells(PRIMAL))
        forward = merge_lost(lattice3, PRIMAL, cells, lost)
        backward = merge_lost(lattice3, PRIMAL, reversed(cells), lost[::-1])
        assert [s.members for s in forward] == [s.members for s in backward]
        assert [s.offsets for s in forward] == [s.offsets for s in backward]

    def test_spanning_chain(self, lattice3):
        lost = [site(lattice3, 3, y, 3) for y in (0, 2, 4)]
        cells = range(3 * lattice3.n_cells(PRIMAL))
        s, = merge_lost(lattice3, PRIMAL, cells, lost)
        assert s.spanning
        assert s.touches_boundary == ("bottom", "top")
        assert s.anchor == "bottom"
        # bottom cell reached without crossing the cut, top cell across it
        (lower, upper), _ = cells_of(lattice3, 3, 2, 3)
        assert s.offsets[lower] == 0
        assert s.offsets[upper] == 1

    def test_boundary_region_reaching_far_side_spans(self, lattice3):
        """d - 1 losses: merged with the bottom, and the top cell borders the top."""
        lost = [site(lattice3, 3, 0, 3), site(lattice3, 3, 2, 3)]
        s, = merge_lost(lattice3, PRIMAL, range(3 * lattice3.n_cells(PRIMAL)), lost)
        assert s.touches_boundary == ("bottom",)
        assert s.spanning

    @pytest.mark.parametrize("ys", [(2,), (0,), (4,)])
    def test_one_loss_does_not_span(self, lattice3, ys):
        lost = [site(lattice3, 3, y, 3) for y in ys]
        supers = merge_lost(lattice3, PRIMAL, range(3 * lattice3.n_cells(PRIMAL)), lost)
        assert supers
        assert not any(s.spanning for s in supers)

    def test_spanning_needs_d_minus_one_losses(self, lattice5):
        cells = range(3 * lattice5.n_cells(PRIMAL))
        short = [site(lattice5, 3, y, 3) for y in (0, 2, 4)]
        assert not any(s.spanning for s in merge_lost(lattice5, PRIMAL, cells, short))
        s, = merge_lost(lattice5, PRIMAL, cells, short + [site(lattice5, 3, 6, 3)])
        assert s.spanning

    def test_links_outside_window_ignored(self, lattice3):
        lost = site(lattice3, 3, 2, 3)
        (a, b), _ = cells_of(lattice3, 3, 2, 3)
        assert merge_lost(lattice3, PRIMAL, [a], [lost]) == []


class TestErasureLinks:
    def test_shared_cell_cancels(self, lattice3):
        group = [site(lattice3, 3, 0, 3), site(lattice3, 3, 2, 3)]
        (_, upper), _ = cells_of(lattice3, 3, 2, 3)
        assert erasure_links(lattice3, PRIMAL, [group]) == [Link(upper, "bottom", 1)]

    def test_other_type_ignored(self, lattice3):
        assert erasure_links(lattice3, PRIMAL, [[site(lattice3, 2, 2, 3)]]) == []

    def test_wide_group_links_each_face(self, lattice3):
        group = [site(lattice3, 2, 1, 3), site(lattice3, 3, 4, 3), site(lattice3, 5, 1, 4)]
        links = erasure_links(lattice3, PRIMAL, [group])
        assert len(links) == 3


class TestSyndromeWindow:
    def test_clean_window(self, lattice3):
        window = SyndromeWindow(lattice3, PRIMAL, 0, 2, MeasurementRecord(lattice3, {}))
        assert len(window.events) == 0
        assert window.superstabilizers == []
        assert window.pot_term() == 0

    def test_single_flip(self, lattice3):
        record = MeasurementRecord.from_flips(lattice3, [site(lattice3, 3, 2, 3)])
        window = SyndromeWindow(lattice3, PRIMAL, 0, 2, record)
        (a, b), _ = cells_of(lattice3, 3, 2, 3)
        assert window.events.cells == [a, b]
        assert {r for _, r in window.events.events} == {1}

    def test_lost_face_events(self, lattice3):
        lost = site(lattice3, 3, 2, 3)
        flips = [site(lattice3, 2, 1, 3), site(lattice3, 3, 4, 3)]
        record = MeasurementRecord.from_flips(lattice3, flips, [lost])
        window = SyndromeWindow(lattice3, PRIMAL, 0, 2, record)
        (a, b), _ = cells_of(lattice3, 3, 2, 3)
        (left, _), _ = cells_of(lattice3, 2, 1, 3)
        s, = window.superstabilizers
        assert s.members == (a, b)
        # the top flip pairs with the left one through the merged region
        assert s.parity == 0
        assert window.events.cells == [left]
        assert window.pot_term() == 1
        assert window.pot_term(before=b) == 0
        assert window.pot_term(before=b + 1) == 1

    def test_toggled_cell_clears_event(self, lattice3):
        record = MeasurementRecord.from_flips(lattice3, [site(lattice3, 3, 2, 3)])
        (a, b), _ = cells_of(lattice3, 3, 2, 3)
        window = SyndromeWindow(lattice3, PRIMAL, 0, 2, record, toggled=[a, 10_000])
        assert window.events.cells == [b]

    def test_dump_is_json(self, lattice3):
        record = MeasurementRecord.from_flips(lattice3, [site(lattice3, 2, 1, 3)], [site(lattice3, 3, 2, 3)])
        payload = json.loads(json.dumps(SyndromeWindow(lattice3, PRIMAL, 0, 2, record).dump()))
        assert payload["rounds"] == [0, 2]
        assert len(payload["superstabilizers"]) == 1
