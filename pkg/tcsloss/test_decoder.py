import math

import numpy as np
import pytest
from scipy.sparse.csgraph import dijkstra

from tcsloss.conftest import site
from tcsloss.decoder import (
    Matching, WeightGraph, WeightTemplate, build_weight_graph, correction_parity, decode, edge_weight,
    merge_graph_for_loss, mwpm, shortest_paths,
)
from tcsloss.errmodel import ErrorModelParams
from tcsloss.errors import InfeasibleMatchingError
from tcsloss.lattice import DUAL, MEASURE_SLOT, PRIMAL
from tcsloss.syndrome import MeasurementRecord, Superstabilizer, SyndromeWindow, cut_parity


def hand_graph(n_cells, edges):
    """Single-round primal graph; edges are (u, v, p, crossing) over window nodes."""
    u, v, p, c = zip(*edges)
    a, b = np.minimum(u, v), np.maximum(u, v)
    return WeightGraph(PRIMAL, 0, 0, n_cells, np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64),
                       np.asarray(p, dtype=float), np.asarray(c, dtype=np.uint8))


def chain(crossings=(0, 0, 0, 0, 0)):
    """bottom - 0 - 1 - 2 - 3 - top"""
    bottom, top = 4, 5
    probs = (0.01, 0.1, 0.1, 0.1, 0.01)
    ends = [(bottom, 0), (0, 1), (1, 2), (2, 3), (3, top)]
    return hand_graph(4, [(a, b, p, c) for (a, b), p, c in zip(ends, probs, crossings)])


def brute_force(nodes, dist, db):
    if not nodes:
        return 0.0
    i, rest = nodes[0], nodes[1:]
    best = db[i] + brute_force(rest, dist, db)
    for k, j in enumerate(rest):
        best = min(best, dist[i, j] + brute_force(rest[:k] + rest[k + 1:], dist, db))
    return best


class TestWeights:
    def test_edge_weight(self):
        assert edge_weight(0.5) == pytest.approx(math.log(2))
        assert edge_weight(0.9) == pytest.approx(math.log(2))
        assert edge_weight(0.0) == pytest.approx(-math.log(1e-300))

    def test_zero_rates_give_empty_graph(self, lattice3):
        assert len(build_weight_graph(lattice3, ErrorModelParams())) == 0

    def test_default_rounds(self, lattice3):
        graph = build_weight_graph(lattice3, ErrorModelParams(p_comp=1e-3))
        assert (graph.lo, graph.hi) == (0, 3)
        frame = graph.to_frame()
        assert list(frame.columns) == ["u", "v", "probability", "weight", "crossing"]
        assert (frame["probability"] > 0).all()

    def test_measurement_error_edge(self, lattice3, template3):
        sid = site(lattice3, 3, 2, 3)
        (a, b), _ = lattice3.face_cells(PRIMAL, sid)
        r, i = lattice3.split_site(sid)
        assert template3._component_edges((r, i, MEASURE_SLOT, "Z")) == [(a, b, 1)]
        graph = template3.graph(0, 3)
        na, nb = graph.node_of_cell(a), graph.node_of_cell(b)
        hit = (graph.u == na) & (graph.v == nb)
        assert hit.sum() == 1
        assert graph.probability[hit][0] >= 1e-3 / 4
        assert graph.crossing[hit][0] == 1

    def test_tiling_stays_in_window(self, template3):
        graph = template3.graph(3, 5)
        assert len(graph) > 0
        assert (graph.u < graph.v).all()
        assert graph.v.max() < graph.num_nodes
        with pytest.raises(KeyError):
            graph.node_of_cell(0)

    def test_template_counts_no_stray_faults(self, template3):
        assert template3.undetectable == 0


class TestMergeForLoss:
    def test_no_superstabilizers(self, template3):
        graph = template3.graph(0, 2)
        assert merge_graph_for_loss(graph, []) is graph

    def test_parallel_edges_combine(self):
        graph = hand_graph(3, [(0, 3, 0.01, 0), (1, 3, 0.02, 1), (0, 1, 0.3, 1)])
        merged_region = Superstabilizer(
            id=0, lattice_type=PRIMAL, members=(0, 1), surviving_faces=frozenset(), product=1,
            touches_boundary=(), spanning=False, anchor=0, offsets={0: 0, 1: 1},
        )
        merged = merge_graph_for_loss(graph, [merged_region])
        assert list(zip(merged.u, merged.v)) == [(0, 3)]
        assert merged.probability[0] == pytest.approx(0.01 + 0.02 - 0.01 * 0.02)
        # the likelier edge sets the crossing, corrected by its member offset
        assert merged.crossing[0] == 0
        assert merged.rep.tolist()[:3] == [0, 0, 2]


class TestMatching:
    def test_adjacent_events_pair(self):
        graph = chain()
        m = mwpm([1, 2], graph)
        assert m.pairs == [(1, 2)]
        assert m.total_weight == pytest.approx(edge_weight(0.1))

    def test_event_near_boundary(self):
        graph = chain()
        m = mwpm([0], graph)
        assert m.pairs == [(0, graph.node_of_boundary("bottom"))]

    def test_crossing_parity(self):
        graph = chain(crossings=(0, 0, 1, 0, 0))
        m = mwpm([1, 2], graph)
        assert m.parity == 1
        assert correction_parity(m, graph) == 1

    def test_paths(self):
        paths = shortest_paths(chain(), [0])
        assert paths.path(0, 3) == [0, 1, 2, 3]

    def test_odd_events_without_boundaries(self):
        with pytest.raises(InfeasibleMatchingError):
            mwpm([0, 1, 2], chain(), use_boundaries=False)

    def test_duplicate_events(self):
        with pytest.raises(InfeasibleMatchingError):
            mwpm([1, 1], chain())

    def test_empty(self):
        m = mwpm([], chain())
        assert len(m) == 0
        assert correction_parity(Matching(), chain()) == 0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = 6
            pairs = {(k, k + 1) for k in range(n - 1)} | {(n, 0), (n - 1, n + 1)}
            for _ in range(5):
                a, b = sorted(rng.choice(n, 2, replace=False))
                pairs.add((int(a), int(b)))
            edges = [(a, b, float(rng.uniform(1e-3, 0.3)), int(rng.integers(2))) for a, b in sorted(pairs)]
            graph = hand_graph(n, edges)
            dist = dijkstra(graph.csgraph, directed=False)
            db = dist[:, n:].min(axis=1)
            k = int(rng.integers(1, n + 1))
            events = sorted(int(e) for e in rng.choice(n, k, replace=False))
            m = mwpm(events, graph)
            assert m.total_weight == pytest.approx(brute_force(events, dist, db), rel=1e-6)


class TestDecode:
    def test_weight_two_error_defeats_distance_three(self, lattice3, template3):
        """Two flips in a column leave one event, matched to the near boundary."""
        flipped = [site(lattice3, 3, 2, 3), site(lattice3, 3, 4, 3)]
        record = MeasurementRecord.from_flips(lattice3, flipped)
        window = SyndromeWindow(lattice3, PRIMAL, 0, 2, record)
        (lower,), _ = lattice3.face_cells(PRIMAL, site(lattice3, 3, 0, 3))
        assert window.events.cells == [lower]

        result = decode(window, template3)
        graph = result.graph
        assert result.matching.pairs == [(graph.node_of_cell(lower), graph.node_of_boundary("bottom"))]
        assert correction_parity(result.matching, graph) == 0
        assert cut_parity(lattice3, PRIMAL, record.outcome(1)) == 1

    def test_single_error_is_corrected(self, lattice3, template3):
        record = MeasurementRecord.from_flips(lattice3, [site(lattice3, 3, 2, 3)])
        window = SyndromeWindow(lattice3, PRIMAL, 0, 2, record)
        result = decode(window, template3)
        assert len(result.matching) == 1
        assert result.parity == cut_parity(lattice3, PRIMAL, record.outcome(1))

    def test_loss_contracts_events(self, lattice3, template3):
        lost = site(lattice3, 3, 2, 3)
        record = MeasurementRecord.from_flips(lattice3, [site(lattice3, 2, 1, 3)], [lost])
        window = SyndromeWindow(lattice3, PRIMAL, 0, 2, record)
        result = decode(window, template3)
        assert result.graph.rep is not None
        assert len(result.matching) == 1

    def test_dual_template(self, lattice3):
        template = WeightTemplate(lattice3, ErrorModelParams(p_comp=1e-3), DUAL)
        graph = template.graph(0, 2)
        assert len(graph) > 0
        assert graph.boundaries == ("left", "right", "past")


@pytest.mark.slow
@pytest.mark.parametrize("d", [3, 5])
def test_matching_is_exact_on_lattice_graphs(d, lattice3, lattice5):
    lattice = {3: lattice3, 5: lattice5}[d]
    graph = WeightTemplate(lattice, ErrorModelParams(p_comp=1e-3, p_loss=1e-2, p_lint=1.0), PRIMAL).graph(0, 3)
    n = graph.n_window_cells
    dist = dijkstra(graph.csgraph, directed=False)
    db = dist[:, n:].min(axis=1)
    rng = np.random.default_rng(d)
    for _ in range(500):
        k = int(rng.integers(1, 11))
        events = sorted(int(e) for e in rng.choice(n, k, replace=False))
        m = mwpm(events, graph)
        assert m.total_weight == pytest.approx(brute_force(events, dist, db), rel=1e-8)
