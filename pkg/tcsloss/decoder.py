"""
Negative-log weight graph and exact minimum-weight perfect matching.

The base graph is enumerated once per (lattice, error model) over a few
reference rounds and tiled over any window of cell rounds. Loss contracts
merged cells onto their anchor; matching runs on Dijkstra distances between
detection events plus one boundary copy per event.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
import pandas as pd
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from tcsloss.errmodel import PAULIS, ErrorModelParams, _gate_table, _single_qubit_slots, deposit
from tcsloss.errors import InfeasibleMatchingError
from tcsloss.lattice import BOUNDARIES, PRIMAL, LatticeGeometry
from tcsloss.syndrome import DetectionEventSet, Superstabilizer, SyndromeWindow

logger = logging.getLogger(__name__)

REFERENCE_ROUNDS = 5
BULK_ROUND = 2
WEIGHT_SCALE = 1e9
P_FLOOR = 1e-300


def edge_weight(p: np.ndarray | float) -> np.ndarray | float:
    """-log p with p clamped into (0, 1/2]."""
    return -np.log(np.clip(p, P_FLOOR, 0.5))


@dataclass(frozen=True)
class WeightGraph:
    """
    Edges between window nodes. Node k < n_window_cells is the cell
    lo * n_cells + k; the remaining nodes are the boundaries of the type.
    """

    lattice_type: str
    lo: int
    hi: int
    n_cells: int
    u: np.ndarray
    v: np.ndarray
    probability: np.ndarray
    crossing: np.ndarray
    rep: np.ndarray | None = None  # contraction target per node, None when uncontracted
    pot: np.ndarray | None = None

    @property
    def n_window_cells(self) -> int:
        return (self.hi - self.lo + 1) * self.n_cells

    @property
    def boundaries(self) -> tuple[str, ...]:
        return BOUNDARIES[self.lattice_type]

    @property
    def num_nodes(self) -> int:
        return self.n_window_cells + len(self.boundaries)

    @property
    def weights(self) -> np.ndarray:
        return edge_weight(self.probability)

    def __len__(self) -> int:
        return len(self.u)

    def node_of_cell(self, cell_id: int) -> int:
        node = cell_id - self.lo * self.n_cells
        if not 0 <= node < self.n_window_cells:
            raise KeyError(f"cell {cell_id} outside rounds {self.lo}..{self.hi}")
        return node

    def node_of_boundary(self, label: str) -> int:
        return self.n_window_cells + self.boundaries.index(label)

    def label(self, node: int) -> int | str:
        """Cell id or boundary label of a node."""
        if node >= self.n_window_cells:
            return self.boundaries[node - self.n_window_cells]
        return node + self.lo * self.n_cells

    def is_boundary(self, node: int) -> bool:
        return node >= self.n_window_cells

    @cached_property
    def csgraph(self):
        n = self.num_nodes
        return coo_matrix((self.weights, (self.u, self.v)), shape=(n, n)).tocsr()

    @cached_property
    def crossing_of(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): int(c) for a, b, c in zip(self.u, self.v, self.crossing)}

    def edge_crossing(self, a: int, b: int) -> int:
        return self.crossing_of[(a, b) if a < b else (b, a)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "u": [self.label(int(a)) for a in self.u],
            "v": [self.label(int(b)) for b in self.v],
            "probability": self.probability,
            "weight": self.weights,
            "crossing": self.crossing.astype(int),
        })


@dataclass(frozen=True)
class _EdgeClass:
    """Edges relative to an anchor round: (dr, index) ends, boundary index or -1."""

    u_dr: np.ndarray
    u_idx: np.ndarray
    v_dr: np.ndarray
    v_idx: np.ndarray
    v_bnd: np.ndarray
    probability: np.ndarray
    crossing: np.ndarray

    @classmethod
    def empty(cls) -> "_EdgeClass":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, z, np.zeros(0), np.zeros(0, dtype=np.uint8))


class WeightTemplate:
    """
    Every primitive fault of the model, propagated in isolation through the
    schedule and folded into per-edge probabilities.
    """

    def __init__(self, lattice: LatticeGeometry, params: ErrorModelParams, lattice_type: str = PRIMAL):
        self.lattice = lattice
        self.params = params
        self.lattice_type = lattice_type
        self.n_cells = lattice.n_cells(lattice_type)
        self._ends_cache = {}
        self.undetectable = 0
        self.multi_end = 0
        self.edges = self._enumerate()
        self.classes = self._split_classes()

    # ------------------------------------------------------------ enumerate

    def _mechanisms(self):
        """Yield (probability, components) with components ((round, site, slot, pauli), ...)."""
        p = self.params
        sched = self.lattice.schedule
        table = _gate_table(sched)
        for r in range(REFERENCE_ROUNDS):
            if p.p_comp > 0:
                single = _single_qubit_slots(sched, r == 0)
                for i, s in zip(*np.nonzero(single)):
                    for pauli in "XYZ":
                        yield p.p_comp / 4, ((r, int(i), int(s), pauli),)
                for e in range(len(table.owner)):
                    pr = r + int(table.partner_dr[e])
                    if pr < 0:
                        continue
                    owner = (r, int(table.owner[e]), int(table.owner_slot[e]))
                    partner = (pr, int(table.partner[e]), int(table.partner_slot[e]))
                    for k in range(1, 16):
                        a, b = divmod(k, 4)
                        comps = []
                        if a:
                            comps.append(owner + (PAULIS[a],))
                        if b:
                            comps.append(partner + (PAULIS[b],))
                        yield p.p_comp / 16, tuple(comps)
            if p.p_lint > 0 and p.p_loss > 0:
                for e in range(len(table.owner)):
                    pr = r + int(table.partner_dr[e])
                    if pr < 0:
                        continue
                    o_slot, p_slot = int(table.owner_slot[e]), int(table.partner_slot[e])
                    # survivor's chance the other end vanished before its slot
                    gone_partner = 1 - (1 - p.p_loss) ** p_slot
                    gone_owner = 1 - (1 - p.p_loss) ** o_slot
                    for pauli in "XYZ":
                        yield gone_partner * p.p_lint / 4, ((r, int(table.owner[e]), o_slot, pauli),)
                        yield gone_owner * p.p_lint / 4, ((pr, int(table.partner[e]), p_slot, pauli),)

    def _component_edges(self, comp) -> list[tuple]:
        """Edges (a, b, crossing) for the cells one faulty qubit flips."""
        if comp in self._ends_cache:
            return self._ends_cache[comp]
        lat, lt = self.lattice, self.lattice_type
        role = lat.role_mask[lt]
        counts = defaultdict(int)
        cross = 0
        for r, i in deposit(lat.schedule, *comp):
            if not role[i]:
                continue
            sid = lat.site_id(r, i)
            cells, bounds = lat.face_cells(lt, sid)
            for end in list(cells) + list(bounds):
                counts[end] ^= 1
            cross ^= int(lat.is_cut_site(lt, i))
        ends = sorted((e for e, k in counts.items() if k), key=lambda e: (isinstance(e, str), e if isinstance(e, int) else 0, str(e)))
        edges = []
        if all(isinstance(e, str) for e in ends):
            if cross or ends:
                self.undetectable += 1
                logger.warning("fault %s flips no %s cell", comp, lt)
        elif len(ends) == 2:
            edges.append((ends[0], ends[1], cross))
        else:
            self.multi_end += 1
            logger.warning("fault %s flips %d ends; pairing them in order", comp, len(ends))
            for k in range(0, len(ends) - 1, 2):
                if isinstance(ends[k], str):
                    break
                edges.append((ends[k], ends[k + 1], cross if k == 0 else 0))
        self._ends_cache[comp] = edges
        return edges

    def _enumerate(self) -> dict[tuple, list]:
        """{(a, b): [sum log(1-p), crossing]} over global cell ids / boundary labels."""
        acc = {}
        for prob, comps in self._mechanisms():
            if prob <= 0:
                continue
            for comp in comps:
                for a, b, cross in self._component_edges(comp):
                    key = (a, b)
                    slot = acc.setdefault(key, [0.0, cross])
                    slot[0] += math.log1p(-min(prob, 1.0 - 1e-16))
        logger.debug("enumerated %d %s edges", len(acc), self.lattice_type)
        return acc

    def _split_classes(self) -> list[_EdgeClass]:
        rows = {0: [], 1: [], BULK_ROUND: []}
        bounds = BOUNDARIES[self.lattice_type]
        for (a, b), (log_keep, cross) in self.edges.items():
            ra, ia = divmod(a, self.n_cells)
            if isinstance(b, str):
                anchor, rb, ib, bi = ra, ra, -1, bounds.index(b)
            else:
                rb, ib = divmod(b, self.n_cells)
                anchor, bi = min(ra, rb), -1
            if anchor not in rows:
                continue
            p = -math.expm1(log_keep)
            rows[anchor].append((ra - anchor, ia, rb - anchor, ib, bi, p, cross))
        out = []
        for k in (0, 1, BULK_ROUND):
            if not rows[k]:
                out.append(_EdgeClass.empty())
                continue
            cols = list(zip(*rows[k]))
            ints = [np.asarray(c, dtype=np.int64) for c in cols[:5]]
            out.append(_EdgeClass(*ints, np.asarray(cols[5], dtype=float), np.asarray(cols[6], dtype=np.uint8)))
        return out

    # ------------------------------------------------------------------ tile

    def graph(self, lo: int, hi: int) -> WeightGraph:
        """Tile the templates over cell rounds lo..hi."""
        nc = self.n_cells
        n_win = (hi - lo + 1) * nc
        parts = []
        for cls_index, anchors in ((0, [0]), (1, [1]), (2, list(range(BULK_ROUND, hi + 1)))):
            anchors = np.asarray([a for a in anchors if lo <= a <= hi], dtype=np.int64)
            es = self.classes[cls_index]
            if not len(anchors) or not len(es.u_dr):
                continue
            A = anchors[:, None]
            ur = A + es.u_dr[None]
            vr = A + es.v_dr[None]
            is_bnd = np.broadcast_to(es.v_bnd[None] >= 0, ur.shape)
            ok = (ur <= hi) & ((vr <= hi) | is_bnd)
            u = (ur - lo) * nc + es.u_idx[None]
            v = np.where(is_bnd, n_win + es.v_bnd[None], (vr - lo) * nc + es.v_idx[None])
            prob = np.broadcast_to(es.probability[None], ur.shape)
            cross = np.broadcast_to(es.crossing[None], ur.shape)
            parts.append((u[ok], v[ok], prob[ok], cross[ok]))
        if parts:
            u, v, prob, cross = (np.concatenate(c) for c in zip(*parts))
        else:
            u = v = np.zeros(0, dtype=np.int64)
            prob, cross = np.zeros(0), np.zeros(0, dtype=np.uint8)
        a, b = np.minimum(u, v), np.maximum(u, v)
        return WeightGraph(self.lattice_type, lo, hi, nc, a, b, prob, cross.astype(np.uint8))


def build_weight_graph(lattice: LatticeGeometry, params: ErrorModelParams, lattice_type: str = PRIMAL,
                       rounds: tuple[int, int] | None = None) -> WeightGraph:
    """Weight graph over cell rounds lo..hi (default: the reference rounds)."""
    lo, hi = rounds if rounds is not None else (0, REFERENCE_ROUNDS - 2)
    return WeightTemplate(lattice, params, lattice_type).graph(lo, hi)


def merge_graph_for_loss(graph: WeightGraph, superstabilizers: Iterable[Superstabilizer]) -> WeightGraph:
    """
    Contract every superstabilizer onto its anchor (a boundary node when it
    touches one). Crossing bits absorb the members' offsets so a path's
    crossing parity is unchanged by the contraction.
    """
    n = graph.num_nodes
    rep = np.arange(n)
    pot = np.zeros(n, dtype=np.uint8)
    touched = np.zeros(n, dtype=bool)
    for s in superstabilizers:
        target = graph.node_of_boundary(s.anchor) if isinstance(s.anchor, str) else graph.node_of_cell(s.anchor)
        for c in s.members:
            node = graph.node_of_cell(c)
            rep[node] = target
            pot[node] = s.offsets.get(c, 0)
            touched[node] = True
    if not touched.any():
        return graph

    mask = touched[graph.u] | touched[graph.v]
    u = rep[graph.u[mask]]
    v = rep[graph.v[mask]]
    cross = graph.crossing[mask] ^ pot[graph.u[mask]] ^ pot[graph.v[mask]]
    prob = graph.probability[mask]
    keep = u != v
    a, b = np.minimum(u[keep], v[keep]), np.maximum(u[keep], v[keep])
    merged = pd.DataFrame({"u": a, "v": b, "p": prob[keep], "cross": cross[keep]})
    merged = pd.concat([
        merged,
        pd.DataFrame({"u": graph.u[~mask], "v": graph.v[~mask], "p": graph.probability[~mask],
                      "cross": graph.crossing[~mask]}),
    ], ignore_index=True)
    merged["log_keep"] = np.log1p(-np.minimum(merged["p"], 1.0 - 1e-16))
    # parallel edges: probabilities combine, the likeliest edge sets the crossing
    merged = merged.sort_values(["u", "v", "p"], ascending=[True, True, False], kind="mergesort")
    grouped = merged.groupby(["u", "v"], sort=True).agg(log_keep=("log_keep", "sum"), cross=("cross", "first"))
    return WeightGraph(
        graph.lattice_type, graph.lo, graph.hi, graph.n_cells,
        grouped.index.get_level_values("u").to_numpy(dtype=np.int64),
        grouped.index.get_level_values("v").to_numpy(dtype=np.int64),
        -np.expm1(grouped["log_keep"].to_numpy()),
        grouped["cross"].to_numpy(dtype=np.uint8),
        rep=rep, pot=pot,
    )


@dataclass(frozen=True)
class ShortestPaths:
    sources: tuple[int, ...]
    dist: np.ndarray
    pred: np.ndarray

    def row(self, node: int) -> int:
        return self.sources.index(node)

    def path(self, source: int, target: int) -> list[int]:
        """Nodes from source to target along the stored predecessor links."""
        k = self.row(source)
        out = [target]
        while out[-1] != source:
            prev = int(self.pred[k, out[-1]])
            if prev < 0:
                raise InfeasibleMatchingError(f"no path from node {source} to node {target}")
            out.append(prev)
        return out[::-1]


def shortest_paths(graph: WeightGraph, sources: Sequence[int]) -> ShortestPaths:
    sources = tuple(int(s) for s in sources)
    if not sources:
        return ShortestPaths((), np.zeros((0, graph.num_nodes)), np.zeros((0, graph.num_nodes), dtype=np.int64))
    dist, pred = dijkstra(graph.csgraph, directed=False, indices=list(sources), return_predecessors=True)
    return ShortestPaths(sources, np.atleast_2d(dist), np.atleast_2d(pred))


@dataclass
class Matching:
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (event node, event or boundary node)
    total_weight: float = 0.0
    pair_parity: list[int] = field(default_factory=list)
    paths: ShortestPaths | None = None

    @property
    def parity(self) -> int:
        return sum(self.pair_parity) % 2

    def __len__(self) -> int:
        return len(self.pairs)


def _event_nodes(events, graph: WeightGraph) -> list[int]:
    if isinstance(events, DetectionEventSet):
        nodes = [graph.node_of_cell(c) for c in events.cells]
    else:
        nodes = [int(e) for e in events]
    if graph.rep is not None:
        nodes = [int(graph.rep[e]) for e in nodes]
    return sorted(nodes)


def mwpm(events: DetectionEventSet | Sequence[int], graph: WeightGraph, use_boundaries: bool = True) -> Matching:
    """
    Exact minimum-weight perfect matching of events, each allowed to match
    its own boundary copy. Ties break on sorted node order.
    """
    nodes = _event_nodes(events, graph)
    if len(set(nodes)) != len(nodes):
        raise InfeasibleMatchingError("duplicate detection events")
    if not nodes:
        return Matching(paths=shortest_paths(graph, []))
    if not use_boundaries and len(nodes) % 2:
        raise InfeasibleMatchingError(f"{len(nodes)} events cannot be paired without boundaries")

    paths = shortest_paths(graph, nodes)
    k = len(nodes)
    bnodes = np.arange(graph.n_window_cells, graph.num_nodes)
    if use_boundaries and len(bnodes):
        bdist = paths.dist[:, bnodes]
        nearest = bnodes[np.argmin(bdist, axis=1)]
        db = bdist.min(axis=1)
    else:
        nearest = np.full(k, -1)
        db = np.full(k, np.inf)

    # 1. Candidate edges in real weight
    cand = []
    for i, j in combinations(range(k), 2):
        w = paths.dist[i, nodes[j]]
        if not np.isfinite(w):
            continue
        if np.isfinite(db[i]) and np.isfinite(db[j]) and w > db[i] + db[j]:
            continue
        cand.append((("e", i), ("e", j), w))
    with_copy = [i for i in range(k) if np.isfinite(db[i])]
    for i in with_copy:
        cand.append((("e", i), ("b", i), db[i]))
    for i, j in combinations(with_copy, 2):
        cand.append((("b", i), ("b", j), 0.0))

    # 2. Max-weight max-cardinality on complemented integer weights
    ints = [int(round(w * WEIGHT_SCALE)) for _, _, w in cand]
    big = (max(ints) if ints else 0) + 1
    g = nx.Graph()
    g.add_nodes_from(sorted([("e", i) for i in range(k)] + [("b", i) for i in with_copy]))
    for (a, b, _), w in zip(cand, ints):
        g.add_edge(a, b, weight=big - w)
    mate = nx.max_weight_matching(g, maxcardinality=True)

    partner = {}
    for a, b in mate:
        partner[a] = b
        partner[b] = a
    unmatched = [nodes[i] for i in range(k) if ("e", i) not in partner]
    if unmatched:
        raise InfeasibleMatchingError(f"no perfect matching: events {unmatched} left unmatched")

    # 3. Pairs and their crossing parity along the stored paths
    out = Matching(paths=paths)
    for i in range(k):
        kind, j = partner[("e", i)]
        if kind == "e" and j < i:
            continue
        target = nodes[j] if kind == "e" else int(nearest[i])
        out.pairs.append((nodes[i], target))
        out.total_weight += float(paths.dist[i, target])
        out.pair_parity.append(_path_parity(graph, paths, nodes[i], target))
    return out


def _path_parity(graph: WeightGraph, paths: ShortestPaths, source: int, target: int) -> int:
    walk = paths.path(source, target)
    return sum(graph.edge_crossing(a, b) for a, b in zip(walk, walk[1:])) % 2


def correction_parity(matching: Matching, graph: WeightGraph) -> int:
    """XOR of cut crossings along the path realising each matched pair."""
    if not matching.pairs:
        return 0
    return sum(_path_parity(graph, matching.paths, a, b) for a, b in matching.pairs) % 2


@dataclass
class DecodeResult:
    graph: WeightGraph
    matching: Matching
    events: list[int]

    @property
    def parity(self) -> int:
        return self.matching.parity


def decode(window: SyndromeWindow, template: WeightTemplate) -> DecodeResult:
    """Contract the window's superstabilizers and match its detection events."""
    graph = merge_graph_for_loss(template.graph(window.lo, window.hi), window.superstabilizers)
    matching = mwpm(window.events, graph)
    return DecodeResult(graph, matching, _event_nodes(window.events, graph))
