"""
Cell measurement products, superstabilizers around lost qubits and
detection events over a window of rounds.

Two cells are merged when they share a lost face, or when the partners of a
lost qubit carry a shared random byproduct that flips both of them. A merged
region touching a boundary becomes part of that boundary.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple, Sequence

import networkx as nx
import numpy as np

from tcsloss.errmodel import RoundOutcome
from tcsloss.errors import MustMergeError
from tcsloss.lattice import BOUNDARIES, SPANNING_PAIR, LatticeGeometry

logger = logging.getLogger(__name__)


class Link(NamedTuple):
    """Two cells (or a cell and a boundary label) that must be merged."""

    a: int
    b: int | str
    cross: int


@dataclass(frozen=True)
class Superstabilizer:
    id: int
    lattice_type: str
    members: tuple[int, ...]
    surviving_faces: frozenset[int]
    product: int | None
    touches_boundary: tuple[str, ...]
    spanning: bool
    anchor: int | str
    offsets: Mapping[int, int] = field(default_factory=dict)

    @property
    def parity(self) -> int:
        return 0 if self.product in (None, 1) else 1

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "lattice_type": self.lattice_type,
            "members": list(self.members),
            "surviving_faces": sorted(self.surviving_faces),
            "product": self.product,
            "touches_boundary": list(self.touches_boundary),
            "spanning": self.spanning,
            "anchor": self.anchor,
        }


@dataclass(frozen=True)
class DetectionEventSet:
    lattice_type: str
    events: tuple[tuple[int, int], ...]  # (representative cell id, round)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def cells(self) -> list[int]:
        return [c for c, _ in self.events]


class MeasurementRecord:
    """Round outcomes by round; missing rounds read as clean."""

    def __init__(self, lattice: LatticeGeometry, outcomes: Mapping[int, RoundOutcome]):
        self.lattice = lattice
        self.outcomes = outcomes

    def outcome(self, round_index: int) -> RoundOutcome:
        out = self.outcomes.get(round_index)
        if out is None:
            return RoundOutcome.clean(round_index, self.lattice.n_sites)
        return out

    def flip(self, site_id: int) -> int:
        r, i = self.lattice.split_site(site_id)
        return int(self.outcome(r).flips[i])

    def is_lost(self, site_id: int) -> bool:
        r, i = self.lattice.split_site(site_id)
        return bool(self.outcome(r).lost[i])

    @classmethod
    def from_flips(cls, lattice: LatticeGeometry, flipped: Iterable[int] = (), lost: Iterable[int] = ()):
        """Record with the given global site ids flipped / lost."""
        outcomes = {}
        for sid, attr in [(s, "flips") for s in flipped] + [(s, "lost") for s in lost]:
            r, i = lattice.split_site(sid)
            out = outcomes.setdefault(r, RoundOutcome.clean(r, lattice.n_sites))
            if attr == "flips":
                out.flips[i] ^= 1
            else:
                out.lost[i] = True
        for out in outcomes.values():
            out.flips[out.lost] = 0
        return cls(lattice, outcomes)


def measurement_product(lattice: LatticeGeometry, lattice_type: str,
                        target: int | Superstabilizer, record: MeasurementRecord) -> int:
    """+1 or -1 from the X outcomes of a cell's (or superstabilizer's) surviving faces."""
    if isinstance(target, Superstabilizer):
        faces = target.surviving_faces
    else:
        faces = lattice.cell_faces(lattice_type, target)
        lost = [f for f in faces if record.is_lost(f)]
        if lost:
            raise MustMergeError(f"cell {target} has lost faces {lost}; merge it first")
    parity = sum(record.flip(f) for f in faces) % 2
    return -1 if parity else 1


def cut_parity(lattice: LatticeGeometry, lattice_type: str, outcome: RoundOutcome) -> int:
    """Parity of flips on the correlation-cut faces of one round."""
    return int(outcome.flips[lattice.correlation_cut[lattice_type]].sum() % 2)


def _face_ends(lattice: LatticeGeometry, lattice_type: str, site_id: int) -> list[int | str]:
    cells, bounds = lattice.face_cells(lattice_type, site_id)
    return list(cells) + list(bounds)


def _is_cut(lattice: LatticeGeometry, lattice_type: str, site_id: int) -> int:
    return int(lattice.is_cut_site(lattice_type, lattice.split_site(site_id)[1]))


def lost_face_links(lattice: LatticeGeometry, lattice_type: str, lost_sites: Iterable[int]) -> list[Link]:
    links = []
    role = lattice.role_mask[lattice_type]
    for sid in lost_sites:
        if not role[lattice.split_site(sid)[1]]:
            continue
        a, b = _face_ends(lattice, lattice_type, sid)
        links.append(Link(a, b, _is_cut(lattice, lattice_type, sid)))
    return links


def erasure_links(lattice: LatticeGeometry, lattice_type: str, groups: Iterable[Sequence[int]]) -> list[Link]:
    """
    Links for the shared byproduct on the partners of each lost qubit.

    The byproduct flips an even set of cells; two ends give one link, none
    gives nothing, anything larger falls back to one link per partner face.
    """
    links = []
    role = lattice.role_mask[lattice_type]
    for group in groups:
        faces = [s for s in group if role[lattice.split_site(s)[1]]]
        if not faces:
            continue
        counts = Counter()
        for f in faces:
            counts.update(_face_ends(lattice, lattice_type, f))
        ends = sorted((e for e, c in counts.items() if c % 2), key=lambda e: (isinstance(e, str), str(e) if isinstance(e, str) else e))
        cross = sum(_is_cut(lattice, lattice_type, f) for f in faces) % 2
        if not ends:
            continue
        if len(ends) == 2 and not isinstance(ends[0], str):
            links.append(Link(ends[0], ends[1], cross))
            continue
        logger.debug("byproduct on %s touches %d ends; linking faces one by one", faces, len(ends))
        for f in faces:
            a, b = _face_ends(lattice, lattice_type, f)
            links.append(Link(a, b, _is_cut(lattice, lattice_type, f)))
    return links


def merge_lost(lattice: LatticeGeometry, lattice_type: str, cells: Iterable[int], lost_sites: Iterable[int],
               record: MeasurementRecord | None = None, links: Iterable[Link] = (),
               include_trivial: bool = False, parity: Mapping[int, int] | None = None) -> list[Superstabilizer]:
    """
    Group cells connected through lost faces (and byproduct links) into
    superstabilizers. Links reaching outside `cells` are ignored.
    """
    cells = sorted(set(cells))
    cell_set = set(cells)
    lost_sites = set(lost_sites)
    all_links = lost_face_links(lattice, lattice_type, lost_sites) + list(links)

    graph = nx.Graph()
    graph.add_nodes_from(cells)
    touches = {}
    for link in all_links:
        a, b = (link.b, link.a) if isinstance(link.a, str) else (link.a, link.b)
        if a not in cell_set or (not isinstance(b, str) and b not in cell_set):
            continue
        if isinstance(b, str):
            touches.setdefault(a, []).append((b, link.cross))
        elif a != b:
            graph.add_edge(a, b, cross=link.cross)

    order = BOUNDARIES[lattice_type]
    supers = []
    for comp in sorted((sorted(c) for c in nx.connected_components(graph)), key=lambda c: c[0]):
        bounds = sorted({b for c in comp for b, _ in touches.get(c, ())}, key=order.index)
        if len(comp) == 1 and not bounds and not include_trivial:
            continue

        local = graph.subgraph(comp).copy()
        for c in comp:
            for b, cross in touches.get(c, ()):
                local.add_edge(("boundary", b), c, cross=cross)
        anchor = bounds[0] if bounds else comp[0]
        root = ("boundary", anchor) if bounds else anchor
        offsets = {root: 0}
        for u, v in nx.bfs_edges(local, root):
            offsets[v] = offsets[u] ^ local[u][v]["cross"]

        faces = Counter()
        for c in comp:
            faces.update(lattice.cell_faces(lattice_type, c))
        surviving = frozenset(f for f, k in faces.items() if k == 1 and f not in lost_sites)
        if parity is not None:
            product = -1 if sum(parity[c] for c in comp) % 2 else 1
        elif record is not None:
            product = -1 if sum(record.flip(f) for f in surviving) % 2 else 1
        else:
            product = None

        supers.append(Superstabilizer(
            id=len(supers),
            lattice_type=lattice_type,
            members=tuple(comp),
            surviving_faces=surviving,
            product=product,
            touches_boundary=tuple(bounds),
            spanning=_spans(lattice, lattice_type, comp, bounds),
            anchor=anchor,
            offsets={c: offsets.get(c, 0) for c in comp},
        ))
    return supers


def _spans(lattice: LatticeGeometry, lattice_type: str, comp: Sequence[int], bounds: Sequence[str]) -> bool:
    """
    Reached one spatial boundary through a lost face and borders the opposite
    one: the region then has to merge with that boundary too.
    """
    pair = set(SPANNING_PAIR[lattice_type])
    if pair.isdisjoint(bounds):
        return False
    borders = {b for c in comp for b in lattice.cell_borders(lattice_type, c)}
    return pair <= borders


@lru_cache(maxsize=32)
def _cell_face_template(lattice: LatticeGeometry, lattice_type: str):
    """Faces of each cell as (round offset, site index), padded to six."""
    nc = lattice.n_cells(lattice_type)
    dr = np.zeros((nc, 6), dtype=np.int64)
    idx = np.zeros((nc, 6), dtype=np.int64)
    mask = np.zeros((nc, 6), dtype=bool)
    for i in range(nc):
        for k, f in enumerate(lattice.cell_faces(lattice_type, lattice.cell_id(lattice_type, 1, i))):
            r, j = lattice.split_site(f)
            dr[i, k], idx[i, k], mask[i, k] = r - 1, j, True
    return dr, idx, mask


class SyndromeWindow:
    """
    Everything the matcher needs about cell rounds lo..hi of one lattice type:
    raw cell parities, superstabilizers, detection events and the
    correlation-cut correction carried by merged regions.
    """

    def __init__(self, lattice: LatticeGeometry, lattice_type: str, lo: int, hi: int, record: MeasurementRecord,
                 toggled: Iterable[int] = ()):
        self.lattice = lattice
        self.lattice_type = lattice_type
        self.lo, self.hi = lo, hi
        self.record = record
        self.n_cells = lattice.n_cells(lattice_type)
        n_rounds = hi - lo + 1

        # 1. Raw parities over non-lost faces
        flips = np.stack([record.outcome(r).flips for r in range(lo - 1, hi + 2)])
        dr, idx, mask = _cell_face_template(lattice, lattice_type)
        rows = np.arange(n_rounds)[:, None, None] + 1 + dr[None]
        self.parity = ((flips[rows, idx[None]] * mask[None]).sum(axis=2) % 2).astype(np.uint8).ravel()
        first = lo * self.n_cells
        for c in toggled:
            if first <= c < first + len(self.parity):
                self.parity[c - first] ^= 1

        # 2. Losses and byproduct groups touching the window
        lost, groups = [], []
        for r in range(lo - 1, hi + 2):
            out = record.outcomes.get(r)
            if out is None:
                continue
            lost.extend(lattice.site_id(r, int(i)) for i in np.nonzero(out.lost)[0])
            groups.extend(out.erasures)
        self.lost_sites = lost

        # 3. Merge
        cells = range(first, first + n_rounds * self.n_cells)
        parity_of = _ParityView(self.parity, first)
        self.superstabilizers = merge_lost(lattice, lattice_type, cells, lost, links=erasure_links(lattice, lattice_type, groups),
                                           parity=parity_of)
        self.spanning = [s for s in self.superstabilizers if s.spanning]

        # 4. Detection events
        merged = np.zeros(len(self.parity), dtype=bool)
        events = []
        for s in self.superstabilizers:
            merged[np.asarray(s.members) - first] = True
            if not s.touches_boundary and s.parity:
                events.append(s.anchor)
        events.extend(int(i) + first for i in np.nonzero(self.parity.astype(bool) & ~merged)[0])
        events.sort()
        self.events = DetectionEventSet(lattice_type, tuple((c, lattice.split_cell(lattice_type, c)[0]) for c in events))

    def pot_term(self, supers: Iterable[Superstabilizer] | None = None, before: int | None = None) -> int:
        """Cut parity carried by faces inside merged regions (members below `before` only, if given)."""
        first = self.lo * self.n_cells
        total = 0
        for s in (self.superstabilizers if supers is None else supers):
            for c in s.members:
                if before is not None and c >= before:
                    continue
                total ^= s.offsets.get(c, 0) & int(self.parity[c - first])
        return total

    def dump(self) -> dict:
        return {
            "lattice_type": self.lattice_type,
            "rounds": [self.lo, self.hi],
            "lost_sites": sorted(int(s) for s in self.lost_sites),
            "superstabilizers": [s.to_dict() for s in self.superstabilizers],
            "detection_events": [list(e) for e in self.events.events],
        }


class _ParityView:
    """Map a global cell id onto the window parity array."""

    def __init__(self, parity: np.ndarray, first: int):
        self.parity = parity
        self.first = first

    def __getitem__(self, cell_id: int) -> int:
        return int(self.parity[cell_id - self.first])
