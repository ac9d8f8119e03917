"""
Distance-d simulation region of the topological cluster state.

Sites are integer points (x, y, t) with one or two odd coordinates, x in
[1, 2d-1], y in [0, 2d-2], t >= 1. A site with two odd coordinates is a primal
face (and a dual edge); one odd coordinate makes it a dual face. Primal cells
are centred on all-odd points, dual cells on all-even points. Round r holds
layers t = 2r+1 and t = 2r+2; everything is periodic in rounds.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import networkx as nx
import numpy as np

from tcsloss.errors import ValidationError

logger = logging.getLogger(__name__)

PRIMAL = "primal"
DUAL = "dual"
LATTICE_TYPES = (PRIMAL, DUAL)

BOUNDARIES = {PRIMAL: ("bottom", "top"), DUAL: ("left", "right", "past")}
# the two spatial boundaries a logical chain must connect
SPANNING_PAIR = {PRIMAL: ("bottom", "top"), DUAL: ("left", "right")}

INIT_SLOT = 0
CZ_SLOTS = (1, 2, 3, 4)
MEASURE_SLOT = 5
SLOTS_PER_SITE = 6
ROUND_PERIOD = 16  # two layers of the 8-step clock


def offset_map(coords: tuple[int, int, int]) -> tuple[int, int, int]:
    """Shift a primal coordinate onto the dual lattice."""
    x, y, t = coords
    return x + 1, y + 1, t + 1


@dataclass(frozen=True)
class QubitSite:
    index: int
    coords: tuple[int, int, int]  # (x, y, layer parity)
    role: str  # lattice type whose face this is


@dataclass(frozen=True)
class Cell:
    id: int
    lattice_type: str
    round: int
    center: tuple[int, int, int]
    face_sites: tuple[int, ...]
    time_slice: int


@dataclass(frozen=True)
class Gate:
    time: int
    kind: str  # init | cz | idle | measure
    sites: tuple[int, ...]
    slots: tuple[int, ...]


@dataclass(frozen=True)
class OwnedGate:
    """A C_Z drawn by its owner: the later-layer or larger-coordinate endpoint."""

    owner: int
    owner_slot: int
    partner: int
    partner_dr: int  # 0 or -1
    partner_slot: int
    time: int  # relative to the owner's round


class Schedule:
    """
    Per-site gate clock for one round, shared by every round.

    slot_time[i, s] is the time of slot s of template site i relative to
    ROUND_PERIOD * round. partner[i, s] / partner_dr[i, s] give the C_Z
    partner of slot s (-1 when the slot is an idle gate).
    """

    def __init__(self, n_sites, slot_time, partner, partner_dr, partner_slot, owned):
        self.n_sites = n_sites
        self.slot_time = slot_time
        self.partner = partner
        self.partner_dr = partner_dr
        self.partner_slot = partner_slot
        self.owned = owned

    def time(self, round_index: int, site: int, slot: int) -> int:
        return ROUND_PERIOD * round_index + int(self.slot_time[site, slot])

    def partner_of(self, round_index: int, site: int, slot: int):
        """(round, site, slot) of the C_Z partner, or None for idle slots."""
        j = int(self.partner[site, slot])
        if j < 0:
            return None
        r = round_index + int(self.partner_dr[site, slot])
        if r < 0:
            return None
        return r, j, int(self.partner_slot[site, slot])

    def is_idle(self, round_index: int, site: int, slot: int) -> bool:
        return slot in CZ_SLOTS and self.partner_of(round_index, site, slot) is None


class LatticeGeometry:
    def __init__(self, d: int):
        if not isinstance(d, (int, np.integer)) or d < 3 or d % 2 == 0:
            raise ValidationError(f"distance must be an odd integer >= 3, got {d!r}")
        self.d = int(d)
        self.extent_x = (1, 2 * d - 1)
        self.extent_y = (0, 2 * d - 2)
        self.boundaries = BOUNDARIES

        # 1. Sites of one round
        sites = []
        lookup = {}
        for lp in (0, 1):
            t = 1 + lp
            for x in range(1, 2 * d):
                for y in range(0, 2 * d - 1):
                    n_odd = x % 2 + y % 2 + t % 2
                    if n_odd not in (1, 2):
                        continue
                    role = PRIMAL if n_odd == 2 else DUAL
                    lookup[(x, y, lp)] = len(sites)
                    sites.append(QubitSite(len(sites), (x, y, lp), role))
        self.sites = tuple(sites)
        self.site_lookup = lookup
        self.n_sites = len(sites)

        # 2. Cells of one round
        self._cell_centers = {PRIMAL: [], DUAL: []}
        for x in range(1, 2 * d, 2):
            for y in range(1, 2 * d - 2, 2):
                self._cell_centers[PRIMAL].append((x, y))
        for x in range(2, 2 * d - 1, 2):
            for y in range(0, 2 * d - 1, 2):
                self._cell_centers[DUAL].append((x, y))
        self._cell_lookup = {
            lt: {xy: i for i, xy in enumerate(centers)} for lt, centers in self._cell_centers.items()
        }

        # 3. Gate clock
        self.schedule = self._build_schedule()

        # 4. Face -> cell tables (round 0 differs only by the missing layer 0)
        self._face_cells = {
            lt: {first: self._face_table(lt, first) for first in (True, False)} for lt in LATTICE_TYPES
        }

        # 5. Correlation cuts
        self.correlation_cut = {
            PRIMAL: np.array([s.index for s in sites if s.role == PRIMAL and s.coords[1] == d - 1], dtype=np.int64),
            DUAL: np.array([s.index for s in sites if s.role == DUAL and s.coords[0] == d], dtype=np.int64),
        }
        self._cut_mask = {}
        for lt, cut in self.correlation_cut.items():
            mask = np.zeros(self.n_sites, dtype=bool)
            mask[cut] = True
            self._cut_mask[lt] = mask

        self.role_mask = {lt: np.array([s.role == lt for s in sites]) for lt in LATTICE_TYPES}

        # 6. Spatial boundaries next to each cell
        self._cell_borders = {
            lt: tuple(self._spatial_borders(lt, i) for i in range(self.n_cells(lt))) for lt in LATTICE_TYPES
        }
        logger.debug("built d=%d lattice: %d sites/round, %d primal cells/round",
                     d, self.n_sites, self.n_cells(PRIMAL))

    # ------------------------------------------------------------------ ids

    def n_cells(self, lattice_type: str) -> int:
        return len(self._cell_centers[lattice_type])

    def site_id(self, round_index: int, index: int) -> int:
        return round_index * self.n_sites + index

    def split_site(self, site_id: int) -> tuple[int, int]:
        return divmod(site_id, self.n_sites)

    def cell_id(self, lattice_type: str, round_index: int, index: int) -> int:
        return round_index * self.n_cells(lattice_type) + index

    def split_cell(self, lattice_type: str, cell_id: int) -> tuple[int, int]:
        return divmod(cell_id, self.n_cells(lattice_type))

    def site_index(self, x: int, y: int, lp: int) -> int:
        try:
            return self.site_lookup[(x, y, lp)]
        except KeyError:
            raise ValidationError(f"no site at ({x}, {y}, layer parity {lp})") from None

    def site_coords(self, site_id: int) -> tuple[int, int, int]:
        """Absolute (x, y, t) of a global site id."""
        r, i = self.split_site(site_id)
        x, y, lp = self.sites[i].coords
        return x, y, 2 * r + 1 + lp

    def is_cut_site(self, lattice_type: str, index: int) -> bool:
        return bool(self._cut_mask[lattice_type][index])

    def cut_mask(self, lattice_type: str) -> np.ndarray:
        return self._cut_mask[lattice_type]

    # ---------------------------------------------------------------- cells

    def _cell_t(self, lattice_type: str, round_index: int) -> int:
        return 2 * round_index + (1 if lattice_type == PRIMAL else 2)

    def _site_exists(self, x: int, y: int, t: int) -> bool:
        return 1 <= x <= 2 * self.d - 1 and 0 <= y <= 2 * self.d - 2 and t >= 1

    def _site_at(self, x: int, y: int, t: int) -> int:
        r, lp = divmod(t - 1, 2)
        return self.site_id(r, self.site_lookup[(x, y, lp)])

    def cell(self, lattice_type: str, cell_id: int) -> Cell:
        if cell_id < 0:
            raise ValidationError(f"unknown cell id {cell_id}")
        r, i = self.split_cell(lattice_type, cell_id)
        x, y = self._cell_centers[lattice_type][i]
        t = self._cell_t(lattice_type, r)
        faces = []
        for k in range(3):
            for s in (-1, 1):
                c = [x, y, t]
                c[k] += s
                if self._site_exists(*c):
                    faces.append(self._site_at(*c))
        return Cell(cell_id, lattice_type, r, (x, y, t), tuple(sorted(faces)), r + 1)

    def cell_faces(self, lattice_type: str, cell_id: int) -> list[int]:
        return list(self.cell(lattice_type, cell_id).face_sites)

    def cell_borders(self, lattice_type: str, cell_id: int) -> tuple[str, ...]:
        """Spatial boundaries sharing a face with the cell."""
        _, i = self.split_cell(lattice_type, cell_id)
        return self._cell_borders[lattice_type][i]

    def _spatial_borders(self, lattice_type: str, index: int) -> tuple[str, ...]:
        found = set()
        for f in self.cell_faces(lattice_type, self.cell_id(lattice_type, 1, index)):
            found.update(self.face_cells(lattice_type, f)[1])
        return tuple(b for b in SPANNING_PAIR[lattice_type] if b in found)

    def cell_edges(self, lattice_type: str, cell_id: int) -> list[int]:
        """Sites on the twelve edges of a cell (fewer at boundaries)."""
        x, y, t = self.cell(lattice_type, cell_id).center
        edges = []
        for k1 in range(3):
            for k2 in range(k1 + 1, 3):
                for s1 in (-1, 1):
                    for s2 in (-1, 1):
                        c = [x, y, t]
                        c[k1] += s1
                        c[k2] += s2
                        if self._site_exists(*c):
                            edges.append(self._site_at(*c))
        return sorted(edges)

    def _cell_at(self, lattice_type: str, x: int, y: int, t: int):
        """Cell id at a centre, or the boundary label standing in for it."""
        d = self.d
        if lattice_type == PRIMAL:
            if y < 1:
                return "bottom"
            if y > 2 * d - 3:
                return "top"
            r = (t - 1) // 2
        else:
            if x < 2:
                return "left"
            if x > 2 * d - 2:
                return "right"
            if t < 2:
                return "past"
            r = (t - 2) // 2
        return self.cell_id(lattice_type, r, self._cell_lookup[lattice_type][(x, y)])

    def _face_table(self, lattice_type: str, first_round: bool):
        """For each template face: ((dr, cell index), ...) and (boundary, ...)."""
        table = {}
        r0 = 0 if first_round else 1
        for site in self.sites:
            if site.role != lattice_type:
                continue
            x, y, lp = site.coords
            t = 2 * r0 + 1 + lp
            coords = (x, y, t)
            odd = [c % 2 for c in coords]
            want = 1 if lattice_type == PRIMAL else 0
            k = next(a for a in range(3) if odd[a] != want)
            cells, bounds = [], []
            for s in (-1, 1):
                c = list(coords)
                c[k] += s
                hit = self._cell_at(lattice_type, *c)
                if isinstance(hit, str):
                    bounds.append(hit)
                else:
                    cr, ci = self.split_cell(lattice_type, hit)
                    cells.append((cr - r0, ci))
            table[site.index] = (tuple(cells), tuple(bounds))
        return table

    def face_cells(self, lattice_type: str, site_id: int) -> tuple[list[int], list[str]]:
        """Cells (global ids) and boundaries sharing a face site of this type."""
        r, i = self.split_site(site_id)
        table = self._face_cells[lattice_type][r == 0]
        if i not in table:
            raise ValidationError(f"site {site_id} is not a {lattice_type} face")
        cells, bounds = table[i]
        return [self.cell_id(lattice_type, r + dr, ci) for dr, ci in cells], list(bounds)

    def face_template(self, lattice_type: str, first_round: bool = False):
        return self._face_cells[lattice_type][first_round]

    # ------------------------------------------------------------- schedule

    def _build_schedule(self) -> Schedule:
        n = self.n_sites
        slot_time = np.zeros((n, SLOTS_PER_SITE), dtype=np.int64)
        partner = np.full((n, SLOTS_PER_SITE), -1, dtype=np.int64)
        partner_dr = np.zeros((n, SLOTS_PER_SITE), dtype=np.int64)
        partner_slot = np.full((n, SLOTS_PER_SITE), -1, dtype=np.int64)
        owner_flag = np.zeros((n, SLOTS_PER_SITE), dtype=bool)

        for site in self.sites:
            x, y, lp = site.coords
            t = 1 + lp
            coords = (x, y, t)
            odd = [c % 2 for c in coords]
            if sum(odd) == 2:
                axes = [k for k in range(3) if odd[k]]
            else:
                axes = [k for k in range(3) if not odd[k]]
            gates = []
            for k in axes:
                for s in (-1, 1):
                    nb = list(coords)
                    nb[k] += s
                    if k == 2:
                        when = 8 * max(t, nb[2]) + 1
                        dr = -1 if nb[2] == 0 else (1 if nb[2] == 3 else 0)
                        j = self.site_lookup[(x, y, (nb[2] - 1) % 2)]
                        owner = nb[2] < t
                    else:
                        lower = min(coords[k], nb[k])
                        when = 8 * t + (2 if k == 0 else 3) + (0 if lower % 2 == 0 else 2)
                        dr = 0
                        j = self.site_lookup.get((nb[0], nb[1], lp), -1)
                        owner = nb[k] < coords[k]
                    gates.append((when, j, dr, owner))
            gates.sort()
            slot_time[site.index, INIT_SLOT] = 8 * t
            slot_time[site.index, MEASURE_SLOT] = 8 * t + 14
            for slot, (when, j, dr, owner) in zip(CZ_SLOTS, gates):
                slot_time[site.index, slot] = when
                partner[site.index, slot] = j
                partner_dr[site.index, slot] = dr if j >= 0 else 0
                owner_flag[site.index, slot] = owner and j >= 0

        owned = []
        for i in range(n):
            for slot in CZ_SLOTS:
                j = partner[i, slot]
                if j < 0:
                    continue
                back = [s for s in CZ_SLOTS if partner[j, s] == i and partner_dr[j, s] == -partner_dr[i, slot]]
                if len(back) != 1:
                    raise ValidationError(f"inconsistent C_Z between sites {i} and {j}")
                partner_slot[i, slot] = back[0]
                if owner_flag[i, slot]:
                    owned.append(OwnedGate(i, slot, int(j), int(partner_dr[i, slot]), back[0],
                                           int(slot_time[i, slot])))
        return Schedule(n, slot_time, partner, partner_dr, partner_slot, tuple(owned))

    def schedule_round(self, round_index: int) -> list[Gate]:
        """Time-ordered gates touching the sites of one round."""
        sched = self.schedule
        gates = {}
        for i in range(self.n_sites):
            sid = self.site_id(round_index, i)
            for slot in range(SLOTS_PER_SITE):
                when = sched.time(round_index, i, slot)
                if slot == INIT_SLOT:
                    gates[(when, (sid,))] = Gate(when, "init", (sid,), (slot,))
                elif slot == MEASURE_SLOT:
                    gates[(when, (sid,))] = Gate(when, "measure", (sid,), (slot,))
                else:
                    other = sched.partner_of(round_index, i, slot)
                    if other is None:
                        gates[(when, (sid,))] = Gate(when, "idle", (sid,), (slot,))
                        continue
                    pr, pj, ps = other
                    pid = self.site_id(pr, pj)
                    pair = tuple(sorted(((sid, slot), (pid, ps))))
                    key = (when, tuple(p[0] for p in pair))
                    gates[key] = Gate(when, "cz", tuple(p[0] for p in pair), tuple(p[1] for p in pair))
        return [gates[k] for k in sorted(gates)]

    # ------------------------------------------------------------ distance

    def chain_length(self, lattice_type: str) -> int:
        """Fewest same-type faces joining the two spatial boundaries."""
        graph = nx.Graph()
        r = 1
        for site in self.sites:
            if site.role != lattice_type:
                continue
            cells, bounds = self.face_cells(lattice_type, self.site_id(r, site.index))
            ends = [("cell", c) for c in cells] + [("boundary", b) for b in bounds]
            if len(ends) == 2:
                rounds = {self.split_cell(lattice_type, c)[0] for c in cells}
                if len(rounds) <= 1 and self._is_spatial_face(lattice_type, site):
                    graph.add_edge(*ends)
        a, b = SPANNING_PAIR[lattice_type]
        return nx.shortest_path_length(graph, ("boundary", a), ("boundary", b))

    def _is_spatial_face(self, lattice_type: str, site: QubitSite) -> bool:
        x, y, lp = site.coords
        coords = (x, y, 1 + lp)
        want = 1 if lattice_type == PRIMAL else 0
        k = next(a for a in range(3) if coords[a] % 2 != want)
        return k != 2

    @property
    def distance(self) -> int:
        return min(self.chain_length(PRIMAL), self.chain_length(DUAL))

    def to_dict(self) -> dict:
        """JSON-ready description of one round of the lattice."""
        sched = self.schedule
        return {
            "d": self.d,
            "extent_x": list(self.extent_x),
            "extent_y": list(self.extent_y),
            "cross_section": "square",
            "boundaries": {lt: list(b) for lt, b in BOUNDARIES.items()},
            "sites_per_round": self.n_sites,
            "sites": [
                {
                    "index": s.index,
                    "coords": list(s.coords),
                    "role": s.role,
                    "slot_times": [int(v) for v in sched.slot_time[s.index]],
                    "partners": [
                        None if sched.partner[s.index, k] < 0
                        else [int(sched.partner_dr[s.index, k]), int(sched.partner[s.index, k])]
                        for k in CZ_SLOTS
                    ],
                }
                for s in self.sites
            ],
            "cells": {
                lt: [
                    {"index": i, "center": list(self.cell(lt, self.cell_id(lt, 1, i)).center),
                     "faces": self.cell_faces(lt, self.cell_id(lt, 1, i))}
                    for i in range(self.n_cells(lt))
                ]
                for lt in LATTICE_TYPES
            },
            "correlation_cut": {lt: [int(i) for i in cut] for lt, cut in self.correlation_cut.items()},
            "round_period": ROUND_PERIOD,
        }


@lru_cache(maxsize=16)
def build_lattice(d: int) -> LatticeGeometry:
    """Build (and cache) the geometry for distance d."""
    return LatticeGeometry(d)
