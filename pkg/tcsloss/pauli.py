"""
Signed Pauli-string algebra and cluster-state stabilizer derivation.

Phases are kept as an exponent of i (0..3). Y is fixed as Y = iXZ.
Qubits are 0-based internally; rendered tables are 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from tcsloss.errors import ArityError, ValidationError

SYMBOLS = "IXYZ"

# (left, right) -> (exponent of i, product)
_PRODUCT = {
    ("X", "Y"): (1, "Z"),
    ("Y", "Z"): (1, "X"),
    ("Z", "X"): (1, "Y"),
    ("Y", "X"): (3, "Z"),
    ("Z", "Y"): (3, "X"),
    ("X", "Z"): (3, "Y"),
}

# x/z bits per symbol
_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


def _multiply_symbols(a: str, b: str) -> tuple[int, str]:
    if a == "I":
        return 0, b
    if b == "I":
        return 0, a
    if a == b:
        return 0, "I"
    return _PRODUCT[(a, b)]


@dataclass(frozen=True)
class PauliString:
    """A tensor product of I/X/Y/Z with a global phase i**phase."""

    factors: str
    phase: int = 0

    def __post_init__(self):
        bad = set(self.factors) - set(SYMBOLS)
        if bad:
            raise ValidationError(f"unknown Pauli symbols {sorted(bad)}")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls("I" * n)

    @classmethod
    def from_sparse(cls, n: int, ops: dict[int, str], phase: int = 0) -> "PauliString":
        """Build an n-qubit string from {qubit: symbol}, identity elsewhere."""
        factors = ["I"] * n
        for q, sym in ops.items():
            if not 0 <= q < n:
                raise ValidationError(f"qubit {q} outside 0..{n - 1}")
            factors[q] = sym
        return cls("".join(factors), phase)

    def __len__(self) -> int:
        return len(self.factors)

    def __mul__(self, other: "PauliString") -> "PauliString":
        if len(self) != len(other):
            raise ArityError(f"cannot multiply {len(self)}-qubit and {len(other)}-qubit strings")
        phase = self.phase + other.phase
        out = []
        for a, b in zip(self.factors, other.factors):
            k, c = _multiply_symbols(a, b)
            phase += k
            out.append(c)
        return PauliString("".join(out), phase)

    @property
    def sign(self) -> int:
        """+1 or -1; raises for imaginary phases."""
        if self.phase % 2:
            raise ValidationError(f"phase i^{self.phase} is not real")
        return 1 if self.phase == 0 else -1

    @property
    def is_hermitian(self) -> bool:
        return self.phase % 2 == 0

    def commutes_with(self, other: "PauliString") -> bool:
        """Symplectic inner product test."""
        if len(self) != len(other):
            raise ArityError("length mismatch")
        anti = 0
        for a, b in zip(self.factors, other.factors):
            xa, za = _BITS[a]
            xb, zb = _BITS[b]
            anti ^= (xa & zb) ^ (za & xb)
        return anti == 0

    def support(self, symbols: str = "XYZ") -> list[int]:
        return [q for q, s in enumerate(self.factors) if s in symbols]

    def __str__(self) -> str:
        prefix = {0: "+", 1: "+i", 2: "-", 3: "-i"}[self.phase]
        return prefix + self.factors


def _conjugate_pair(p: PauliString, a: int, b: int) -> PauliString:
    """C_Z(a, b) . p . C_Z(a, b) for an n-qubit string."""
    if a == b:
        raise ValidationError("C_Z needs two distinct qubits")
    n = len(p)
    pa, pb = p.factors[a], p.factors[b]
    if pa in "IZ" and pb in "IZ":
        return p
    xa, za = _BITS[pa]
    xb, zb = _BITS[pb]
    rest = list(p.factors)
    rest[a] = rest[b] = "I"
    # P = i^(x.z) X^x Z^z on each of the two qubits
    out = PauliString("".join(rest), p.phase + xa * za + xb * zb)
    if xa:
        out = out * PauliString.from_sparse(n, {a: "X", b: "Z"})
    if za:
        out = out * PauliString.from_sparse(n, {a: "Z"})
    if xb:
        out = out * PauliString.from_sparse(n, {a: "Z", b: "X"})
    if zb:
        out = out * PauliString.from_sparse(n, {b: "Z"})
    return out


def cz_conjugate(p: PauliString) -> PauliString:
    """Conjugate a two-qubit Pauli string by C_Z, tracking the phase exactly."""
    if len(p) != 2:
        raise ArityError(f"cz_conjugate expects 2 qubits, got {len(p)}")
    return _conjugate_pair(p, 0, 1)


@dataclass(frozen=True)
class StabilizerSet:
    generators: tuple[PauliString, ...]
    qubit_count: int

    def __post_init__(self):
        if self.qubit_count < 1:
            raise ValidationError("qubit_count must be positive")
        object.__setattr__(self, "generators", tuple(self.generators))
        for g in self.generators:
            if len(g) != self.qubit_count:
                raise ArityError(f"generator {g} does not act on {self.qubit_count} qubits")
            if not g.is_hermitian:
                raise ValidationError(f"generator {g} has an imaginary phase")

    @classmethod
    def all_x(cls, n: int) -> "StabilizerSet":
        """Stabilizers of |+>^n."""
        return cls(tuple(PauliString.from_sparse(n, {q: "X"}) for q in range(n)), n)

    def mutually_commute(self) -> bool:
        gens = self.generators
        return all(gens[i].commutes_with(gens[j]) for i in range(len(gens)) for j in range(i + 1, len(gens)))

    def __getitem__(self, index: int) -> PauliString:
        return self.generators[index]

    def __len__(self) -> int:
        return len(self.generators)


@dataclass(frozen=True)
class ClusterGraph:
    qubit_count: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.qubit_count < 1:
            raise ValidationError("qubit_count must be positive")
        for a, b in self.edges:
            if a == b:
                raise ValidationError(f"self-loop on qubit {a}")
            if not (0 <= a < self.qubit_count and 0 <= b < self.qubit_count):
                raise ValidationError(f"edge ({a}, {b}) outside 0..{self.qubit_count - 1}")

    @classmethod
    def from_edges(cls, qubit_count: int, edges: Iterable[Sequence[int]], one_based: bool = False) -> "ClusterGraph":
        shift = 1 if one_based else 0
        seen = set()
        for a, b in edges:
            key = (min(a, b) - shift, max(a, b) - shift)
            if key in seen:
                raise ValidationError(f"duplicate edge {key}")
            seen.add(key)
        return cls(qubit_count, frozenset(seen))

    def neighbors(self, q: int) -> list[int]:
        return sorted(b if a == q else a for a, b in self.edges if q in (a, b))


def cluster_stabilizers(g: ClusterGraph) -> StabilizerSet:
    """A_i = X_i times Z on every graph neighbour of i."""
    gens = []
    for q in range(g.qubit_count):
        ops = {nb: "Z" for nb in g.neighbors(q)}
        ops[q] = "X"
        gens.append(PauliString.from_sparse(g.qubit_count, ops))
    return StabilizerSet(tuple(gens), g.qubit_count)


def stabilizer_product(strings: Sequence[PauliString]) -> PauliString:
    """Ordered product of Pauli strings."""
    if not strings:
        raise ArityError("product of an empty list has no length")
    out = strings[0]
    for s in strings[1:]:
        out = out * s
    return out


def conjugate_set(s: StabilizerSet, circuit: Iterable[tuple[int, int]]) -> StabilizerSet:
    """Push every generator through the C_Z gates of circuit, in order."""
    gens = list(s.generators)
    for a, b in circuit:
        if not (0 <= a < s.qubit_count and 0 <= b < s.qubit_count):
            raise ValidationError(f"gate ({a}, {b}) outside 0..{s.qubit_count - 1}")
        gens = [_conjugate_pair(g, a, b) for g in gens]
    return StabilizerSet(tuple(gens), s.qubit_count)


# 1-based edges of the face star and the 18-qubit cell
FACE_STAR_EDGES = ((1, 3), (2, 3), (4, 3), (5, 3))
CELL_EDGES = (
    (1, 3), (1, 17), (2, 3), (2, 10), (3, 4), (3, 5), (4, 14), (5, 7),
    (6, 7), (6, 10), (7, 8), (7, 9), (8, 14), (9, 12), (10, 11), (10, 16),
    (11, 12), (12, 13), (12, 15), (13, 14), (14, 18), (15, 17), (16, 17), (17, 18),
)
CELL_FACES = (3, 7, 10, 12, 14, 17)


def derive_cell() -> dict:
    """
    Derive the face-star and cell stabilizer tables by conjugation.
    Returns sections of (label, PauliString) rows, 1-based labels.
    """
    star_before = StabilizerSet.all_x(5)
    star_after = conjugate_set(star_before, [(a - 1, b - 1) for a, b in FACE_STAR_EDGES])

    cell = conjugate_set(StabilizerSet.all_x(18), [(a - 1, b - 1) for a, b in CELL_EDGES])
    subset = [(f"A_{q}", cell[q - 1]) for q in CELL_FACES]
    product = stabilizer_product([p for _, p in subset])

    return {
        "sections": [
            ("Face star generators before C_Z", [(f"A_{i + 1}", g) for i, g in enumerate(star_before.generators)]),
            ("Face star generators after C_Z", [(f"A_{i + 1}", g) for i, g in enumerate(star_after.generators)]),
            ("Cell generators", [(f"A_{i + 1}", g) for i, g in enumerate(cell.generators)]),
            ("Face subset", subset),
            ("Face product", [("A", product)]),
        ],
        "face_star_edges": [list(e) for e in FACE_STAR_EDGES],
        "cell_edges": [list(e) for e in CELL_EDGES],
        "cell_faces": list(CELL_FACES),
    }


def render_rows(rows: Sequence[tuple[str, PauliString]]) -> list[str]:
    width = max(len(label) for label, _ in rows)
    lines = []
    for label, p in rows:
        sign = "-" if p.phase == 2 else ""
        lines.append(f"{label.ljust(width)} | {sign}{' '.join(p.factors)}")
    return lines


def render_report(report: dict) -> str:
    blocks = []
    for title, rows in report["sections"]:
        blocks.append("\n".join([title] + render_rows(rows)))
    return "\n\n".join(blocks) + "\n"


def report_as_json(report: dict) -> dict:
    out = {
        "face_star_edges": report["face_star_edges"],
        "cell_edges": report["cell_edges"],
        "cell_faces": report["cell_faces"],
        "sections": [],
    }
    for title, rows in report["sections"]:
        out["sections"].append({
            "title": title,
            "rows": [{"label": label, "sign": p.sign, "factors": p.factors} for label, p in rows],
        })
    return out
