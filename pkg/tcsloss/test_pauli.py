import itertools
import json

import numpy as np
import pytest

from tcsloss.errors import ArityError, ValidationError
from tcsloss.pauli import (
    CELL_FACES, ClusterGraph, PauliString, StabilizerSet, cluster_stabilizers, conjugate_set, cz_conjugate,
    derive_cell, render_report, report_as_json, stabilizer_product,
)

MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
CZ = np.diag([1, 1, 1, -1]).astype(complex)


def as_matrix(p: PauliString) -> np.ndarray:
    out = np.array([[1j ** p.phase]], dtype=complex)
    for f in p.factors:
        out = np.kron(out, MATRICES[f])
    return out


def random_graph(rng, n):
    edges = [(a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < 0.4]
    return ClusterGraph.from_edges(n, edges)


class TestPauliString:
    def test_rejects_unknown_symbols(self):
        with pytest.raises(ValidationError):
            PauliString("XQ")

    def test_product_matches_matrices(self):
        for a, b in itertools.product(itertools.product("IXYZ", repeat=2), repeat=2):
            p, q = PauliString("".join(a)), PauliString("".join(b))
            assert np.allclose(as_matrix(p * q), as_matrix(p) @ as_matrix(q))

    def test_product_length_mismatch(self):
        with pytest.raises(ArityError):
            PauliString("XX") * PauliString("X")

    def test_y_convention(self):
        """Y = iXZ."""
        assert PauliString("X") * PauliString("Z") == PauliString("Y", 3)
        assert np.allclose(1j * MATRICES["X"] @ MATRICES["Z"], MATRICES["Y"])

    def test_commutation(self):
        assert PauliString("XX").commutes_with(PauliString("ZZ"))
        assert not PauliString("XI").commutes_with(PauliString("ZI"))

    def test_imaginary_sign_raises(self):
        with pytest.raises(ValidationError):
            PauliString("X", 1).sign


class TestCzConjugate:
    def test_examples(self):
        assert cz_conjugate(PauliString("IX")) == PauliString("ZX")
        assert cz_conjugate(PauliString("ZI")) == PauliString("ZI")
        assert cz_conjugate(PauliString("YI")) == PauliString("YZ")

    @pytest.mark.parametrize("factors", ["".join(p) for p in itertools.product("IXYZ", repeat=2)])
    def test_matrix_oracle(self, factors):
        p = PauliString(factors)
        assert np.allclose(as_matrix(cz_conjugate(p)), CZ @ as_matrix(p) @ CZ)

    @pytest.mark.parametrize("factors", ["".join(p) for p in itertools.product("IXYZ", repeat=2)])
    def test_involution(self, factors):
        p = PauliString(factors)
        assert cz_conjugate(cz_conjugate(p)) == p

    def test_arity(self):
        with pytest.raises(ArityError):
            cz_conjugate(PauliString("XYZ"))


class TestStabilizers:
    def test_star_graph(self):
        g = ClusterGraph.from_edges(5, [(1, 3), (2, 3), (4, 3), (5, 3)], one_based=True)
        s = cluster_stabilizers(g)
        assert s[2] == PauliString("ZZXZZ")
        assert s[0] == PauliString("XIZII")

    def test_single_qubit(self):
        assert cluster_stabilizers(ClusterGraph(1, frozenset())).generators == (PauliString("X"),)

    def test_graph_validation(self):
        with pytest.raises(ValidationError):
            ClusterGraph.from_edges(3, [(0, 1), (1, 0)])
        with pytest.raises(ValidationError):
            ClusterGraph(2, frozenset({(1, 1)}))

    def test_set_rejects_imaginary_phase(self):
        with pytest.raises(ValidationError):
            StabilizerSet((PauliString("X", 1),), 1)

    def test_set_rejects_wrong_length(self):
        with pytest.raises(ArityError):
            StabilizerSet((PauliString("XX"),), 1)

    def test_empty_circuit(self):
        s = StabilizerSet.all_x(4)
        assert conjugate_set(s, []) == s

    def test_conjugation_builds_cluster_state(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(1, 13))
            g = random_graph(rng, n)
            conj = conjugate_set(StabilizerSet.all_x(n), sorted(g.edges))
            assert conj == cluster_stabilizers(g)
            assert conj.mutually_commute()


class TestStabilizerProduct:
    def test_self_inverse(self):
        a = PauliString("XZY")
        assert stabilizer_product([a, a]) == PauliString("III")

    def test_xx_zz(self):
        assert stabilizer_product([PauliString("XX"), PauliString("ZZ")]) == PauliString("YY", 2)

    def test_empty(self):
        with pytest.raises(ArityError):
            stabilizer_product([])


class TestDeriveCell:
    def test_cell_row(self):
        report = derive_cell()
        rows = dict(report["sections"][2][1])
        assert rows["A_10"].factors == "IZIIIZIIIXZIIIIZII"
        assert len(rows) == 18

    def test_face_product(self):
        (_, product), = derive_cell()["sections"][4][1]
        assert product.phase == 0
        assert product.support("X") == [q - 1 for q in CELL_FACES]
        assert product.support("YZ") == []

    def test_golden_text(self, fixtures_dir):
        assert render_report(derive_cell()) == (fixtures_dir / "derive_cell.txt").read_text()

    def test_json_form(self):
        payload = report_as_json(derive_cell())
        json.dumps(payload)
        assert [s["title"] for s in payload["sections"]][-1] == "Face product"
        assert payload["sections"][-1]["rows"][0]["sign"] == 1
