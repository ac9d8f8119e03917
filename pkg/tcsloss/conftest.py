from pathlib import Path

import pytest

from tcsloss.decoder import WeightTemplate
from tcsloss.errmodel import ErrorModelParams
from tcsloss.lattice import PRIMAL, build_lattice

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def lattice3():
    return build_lattice(3)


@pytest.fixture(scope="session")
def lattice5():
    return build_lattice(5)


@pytest.fixture(scope="session")
def template3(lattice3):
    """Primal weight template at p_comp = 1e-3, d = 3."""
    return WeightTemplate(lattice3, ErrorModelParams(p_comp=1e-3), PRIMAL)


def site(lattice, x, y, t):
    """Global site id of the point (x, y, t)."""
    r, lp = divmod(t - 1, 2)
    return lattice.site_id(r, lattice.site_index(x, y, lp))
