import logging

import pytest

from trap_forge.fourier import build_basis
from trap_forge.lattice import BravaisLattice, PatchGrid

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one summary line per acceptance criterion; printed at the end."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_solver_logs(caplog):
    caplog.set_level(logging.WARNING, logger="trap_forge")


@pytest.fixture(scope="session")
def square_basis_small():
    return build_basis(BravaisLattice.square(), PatchGrid.oblique(12), 24)


@pytest.fixture(scope="session")
def hex_basis_small():
    return build_basis(BravaisLattice.hexagonal(), PatchGrid.hexagonal(8), 16)


@pytest.fixture(scope="session")
def oblique_basis_small():
    lattice = BravaisLattice((1.0, 0.0), (0.3, 0.8))
    return build_basis(lattice, PatchGrid.oblique(10, 8), 16)


@pytest.fixture(scope="session")
def square_basis_48():
    return build_basis(BravaisLattice.square(), PatchGrid.oblique(48), 96)
