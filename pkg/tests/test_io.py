import json

import numpy as np
import pytest

from trap_forge.constraints import TrapSpec, assemble, cylindrical_gamma
from trap_forge.io import (
    SWEEP_COLUMNS,
    ElectrodeMap,
    MapFormatError,
    dumps_json,
    read_sweep_csv,
    write_json,
    write_sweep_csv,
)
from trap_forge.lattice import BravaisLattice, PatchGrid
from trap_forge.optimize import inhomogeneous_solution
from trap_forge.pipeline import optimize


def _map(grid=PatchGrid.oblique(4, 3), a=None):
    a = np.linspace(0, 1, grid.N) if a is None else a
    trap = TrapSpec((0.5, 0.5, 0.3), cylindrical_gamma(), "A")
    return ElectrodeMap(BravaisLattice.square(), grid, a, 8, 1e-7, 1.5, [0.2], [trap])


@pytest.mark.parametrize("grid", [PatchGrid.oblique(4, 3), PatchGrid.hexagonal(3)])
def test_round_trip_is_exact(grid):
    rng = np.random.default_rng(0)
    a = rng.choice([0.0, 1.0, 0.123456789012345678, 1 / 3], size=grid.N)
    m = _map(grid, a)
    back = ElectrodeMap.loads(m.dumps())
    np.testing.assert_array_equal(back.a, m.a)
    assert back.grid == grid and back.n_cut == 8 and back.C == 1.5 and back.kappa == [0.2]
    assert back.traps[0].label == "A"
    np.testing.assert_allclose(back.lattice.a1, [1, 0])
    assert back.dumps() == m.dumps()


def test_body_uses_rail_characters():
    text = _map(a=np.array([0, 1, 1e-9, 1 - 1e-9, 0.5, 0, 0, 0, 0, 0, 0, 1.0])).dumps()
    body = [line for line in text.splitlines() if not line.startswith("#")]
    assert body[0].split() == ["0", "1", "0", "1"]
    assert body[1].split()[0] == "0.5"
    assert len(body) == 3


def test_length_and_range_checks():
    text = _map().dumps()
    with pytest.raises(MapFormatError, match="expected 12"):
        ElectrodeMap.loads(text + "1\n")
    with pytest.raises(MapFormatError):
        ElectrodeMap.loads(text.replace("# n_cut: 8\n", ""))
    with pytest.raises(MapFormatError):
        ElectrodeMap.loads(text + "abc\n")
    with pytest.raises(MapFormatError):
        _map(a=np.full(12, 1.5))


def test_header_scale_consistent_with_body(square_basis_small):
    trap = TrapSpec((0.5, 0.5, 0.3), cylindrical_gamma(), "A")
    result, system = optimize(square_basis_small, [trap])
    m = ElectrodeMap(square_basis_small.lattice, square_basis_small.grid, result.a,
                     square_basis_small.n_cut, 1e-7, result.C, [], [trap])
    back = ElectrodeMap.loads(m.dumps())
    g, _ = inhomogeneous_solution(system.A, system.b)
    assert back.scale_from_body(g) == pytest.approx(back.C, rel=1e-6)
    assert back.interior_count == result.n_interior


def test_json_sanitizes_numpy_and_nan(tmp_path):
    data = {"a": np.float64(1.5), "b": np.arange(3), "c": float("nan"), "d": np.bool_(True),
            "e": (np.int64(2),)}
    out = json.loads(write_json(data, tmp_path / "r.json").read_text())
    assert out == {"a": 1.5, "b": [0, 1, 2], "c": None, "d": True, "e": [2]}
    assert dumps_json(data) == dumps_json(data)


def test_sweep_csv(tmp_path):
    path = write_sweep_csv([], tmp_path / "empty.csv")
    assert path.read_text() == ",".join(SWEEP_COLUMNS) + "\n"
    rows = [{"z_over_d": 0.2, "kappa": 0.2, "tau": float("nan"), "interior": 4,
             "runtime_s": 0.5, "status": "ok"}]
    back = read_sweep_csv(write_sweep_csv(rows, tmp_path / "s.csv"))
    assert back[0]["kappa"] == "0.2" and back[0]["tau"] == "" and back[0]["status"] == "ok"
