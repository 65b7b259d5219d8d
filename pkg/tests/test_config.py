import json

import numpy as np
import pytest

from trap_forge.config import ConfigError, RunConfig

BASE = {
    "lattice": {"kind": "square"},
    "grid": {"kind": "oblique", "n": 8},
    "traps": [{"label": "A", "position": [0.5, 0.5, 0.3], "gamma": {"cylindrical": True}}],
}


def _load(**over):
    data = json.loads(json.dumps(BASE))
    data.update(over)
    return RunConfig.loads(json.dumps(data))


def test_defaults_and_round_trip():
    cfg = _load(extras=[{"point": [0.5, 0.0, 0.2], "relative_to": "A", "lam": 0.1}],
                analysis={"physical": {}})
    assert cfg.effective_n_cut == 16
    again = RunConfig.loads(cfg.dumps())
    assert again == cfg
    assert again.dumps() == cfg.dumps()


def test_example_corpus_round_trips():
    from pathlib import Path
    for path in sorted(Path(__file__).resolve().parents[1].glob("configs/*.json")):
        cfg = RunConfig.load(path)
        assert RunConfig.loads(cfg.dumps()) == cfg


def test_gamma_sources():
    cfg = _load(traps=[
        {"label": "t", "position": [0, 0, 0.2], "gamma": {"tensor": [[1, 0, 0], [0, 1, 0], [0, 0, -2]]}},
        {"label": "f", "position": [0.5, 0, 0.2], "gamma": {"frequencies": [1, 2, 3]}},
        {"label": "c", "position": [0, 0.5, 0.2]},
    ])
    t, f, c = cfg.build_traps()
    np.testing.assert_allclose(t.gamma, np.diag([0.5, 0.5, -1.0]))
    assert abs(np.trace(f.gamma)) < 1e-12
    np.testing.assert_allclose(c.gamma, np.diag([-0.5, -0.5, 1.0]))


def test_malformed_gamma_names_trap():
    cfg = _load(traps=[{"label": "west", "position": [0.5, 0.5, 0.3],
                        "gamma": {"tensor": [[0.1, 0, 0], [0, -0.5, 0], [0, 0, 0.5]]}}])
    with pytest.raises(ConfigError, match="west") as err:
        cfg.build_traps()
    assert err.value.details[0]["field"] == "traps.west"


def test_extras_resolve_relative_positions():
    cfg = _load(extras=[{"point": [0.5, 0.0, 0.2], "relative_to": "A", "relation": "at_least"}])
    (e,) = cfg.build_extras()
    assert e.point == (1.0, 0.5, 0.2)
    assert e.relation == "at_least"


@pytest.mark.parametrize(
    "override, field",
    [
        ({"extras": [{"point": [0, 0, 0.2], "relative_to": "nope"}]}, ""),
        ({"traps": []}, "traps"),
        ({"grid": {"kind": "oblique"}}, "grid"),
        ({"lattice": {"kind": "custom", "a1": [1, 0]}}, "lattice"),
        ({"solver": {"rail_tol": 0.7}}, "solver.rail_tol"),
        ({"analysis": {"resolution": [2, 2, 2]}}, "analysis.resolution"),
        ({"analysis": {"physical": {"z": {"value": 30, "unit": "furlong"}}}}, "analysis.physical"),
        ({"colour": "blue"}, "colour"),
    ],
)
def test_validation_errors_are_addressed(override, field):
    with pytest.raises(ConfigError) as err:
        _load(**override)
    assert any(d["field"].startswith(field) for d in err.value.details)


def test_duplicate_labels_rejected():
    trap = BASE["traps"][0]
    with pytest.raises(ConfigError, match="unique"):
        _load(traps=[trap, {**trap, "position": [0.1, 0.1, 0.3]}])


def test_json_syntax_error_reports_line():
    text = '{\n  "lattice": {"kind": "square"},\n  "grid": oops\n}'
    with pytest.raises(ConfigError) as err:
        RunConfig.loads(text)
    assert err.value.details[0]["line"] == 3


def test_physical_units_conversion():
    cfg = _load(analysis={"physical": {"Omega_rf": {"value": 2e8, "unit": "Hz"},
                                       "z": {"value": 0.03, "unit": "mm"},
                                       "mass": {"value": 9.012182, "unit": "amu"}}})
    p = cfg.analysis.physical.build()
    assert p.Omega_rf == pytest.approx(2 * np.pi * 2e8)
    assert p.z == pytest.approx(30e-6)
    cfg2 = _load(analysis={"physical": {"Omega_rf": {"value": 1.2566e9, "unit": "rad/s"}}})
    assert cfg2.analysis.physical.build().Omega_rf == pytest.approx(1.2566e9)


def test_sweep_height_copy():
    cfg = _load()
    moved = cfg.with_height(0.7)
    assert moved.traps[0].position == (0.5, 0.5, 0.7)
    assert cfg.traps[0].position == (0.5, 0.5, 0.3)


def test_hexagonal_and_custom_lattices():
    cfg = _load(lattice={"kind": "custom", "a1": [1, 0], "a2": [0.2, 0.9]},
                grid={"kind": "oblique", "n1": 4, "n2": 6})
    assert cfg.grid.build().N == 24
    assert cfg.lattice.build().cell_area == pytest.approx(0.9)
    hx = _load(lattice={"kind": "hexagonal"}, grid={"kind": "hexagonal", "n": 5})
    assert hx.grid.build().N == 50
