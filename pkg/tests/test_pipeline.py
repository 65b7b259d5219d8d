import numpy as np
import pytest

from trap_forge.constraints import TrapSpec, cylindrical_gamma
from trap_forge.pipeline import optimize, rounding_report, suppress_spurious


def test_rounding_report(square_basis_48):
    trap = TrapSpec((0.5, 0.5, 0.2), cylindrical_gamma(), "A")
    result, _ = optimize(square_basis_48, [trap])
    (entry,) = result.rounding["traps"]
    assert entry["label"] == "A"
    assert entry["field_residual"] < 1e-9
    assert entry["field_residual_rounded"] < 1e-3
    again = rounding_report(square_basis_48, result, [trap])
    assert again == result.rounding["traps"]


def test_suppression_without_spurious_sites_is_a_no_op(square_basis_small):
    # a single cylindrical trap high above a coarse grid leaves no spurious minima here
    trap = TrapSpec((0.5, 0.5, 0.6), cylindrical_gamma(), "A")
    out = suppress_spurious(square_basis_small, [trap], resolution=(24, 24, 32))
    if out.history[0]["spurious"] == 0:
        assert out.extras == [] and out.reduction == 0.0
    else:
        assert len(out.spurious) <= out.history[0]["spurious"]


def test_suppression_removes_spurious_sites_square(square_basis_48):
    trap = TrapSpec((0.5, 0.5, 0.2), cylindrical_gamma(), "A")
    out = suppress_spurious(square_basis_48, [trap], max_rounds=2)
    assert out.history[0]["spurious"] > 0
    assert out.spurious == []
    assert 0 <= out.reduction < 0.01
    assert out.extras
    assert out.result.n_interior <= out.result.interior_bound
