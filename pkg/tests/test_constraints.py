import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trap_forge.constraints import (
    ConstraintError,
    ExtraConstraint,
    TrapSpec,
    add_suppression,
    assemble,
    curvature_from_frequencies,
    cylindrical_gamma,
    normalize_gamma,
)

PHI = (1 + np.sqrt(5)) / 2


def test_trap_spec_normalizes_gamma():
    t = TrapSpec((0.5, 0.5, 0.3), 4 * cylindrical_gamma(), "A")
    assert np.max(np.abs(np.linalg.eigvalsh(t.gamma))) == pytest.approx(1.0)
    assert t.z == 0.3


@pytest.mark.parametrize(
    "gamma, message",
    [
        (np.diag([0.1, 0.0, 0.0]) + np.diag([-0.5, -0.5, 1.0]), "traceless"),
        (np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], dtype=float), "symmetric"),
        (np.zeros((3, 3)), "zero"),
        (np.eye(2), "3x3"),
    ],
)
def test_trap_spec_rejects_bad_gamma_and_names_label(gamma, message):
    with pytest.raises(ConstraintError, match=message) as err:
        TrapSpec((0.5, 0.5, 0.3), gamma, "north")
    assert "north" in str(err.value)


def test_trap_height_must_be_positive():
    with pytest.raises(ConstraintError):
        TrapSpec((0.5, 0.5, 0.0), cylindrical_gamma(), "A")


def test_assemble_rows_and_targets(square_basis_small):
    traps = [TrapSpec((0.5, 0.5, 0.3), cylindrical_gamma(), "A"),
             TrapSpec((0.0, 0.0, 0.4), curvature_from_frequencies((1 / PHI, 1, PHI)), "B")]
    system = assemble(square_basis_small, traps)
    assert system.A.shape == (16, square_basis_small.N)
    assert system.n_equalities == 16
    np.testing.assert_allclose(system.b[:3], 0.0)
    # curvature targets in the order xx, yy, xy, xz, yz
    np.testing.assert_allclose(system.b[3:8], [-0.5, -0.5, 0, 0, 0])
    assert system.row_kinds[0] == ("A", "grad_x")
    assert system.row_kinds[-1] == ("B", "curv_yz")
    # a pattern satisfying A a = C b has the designed curvature
    a = np.random.default_rng(0).uniform(0, 1, system.N)
    r = traps[0].cartesian(square_basis_small.lattice)
    s = square_basis_small.evaluate(a, r)
    np.testing.assert_allclose(system.A[3:8] @ a,
                               [s.hessian[0, 0], s.hessian[1, 1], s.hessian[0, 1],
                                s.hessian[0, 2], s.hessian[1, 2]], atol=1e-12)


def test_assemble_errors(square_basis_small):
    t = TrapSpec((0.5, 0.5, 0.3), cylindrical_gamma(), "A")
    with pytest.raises(ConstraintError):
        assemble(square_basis_small, [])
    with pytest.raises(ConstraintError, match="duplicate"):
        assemble(square_basis_small, [t, TrapSpec((1.5, -0.5, 0.3), cylindrical_gamma(), "B")])


def test_suppression_rows(square_basis_small):
    t = TrapSpec((0.5, 0.5, 0.3), cylindrical_gamma(), "A")
    system = assemble(square_basis_small, [t])
    eq = add_suppression(system, square_basis_small, ExtraConstraint((0.0, 0.5, 0.2), 0.1))
    assert eq.A.shape[0] == 9 and eq.b[-1] == 0.1
    ineq = add_suppression(system, square_basis_small,
                           ExtraConstraint((0.0, 0.5, 0.2), 0.0, "at_least"))
    assert ineq.A.shape[0] == 8 and ineq.ineq_rows.shape == (1, square_basis_small.N)
    with pytest.raises(ConstraintError, match="coincides"):
        add_suppression(system, square_basis_small, ExtraConstraint((0.5, 0.5, 0.3), 0.0))
    with pytest.raises(ConstraintError):
        ExtraConstraint((0.0, 0.0, 0.2), 0.0, "roughly")
    with pytest.raises(ConstraintError):
        ExtraConstraint((0.0, 0.0, -0.2), 0.0)
    via_assemble = assemble(square_basis_small, [t], [ExtraConstraint((0.0, 0.5, 0.2), 0.1)])
    np.testing.assert_array_equal(via_assemble.A, eq.A)


def test_golden_ratio_constructor():
    g = curvature_from_frequencies((1 / PHI, 1, PHI))
    mu = np.diag(g)
    assert np.all(np.sign(mu) == [-1, -1, 1])
    assert abs(np.trace(g)) < 1e-12
    # frequencies are proportional to |eigenvalues|
    np.testing.assert_allclose(np.abs(mu) / np.abs(mu[1]), [1 / PHI, 1, PHI])


def test_frequency_constructor_rejects_untraceable_ratios():
    with pytest.raises(ConstraintError):
        curvature_from_frequencies((1, 1, 1))
    with pytest.raises(ConstraintError):
        curvature_from_frequencies((1, -1, 2))
    with pytest.raises(ConstraintError):
        curvature_from_frequencies((1, 1, 2), axes=np.ones((3, 3)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.sampled_from(range(3)))
def test_frequency_constructor_against_sign_enumeration(r1, r2, slot):
    # put the sum of the other two in one slot so a traceless assignment exists
    ratios = [r1, r2]
    ratios.insert(slot, r1 + r2)
    g = curvature_from_frequencies(ratios)
    oracle = [s for s in itertools.product((-1, 1), repeat=3)
              if abs(np.dot(s, ratios)) < 1e-9 * sum(ratios)]
    assert oracle
    assert abs(np.trace(g)) < 1e-12
    np.testing.assert_allclose(np.abs(np.diag(g)), np.array(ratios) / max(ratios))


def test_rotated_axes():
    theta = 0.3
    axes = np.array([[np.cos(theta), -np.sin(theta), 0], [np.sin(theta), np.cos(theta), 0], [0, 0, 1]])
    g = curvature_from_frequencies((1, 2, 3), axes)
    np.testing.assert_allclose(g, g.T, atol=1e-15)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(g)), np.sort([-1 / 3, -2 / 3, 1]), atol=1e-12)


def test_normalize_gamma():
    np.testing.assert_allclose(normalize_gamma(np.diag([2.0, 2.0, -4.0])), np.diag([0.5, 0.5, -1.0]))
