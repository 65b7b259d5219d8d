"""Linear constraints ``A a = C b`` that place field-free microtraps.

Each trap contributes three gradient rows (the rf field must vanish) and
five curvature rows for the independent Hessian components
``xx, yy, xy, xz, yz``; ``zz`` follows from tracelessness.  Extra rows pin a
field component at chosen points to a multiple ``lambda * C`` of the common
scale, which is how spurious trapping sites are pushed away.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .fourier import FourierBasis
from .lattice import BravaisLattice

GRADIENT_ROWS = ("x", "y", "z")
CURVATURE_ROWS = ("xx", "yy", "xy", "xz", "yz")
_HESSIAN_INDEX = {"xx": (0, 0), "yy": (1, 1), "xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}
RELATIONS = ("equal", "at_least", "at_most")


class ConstraintError(ValueError):
    pass


def normalize_gamma(gamma) -> np.ndarray:
    """Scale a curvature tensor so that its largest |eigenvalue| is 1."""
    gamma = np.asarray(gamma, dtype=float)
    scale = np.max(np.abs(np.linalg.eigvalsh(gamma)))
    if scale == 0:
        raise ConstraintError("curvature tensor is zero")
    return gamma / scale


@dataclass(frozen=True)
class TrapSpec:
    """A desired microtrap: fractional in-plane position, height ``z`` and
    target potential curvature ``gamma`` (symmetric, traceless)."""

    position: tuple[float, float, float]
    gamma: np.ndarray
    label: str = ""

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.shape != (3, 3):
            raise ConstraintError(f"trap {self.label!r}: gamma must be 3x3")
        norm = np.linalg.norm(gamma)
        if norm == 0:
            raise ConstraintError(f"trap {self.label!r}: gamma is zero")
        if np.max(np.abs(gamma - gamma.T)) > 1e-12 * norm:
            raise ConstraintError(f"trap {self.label!r}: gamma is not symmetric")
        if abs(np.trace(gamma)) > 1e-10 * norm:
            raise ConstraintError(
                f"trap {self.label!r}: gamma is not traceless (trace {np.trace(gamma):.3g})"
            )
        if self.position[2] <= 0:
            raise ConstraintError(f"trap {self.label!r}: height must be positive")
        object.__setattr__(self, "gamma", normalize_gamma(gamma))
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))

    @property
    def z(self) -> float:
        return self.position[2]

    def cartesian(self, lattice: BravaisLattice) -> np.ndarray:
        xy = lattice.to_cartesian(self.position[:2])
        return np.array([xy[0], xy[1], self.z])


@dataclass(frozen=True)
class ExtraConstraint:
    """Pin ``component`` at a fractional point to ``relation`` ``lam * C``."""

    point: tuple[float, float, float]
    lam: float
    relation: str = "equal"
    component: str = "Ez"

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ConstraintError(f"unknown relation {self.relation!r}")
        if self.point[2] <= 0:
            raise ConstraintError("suppression point must lie above the plane")


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    A: np.ndarray
    b: np.ndarray
    traps: tuple[TrapSpec, ...]
    row_kinds: tuple[tuple[str, str], ...]
    extras: tuple[ExtraConstraint, ...] = ()
    ineq_rows: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    ineq_relations: tuple[str, ...] = ()
    ineq_lams: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def M(self) -> int:
        return len(self.traps)

    @property
    def n_equalities(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    def residual(self, a, C: float) -> float:
        return float(np.max(np.abs(self.A @ a - C * self.b)))


def _trap_rows(basis: FourierBasis, trap: TrapSpec):
    r = trap.cartesian(basis.lattice)
    rows = basis.rows(r, GRADIENT_ROWS + CURVATURE_ROWS)
    rhs = [0.0] * 3 + [trap.gamma[_HESSIAN_INDEX[c]] for c in CURVATURE_ROWS]
    kinds = [(trap.label, f"grad_{c}") for c in GRADIENT_ROWS]
    kinds += [(trap.label, f"curv_{c}") for c in CURVATURE_ROWS]
    return rows, np.array(rhs), kinds


def _check_distinct(traps, lattice: BravaisLattice):
    for s, t in itertools.combinations(traps, 2):
        d = lattice.minimum_image(
            lattice.to_cartesian(np.subtract(s.position[:2], t.position[:2]))
        )[0]
        if np.hypot(*d) < 1e-9 and abs(s.z - t.z) < 1e-9:
            raise ConstraintError(f"duplicate traps {s.label!r} and {t.label!r}")


def assemble(basis: FourierBasis, traps, extras=()) -> ConstraintSystem:
    """Build the equality system for ``traps`` plus any ``extras``."""
    traps = tuple(traps)
    if not traps:
        raise ConstraintError("at least one trap is required")
    _check_distinct(traps, basis.lattice)
    rows, rhs, kinds = [], [], []
    for trap in traps:
        r, b, k = _trap_rows(basis, trap)
        rows.append(r)
        rhs.append(b)
        kinds += k
    system = ConstraintSystem(
        A=np.vstack(rows),
        b=np.concatenate(rhs),
        traps=traps,
        row_kinds=tuple(kinds),
        ineq_rows=np.zeros((0, basis.N)),
    )
    if not np.any(system.b):
        raise ConstraintError("all target curvatures vanish; the scale C is undefined")
    for extra in extras:
        system = add_suppression(system, basis, extra)
    return system


def add_suppression(system: ConstraintSystem, basis: FourierBasis, extra: ExtraConstraint):
    """Append one field constraint at ``extra.point`` (fractional xy, height z)."""
    lattice = basis.lattice
    for trap in system.traps:
        d = lattice.minimum_image(
            lattice.to_cartesian(np.subtract(extra.point[:2], trap.position[:2]))
        )[0]
        if np.hypot(*d) < 1e-6 and abs(extra.point[2] - trap.z) < 1e-6:
            raise ConstraintError(f"suppression point coincides with trap {trap.label!r}")
    xy = lattice.to_cartesian(extra.point[:2])
    row = basis.row(np.array([xy[0], xy[1], extra.point[2]]), extra.component)
    extras = system.extras + (extra,)
    if extra.relation == "equal":
        return replace(
            system,
            A=np.vstack([system.A, row]),
            b=np.append(system.b, extra.lam),
            row_kinds=system.row_kinds + (("extra", extra.component),),
            extras=extras,
        )
    return replace(
        system,
        ineq_rows=np.vstack([system.ineq_rows.reshape(-1, basis.N), row]),
        ineq_relations=system.ineq_relations + (extra.relation,),
        ineq_lams=np.append(system.ineq_lams, extra.lam),
        extras=extras,
    )


def curvature_from_frequencies(ratios, axes=None) -> np.ndarray:
    """Potential curvature tensor whose pseudopotential frequencies follow ``ratios``.

    Pseudopotential curvature is the square of the potential curvature, so
    each principal frequency fixes an eigenvalue up to sign.  The signs are
    chosen to make the tensor traceless; ``axes`` holds the principal axes as
    columns (default: identity).
    """
    ratios = np.asarray(ratios, dtype=float)
    if ratios.shape != (3,) or np.any(ratios <= 0):
        raise ConstraintError("frequency ratios must be three positive numbers")
    axes = np.eye(3) if axes is None else np.asarray(axes, dtype=float)
    if axes.shape != (3, 3) or not np.allclose(axes.T @ axes, np.eye(3), atol=1e-9):
        raise ConstraintError("axes must form an orthonormal 3x3 matrix")
    best = None
    for signs in itertools.product((-1.0, 1.0), repeat=3):
        total = abs(np.dot(signs, ratios))
        if best is None or total < best[0] - 1e-15:
            best = (total, np.array(signs))
    total, signs = best
    if total >= 1e-9 * ratios.sum():
        raise ConstraintError(
            f"frequency ratios {tuple(ratios)} admit no traceless curvature tensor"
        )
    if np.sum(signs > 0) > 1:
        signs = -signs
    mu = signs * ratios
    mu = mu / np.max(np.abs(mu))
    return axes @ np.diag(mu) @ axes.T


def cylindrical_gamma() -> np.ndarray:
    """Out-of-plane cylindrical quadrupole ``diag(-1/2, -1/2, 1)``."""
    return np.diag([-0.5, -0.5, 1.0])
