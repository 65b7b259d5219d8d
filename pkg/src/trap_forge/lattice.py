"""Bravais lattices and the decomposition of a unit cell into patch electrodes.

All in-plane geometry is kept in fractional coordinates ``(u, v)`` with
``r = u * a1 + v * a2``.  Cartesian coordinates are only produced at the
boundary to field evaluation and rendering.

Patch indexing
--------------
Oblique grid ``(n1, n2)``: patch ``(p, q)`` covers ``[p/n1, (p+1)/n1) x
[q/n2, (q+1)/n2)`` and has flat index ``i = q * n1 + p``.

Hexagonal grid ``n``: rhomb ``(p, q)`` is split along its short diagonal
(from ``a1`` to ``a2``) into a lower triangle ``u + v < 1`` (``t = 0``) and an
upper triangle (``t = 1``); the flat index is ``i = 2 * (q * n + p) + t``.
For a 60 degree lattice both triangles are equilateral.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGENERATE_TOL = 1e-12


class LatticeError(ValueError):
    pass


def reciprocal_vectors(a1, a2) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(g1, g2)`` with ``a_i . g_j = 2 pi delta_ij``."""
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    cross = a1[0] * a2[1] - a1[1] * a2[0]
    if abs(cross) < DEGENERATE_TOL:
        raise LatticeError(f"degenerate lattice: |a1 x a2| = {abs(cross):.3g}")
    g1 = 2 * np.pi * np.array([a2[1], -a2[0]]) / cross
    g2 = 2 * np.pi * np.array([-a1[1], a1[0]]) / cross
    return g1, g2


@dataclass(frozen=True)
class BravaisLattice:
    a1: np.ndarray
    a2: np.ndarray
    g1: np.ndarray = field(init=False, repr=False)
    g2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a1 = np.asarray(self.a1, dtype=float).copy()
        a2 = np.asarray(self.a2, dtype=float).copy()
        g1, g2 = reciprocal_vectors(a1, a2)
        for name, value in (("a1", a1), ("a2", a2), ("g1", g1), ("g2", g2)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def square(cls, d: float = 1.0) -> BravaisLattice:
        return cls((d, 0.0), (0.0, d))

    @classmethod
    def hexagonal(cls, d: float = 1.0) -> BravaisLattice:
        return cls((d, 0.0), (d / 2, d * np.sqrt(3) / 2))

    @property
    def cell_area(self) -> float:
        return float(abs(self.a1[0] * self.a2[1] - self.a1[1] * self.a2[0]))

    @property
    def basis(self) -> np.ndarray:
        """2x2 matrix whose columns are ``a1`` and ``a2``."""
        return np.column_stack([self.a1, self.a2])

    @property
    def cell_diameter(self) -> float:
        return float(max(np.linalg.norm(self.a1 + self.a2), np.linalg.norm(self.a1 - self.a2)))

    def to_cartesian(self, frac) -> np.ndarray:
        frac = np.asarray(frac, dtype=float)
        return frac @ self.basis.T

    def to_fractional(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return xy @ np.linalg.inv(self.basis).T

    def mode_vectors(self, m1, m2) -> np.ndarray:
        """Cartesian wave vectors ``m1 * g1 + m2 * g2`` with shape ``(..., 2)``."""
        m1 = np.asarray(m1, dtype=float)[..., None]
        m2 = np.asarray(m2, dtype=float)[..., None]
        return m1 * self.g1 + m2 * self.g2

    def minimum_image(self, dxy) -> np.ndarray:
        """Shortest periodic image of Cartesian in-plane displacements."""
        dxy = np.atleast_2d(np.asarray(dxy, dtype=float))
        frac = self.to_fractional(dxy)
        frac = frac - np.round(frac)
        best = self.to_cartesian(frac)
        best_norm = np.linalg.norm(best, axis=-1)
        for s1 in (-1, 0, 1):
            for s2 in (-1, 0, 1):
                cand = self.to_cartesian(frac + np.array([s1, s2]))
                norm = np.linalg.norm(cand, axis=-1)
                better = norm < best_norm
                best[better] = cand[better]
                best_norm = np.minimum(best_norm, norm)
        return best


@dataclass(frozen=True)
class PatchGrid:
    """Decomposition of one unit cell into ``N`` congruent patch electrodes.

    ``base_shapes`` are polygon templates anchored at the origin of their
    rhomb; ``shape_of[i]`` selects the template and ``translations[i]`` is
    the fractional offset of patch ``i``.
    """

    kind: str
    n1: int
    n2: int

    def __post_init__(self):
        if self.kind not in ("oblique", "hexagonal"):
            raise LatticeError(f"unknown patch grid kind {self.kind!r}")
        if self.n1 < 1 or self.n2 < 1:
            raise LatticeError("patch grid resolution must be >= 1")
        if self.kind == "hexagonal" and self.n1 != self.n2:
            raise LatticeError("hexagonal grids take n1 == n2 == n")

    @classmethod
    def oblique(cls, n1: int, n2: int | None = None) -> PatchGrid:
        return cls("oblique", int(n1), int(n1 if n2 is None else n2))

    @classmethod
    def hexagonal(cls, n: int) -> PatchGrid:
        return cls("hexagonal", int(n), int(n))

    @property
    def shapes_per_rhomb(self) -> int:
        return 1 if self.kind == "oblique" else 2

    @property
    def N(self) -> int:
        return self.n1 * self.n2 * self.shapes_per_rhomb

    @property
    def array_shape(self) -> tuple[int, ...]:
        """Shape that ``a.reshape`` takes for a flat amplitude vector."""
        if self.kind == "oblique":
            return (self.n2, self.n1)
        return (self.n2, self.n1, 2)

    @property
    def base_shapes(self) -> list[np.ndarray]:
        h1, h2 = 1.0 / self.n1, 1.0 / self.n2
        if self.kind == "oblique":
            return [np.array([[0, 0], [h1, 0], [h1, h2], [0, h2]], dtype=float)]
        return [
            np.array([[0, 0], [h1, 0], [0, h2]], dtype=float),
            np.array([[h1, 0], [h1, h2], [0, h2]], dtype=float),
        ]

    @property
    def patch_area(self) -> float:
        """Fractional area of one patch (multiply by ``cell_area`` for L0^2)."""
        return 1.0 / self.N

    def unravel(self, i: int) -> tuple[int, int, int]:
        """Flat index -> ``(p, q, t)``; ``t`` is 0 for oblique grids."""
        if not 0 <= i < self.N:
            raise IndexError(f"patch index {i} out of range [0, {self.N})")
        s = self.shapes_per_rhomb
        t = i % s
        cell = i // s
        return cell % self.n1, cell // self.n1, t

    @property
    def translations(self) -> np.ndarray:
        """Fractional offsets of all patches, shape ``(N, 2)``."""
        q, p = np.meshgrid(np.arange(self.n2), np.arange(self.n1), indexing="ij")
        offs = np.column_stack([p.ravel() / self.n1, q.ravel() / self.n2])
        return np.repeat(offs, self.shapes_per_rhomb, axis=0)

    @property
    def shape_of(self) -> np.ndarray:
        return np.tile(np.arange(self.shapes_per_rhomb), self.n1 * self.n2)

    def patch_polygon(self, i: int) -> np.ndarray:
        p, q, t = self.unravel(i)
        return self.base_shapes[t] + np.array([p / self.n1, q / self.n2])

    def polygons(self) -> np.ndarray:
        """All patch polygons, shape ``(N, vertices, 2)`` in fractional coordinates."""
        base = np.stack(self.base_shapes)
        return base[self.shape_of] + self.translations[:, None, :]

    def centroids(self) -> np.ndarray:
        return self.polygons().mean(axis=1)

    def locate(self, frac) -> np.ndarray:
        """Patch index owning each fractional point (half-open, lower-left inclusive)."""
        frac = np.atleast_2d(np.asarray(frac, dtype=float)) % 1.0
        fu = frac[:, 0] * self.n1
        fv = frac[:, 1] * self.n2
        p = np.minimum(np.floor(fu).astype(int), self.n1 - 1)
        q = np.minimum(np.floor(fv).astype(int), self.n2 - 1)
        idx = q * self.n1 + p
        if self.kind == "oblique":
            return idx
        t = ((fu - p) + (fv - q) >= 1.0).astype(int)
        return 2 * idx + t


def build_patch_grid(lattice: BravaisLattice, kind: str, resolution) -> PatchGrid:
    """Build a patch grid; ``resolution`` is ``n`` or ``(n1, n2)``."""
    if kind == "hexagonal":
        n = resolution if np.isscalar(resolution) else resolution[0]
        return PatchGrid.hexagonal(n)
    if np.isscalar(resolution):
        return PatchGrid.oblique(resolution)
    n1, n2 = resolution
    return PatchGrid.oblique(n1, n2)


def polygon_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
