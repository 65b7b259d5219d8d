"""Fourier extension of the electrode-plane boundary potential into ``z > 0``.

The boundary potential of a periodic electrode pattern is expanded as
``phi(rho, 0) = sum_G c(G) exp(i G.rho)``; every mode is continued upward as
``exp(i G.rho - |G| z)``, which solves the Laplace equation exactly.  Patch
coefficients are computed in closed form in fractional coordinates, where
``(1/A) int_patch exp(-i G.r) d^2r = int exp(-2 pi i (m1 u + m2 v)) du dv``
does not depend on the lattice shape.

Per-patch sums are done with FFTs over the patch grid: the coefficient of
patch ``(p, q)`` differs from its base shape only by the phase
``exp(-2 pi i (m1 p / n1 + m2 q / n2))``, so folding modes modulo the grid
size turns the patch sum into a discrete Fourier transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .lattice import BravaisLattice, PatchGrid, polygon_area

#: derivative components addressable by :meth:`FourierBasis.row`
COMPONENTS = ("", "x", "y", "z", "xx", "yy", "zz", "xy", "xz", "yz")
FIELD_COMPONENTS = {"Ex": "x", "Ey": "y", "Ez": "z"}

DEFAULT_TABLE_LIMIT = 2 * 1024**3


class BasisError(ValueError):
    pass


class FieldSample(NamedTuple):
    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray


# -- closed-form patch coefficients ------------------------------------------------


def _phi1_imag(theta):
    """``(exp(i theta) - 1) / (i theta)`` for real ``theta``, exact at 0."""
    return np.exp(0.5j * theta) * np.sinc(theta / (2 * np.pi))


def _exp_dd2(t1, t2):
    """Second divided difference of ``exp`` at nodes ``0, i t1, i t2`` (real ``t``).

    Nodes are reordered so that the denominator is the largest node gap;
    a Taylor series covers the fully confluent neighbourhood.
    """
    t1, t2 = np.broadcast_arrays(np.asarray(t1, dtype=float), np.asarray(t2, dtype=float))
    shape = t1.shape
    t1 = t1.ravel()
    t2 = t2.ravel()
    nodes = np.stack(np.broadcast_arrays(np.zeros_like(t1), t1, t2), axis=-1)
    lo = nodes.min(axis=-1)
    hi = nodes.max(axis=-1)
    mid = nodes.sum(axis=-1) - lo - hi
    span = hi - lo

    def dd1(a, b):
        return np.exp(1j * a) * _phi1_imag(b - a)

    with np.errstate(invalid="ignore", divide="ignore"):
        out = (dd1(mid, hi) - dd1(lo, mid)) / (1j * span)
    small = span < 1e-3
    if np.any(small):
        d1 = 1j * (mid - lo)[small]
        d2 = 1j * (hi - lo)[small]
        series = 1 / 2 + (d1 + d2) / 6 + (d1**2 + d1 * d2 + d2**2) / 24
        series = series + (d1**3 + d1**2 * d2 + d1 * d2**2 + d2**3) / 120
        out[small] = np.exp(1j * lo[small]) * series
    return out.reshape(shape)


def triangle_fourier(tri, m1, m2) -> np.ndarray:
    """``int_T exp(-2 pi i (m1 u + m2 v)) du dv`` over a fractional triangle.

    Uses the Hermite-Genocchi identity: the integral of ``exp`` of an affine
    function over a simplex is twice its area times the second divided
    difference of ``exp`` at the vertex values.
    """
    tri = np.asarray(tri, dtype=float)
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    phase = [-2 * np.pi * (m1 * v[0] + m2 * v[1]) for v in tri]
    area = abs(polygon_area(tri))
    return 2 * area * np.exp(1j * phase[0]) * _exp_dd2(phase[1] - phase[0], phase[2] - phase[0])


def rectangle_fourier(u0, v0, h1, h2, m1, m2) -> np.ndarray:
    """Separable closed form over the fractional rectangle ``[u0,u0+h1] x [v0,v0+h2]``."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    fu = h1 * np.exp(-2j * np.pi * m1 * (u0 + h1 / 2)) * np.sinc(m1 * h1)
    fv = h2 * np.exp(-2j * np.pi * m2 * (v0 + h2 / 2)) * np.sinc(m2 * h2)
    return fu * fv


def polygon_fourier(poly, m1, m2) -> np.ndarray:
    """Fourier coefficient of a convex fractional polygon (fan triangulation)."""
    poly = np.asarray(poly, dtype=float)
    if polygon_area(poly) < 0:
        poly = poly[::-1]
    total = 0
    for k in range(1, len(poly) - 1):
        total = total + triangle_fourier(poly[[0, k, k + 1]], m1, m2)
    return total


def patch_fourier_coeff(lattice: BravaisLattice, shape, G) -> np.ndarray:
    """``(1/cell_area) int_shape exp(-i G.r) d^2r`` for Cartesian wave vectors ``G``.

    ``shape`` is a convex polygon in fractional coordinates.
    """
    G = np.asarray(G, dtype=float)
    m1 = G @ lattice.a1 / (2 * np.pi)
    m2 = G @ lattice.a2 / (2 * np.pi)
    return polygon_fourier(shape, m1, m2)


def _base_coefficients(grid: PatchGrid, m1, m2) -> np.ndarray:
    if grid.kind == "oblique":
        return rectangle_fourier(0.0, 0.0, 1 / grid.n1, 1 / grid.n2, m1, m2)[None, :]
    return np.stack([triangle_fourier(s, m1, m2) for s in grid.base_shapes])


# -- derivative factors -----------------------------------------------------------


def _derivative_factor(component: str, G: np.ndarray, gnorm: np.ndarray) -> np.ndarray:
    factor = np.ones(len(gnorm), dtype=complex)
    for axis in component:
        if axis == "x":
            factor = factor * (1j * G[:, 0])
        elif axis == "y":
            factor = factor * (1j * G[:, 1])
        elif axis == "z":
            factor = factor * (-gnorm)
        else:
            raise BasisError(f"unknown derivative component {component!r}")
    return factor


def _canonical(component: str) -> str:
    component = FIELD_COMPONENTS.get(component, component)
    component = "".join(sorted(component))
    if component not in COMPONENTS:
        raise BasisError(f"unknown derivative component {component!r}")
    return component


# -- the basis --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FourierBasis:
    lattice: BravaisLattice
    grid: PatchGrid
    n_cut: int
    m1: np.ndarray
    m2: np.ndarray
    G: np.ndarray
    gnorm: np.ndarray
    base_coeffs: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.gnorm)

    @property
    def N(self) -> int:
        return self.grid.N

    # electrode spectrum ------------------------------------------------------------

    def spectrum(self, a) -> np.ndarray:
        """Mode amplitudes ``sum_i a_i c_i(G)`` of an electrode amplitude vector."""
        a = np.asarray(a, dtype=float)
        if a.shape != (self.N,):
            raise BasisError(f"amplitude vector has shape {a.shape}, expected ({self.N},)")
        arr = a.reshape(self.grid.array_shape)
        if arr.ndim == 2:
            arr = arr[..., None]
        k2 = self.m2 % self.grid.n2
        k1 = self.m1 % self.grid.n1
        out = np.zeros(self.n_modes, dtype=complex)
        for s in range(arr.shape[-1]):
            dft = np.fft.fft2(arr[..., s])
            out += self.base_coeffs[s] * dft[k2, k1]
        return out

    def dominant_mode(self, a) -> tuple[np.ndarray, float]:
        """Nonzero wave vector with the largest ``|spectrum|`` and its norm."""
        spec = np.abs(self.spectrum(a))
        spec[self.gnorm == 0] = -1
        k = int(np.argmax(spec))
        return self.G[k], float(self.gnorm[k])

    # point evaluation ---------------------------------------------------------------

    def _phases(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(points[:, 2] <= 0):
            raise BasisError("field evaluation requires z > 0")
        return np.exp(1j * points[:, :2] @ self.G.T - np.outer(points[:, 2], self.gnorm))

    def evaluate_components(self, spectrum, points, components) -> dict[str, np.ndarray]:
        """Evaluate derivative components of a spectrum at Cartesian points ``(P, 3)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = {c: np.empty(len(points)) for c in components}
        chunk = max(1, int(4e6 // max(self.n_modes, 1)))
        for start in range(0, len(points), chunk):
            waves = self._phases(points[start : start + chunk])
            for c in components:
                factor = _derivative_factor(_canonical(c), self.G, self.gnorm)
                vals = waves @ (spectrum * factor)
                out[c][start : start + chunk] = vals.real
        for c in components:
            if c in ("Ex", "Ey", "Ez"):
                out[c] = -out[c]
        return out

    def sample(self, spectrum, points) -> FieldSample:
        """Value, gradient ``(P, 3)`` and Hessian ``(P, 3, 3)`` at Cartesian points."""
        comps = self.evaluate_components(spectrum, points, COMPONENTS)
        grad = np.stack([comps["x"], comps["y"], comps["z"]], axis=-1)
        hess = np.empty(grad.shape + (3,))
        for i, a in enumerate("xyz"):
            for j, b in enumerate("xyz"):
                hess[:, i, j] = comps["".join(sorted(a + b))]
        return FieldSample(comps[""], grad, hess)

    def evaluate(self, a, r, order: str = "hessian") -> FieldSample:
        """Field of electrode ``a`` at Cartesian point(s) ``r``.

        ``order`` limits what is computed (``value``, ``gradient`` or
        ``hessian``); unrequested parts come back as ``None``.
        """
        spec = self.spectrum(a)
        single = np.ndim(r) == 1
        if order == "value":
            comps = self.evaluate_components(spec, r, [""])
            sample = FieldSample(comps[""], None, None)
        elif order == "gradient":
            comps = self.evaluate_components(spec, r, ["", "x", "y", "z"])
            grad = np.stack([comps["x"], comps["y"], comps["z"]], axis=-1)
            sample = FieldSample(comps[""], grad, None)
        elif order == "hessian":
            sample = self.sample(spec, r)
        else:
            raise BasisError(f"unknown order {order!r}")
        if single:
            sample = FieldSample(*(None if f is None else f[0] for f in sample))
        return sample

    # constraint rows ----------------------------------------------------------------

    def row(self, r, component: str) -> np.ndarray:
        """Per-patch coefficients of one derivative of the potential at ``r``.

        Entry ``i`` is the requested derivative of the unit-amplitude field of
        patch ``i``; ``Ex``/``Ey``/``Ez`` give the electric field ``-grad``.
        """
        r = np.asarray(r, dtype=float)
        if r[2] <= 0:
            raise BasisError("field evaluation requires z > 0")
        sign = -1.0 if component in FIELD_COMPONENTS else 1.0
        comp = _canonical(component)
        wave = np.exp(1j * self.G @ r[:2] - self.gnorm * r[2])
        weight = wave * _derivative_factor(comp, self.G, self.gnorm)
        n1, n2 = self.grid.n1, self.grid.n2
        flat = (self.m2 % n2) * n1 + (self.m1 % n1)
        shapes = []
        for coeff in self.base_coeffs:
            f = coeff * weight
            folded = np.bincount(flat, f.real, n1 * n2) + 1j * np.bincount(flat, f.imag, n1 * n2)
            shapes.append(np.fft.fft2(folded.reshape(n2, n1)).real)
        return sign * np.stack(shapes, axis=-1).ravel()

    def rows(self, r, components) -> np.ndarray:
        return np.stack([self.row(r, c) for c in components])

    # slices for landscape analysis ----------------------------------------------------

    def slice_components(self, spectrum, z: float, shape: tuple[int, int], components) -> dict:
        """Components on the fractional grid ``u = i/nx, v = j/ny`` at height ``z``.

        Arrays are indexed ``[j, i]`` (v first).
        """
        if z <= 0:
            raise BasisError("field evaluation requires z > 0")
        nx, ny = shape
        flat = (self.m2 % ny) * nx + (self.m1 % nx)
        damped = spectrum * np.exp(-self.gnorm * z)
        out = {}
        for c in components:
            sign = -1.0 if c in FIELD_COMPONENTS else 1.0
            f = damped * _derivative_factor(_canonical(c), self.G, self.gnorm)
            folded = np.bincount(flat, f.real, nx * ny) + 1j * np.bincount(flat, f.imag, nx * ny)
            out[c] = sign * np.fft.ifft2(folded.reshape(ny, nx)).real * (nx * ny)
        return out


def build_basis(
    lattice: BravaisLattice,
    grid: PatchGrid,
    n_cut: int,
    table_limit: int = DEFAULT_TABLE_LIMIT,
) -> FourierBasis:
    """Tabulate ``(2 n_cut + 1)^2`` modes and the base-shape coefficients."""
    if n_cut < 1:
        raise BasisError("n_cut must be >= 1")
    n_modes = (2 * n_cut + 1) ** 2
    table_bytes = n_modes * (grid.shapes_per_rhomb * 16 + 48)
    if table_bytes > table_limit:
        raise BasisError(
            f"mode table needs {table_bytes / 1e9:.2f} GB, above the limit of {table_limit / 1e9:.2f} GB"
        )
    rng = np.arange(-n_cut, n_cut + 1)
    m2, m1 = np.meshgrid(rng, rng, indexing="ij")
    m1 = m1.ravel()
    m2 = m2.ravel()
    G = lattice.mode_vectors(m1, m2)
    gnorm = np.linalg.norm(G, axis=-1)
    coeffs = _base_coefficients(grid, m1, m2)
    for arr in (m1, m2, G, gnorm, coeffs):
        arr.setflags(write=False)
    return FourierBasis(lattice, grid, int(n_cut), m1, m2, G, gnorm, coeffs)
