"""Parametric ring electrodes on rectangular patch grids.

A ring (annulus) is rasterized with exact area fractions, so its amplitude
vector is a point of the relaxed box ``[0, 1]^N`` and is directly comparable
with the linear-programming optimum on the same grid.  With the ring centred
on a mirror-symmetric grid point it is field free on its axis by symmetry;
only the trap height has to be tuned, through the inner radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .analysis import kappa_from_hessian
from .fourier import FourierBasis


def _chord_primitive(t, R):
    t = np.clip(t, -R, R)
    return 0.5 * (t * np.sqrt(np.maximum(R * R - t * t, 0.0)) + R * R * np.arcsin(t / R))


def _clipped_integral(p, q, R, y0, y1, sign):
    """``int_p^q clip(sign * sqrt(R^2 - t^2), y0, y1) dt`` on a segment with no kink inside."""
    mid = 0.5 * (p + q)
    s = sign * np.sqrt(np.maximum(R * R - mid * mid, 0.0))
    width = q - p
    inner = sign * (_chord_primitive(q, R) - _chord_primitive(p, R))
    return np.where(s < y0, y0 * width, np.where(s > y1, y1 * width, inner))


def disk_rectangle_area(R, x0, x1, y0, y1) -> np.ndarray:
    """Exact area of the disk ``|r| <= R`` intersected with ``[x0,x1] x [y0,y1]``."""
    x0, x1, y0, y1 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x0, x1, y0, y1)))
    if R <= 0:
        return np.zeros(x0.shape)
    lo = np.clip(x0, -R, R)
    hi = np.clip(x1, -R, R)
    breaks = [lo, hi]
    for y in (y0, y1):
        t = np.sqrt(np.maximum(R * R - y * y, 0.0))
        breaks += [np.clip(-t, lo, hi), np.clip(t, lo, hi)]
    pts = np.sort(np.stack(breaks, axis=-1), axis=-1)
    total = np.zeros(x0.shape)
    for k in range(pts.shape[-1] - 1):
        p, q = pts[..., k], pts[..., k + 1]
        seg = _clipped_integral(p, q, R, y0, y1, 1.0) - _clipped_integral(p, q, R, y0, y1, -1.0)
        total += np.where(q > p, seg, 0.0)
    return total


def ring_amplitudes(basis: FourierBasis, center_frac, r_in: float, r_out: float) -> np.ndarray:
    """Area fractions of an rf annulus centred at ``center_frac`` (periodic images included).

    Requires an oblique grid on a lattice with axis-aligned orthogonal vectors.
    """
    lattice, grid = basis.lattice, basis.grid
    if grid.kind != "oblique" or abs(lattice.a1[1]) > 1e-12 or abs(lattice.a2[0]) > 1e-12:
        raise ValueError("ring rasterization needs a rectangular lattice and an oblique grid")
    Lx, Ly = lattice.a1[0], lattice.a2[1]
    cx, cy = lattice.to_cartesian(center_frac)
    polys = grid.polygons()
    u0 = polys[:, 0, 0] * Lx - cx
    v0 = polys[:, 0, 1] * Ly - cy
    hx, hy = Lx / grid.n1, Ly / grid.n2
    area = np.zeros(grid.N)
    # periodic images of the ring centre that overlap the cell
    kxs = [k for k in range(-int(r_out / Lx) - 2, int(r_out / Lx) + 3)
           if cx + k * Lx + r_out > 0 and cx + k * Lx - r_out < Lx]
    kys = [k for k in range(-int(r_out / Ly) - 2, int(r_out / Ly) + 3)
           if cy + k * Ly + r_out > 0 and cy + k * Ly - r_out < Ly]
    for kx in kxs:
        for ky in kys:
            x0 = u0 - kx * Lx
            y0 = v0 - ky * Ly
            area += disk_rectangle_area(r_out, x0, x0 + hx, y0, y0 + hy)
            area -= disk_rectangle_area(r_in, x0, x0 + hx, y0, y0 + hy)
    return np.clip(area / (hx * hy), 0.0, 1.0)


def ring_axis_sample(basis: FourierBasis, center_frac, z, r_in, r_out):
    a = ring_amplitudes(basis, center_frac, r_in, r_out)
    xy = basis.lattice.to_cartesian(center_frac)
    return a, basis.sample(basis.spectrum(a), [xy[0], xy[1], z])


@dataclass
class RingScan:
    kappa: float
    r_in: float
    r_out: float
    C: float
    a: np.ndarray | None
    evaluated: int


def ring_scan(
    basis: FourierBasis,
    center_frac,
    z: float,
    r_max: float,
    n_scan: int = 50,
) -> RingScan:
    """Best ring trap at height ``z``: scan ``(r_in, r_out)`` and keep the best field null.

    For each outer radius the inner radius is scanned on ``n_scan`` values;
    every sign change of the axial field at height ``z`` is refined to an
    exact null by root finding in ``r_in``.  ``kappa`` is taken from the
    evaluated Hessian.
    """
    best = RingScan(0.0, float("nan"), float("nan"), 0.0, None, 0)
    count = 0
    xy = basis.lattice.to_cartesian(center_frac)
    dz_row = basis.row(np.array([xy[0], xy[1], z]), "z")

    def axial(r_in, r_out):
        nonlocal count
        count += 1
        return dz_row @ ring_amplitudes(basis, center_frac, r_in, r_out)

    for r_out in np.linspace(r_max / n_scan, r_max, n_scan):
        r_ins = np.linspace(0.0, r_out, n_scan + 1)[1:-1]
        vals = np.array([axial(r, r_out) for r in r_ins])
        for k in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
            r_in = brentq(axial, r_ins[k], r_ins[k + 1], args=(r_out,), xtol=1e-12)
            a, sample = ring_axis_sample(basis, center_frac, z, r_in, r_out)
            k_val = kappa_from_hessian(sample.hessian[0], z)
            if k_val > best.kappa:
                C = sample.hessian[0, 2, 2]
                best = RingScan(k_val, r_in, r_out, C, a, count)
    best.evaluated = count
    return best
