"""SVG rendering of electrode maps as a 3x3 tiling of the unit cell."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .io import ElectrodeMap

RF_FILL = "#2a6fdb"
TRAP_FILL = "#d62728"


def _fmt(x: float) -> str:
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _points(lattice, frac) -> str:
    xy = lattice.to_cartesian(np.asarray(frac, dtype=float))
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in xy)


def _gray(value: float) -> str:
    level = int(round(255 * (1 - 0.75 * value)))
    return f"#{level:02x}{level:02x}{level:02x}"


def _runs(flags):
    """Maximal runs of True in a 1D boolean sequence as (start, stop) pairs."""
    runs, start = [], None
    for k, f in enumerate(flags):
        if f and start is None:
            start = k
        elif not f and start is not None:
            runs.append((start, k))
            start = None
    if start is not None:
        runs.append((start, len(flags)))
    return runs


def _run_polygon(grid, q, start, stop):
    """Fractional outline of a run of railed-on patches within row ``q``."""
    h1, h2 = 1.0 / grid.n1, 1.0 / grid.n2
    v0, v1 = q * h2, (q + 1) * h2
    if grid.kind == "oblique":
        u0, u1 = start * h1, stop * h1
        return [(u0, v0), (u1, v0), (u1, v1), (u0, v1)]
    # hexagonal rows alternate lower (t=0) and upper (t=1) triangles
    p0, t0 = divmod(start, 2)
    p1, t1 = divmod(stop - 1, 2)
    b0 = p0 + t0
    top0 = p0
    b1 = p1 + 1
    top1 = p1 + t1
    pts = [(b0 * h1, v0), (b1 * h1, v0), (top1 * h1, v1), (top0 * h1, v1)]
    out = []
    for pt in pts:
        if not out or not np.allclose(out[-1], pt):
            out.append(pt)
    if len(out) > 1 and np.allclose(out[0], out[-1]):
        out.pop()
    return out


def render_svg(emap: ElectrodeMap, width_px: int = 600, marker_scale: float = 0.035) -> str:
    """Deterministic SVG text for ``emap``.

    rf patches are filled blue, ground patches are left unfilled and interior
    patches get a gray level that darkens with the amplitude.  Railed rf
    patches in the same grid row are merged into one outline.
    """
    lattice, grid = emap.lattice, emap.grid
    t = emap.rail_tol
    a = emap.a
    rf = a >= 1 - t
    interior = (a > t) & (a < 1 - t)

    shapes = []
    if np.all(rf):
        shapes.append(f'<polygon class="rf" points="{_points(lattice, [(0, 0), (1, 0), (1, 1), (0, 1)])}"/>')
    else:
        per_row = grid.N // grid.n2
        for q in range(grid.n2):
            row = rf[q * per_row:(q + 1) * per_row]
            for start, stop in _runs(row):
                shapes.append(f'<polygon class="rf" points="{_points(lattice, _run_polygon(grid, q, start, stop))}"/>')
        for i in np.flatnonzero(interior):
            poly = grid.patch_polygon(int(i))
            shapes.append(
                f'<polygon class="interior" fill="{_gray(a[i])}" '
                f'points="{_points(lattice, poly)}"/>'
            )

    size = marker_scale * lattice.cell_diameter
    markers = []
    for trap in emap.traps:
        x, y = lattice.to_cartesian(np.array(trap.position[:2]) % 1.0)
        tri = [(x, y + size), (x - 0.866 * size, y - 0.5 * size), (x + 0.866 * size, y - 0.5 * size)]
        pts = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in tri)
        markers.append(f'<polygon class="trap" points="{pts}"/>')

    cell = _points(lattice, [(0, 0), (1, 0), (1, 1), (0, 1)])
    corners = lattice.to_cartesian(np.array(
        [(i, j) for i in (-1, 2) for j in (-1, 2)], dtype=float))
    xmin, ymin = corners.min(axis=0)
    xmax, ymax = corners.max(axis=0)
    w, h = xmax - xmin, ymax - ymin
    height_px = int(round(width_px * h / w))
    stroke = _fmt(0.004 * lattice.cell_diameter)

    uses = []
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            dx, dy = lattice.to_cartesian(np.array([i, j], dtype=float))
            uses.append(f'<use href="#cell" transform="translate({_fmt(dx)},{_fmt(dy)})"/>')

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{height_px}" '
        f'viewBox="{_fmt(xmin)} {_fmt(-ymax)} {_fmt(w)} {_fmt(h)}">',
        "<style>",
        f".rf {{ fill: {RF_FILL}; stroke: none; }}",
        ".interior { stroke: none; }",
        f".trap {{ fill: {TRAP_FILL}; stroke: none; }}",
        f".cell {{ fill: none; stroke: #444444; stroke-width: {stroke}; stroke-dasharray: {stroke} {stroke}; }}",
        "</style>",
        "<defs>",
        '<g id="cell">',
        *shapes,
        *markers,
        "</g>",
        "</defs>",
        '<g transform="scale(1,-1)">',
        *uses,
        f'<polygon class="cell" points="{cell}"/>',
        "</g>",
        "</svg>",
    ]
    return "\n".join(lines) + "\n"


def write_svg(emap: ElectrodeMap, path) -> Path:
    path = Path(path)
    path.write_text(render_svg(emap))
    return path
