"""Pseudopotential landscape analysis of an electrode map.

Everything is dimensionless: the potential is in units of the rf amplitude,
lengths in the lattice unit ``L0``, and ``psi = |grad phi|^2``.  At a trap of
height ``z`` the pseudopotential in units of
``Phi_hat = q^2 U^2 / (4 m Omega^2 z^2)`` is ``z^2 psi``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage
from scipy.constants import atomic_mass, elementary_charge

from .constraints import TrapSpec
from .fourier import FourierBasis

log = logging.getLogger(__name__)

DESIGNED_RADIUS = 0.05
NULL_TOLERANCE = 1e-4
_FACE = ndimage.generate_binary_structure(3, 1)


# -- curvature measures ------------------------------------------------------------


def kappa(C: float, traps) -> list[float]:
    """Dimensionless curvature ``|C| z^2 |det gamma|^(1/3)`` for each trap."""
    out = []
    for trap in traps:
        det = np.linalg.det(trap.gamma)
        if abs(det) < 1e-14:
            log.warning("trap %r has a degenerate target curvature", trap.label)
        out.append(abs(C) * trap.z**2 * abs(det) ** (1 / 3))
    return out


def kappa_from_hessian(hessian, z: float) -> float:
    return float(abs(np.linalg.det(hessian)) ** (1 / 3) * z**2)


def fit_scale(hessians, gammas) -> float:
    """Least-squares common scale ``C`` with ``H_j ~ C gamma_j``."""
    num = sum(float(np.sum(h * g)) for h, g in zip(hessians, gammas))
    den = sum(float(np.sum(g * g)) for g in gammas)
    return num / den


# -- physical units ---------------------------------------------------------------


@dataclass
class PhysicalParams:
    mass_amu: float = 9.012182
    charge_e: float = 1.0
    U_rf: float = 50.0
    Omega_rf: float = 2 * np.pi * 200e6
    z: float = 30e-6
    mathieu_limit: float = 0.9


def physical_units(kappa_value: float, gamma, params: PhysicalParams) -> dict:
    """Secular frequencies, energy scale and Mathieu parameters in SI units.

    Frequencies are angular (rad/s); ``Phi_hat`` is in eV.
    """
    m = params.mass_amu * atomic_mass
    q = params.charge_e * elementary_charge
    U, Omega, z = params.U_rf, params.Omega_rf, params.z
    mu = np.linalg.eigvalsh(np.asarray(gamma, dtype=float))
    det_root = abs(np.prod(mu)) ** (1 / 3)
    # physical eigenvalues of the potential curvature, V/m^2
    curv = kappa_value * U / z**2 * (np.abs(mu) / det_root if det_root > 0 else np.zeros(3))
    omega = q * curv / (np.sqrt(2) * m * Omega)
    omega_bar = q * U * kappa_value / (np.sqrt(2) * m * Omega * z**2)
    phi_hat_ev = q * U**2 / (4 * m * Omega**2 * z**2)
    mathieu = 2 * np.sqrt(2) * omega / Omega
    if np.any(mathieu > params.mathieu_limit):
        log.warning("Mathieu q %.3g exceeds the stability limit %.3g", mathieu.max(), params.mathieu_limit)
    return {
        "omega_bar": float(omega_bar),
        "omega_axes": omega.tolist(),
        "phi_hat_eV": float(phi_hat_ev),
        "mathieu_q": mathieu.tolist(),
        "stable": bool(np.all(mathieu <= params.mathieu_limit)),
    }


# -- pseudopotential grid -----------------------------------------------------------


@dataclass(eq=False)
class PseudoGrid:
    """``psi`` sampled on ``u = i/nx, v = j/ny`` and ``z`` levels; indexed ``[k, j, i]``."""

    psi: np.ndarray
    z: np.ndarray
    nx: int
    ny: int
    basis: FourierBasis = field(repr=False)
    spectrum: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.psi.shape

    def point(self, idx) -> np.ndarray:
        """Cartesian point of grid index ``(k, j, i)``."""
        k, j, i = idx
        xy = self.basis.lattice.to_cartesian([i / self.nx, j / self.ny])
        return np.array([xy[0], xy[1], self.z[k]])

    def nearest_index(self, frac_xy, z) -> tuple[int, int, int]:
        i = int(round((frac_xy[0] % 1.0) * self.nx)) % self.nx
        j = int(round((frac_xy[1] % 1.0) * self.ny)) % self.ny
        k = int(np.argmin(np.abs(self.z - z)))
        return k, j, i


def default_region(lattice, z_max: float) -> tuple[float, float]:
    return 0.05, max(3 * z_max, 2 * lattice.cell_diameter)


def pseudopotential_grid(
    basis: FourierBasis,
    a,
    region: tuple[float, float],
    resolution: tuple[int, int, int] = (96, 96, 128),
    max_points: int = 64_000_000,
) -> PseudoGrid:
    z_lo, z_hi = region
    if z_lo <= 0:
        raise ValueError("landscape grid must start above the plane (z_lo > 0)")
    nx, ny, nz = resolution
    if nx * ny * nz > max_points:
        raise MemoryError(f"landscape grid of {nx * ny * nz} points exceeds {max_points}")
    spectrum = basis.spectrum(a)
    z = np.linspace(z_lo, z_hi, nz)
    psi = np.empty((nz, ny, nx))
    for k, zk in enumerate(z):
        comp = basis.slice_components(spectrum, zk, (nx, ny), ("x", "y", "z"))
        psi[k] = comp["x"] ** 2 + comp["y"] ** 2 + comp["z"] ** 2
    return PseudoGrid(psi, z, nx, ny, basis, spectrum)


# -- minima ---------------------------------------------------------------------------


@dataclass
class Minimum:
    position: list
    z: float
    psi: float
    is_field_null: bool
    designed: str | None = None

    @property
    def spurious(self) -> bool:
        return self.designed is None


def _strict_minima(psi: np.ndarray) -> np.ndarray:
    footprint = np.ones((3, 3, 3), dtype=bool)
    footprint[1, 1, 1] = False
    padded = np.pad(psi, ((1, 1), (0, 0), (0, 0)), mode="edge")
    padded = np.pad(padded, ((0, 0), (1, 1), (1, 1)), mode="wrap")
    neigh = ndimage.minimum_filter(padded, footprint=footprint, mode="nearest")[1:-1, 1:-1, 1:-1]
    mask = psi < neigh
    mask[0] = False
    mask[-1] = False
    return np.argwhere(mask)


def refine_minimum(basis: FourierBasis, spectrum, point, steps: int = 8, max_step: float = 0.05):
    """A few damped Newton steps toward ``grad phi = 0`` from a grid minimum."""
    point = np.array(point, dtype=float)
    sample = basis.sample(spectrum, point)
    psi = float(sample.gradient[0] @ sample.gradient[0])
    for _ in range(steps):
        try:
            step = -np.linalg.solve(sample.hessian[0], sample.gradient[0])
        except np.linalg.LinAlgError:
            break
        norm = np.linalg.norm(step)
        if norm > max_step:
            step *= max_step / norm
        accepted = False
        for _ in range(6):
            cand = point + step
            if cand[2] > 0:
                s = basis.sample(spectrum, cand)
                cpsi = float(s.gradient[0] @ s.gradient[0])
                if cpsi < psi:
                    point, sample, psi, accepted = cand, s, cpsi, True
                    break
            step /= 2
        if not accepted:
            break
    return point, psi


def classify(lattice, point, traps, radius: float = DESIGNED_RADIUS) -> str | None:
    for trap in traps:
        r = trap.cartesian(lattice)
        d = lattice.minimum_image(point[:2] - r[:2])[0]
        if np.sqrt(d @ d + (point[2] - r[2]) ** 2) < radius:
            return trap.label
    return None


def find_minima(grid: PseudoGrid, traps=(), refine: bool = True) -> list[Minimum]:
    """Strict local minima of ``psi`` (26-neighbour stencil, periodic in-plane).

    A refined minimum counts as a field null when ``|grad phi|`` there is
    below ``1e-4`` of the root-mean-square field in its ``z`` slice.
    """
    basis = grid.basis
    lattice = basis.lattice
    out = []
    seen = []
    for k, j, i in _strict_minima(grid.psi):
        point = grid.point((k, j, i))
        psi = float(grid.psi[k, j, i])
        if refine:
            dz = grid.z[1] - grid.z[0] if len(grid.z) > 1 else 0.05
            point, psi = refine_minimum(basis, grid.spectrum, point, max_step=2 * dz)
        frac = lattice.to_fractional(point[:2]) % 1.0
        point = np.array([*lattice.to_cartesian(frac), point[2]])
        if any(np.linalg.norm(lattice.minimum_image(point[:2] - p[:2])[0]) < 1e-6
               and abs(point[2] - p[2]) < 1e-6 for p in seen):
            continue
        seen.append(point)
        k_ref = int(np.argmin(np.abs(grid.z - point[2])))
        rms = np.sqrt(np.mean(grid.psi[k_ref]))
        null = bool(np.sqrt(psi) < NULL_TOLERANCE * rms)
        out.append(
            Minimum(
                position=[float(frac[0]), float(frac[1])],
                z=float(point[2]),
                psi=psi,
                is_field_null=null,
                designed=classify(lattice, point, traps),
            )
        )
    return out


# -- depth --------------------------------------------------------------------------


class _OffsetUnionFind:
    """Union-find over component labels that tracks periodic cell offsets."""

    def __init__(self):
        self.parent = {}
        self.offset = {}
        self.wraps = set()

    def find(self, x):
        if x not in self.parent:
            self.parent[x] = x
            self.offset[x] = (0, 0)
            return x, (0, 0)
        path = []
        while self.parent[x] != x:
            path.append(x)
            x = self.parent[x]
        root = x
        # compress, accumulating offsets from the top of the path
        acc = (0, 0)
        for node in reversed(path):
            o = self.offset[node]
            acc = (acc[0] + o[0], acc[1] + o[1])
            self.offset[node] = acc
            self.parent[node] = root
        return root, self.offset[path[0]] if path else (0, 0)

    def union(self, a, b, off):
        """Record that label ``b`` sits at ``offset(a) + off``."""
        ra, oa = self.find(a)
        rb, ob = self.find(b)
        if ra == rb:
            if (oa[0] + off[0] - ob[0], oa[1] + off[1] - ob[1]) != (0, 0):
                self.wraps.add(ra)
            return
        self.parent[rb] = ra
        self.offset[rb] = (oa[0] + off[0] - ob[0], oa[1] + off[1] - ob[1])
        if rb in self.wraps:
            self.wraps.add(ra)

    def wrapping(self, x) -> bool:
        return self.find(x)[0] in self.wraps


def _connection(labels: np.ndarray, seed, others):
    """Escape routes open for the component containing ``seed``."""
    label = labels[seed]
    if label == 0:
        return []
    uf = _OffsetUnionFind()
    for left, right, off in (
        (labels[:, :, -1], labels[:, :, 0], (1, 0)),
        (labels[:, -1, :], labels[:, 0, :], (0, 1)),
    ):
        both = (left > 0) & (right > 0)
        pairs = np.unique(np.column_stack([left[both], right[both]]), axis=0)
        for l1, l2 in pairs:
            uf.union(int(l1), int(l2), off)
    root = uf.find(int(label))[0]
    roots_of = lambda arr: {uf.find(int(v))[0] for v in np.unique(arr) if v}
    routes = []
    if root in roots_of(labels[-1]):
        routes.append("top")
    if root in roots_of(labels[0]):
        routes.append("plane")
    if uf.wrapping(int(label)):
        routes.append("neighbor")
    for other in others:
        if labels[other] and uf.find(int(labels[other]))[0] == root:
            routes.append("neighbor")
            break
    return routes


def _seed_index(grid: PseudoGrid, trap: TrapSpec, window: int = 2):
    k0, j0, i0 = grid.nearest_index(trap.position[:2], trap.z)
    best, best_val = (k0, j0, i0), np.inf
    for dk in range(-window, window + 1):
        k = k0 + dk
        if not 0 <= k < grid.shape[0]:
            continue
        for dj in range(-window, window + 1):
            for di in range(-window, window + 1):
                idx = (k, (j0 + dj) % grid.ny, (i0 + di) % grid.nx)
                if grid.psi[idx] < best_val:
                    best, best_val = idx, grid.psi[idx]
    return best


@dataclass
class DepthResult:
    tau: float
    route: str
    saddle: list | None
    resolved: bool


def trap_depth(grid: PseudoGrid, trap: TrapSpec, others=()) -> DepthResult:
    """Depth of ``trap`` in units of its ``Phi_hat``.

    The merge level is the lowest ``psi`` threshold at which the sublevel
    component holding the trap reaches the top of the grid, the electrode
    plane, another designed trap, or its own periodic image.  Components are
    labelled per threshold and joined across the periodic faces with an
    offset-tracking union-find; bisection over the sorted grid values gives
    the same level as an incremental sweep.
    """
    psi = grid.psi
    seed = _seed_index(grid, trap)
    other_seeds = [_seed_index(grid, o) for o in others]
    levels = np.unique(psi[psi >= psi[seed]])
    lo, hi = 0, len(levels) - 1
    routes_hi = _connection(ndimage.label(psi <= levels[hi], _FACE)[0], seed, other_seeds)
    if not routes_hi:
        return DepthResult(float("nan"), "none", None, False)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        labels = ndimage.label(psi <= levels[mid], _FACE)[0]
        if _connection(labels, seed, other_seeds):
            hi = mid
        else:
            lo = mid
    if _connection(ndimage.label(psi <= levels[lo], _FACE)[0], seed, other_seeds):
        hi = lo
    level = levels[hi]
    routes = _connection(ndimage.label(psi <= level, _FACE)[0], seed, other_seeds)
    saddle_idx = tuple(int(v) for v in np.argwhere(psi == level)[0])
    tau = trap.z**2 * (level - psi[seed])
    steps = max(abs(saddle_idx[0] - seed[0]),
                min(abs(saddle_idx[1] - seed[1]), grid.ny - abs(saddle_idx[1] - seed[1])),
                min(abs(saddle_idx[2] - seed[2]), grid.nx - abs(saddle_idx[2] - seed[2])))
    resolved = steps > 2
    if not resolved:
        log.warning("depth of trap %r is not resolved by the grid; refine it", trap.label)
    return DepthResult(float(tau), routes[0], grid.point(saddle_idx).tolist(), resolved)


# -- report ------------------------------------------------------------------------


@dataclass
class TrapEntry:
    label: str
    position: list
    kappa: float
    kappa_target: float | None
    field_residual: float
    hessian: list
    curvature_deviation: float | None
    depth: float
    escape: str
    saddle: list | None
    depth_resolved: bool
    physical: dict | None = None


@dataclass
class TrapReport:
    C: float
    traps: list
    minima: list
    warnings: list = field(default_factory=list)

    @property
    def spurious(self) -> list:
        return [m for m in self.minima if m.spurious]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spurious"] = [asdict(m) for m in self.spurious]
        return d


def analyze(
    basis: FourierBasis,
    a,
    traps,
    C: float | None = None,
    region: tuple[float, float] | None = None,
    resolution: tuple[int, int, int] = (96, 96, 128),
    physical: PhysicalParams | None = None,
) -> TrapReport:
    """Full landscape analysis of electrode ``a`` against its design ``traps``."""
    traps = list(traps)
    lattice = basis.lattice
    spectrum = basis.spectrum(a)
    warnings = []
    samples = [basis.sample(spectrum, t.cartesian(lattice)) for t in traps]
    if C is None and traps:
        C = fit_scale([s.hessian[0] for s in samples], [t.gamma for t in traps])
    z_max = max((t.z for t in traps), default=1.0)
    if region is None:
        region = default_region(lattice, z_max)
    grid = pseudopotential_grid(basis, a, region, resolution)
    minima = find_minima(grid, traps)
    if not minima:
        warnings.append("no pseudopotential minima found")
    entries = []
    for trap, sample in zip(traps, samples):
        hess = sample.hessian[0]
        target = C * trap.gamma if C else None
        scale = abs(C) * np.linalg.norm(trap.gamma) * trap.z if C else 1.0
        k_val = kappa_from_hessian(hess, trap.z)
        depth = trap_depth(grid, trap, [o for o in traps if o is not trap])
        if not depth.resolved:
            warnings.append(f"depth of trap {trap.label!r} not resolved")
        entries.append(
            TrapEntry(
                label=trap.label,
                position=list(trap.position),
                kappa=k_val,
                kappa_target=kappa(C, [trap])[0] if C else None,
                field_residual=float(np.linalg.norm(sample.gradient[0]) / scale),
                hessian=hess.tolist(),
                curvature_deviation=(
                    float(np.linalg.norm(hess - target) / np.linalg.norm(target)) if C else None
                ),
                depth=depth.tau,
                escape=depth.route,
                saddle=depth.saddle,
                depth_resolved=depth.resolved,
                physical=physical_units(k_val, trap.gamma, physical) if physical else None,
            )
        )
    spurious = [m for m in minima if m.spurious]
    if spurious:
        warnings.append(f"{len(spurious)} spurious minima found")
    return TrapReport(C=float(C) if C is not None else float("nan"), traps=entries,
                      minima=minima, warnings=warnings)
