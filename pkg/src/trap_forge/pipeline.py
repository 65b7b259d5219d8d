"""End-to-end design runs: solve, round, analyze, and spurious-site suppression."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .constraints import ExtraConstraint, assemble
from .fourier import FourierBasis
from .optimize import OptimizationResult, SolverOptions, round_rails, solve

log = logging.getLogger(__name__)

SUPPRESSION_MAGNITUDES = (1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0)


def rounding_report(basis: FourierBasis, result: OptimizationResult, traps) -> list[dict]:
    """Per-trap field residual and curvature deviation before and after rounding.

    Field residuals are ``|grad phi|`` in units of ``|C| * |gamma| * z``.
    """
    if result.rounded_a is None:
        round_rails(result)
    before = basis.spectrum(result.a)
    after = basis.spectrum(result.rounded_a)
    out = []
    for trap in traps:
        r = trap.cartesian(basis.lattice)
        scale = abs(result.C) * np.linalg.norm(trap.gamma) * trap.z
        s0 = basis.sample(before, r)
        s1 = basis.sample(after, r)
        target = result.C * trap.gamma
        out.append({
            "label": trap.label,
            "field_residual": float(np.linalg.norm(s0.gradient[0]) / scale),
            "field_residual_rounded": float(np.linalg.norm(s1.gradient[0]) / scale),
            "curvature_deviation_rounded": float(
                np.linalg.norm(s1.hessian[0] - target) / np.linalg.norm(target)
            ),
        })
    return out


def optimize(basis: FourierBasis, traps, extras=(), options: SolverOptions | None = None,
             threshold: float = 0.5) -> tuple[OptimizationResult, object]:
    """Assemble, solve and round; the rounding report is stored on the result."""
    system = assemble(basis, traps, extras)
    result = solve(system, options)
    round_rails(result, threshold)
    result.rounding = {"traps": rounding_report(basis, result, traps)}
    return result, system


def _spurious(basis, a, traps, region, resolution):
    grid = analysis.pseudopotential_grid(basis, a, region, resolution)
    return [m for m in analysis.find_minima(grid, traps) if m.spurious]


def _rms_field(basis, spectrum, z, shape=(48, 48)) -> float:
    comp = basis.slice_components(spectrum, z, shape, ("x", "y", "z"))
    return float(np.sqrt(np.mean(comp["x"] ** 2 + comp["y"] ** 2 + comp["z"] ** 2)))


@dataclass
class SuppressionOutcome:
    result: OptimizationResult
    extras: list
    spurious: list
    C_unconstrained: float
    history: list = field(default_factory=list)

    @property
    def reduction(self) -> float:
        return 1.0 - self.result.C / self.C_unconstrained


def _merge_sites(sites, extra_sites, tol=0.02):
    out = [tuple(s) for s in sites]
    for s in extra_sites:
        if all(np.hypot(*(((np.subtract(s, t) + 0.5) % 1.0) - 0.5)) > tol for t in out):
            out.append(tuple(s))
    return out


def _point_candidates(basis, spectrum, C, spurious, magnitudes):
    for mag in magnitudes:
        for sign in (1.0, -1.0):
            yield f"point {sign * mag:+g}", [
                ExtraConstraint((m.position[0], m.position[1], m.z),
                                sign * mag * _rms_field(basis, spectrum, m.z) / C)
                for m in spurious
            ]


def _line_candidates(basis, spectrum, C, sites, z_ref, z_top, lows, margins, n_heights):
    for lo in lows:
        heights = np.geomspace(lo * z_ref, z_top, n_heights)
        rms = [_rms_field(basis, spectrum, h) for h in heights]
        for margin in margins:
            for sign, relation in ((1.0, "at_least"), (-1.0, "at_most")):
                yield f"line {relation} {margin:g} from {lo:g}z", [
                    ExtraConstraint((u, v, float(h)), sign * margin * s / C, relation)
                    for (u, v) in sites for h, s in zip(heights, rms)
                ]


def suppress_spurious(
    basis: FourierBasis,
    traps,
    extras=(),
    options: SolverOptions | None = None,
    max_rounds: int = 4,
    magnitudes=SUPPRESSION_MAGNITUDES,
    region=None,
    resolution=(96, 96, 128),
    line_lows=(0.25, 0.5, 0.8),
    line_margins=(0.0, 0.01, 0.03, 0.1),
    line_heights: int = 12,
    threshold: float = 0.5,
) -> SuppressionOutcome:
    """Greedy removal of spurious field nulls with out-of-plane field constraints.

    Two candidate families are tried in every round.  Point candidates pin
    ``E_z = lam * C`` at each spurious site, with ``|lam|`` a multiple of the
    RMS field at the site's height divided by the current ``C``.  Line
    candidates keep ``E_z`` of one sign on a vertical segment through each
    site, from a fraction of the lowest site height up to the top of the
    analysis region.  A null on that axis needs ``E_z`` to change sign, so the
    line removes it without pinning a value; a small margin (again relative to
    the RMS field) stops the LP from parking ``E_z`` at exactly zero, which
    would leave a nearly field-free segment.

    From the second round on, every candidate is also tried on top of the
    caller's extras alone, so one bad early pick does not lock the search
    in.  Line candidates cover every site seen so far.  The candidate leaving
    the fewest spurious minima (then the largest ``C``) is kept; rounds stop
    when no candidate improves.
    """
    traps = list(traps)
    if region is None:
        region = analysis.default_region(basis.lattice, max(t.z for t in traps))
    user_extras = list(extras)
    extras = list(user_extras)
    result, _ = optimize(basis, traps, extras, options, threshold)
    C0 = result.C
    spurious = _spurious(basis, result.a, traps, region, resolution)
    history = [{"round": 0, "C": C0, "spurious": len(spurious), "candidate": None}]
    seen, z_ref = [], np.inf
    for rnd in range(1, max_rounds + 1):
        if not spurious:
            break
        spectrum = basis.spectrum(result.a)
        sites = _merge_sites([], [m.position for m in spurious])
        seen = _merge_sites(seen, sites)
        z_ref = min(z_ref, min(m.z for m in spurious))
        families = [
            _point_candidates(basis, spectrum, result.C, spurious, magnitudes),
            _line_candidates(basis, spectrum, result.C, seen, z_ref, region[1],
                             line_lows, line_margins, line_heights),
        ]
        best = None
        bases = [("", extras)]
        if len(extras) > len(user_extras):
            bases.append(("fresh ", user_extras))
        candidates = [(prefix + name, base + added)
                      for family in families for name, added in family
                      for prefix, base in bases]
        for name, trial in candidates:
            try:
                cand, _ = optimize(basis, traps, trial, options, threshold)
            except Exception as exc:  # infeasible candidates are simply skipped
                log.debug("suppression candidate %s failed: %s", name, exc)
                continue
            if cand.C <= 0:
                continue
            left = _spurious(basis, cand.a, traps, region, resolution)
            key = (len(left), -cand.C)
            if best is None or key < best[0]:
                best = (key, cand, trial, left, name)
        if best is None or best[0][0] >= len(spurious):
            log.info("suppression round %d found no improvement", rnd)
            break
        _, result, extras, spurious, name = best
        history.append({"round": rnd, "C": result.C, "spurious": len(spurious), "candidate": name})
        log.info("suppression round %d (%s): C=%.6g, %d spurious left",
                 rnd, name, result.C, len(spurious))
    return SuppressionOutcome(result, extras, spurious, C0, history)
