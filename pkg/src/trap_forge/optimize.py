"""Linear-programming relaxation for the electrode amplitudes.

Variables are the patch amplitudes ``a`` (boxed to ``[0, 1]``) and the free
scale ``C``; the program maximizes ``C`` subject to ``A a - C b = 0``.  The
all-ones electrode is field free, so ``a -> 1 - a`` maps any solution to one
with ``-C`` and the maximum of ``C`` is also the maximum of ``|C|``.
A vertex solution leaves at most as many amplitudes strictly inside the box
as there are equality rows.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .constraints import ConstraintSystem

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class SolverOptions:
    method: str = "highs-ds"
    equality_tol: float = 1e-8
    rail_tol: float = 1e-7
    gap_tol: float = 1e-9
    max_iter: int | None = None
    require_basic: bool = True
    time_limit: float | None = None


@dataclass
class OptimizationResult:
    a: np.ndarray
    C: float
    inhom: np.ndarray
    n_zero: int
    n_one: int
    n_interior: int
    residual: float
    gap: float
    basic: bool
    runtime: float
    rounded_a: np.ndarray | None = None
    C_rounded: float | None = None
    rounding: dict = field(default_factory=dict)
    n_equalities: int = 0
    n_active: int = 0

    @property
    def interior_bound(self) -> int:
        """Vertex bound on interior amplitudes: equality rows plus tight inequalities."""
        return self.n_equalities + self.n_active

    @property
    def interior_mask(self) -> np.ndarray:
        return (self.a > self._rail_tol) & (self.a < 1 - self._rail_tol)

    _rail_tol: float = 1e-7


def inhomogeneous_solution(A, b, rcond: float = 1e-10) -> tuple[np.ndarray, int]:
    """Minimum-norm solution ``g = A^+ b`` and the effective rank of ``A``.

    Singular values below ``rcond * sigma_max`` are discarded with a warning.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rcond * s[0] if s.size else s.astype(bool)
    rank = int(np.sum(keep))
    if rank < min(A.shape):
        log.warning("constraint matrix is rank deficient (%d of %d rows independent)", rank, A.shape[0])
    g = Vt[keep].T @ ((U[:, keep].T @ b) / s[keep])
    return g, rank


def railing_counts(a, rail_tol: float = 1e-7) -> tuple[int, int, int]:
    a = np.asarray(a)
    zero = int(np.sum(a <= rail_tol))
    one = int(np.sum(a >= 1 - rail_tol))
    return zero, one, len(a) - zero - one


def _polish(system: ConstraintSystem, a: np.ndarray, C: float, rail_tol: float):
    """Re-solve the interior amplitudes exactly, keeping railed ones fixed."""
    interior = (a > rail_tol) & (a < 1 - rail_tol)
    if not np.any(interior) or system.ineq_rows.shape[0]:
        return a, C
    railed = np.where(a >= 1 - rail_tol, 1.0, 0.0)
    M = np.column_stack([system.A[:, interior], -system.b])
    rhs = -system.A[:, ~interior] @ railed[~interior]
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    cand = a.copy()
    cand[~interior] = railed[~interior]
    cand[interior] = sol[:-1]
    if np.any(cand < -rail_tol) or np.any(cand > 1 + rail_tol):
        return a, C
    cand = np.clip(cand, 0.0, 1.0)
    if system.residual(cand, sol[-1]) < system.residual(a, C):
        return cand, float(sol[-1])
    return a, C


def solve(system: ConstraintSystem, options: SolverOptions | None = None) -> OptimizationResult:
    """Maximize ``C`` over the relaxed box ``0 <= a <= 1``."""
    options = options or SolverOptions()
    if not np.any(system.b):
        raise OptimizationError("homogeneous constraint system: C is undefined")
    t0 = time.perf_counter()
    N = system.N
    # rows are rescaled to unit max-norm; this leaves the feasible set unchanged
    A_eq = np.column_stack([system.A, -system.b])
    scale = np.max(np.abs(A_eq), axis=1)
    scale[scale == 0] = 1.0
    A_eq = A_eq / scale[:, None]

    A_ub, b_ub = None, None
    if system.ineq_rows.shape[0]:
        rows = []
        for row, rel, lam in zip(system.ineq_rows, system.ineq_relations, system.ineq_lams):
            full = np.append(row, -lam)
            full = full / max(np.max(np.abs(full)), 1e-300)
            rows.append(-full if rel == "at_least" else full)
        A_ub = np.vstack(rows)
        b_ub = np.zeros(len(rows))

    c = np.zeros(N + 1)
    c[-1] = -1.0
    bounds = [(0.0, 1.0)] * N + [(None, None)]
    highs_opts = {
        "primal_feasibility_tolerance": options.equality_tol * 1e-2,
        "dual_feasibility_tolerance": options.gap_tol,
        "presolve": True,
    }
    if options.max_iter is not None:
        highs_opts["maxiter"] = options.max_iter
    if options.time_limit is not None:
        highs_opts["time_limit"] = options.time_limit
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.zeros(len(A_eq)),
        bounds=bounds, method=options.method, options=highs_opts,
    )
    if res.status == 2:
        raise OptimizationError("constraint system is infeasible", {"message": res.message})
    if res.status == 3:
        raise OptimizationError("linear program reported unbounded (internal error)", {"message": res.message})
    if res.status != 0:
        raise OptimizationError(f"solver failed: {res.message}", {"status": int(res.status)})

    a = np.clip(res.x[:N], 0.0, 1.0)
    C = float(res.x[N])
    if C <= options.equality_tol:
        raise OptimizationError(
            "constraint system is infeasible: no electrode reaches a positive scale C",
            {"C": C, "violations": _violations(system, A_eq, A_ub, N)},
        )
    basic = options.method in ("highs-ds", "highs-ipm") or options.method == "highs"
    if options.method == "highs-ds":
        a, C = _polish(system, a, C, options.rail_tol)

    primal = -C
    dual = float(np.sum(res.upper.marginals[:N]))
    if A_ub is not None:
        dual += float(np.dot(res.ineqlin.marginals, b_ub))
    gap = abs(primal - dual) / max(1.0, abs(primal))

    g, _ = inhomogeneous_solution(system.A, system.b)
    zero, one, interior = railing_counts(a, options.rail_tol)
    residual = system.residual(a, C)
    bound = options.equality_tol * (1 + abs(C) * np.max(np.abs(system.b)))
    if residual > bound:
        log.warning("equality residual %.3g exceeds tolerance %.3g", residual, bound)
    result = OptimizationResult(
        a=a, C=C, inhom=g, n_zero=zero, n_one=one, n_interior=interior,
        residual=residual, gap=gap, basic=basic and options.method != "highs-ipm",
        runtime=time.perf_counter() - t0,
    )
    result._rail_tol = options.rail_tol
    result.n_equalities = system.n_equalities
    if A_ub is not None:
        slack = A_ub @ np.append(a, C)
        result.n_active = int(np.sum(slack > -options.equality_tol))
    log.info(
        "LP solved: C=%.6g, interior=%d/%d, residual=%.2g, gap=%.2g, %.2fs",
        C, interior, N, residual, gap, result.runtime,
    )
    return result


def _violations(system, A_eq, A_ub, N, top=10):
    """Elastic LP at a small positive ``C``: rows needing slack, largest first.

    ``C`` is fixed where the minimum-norm field solution ``C g`` spans half
    the amplitude box.  Works on the row-scaled matrices, so slacks are
    comparable across rows.
    """
    g, _ = inhomogeneous_solution(system.A, system.b)
    C_ref = 0.5 / max(float(np.max(np.abs(g))), 1e-300)
    n_eq = A_eq.shape[0]
    n_ub = 0 if A_ub is None else A_ub.shape[0]
    # variables: a (N), C, s_plus (n_eq), s_minus (n_eq), s_ub (n_ub)
    nv = N + 1 + 2 * n_eq + n_ub
    c = np.zeros(nv)
    c[N + 1:] = 1.0
    eq = np.hstack([A_eq, np.eye(n_eq), -np.eye(n_eq), np.zeros((n_eq, n_ub))])
    bounds = [(0.0, 1.0)] * N + [(C_ref, C_ref)] + [(0.0, None)] * (2 * n_eq + n_ub)
    kw = {}
    if n_ub:
        kw = {"A_ub": np.hstack([A_ub, np.zeros((n_ub, 2 * n_eq)), -np.eye(n_ub)]),
              "b_ub": np.zeros(n_ub)}
    res = linprog(c, A_eq=eq, b_eq=np.zeros(n_eq), bounds=bounds, method="highs", **kw)
    if res.status != 0:
        return []
    s = res.x[N + 1:]
    slack = np.concatenate([s[:n_eq] + s[n_eq:2 * n_eq], s[2 * n_eq:]])
    labels = [f"{kind}:{comp}" for kind, comp in system.row_kinds]
    labels += [f"extra:{e.component} {e.relation}" for e in system.extras
               if e.relation != "equal"]
    order = np.argsort(slack)[::-1]
    return [{"row": int(i), "kind": labels[i] if i < len(labels) else "?",
             "slack": float(slack[i])}
            for i in order[:top] if slack[i] > 1e-12]


def scale_from_amplitudes(a, g) -> float:
    """Common curvature scale implied by ``a`` through the projection onto ``g``."""
    return float(np.dot(a, g) / np.dot(g, g))


def round_rails(result: OptimizationResult, threshold: float = 0.5):
    """Round amplitudes to a binary electrode; ties go to ground."""
    rounded = np.where(result.a > threshold, 1.0, 0.0)
    C_rounded = scale_from_amplitudes(rounded, result.inhom)
    if result.n_interior == 0:
        C_rounded = result.C
    result.rounded_a = rounded
    result.C_rounded = C_rounded
    return rounded, C_rounded
