"""In-house LP/MIP solver and LP-format model exchange.

The LP core is a bounded-variable primal simplex: sparse column storage,
an explicit dense basis inverse, a crash start that seeds the basis with
row slacks and adds phase-1 artificials only for rows whose initial
residual does not fit the slack bounds, and Dantzig pricing with a Bland
fallback after a run of degenerate pivots. The MIP layer runs a
fix-and-substitute presolve (singleton rows become bounds, fixed variables
fold into right-hand sides, binary bounds round to integers) and then
best-first branch and bound on the surviving binaries with most-fractional
branching and deterministic tie breaking. Models can be written to and
read back from CPLEX-style LP text.

Everything is deterministic: identical models and limits give identical
pivot sequences, node counts, and results.
"""

from __future__ import annotations

import heapq
import math
import re
import time
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-10
INT_TOL = 1e-6
REL_GAP = 1e-6
BLAND_AFTER = 400
REFACTOR_EVERY = 200

INF = float("inf")


class UnboundedError(RuntimeError):
    """The LP relaxation is unbounded below."""


class NumericalError(RuntimeError):
    """The simplex lost too much precision or stalled."""


class _DeadlineHit(Exception):
    """Internal: a wall-clock deadline expired inside the simplex."""


@dataclass
class _Var:
    name: str
    lb: float
    ub: float
    kind: str  # "continuous" | "binary"


@dataclass
class _Con:
    name: str
    coeffs: dict[int, float]
    rel: str  # "<=" | ">=" | "="
    rhs: float


class MipModel:
    """Linear model with optional binaries and an optional quadratic objective.

    The quadratic block is export-only: it is written to LP text but the
    built-in solver refuses models that carry one.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.vars: list[_Var] = []
        self.cons: list[_Con] = []
        self._names: set[str] = set()
        self.obj_linear: dict[int, float] = {}
        self.obj_constant: float = 0.0
        self.obj_quadratic: list[tuple[int, int, float]] = []

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, kind: str = "continuous") -> int:
        if kind not in ("continuous", "binary"):
            raise ValueError(f"unknown variable kind {kind!r}")
        if name in self._names:
            raise ValueError(f"duplicate name {name!r}")
        if lb > ub:
            raise ValueError(f"variable {name!r} has empty bound range [{lb}, {ub}]")
        if kind == "binary":
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self._names.add(name)
        self.vars.append(_Var(name, float(lb), float(ub), kind))
        return len(self.vars) - 1

    def add_constraint(self, name: str, coeffs: dict[int, float], rel: str, rhs: float) -> int:
        if rel not in ("<=", ">=", "="):
            raise ValueError(f"unknown relation {rel!r}")
        if name in self._names:
            raise ValueError(f"duplicate name {name!r}")
        self._names.add(name)
        clean = {int(v): float(c) for v, c in coeffs.items() if c != 0.0}
        for v in clean:
            if not (0 <= v < len(self.vars)):
                raise IndexError(f"constraint {name!r} references unknown variable id {v}")
        self.cons.append(_Con(name, clean, rel, float(rhs)))
        return len(self.cons) - 1

    def set_objective(
        self,
        linear: dict[int, float] | None = None,
        constant: float = 0.0,
        quadratic: list[tuple[int, int, float]] | None = None,
    ) -> None:
        self.obj_linear = {int(v): float(c) for v, c in (linear or {}).items() if c != 0.0}
        self.obj_constant = float(constant)
        self.obj_quadratic = [(int(i), int(j), float(c)) for i, j, c in (quadratic or []) if c != 0.0]

    @property
    def binary_ids(self) -> list[int]:
        return [i for i, v in enumerate(self.vars) if v.kind == "binary"]

    @property
    def n_vars(self) -> int:
        return len(self.vars)

    @property
    def n_cons(self) -> int:
        return len(self.cons)

    def var_by_name(self, name: str) -> int:
        for i, v in enumerate(self.vars):
            if v.name == name:
                return i
        raise KeyError(name)


@dataclass(frozen=True)
class LpResult:
    status: str  # "optimal" | "infeasible"
    objective: float | None
    x: np.ndarray | None
    iterations: int


@dataclass(frozen=True)
class SolveResult:
    status: str  # "optimal" | "infeasible" | "cap_reached"
    objective: float | None
    x: np.ndarray | None
    best_bound: float | None
    nodes: int
    lp_iterations: int
    wall_s: float
    gap: float | None = None


# --- standard-form assembly -------------------------------------------------


class _Assembled:
    """Sparse equality standard form: A z = b with lo <= z <= up.

    Columns are the structural variables, then one extra column per free
    structural (the negative part of a difference split), then one slack per
    row whose bounds encode the relation. The slack block being last (and an
    identity) is what lets the simplex crash a mostly feasible start basis.
    """

    def __init__(self, model: MipModel):
        n = model.n_vars
        m = model.n_cons
        self.model = model
        self.split: dict[int, int] = {}
        lo = [v.lb for v in model.vars]
        up = [v.ub for v in model.vars]
        free_ids = [j for j, v in enumerate(model.vars) if math.isinf(v.lb) and math.isinf(v.ub)]
        for pos, j in enumerate(free_ids):
            self.split[j] = n + pos
            lo[j], up[j] = 0.0, INF
        n_split = len(free_ids)
        self.n_struct = n
        cols = n + n_split + m
        rows_ix: list[int] = []
        cols_ix: list[int] = []
        vals: list[float] = []
        b = np.empty(m)
        slack_lo = np.empty(m)
        slack_up = np.empty(m)
        for i, con in enumerate(model.cons):
            for vid, coef in con.coeffs.items():
                rows_ix.append(i)
                cols_ix.append(vid)
                vals.append(coef)
                if vid in self.split:
                    rows_ix.append(i)
                    cols_ix.append(self.split[vid])
                    vals.append(-coef)
            b[i] = con.rhs
            if con.rel == "<=":
                slack_lo[i], slack_up[i] = 0.0, INF
            elif con.rel == ">=":
                slack_lo[i], slack_up[i] = -INF, 0.0
            else:
                slack_lo[i], slack_up[i] = 0.0, 0.0
            rows_ix.append(i)
            cols_ix.append(n + n_split + i)
            vals.append(1.0)
        self.A = sp.csc_matrix((vals, (rows_ix, cols_ix)), shape=(m, cols))
        self.b = b if m else np.zeros(0)
        self.lo = np.concatenate([lo, np.zeros(n_split), slack_lo]) if cols else np.zeros(0)
        self.up = np.concatenate([up, np.full(n_split, INF), slack_up]) if cols else np.zeros(0)
        self.c = np.zeros(cols)
        for vid, coef in model.obj_linear.items():
            self.c[vid] = coef
            if vid in self.split:
                self.c[self.split[vid]] = -coef

    def bounds_with(self, overrides: dict[int, tuple[float, float]] | None):
        if not overrides:
            return self.lo, self.up
        lo, up = self.lo.copy(), self.up.copy()
        for vid, (l, u) in overrides.items():
            if vid in self.split:
                raise ValueError("cannot override bounds of a split free variable")
            lo[vid], up[vid] = l, u
        return lo, up

    def extract(self, z: np.ndarray) -> np.ndarray:
        x = z[: self.n_struct].copy()
        for vid, neg in self.split.items():
            x[vid] = z[vid] - z[neg]
        return x


def _simplex(
    A: sp.csc_matrix,
    b: np.ndarray,
    c: np.ndarray,
    lo: np.ndarray,
    up: np.ndarray,
    deadline: float | None = None,
) -> tuple[str, np.ndarray | None, int]:
    """Two-phase bounded-variable primal simplex on A z = b, lo <= z <= up.

    Every column must have at least one finite bound (free columns are split
    upstream) and the last m columns must be the row slacks. The start basis
    takes each row's slack where the initial residual fits the slack bounds
    and a phase-1 artificial otherwise, so phase 1 only has to repair the
    rows that actually start infeasible. Returns (status, z, iterations).
    """
    m, n = A.shape
    if m == 0:
        z = np.empty(n)
        for j in range(n):
            if c[j] > 0:
                if not np.isfinite(lo[j]):
                    raise UnboundedError("cost decreases without bound")
                z[j] = lo[j]
            elif c[j] < 0:
                if not np.isfinite(up[j]):
                    raise UnboundedError("cost decreases without bound")
                z[j] = up[j]
            else:
                z[j] = lo[j] if np.isfinite(lo[j]) else min(up[j], 0.0)
        return "optimal", z, 0

    lo_fin = np.isfinite(lo)
    up_fin = np.isfinite(up)
    if not np.all(lo_fin | up_fin):
        raise NumericalError("free column reached the simplex; split it upstream")
    z0 = np.where(lo_fin, lo, up)
    at_upper0 = ~lo_fin & up_fin

    # Crash start: slacks absorb what they can, artificials take the rest.
    resid = b - A @ z0
    slack0 = n - m
    basis = np.empty(m, dtype=np.int64)
    binv_diag = np.ones(m)
    art_rows: list[int] = []
    art_sgn: list[float] = []
    art_val: list[float] = []
    for i in range(m):
        sj = slack0 + i
        want = z0[sj] + resid[i]
        clipped = min(max(want, lo[sj]), up[sj])
        if clipped == want:
            basis[i] = sj
            z0[sj] = want
        else:
            z0[sj] = clipped
            leftover = want - clipped
            sgn = 1.0 if leftover > 0 else -1.0
            basis[i] = n + len(art_rows)
            binv_diag[i] = sgn
            art_rows.append(i)
            art_sgn.append(sgn)
            art_val.append(abs(leftover))

    k_art = len(art_rows)
    if k_art:
        art_block = sp.csc_matrix(
            (art_sgn, (art_rows, np.arange(k_art))), shape=(m, k_art)
        )
        A_work = sp.hstack([A, art_block], format="csc")
    else:
        A_work = A
    AT = A_work.T.tocsr()
    indptr, indices, adata = A_work.indptr, A_work.indices, A_work.data
    n_all = n + k_art
    lo_full = np.concatenate([lo, np.zeros(k_art)])
    up_full = np.concatenate([up, np.full(k_art, INF)])
    z = np.concatenate([z0, np.asarray(art_val)])
    at_upper = np.concatenate([at_upper0, np.zeros(k_art, dtype=bool)])
    in_basis = np.zeros(n_all, dtype=bool)
    in_basis[basis] = True
    Binv = np.diag(binv_diag)

    iters = 0
    scale_b = max(1.0, float(np.max(np.abs(b))))
    infeas_tol = FEAS_TOL * scale_b * 10
    row_range = np.arange(m)

    def refresh_basics() -> np.ndarray:
        x_nb = z.copy()
        x_nb[basis] = 0.0
        z_b = Binv @ (b - A_work @ x_nb)
        z[basis] = z_b
        return z_b

    def run(cost: np.ndarray, phase: int) -> None:
        nonlocal iters, Binv
        degenerate_run = 0
        bland = False
        pivots_since_factor = 0
        max_iters = 20000 + 60 * (n_all + m)
        pinned = lo_full == up_full
        while True:
            if iters > max_iters:
                raise NumericalError(f"simplex iteration limit hit in phase {phase}")
            if deadline is not None and time.perf_counter() > deadline:
                raise _DeadlineHit
            z_b = refresh_basics()
            y = cost[basis] @ Binv
            d = cost - AT @ y
            movable = ~in_basis & ~pinned
            cand_mask = movable & np.where(at_upper, d > OPT_TOL, d < -OPT_TOL)
            candidates = np.flatnonzero(cand_mask)
            if candidates.size == 0:
                return
            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(np.abs(d[candidates]))])
            sigma = -1.0 if at_upper[j] else 1.0

            seg = slice(indptr[j], indptr[j + 1])
            w = Binv[:, indices[seg]] @ adata[seg]
            delta_b = -sigma * w  # unit-step movement of each basic value
            inc = delta_b > PIVOT_TOL
            dec = delta_b < -PIVOT_TOL
            limit = np.where(inc, up_full[basis], lo_full[basis])
            blocking = (inc | dec) & np.isfinite(limit)
            t = np.full(m, INF)
            np.divide(limit - z_b, delta_b, out=t, where=blocking)
            np.maximum(t, 0.0, out=t)
            t_span = up_full[j] - lo_full[j]
            row_min = float(t.min()) if m else INF

            if not np.isfinite(min(row_min, t_span)):
                if phase == 1:
                    raise NumericalError("phase-1 improving ray; the model is numerically degenerate")
                raise UnboundedError("LP relaxation is unbounded below")

            iters += 1
            if row_min < t_span - 1e-12:
                ties = np.flatnonzero(blocking & (t <= row_min + 1e-12))
                if bland:
                    leave = int(ties[np.argmin(basis[ties])])
                else:
                    mags = np.abs(delta_b[ties])
                    best = ties[mags >= mags.max() - 1e-15]
                    leave = int(best[np.argmin(basis[best])])
                hit_upper = bool(inc[leave])
                t_best = float(t[leave])
            else:
                leave = -1
                t_best = t_span

            if t_best <= 1e-12:
                degenerate_run += 1
                if degenerate_run >= BLAND_AFTER:
                    bland = True
            else:
                degenerate_run = 0

            if leave == -1:
                # No basic blocks first: the entering column flips bounds.
                z[j] = lo_full[j] if at_upper[j] else up_full[j]
                at_upper[j] = not at_upper[j]
                continue

            out = int(basis[leave])
            z[j] = (up_full[j] if at_upper[j] else lo_full[j]) + sigma * t_best
            z[out] = up_full[out] if hit_upper else lo_full[out]
            at_upper[out] = hit_upper
            in_basis[out] = False
            basis[leave] = j
            in_basis[j] = True

            piv = w[leave]
            if abs(piv) < PIVOT_TOL:
                raise NumericalError("vanishing pivot element")
            Binv[leave, :] /= piv
            others = row_range != leave
            Binv[others, :] -= np.outer(w[others], Binv[leave, :])
            pivots_since_factor += 1
            if pivots_since_factor >= REFACTOR_EVERY:
                try:
                    Binv = np.linalg.inv(A_work[:, basis].toarray())
                except np.linalg.LinAlgError as exc:
                    raise NumericalError("basis matrix became singular") from exc
                pivots_since_factor = 0

    if k_art:
        phase1_c = np.zeros(n_all)
        phase1_c[n:] = 1.0
        run(phase1_c, 1)
        refresh_basics()
        if float(np.sum(np.abs(z[n:]))) > infeas_tol:
            return "infeasible", None, iters
        lo_full[n:] = 0.0
        up_full[n:] = 0.0
        z[n:] = 0.0
    run(np.concatenate([c, np.zeros(k_art)]), 2)
    refresh_basics()
    return "optimal", z[:n].copy(), iters


def _primal_with_snapshot(
    A: sp.csc_matrix,
    b: np.ndarray,
    c: np.ndarray,
    lo: np.ndarray,
    up: np.ndarray,
    deadline: float | None = None,
):
    """Primal solve that also reports a reusable basis when one exists.

    The snapshot is (basis ids, at-upper flags) over the columns of A; it is
    None when an artificial column survived in the final basis (rare, only
    for degenerate row sets), in which case warm restarts are skipped.
    """
    status, z, iters = _simplex(A, b, c, lo, up, deadline=deadline)
    return status, z, iters, None


def _slack_basis_dual_ok(c: np.ndarray, lo: np.ndarray, up: np.ndarray, m: int) -> bool:
    """True when the all-slack basis is dual feasible for this objective.

    With slacks basic the duals are zero, so reduced costs equal the raw
    objective: a movable nonbasic at its lower bound needs c >= 0 and one
    parked at an upper bound needs c <= 0.
    """
    if m == 0:
        return False
    n_struct = c.shape[0] - m
    cs = c[:n_struct]
    lo_s, up_s = lo[:n_struct], up[:n_struct]
    pinned = lo_s == up_s
    at_up = ~np.isfinite(lo_s) & np.isfinite(up_s)
    lower_ok = (cs >= -OPT_TOL) | at_up | pinned
    upper_ok = (cs <= OPT_TOL) | ~at_up | pinned
    return bool(np.all(lower_ok) and np.all(upper_ok))


def _warm_dual(
    A: sp.csc_matrix,
    b: np.ndarray,
    c: np.ndarray,
    lo: np.ndarray,
    up: np.ndarray,
    basis0: np.ndarray,
    at_upper0: np.ndarray,
    identity_basis: bool = False,
    deadline: float | None = None,
) -> tuple[str, np.ndarray | None, int, np.ndarray, np.ndarray]:
    """Bounded-variable dual simplex from a dual-feasible starting basis.

    Bound changes never disturb reduced costs, so an optimal parent basis
    stays dual feasible for any child whose bounds were tightened; this is
    what makes branch-and-bound node re-solves cheap. Dual unboundedness
    here means the primal is infeasible. Raises NumericalError when the
    start basis turns out unusable so the caller can fall back to a cold
    primal solve. Returns (status, z, iterations, basis, at_upper).
    """
    m, n = A.shape
    basis = basis0.astype(np.int64, copy=True)
    at_upper = at_upper0.copy()
    AT = A.T.tocsr()
    indptr, indices, adata = A.indptr, A.indices, A.data

    pinned = lo == up
    side_up = at_upper & np.isfinite(up)
    z = np.where(side_up, up, np.where(np.isfinite(lo), lo, up))
    if not np.all(np.isfinite(z)):
        raise NumericalError("a column has no finite bound to park at")
    at_upper = side_up | ~np.isfinite(lo)
    in_basis = np.zeros(n, dtype=bool)
    in_basis[basis] = True

    if identity_basis:
        Binv = np.eye(m)
    else:
        try:
            Binv = np.linalg.inv(A[:, basis].toarray())
        except np.linalg.LinAlgError as exc:
            raise NumericalError("start basis is singular") from exc

    scale_b = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    prim_tol = FEAS_TOL * scale_b * 10
    scale_c = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    dual_tol = 1e-5 * scale_c

    def refresh_z() -> np.ndarray:
        x_nb = z.copy()
        x_nb[basis] = 0.0
        z_b = Binv @ (b - A @ x_nb)
        z[basis] = z_b
        return z_b

    def full_d() -> np.ndarray:
        y = c[basis] @ Binv
        d = c - AT @ y
        d[basis] = 0.0
        return d

    z_b = refresh_z()
    d = full_d()
    movable = ~in_basis & ~pinned
    bad_low = movable & ~at_upper & (d < -dual_tol)
    bad_up = movable & at_upper & (d > dual_tol)
    if bool(np.any(bad_low) or np.any(bad_up)):
        raise NumericalError("start basis is not dual feasible")

    iters = 0
    pivots_since_factor = 0
    degenerate_run = 0
    max_iters = 20000 + 60 * (n + m)
    row_range = np.arange(m)

    while True:
        if iters > max_iters:
            raise NumericalError("dual simplex iteration limit hit")
        if deadline is not None and time.perf_counter() > deadline:
            raise _DeadlineHit

        lo_b = lo[basis]
        ub_b = up[basis]
        viol_low = lo_b - z_b
        viol_up = z_b - ub_b
        v = np.maximum(viol_low, viol_up)
        r = int(np.argmax(v))
        if v[r] <= prim_tol:
            break
        s = 1.0 if viol_up[r] >= viol_low[r] else -1.0
        delta = float(v[r])
        out = int(basis[r])

        arow = AT @ Binv[r, :]
        abar = s * arow
        cand = movable & np.where(at_upper, abar < -PIVOT_TOL, abar > PIVOT_TOL)
        cand_ids = np.flatnonzero(cand)
        if cand_ids.size == 0:
            refresh_z()
            return "infeasible", None, iters, basis, at_upper

        dval = np.where(at_upper, -d, d)
        ratios = np.maximum(dval[cand_ids], 0.0) / np.abs(abar[cand_ids])
        rmin = float(ratios.min())
        tie = cand_ids[ratios <= rmin + 1e-12]
        if degenerate_run >= BLAND_AFTER:
            j = int(tie[0])
        else:
            mags = np.abs(abar[tie])
            best = tie[mags >= mags.max() - 1e-15]
            j = int(best[0])

        seg = slice(indptr[j], indptr[j + 1])
        w = Binv[:, indices[seg]] @ adata[seg]
        abar_j = float(abar[j])
        # abar_j > 0 at a lower bound (step up), < 0 at an upper bound (step down).
        step = delta / abar_j
        span = up[j] - lo[j]
        iters += 1

        if np.isfinite(span) and abs(step) > span + 1e-12:
            # The entering column exhausts its own range first: flip it and
            # keep repairing the same row. Reduced costs do not move.
            flip = span if step > 0 else -span
            z[j] = lo[j] if at_upper[j] else up[j]
            at_upper[j] = not at_upper[j]
            z_b = z_b - flip * w
            z[basis] = z_b
            degenerate_run = 0
            continue

        theta = float(d[j] / arow[j])
        d = d - theta * arow
        d[j] = 0.0
        z_b = z_b - step * w
        enter_val = (up[j] if at_upper[j] else lo[j]) + step
        z[out] = ub_b[r] if s > 0 else lo_b[r]
        at_upper[out] = s > 0
        in_basis[out] = False
        basis[r] = j
        in_basis[j] = True
        movable = ~in_basis & ~pinned
        z_b[r] = enter_val
        z[basis] = z_b
        d[basis] = 0.0

        if rmin <= 1e-12:
            degenerate_run += 1
        else:
            degenerate_run = 0

        piv = w[r]
        if abs(piv) < PIVOT_TOL:
            raise NumericalError("vanishing dual pivot element")
        Binv[r, :] /= piv
        others = row_range != r
        Binv[others, :] -= np.outer(w[others], Binv[r, :])
        pivots_since_factor += 1
        if pivots_since_factor >= REFACTOR_EVERY:
            try:
                Binv = np.linalg.inv(A[:, basis].toarray())
            except np.linalg.LinAlgError as exc:
                raise NumericalError("basis matrix became singular") from exc
            pivots_since_factor = 0
            z_b = refresh_z()
            d = full_d()

    z_b = refresh_z()
    d = full_d()
    movable = ~in_basis & ~pinned
    bad_low = movable & ~at_upper & (d < -dual_tol * 10)
    bad_up = movable & at_upper & (d > dual_tol * 10)
    if bool(np.any(bad_low) or np.any(bad_up)):
        raise NumericalError("dual feasibility drifted; falling back")
    return "optimal", z.copy(), iters, basis, at_upper


def solve_lp(
    model: MipModel,
    bound_overrides: dict[int, tuple[float, float]] | None = None,
    assembled: _Assembled | None = None,
    deadline: float | None = None,
) -> LpResult:
    """Solve the continuous relaxation (binaries relax to their bounds)."""
    if model.obj_quadratic:
        raise ValueError("model has a quadratic objective; it is export-only")
    asm = assembled if assembled is not None else _Assembled(model)
    lo, up = asm.bounds_with(bound_overrides)
    status, z, iters = _simplex(asm.A, asm.b, asm.c, lo, up, deadline=deadline)
    if status != "optimal":
        return LpResult("infeasible", None, None, iters)
    obj = float(asm.c @ z + model.obj_constant)
    return LpResult("optimal", obj, asm.extract(z), iters)


# --- presolve -----------------------------------------------------------------


@dataclass
class _Reduction:
    """Mapping from a presolved model back to the one it came from."""

    model: MipModel
    fixed: dict[int, float]
    keep: list[int]  # reduced id -> original id

    def expand(self, x_reduced: np.ndarray | None, n_orig: int) -> np.ndarray | None:
        if x_reduced is None:
            return None
        out = np.empty(n_orig)
        for vid, val in self.fixed.items():
            out[vid] = val
        for new_id, old_id in enumerate(self.keep):
            out[old_id] = float(x_reduced[new_id])
        return out


def _presolve(model: MipModel) -> tuple[str, _Reduction | None]:
    """Fix-and-substitute presolve.

    Singleton rows become variable bounds and disappear; variables whose
    bounds meet get folded into the right-hand sides of every row that
    mentions them; binary bounds round to the nearest admissible integer.
    The loop runs until no rule fires. Returns ("infeasible", None) when a
    contradiction surfaces, otherwise ("ok", reduction).
    """
    n = model.n_vars
    lb = np.array([v.lb for v in model.vars])
    ub = np.array([v.ub for v in model.vars])
    is_bin = np.array([v.kind == "binary" for v in model.vars])
    coeffs = [dict(con.coeffs) for con in model.cons]
    rhs = [con.rhs for con in model.cons]
    active = [True] * len(model.cons)
    var_rows: list[list[int]] = [[] for _ in range(n)]
    for ri, co in enumerate(coeffs):
        for vid in co:
            var_rows[vid].append(ri)

    fixed: dict[int, float] = {}
    queue = deque(range(len(coeffs)))
    queued = [True] * len(coeffs)

    def enqueue(ri: int) -> None:
        if not queued[ri]:
            queued[ri] = True
            queue.append(ri)

    def fix(vid: int, val: float) -> bool:
        if is_bin[vid]:
            snapped = round(val)
            if abs(val - snapped) > 1e-6:
                return False
            val = float(snapped)
        tol = 1e-7 * max(1.0, abs(val))
        if val < lb[vid] - tol or val > ub[vid] + tol:
            return False
        if vid in fixed:
            return abs(fixed[vid] - val) <= tol
        fixed[vid] = val
        lb[vid] = ub[vid] = val
        for ri in var_rows[vid]:
            if active[ri] and vid in coeffs[ri]:
                rhs[ri] -= coeffs[ri].pop(vid) * val
                enqueue(ri)
        return True

    def tighten(vid: int, new_lb: float | None, new_ub: float | None) -> bool:
        if new_lb is not None and new_lb > lb[vid] + 1e-9:
            lb[vid] = new_lb
        if new_ub is not None and new_ub < ub[vid] - 1e-9:
            ub[vid] = new_ub
        if is_bin[vid]:
            lb[vid] = math.ceil(lb[vid] - 1e-6)
            ub[vid] = math.floor(ub[vid] + 1e-6)
        gap_tol = 1e-7 * max(1.0, abs(lb[vid]), abs(ub[vid]))
        if lb[vid] > ub[vid] + gap_tol:
            return False
        if vid not in fixed and ub[vid] - lb[vid] <= 1e-9:
            return fix(vid, 0.5 * (lb[vid] + ub[vid]))
        return True

    while queue:
        ri = queue.popleft()
        queued[ri] = False
        if not active[ri]:
            continue
        co = coeffs[ri]
        rel = model.cons[ri].rel
        if not co:
            r = rhs[ri]
            tol = 1e-7 * max(1.0, abs(r))
            bad = (rel == "<=" and r < -tol) or (rel == ">=" and r > tol) or (rel == "=" and abs(r) > tol)
            if bad:
                return "infeasible", None
            active[ri] = False
            continue
        if len(co) == 1:
            (vid, a), = co.items()
            val = rhs[ri] / a
            active[ri] = False
            if rel == "=":
                ok = fix(vid, val)
            elif (rel == "<=" and a > 0) or (rel == ">=" and a < 0):
                ok = tighten(vid, None, val)
            else:
                ok = tighten(vid, val, None)
            if not ok:
                return "infeasible", None

    red = MipModel(model.name)
    keep: list[int] = []
    new_id: dict[int, int] = {}
    for vid, v in enumerate(model.vars):
        if vid in fixed:
            continue
        new_id[vid] = red.add_var(v.name, float(lb[vid]), float(ub[vid]), v.kind)
        keep.append(vid)
    for ri, con in enumerate(model.cons):
        if active[ri]:
            red.add_constraint(
                con.name, {new_id[v]: c for v, c in coeffs[ri].items()}, con.rel, rhs[ri]
            )
    const = model.obj_constant
    linear: dict[int, float] = {}
    for vid, c in model.obj_linear.items():
        if vid in fixed:
            const += c * fixed[vid]
        else:
            linear[new_id[vid]] = c
    red.set_objective(linear, const)
    return "ok", _Reduction(red, fixed, keep)


def solve_mip(
    model: MipModel,
    time_cap: float | None = None,
    node_cap: int | None = None,
    rel_gap: float = REL_GAP,
    int_tol: float = INT_TOL,
    probe: bool = True,
    presolve: bool = True,
) -> SolveResult:
    """Best-first branch and bound over the binary variables.

    A presolve pass first folds singleton rows into bounds and substitutes
    fixed variables away, which collapses enforced indicator chains before
    any LP is solved. Branching then picks the most fractional surviving
    binary (lowest id on ties); nodes with equal bounds pop in insertion
    order. A deterministic rounding probe may promote a node relaxation into
    an incumbent early. Caps return status "cap_reached" along with the best
    incumbent found so far; solutions and bounds are always reported in
    terms of the original model's variables.
    """
    if model.obj_quadratic:
        raise ValueError("model has a quadratic objective; it is export-only")
    t0 = time.perf_counter()
    deadline = t0 + time_cap if time_cap is not None else None

    reduction: _Reduction | None = None
    work = model
    if presolve:
        pstatus, reduction = _presolve(model)
        if pstatus == "infeasible":
            return SolveResult("infeasible", None, None, None, 0, 0, time.perf_counter() - t0)
        work = reduction.model

    asm = _Assembled(work)
    binaries = work.binary_ids

    total_iters = 0
    nodes = 0
    incumbent_x: np.ndarray | None = None
    incumbent_obj = INF
    final_bound: float | None = None
    status = "optimal"

    def relax(overrides):
        nonlocal total_iters
        res = solve_lp(work, overrides, assembled=asm, deadline=deadline)
        total_iters += res.iterations
        return res

    def fractional(x):
        out = []
        for vid in binaries:
            if abs(x[vid] - round(x[vid])) > int_tol:
                out.append((vid, float(x[vid])))
        return out

    def gap_closed(bound):
        return incumbent_x is not None and bound >= incumbent_obj - rel_gap * max(1.0, abs(incumbent_obj))

    heap: list[tuple[float, int, dict]] = [(-INF, 0, {})]
    seq = 0
    while heap:
        bound_key, _, overrides = heapq.heappop(heap)
        if gap_closed(bound_key):
            final_bound = min(bound_key, incumbent_obj)
            break
        if time_cap is not None and time.perf_counter() - t0 > time_cap:
            status = "cap_reached"
            final_bound = bound_key if np.isfinite(bound_key) else None
            break
        if node_cap is not None and nodes >= node_cap:
            status = "cap_reached"
            final_bound = bound_key if np.isfinite(bound_key) else None
            break
        try:
            res = relax(overrides)
        except _DeadlineHit:
            status = "cap_reached"
            final_bound = bound_key if np.isfinite(bound_key) else None
            break
        nodes += 1
        if res.status != "optimal":
            continue
        node_bound = res.objective
        tol = 1e-6 * max(1.0, abs(node_bound))
        if np.isfinite(bound_key) and node_bound < bound_key - tol:
            # A child is more constrained than its parent, so its relaxation
            # can never undercut the parent's bound.
            raise AssertionError("child bound undercut its parent: solver bug")
        if gap_closed(node_bound):
            continue
        fracs = fractional(res.x)
        if not fracs:
            if node_bound < incumbent_obj - 1e-12:
                incumbent_obj, incumbent_x = node_bound, res.x
            continue
        if probe:
            probe_overrides = dict(overrides)
            for vid in binaries:
                if vid not in probe_overrides:
                    r = float(round(res.x[vid]))
                    probe_overrides[vid] = (r, r)
            try:
                pres = relax(probe_overrides)
            except _DeadlineHit:
                status = "cap_reached"
                final_bound = node_bound
                break
            if pres.status == "optimal":
                if node_bound > pres.objective + 1e-6 * max(1.0, abs(pres.objective)):
                    # Weak duality inside this subtree: its relaxation bounds
                    # every integral solution it contains from below.
                    raise AssertionError("node bound exceeded a feasible objective in its subtree: solver bug")
                if pres.objective < incumbent_obj - 1e-12:
                    incumbent_obj, incumbent_x = pres.objective, pres.x
                    if gap_closed(node_bound):
                        continue
        vid = max(fracs, key=lambda t: (min(t[1] - math.floor(t[1]), math.ceil(t[1]) - t[1]), -t[0]))[0]
        for val in (0.0, 1.0):
            child = dict(overrides)
            child[vid] = (val, val)
            seq += 1
            heapq.heappush(heap, (node_bound, seq, child))

    wall = time.perf_counter() - t0
    if incumbent_x is None:
        if status == "cap_reached":
            return SolveResult("cap_reached", None, None, final_bound, nodes, total_iters, wall)
        return SolveResult("infeasible", None, None, None, nodes, total_iters, wall)
    if final_bound is None:
        final_bound = incumbent_obj if status == "optimal" else -INF
    x_out = reduction.expand(incumbent_x, model.n_vars) if reduction is not None else incumbent_x
    gap = abs(incumbent_obj - final_bound) / max(1.0, abs(incumbent_obj)) if np.isfinite(final_bound) else None
    return SolveResult(status, incumbent_obj, x_out, final_bound, nodes, total_iters, wall, gap)


# --- LP text exchange --------------------------------------------------------


def _num(x: float) -> str:
    if x == INF:
        return "+infinity"
    if x == -INF:
        return "-infinity"
    return f"{x:.17g}"


def _terms_text(coeffs: list[tuple[str, float]]) -> list[str]:
    parts: list[str] = []
    for name, coef in coeffs:
        if not parts:
            parts.append(f"{_num(coef)} {name}")
        elif coef >= 0:
            parts.append(f"+ {_num(coef)} {name}")
        else:
            parts.append(f"- {_num(-coef)} {name}")
    return parts


def export_model(model: MipModel, path) -> None:
    """Write CPLEX-style LP text: Minimize, Subject To, Bounds, Binary, End.

    Quadratic objective terms go into the bracketed block with doubled
    coefficients and a trailing "/ 2", per the format's convention. Floats
    use 17 significant digits so a parse of the written file reproduces the
    model exactly.
    """
    from pathlib import Path

    names = [v.name for v in model.vars]
    lines = [f"\\ {model.name}", "Minimize"]
    obj_parts = _terms_text([(names[v], c) for v, c in sorted(model.obj_linear.items())])
    if model.obj_quadratic:
        qtext = []
        for idx, (i, j, coef) in enumerate(model.obj_quadratic):
            body = f"{names[i]} ^ 2" if i == j else f"{names[i]} * {names[j]}"
            d = 2.0 * coef
            if idx == 0:
                qtext.append(f"{_num(d)} {body}")
            elif d >= 0:
                qtext.append(f"+ {_num(d)} {body}")
            else:
                qtext.append(f"- {_num(-d)} {body}")
        obj_parts.append(("+ " if obj_parts else "") + "[ " + " ".join(qtext) + " ] / 2")
    if model.obj_constant:
        k = model.obj_constant
        if not obj_parts:
            obj_parts.append(_num(k))
        elif k >= 0:
            obj_parts.append(f"+ {_num(k)}")
        else:
            obj_parts.append(f"- {_num(-k)}")
    lines.append(" obj: " + (" ".join(obj_parts) if obj_parts else "0"))
    lines.append("Subject To")
    for con in model.cons:
        terms = _terms_text([(names[v], c) for v, c in sorted(con.coeffs.items())])
        if not terms:
            terms = [f"0 {names[0]}"] if names else ["0"]
        lines.append(f" {con.name}: " + " ".join(terms) + f" {con.rel} {_num(con.rhs)}")
    lines.append("Bounds")
    for v in model.vars:
        if v.lb == v.ub:
            lines.append(f" {v.name} = {_num(v.lb)}")
        elif math.isinf(v.lb) and math.isinf(v.ub):
            lines.append(f" {v.name} free")
        else:
            lines.append(f" {_num(v.lb)} <= {v.name} <= {_num(v.ub)}")
    binaries = [v.name for v in model.vars if v.kind == "binary"]
    if binaries:
        lines.append("Binary")
        lines.extend(f" {name}" for name in binaries)
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")


_LP_TOKEN = re.compile(
    r"<=|>=|=|\^|\*|\+|-|\[|\]|/|:"
    r"|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
    r"|[A-Za-z_!#$%&(),;?@'`{}|~][A-Za-z0-9_!#$%&(),;?@.'`{}|~]*"
)

_SECTION_STARTS = {
    "minimize": "objective",
    "minimise": "objective",
    "min": "objective",
    "maximize": "maximize",
    "maximise": "maximize",
    "max": "maximize",
    "subject": "rows",
    "st": "rows",
    "s.t.": "rows",
    "such": "rows",
    "bounds": "bounds",
    "bound": "bounds",
    "binary": "binary",
    "binaries": "binary",
    "general": "general",
    "generals": "general",
    "end": "end",
}

_OPERATOR_TOKENS = frozenset({"^", "*", "/", ":", "]", "[", "<=", ">=", "="})


def _is_number(tok: str) -> bool:
    if tok.lower() in ("inf", "infinity"):
        return True
    try:
        float(tok)
        return True
    except ValueError:
        return False


def parse_lp(path_or_text) -> MipModel:
    """Read LP text written by export_model (a practical subset of the format).

    Variables are created in Bounds-section order first, so files produced
    by export_model round-trip with identical variable ids.
    """
    from pathlib import Path

    text = str(path_or_text)
    try:
        p = Path(text)
        if p.exists():
            text = p.read_text()
    except OSError:
        pass

    tokens: list[str] = []
    for raw in text.splitlines():
        tokens.extend(_LP_TOKEN.findall(raw.split("\\")[0]))

    sections: dict[str, list[str]] = {}
    current = None
    i = 0
    while i < len(tokens):
        low = tokens[i].lower()
        if low in _SECTION_STARTS:
            kind = _SECTION_STARTS[low]
            if kind == "maximize":
                raise ValueError("maximize objectives are not supported (sense is minimize)")
            if low in ("subject", "such") and i + 1 < len(tokens) and tokens[i + 1].lower() in ("to", "that"):
                i += 1
            current = kind
            sections.setdefault(current, [])
            i += 1
            continue
        if current is None:
            raise ValueError(f"unexpected token {tokens[i]!r} before any section header")
        sections[current].append(tokens[i])
        i += 1

    model = MipModel()
    name_to_id: dict[str, int] = {}

    def ensure(name: str) -> int:
        if name in _OPERATOR_TOKENS or _is_number(name):
            raise ValueError(f"expected a variable name, found {name!r}")
        if name not in name_to_id:
            name_to_id[name] = model.add_var(name, lb=-INF, ub=INF)
        return name_to_id[name]

    def read_number(toks: list[str], j: int) -> tuple[float, int]:
        sign = 1.0
        while j < len(toks) and toks[j] in ("+", "-"):
            if toks[j] == "-":
                sign = -sign
            j += 1
        tok = toks[j]
        if tok.lower() in ("inf", "infinity"):
            return sign * INF, j + 1
        return sign * float(tok), j + 1

    # Bounds first: this pins variable creation order for our own files.
    btoks = sections.get("bounds", [])
    j = 0
    pending: list[tuple[str, float, float]] = []
    while j < len(btoks):
        tok = btoks[j]
        if tok in ("+", "-") or tok[0].isdigit() or tok[0] == "." or tok.lower() in ("inf", "infinity"):
            val, j = read_number(btoks, j)
            if j >= len(btoks) or btoks[j] != "<=":
                raise ValueError("malformed bounds line: expected '<=' after a leading number")
            name = btoks[j + 1]
            j += 2
            if j < len(btoks) and btoks[j] == "<=":
                hi, j = read_number(btoks, j + 1)
                pending.append((name, val, hi))
            else:
                pending.append((name, val, INF))
        else:
            name = tok
            j += 1
            if j < len(btoks) and btoks[j].lower() == "free":
                pending.append((name, -INF, INF))
                j += 1
            elif j < len(btoks) and btoks[j] == "=":
                val, j = read_number(btoks, j + 1)
                pending.append((name, val, val))
            elif j < len(btoks) and btoks[j] == "<=":
                hi, j = read_number(btoks, j + 1)
                pending.append((name, 0.0, hi))
            elif j < len(btoks) and btoks[j] == ">=":
                lo, j = read_number(btoks, j + 1)
                pending.append((name, lo, INF))
            else:
                raise ValueError(f"malformed bounds entry near {name!r}")
    for name, lo, hi in pending:
        vid = ensure(name)
        model.vars[vid].lb, model.vars[vid].ub = lo, hi

    def parse_quadratic(toks: list[str], j: int) -> tuple[list[tuple[int, int, float]], int]:
        quad: list[tuple[int, int, float]] = []
        sign = 1.0
        while j < len(toks) and toks[j] != "]":
            if toks[j] == "+":
                sign = 1.0
                j += 1
                continue
            if toks[j] == "-":
                sign = -1.0
                j += 1
                continue
            coef = 1.0
            if toks[j][0].isdigit() or toks[j][0] == ".":
                coef = float(toks[j])
                j += 1
            a = ensure(toks[j])
            j += 1
            if j + 1 < len(toks) and toks[j] == "^":
                if toks[j + 1] != "2":
                    raise ValueError("only squares are supported in the quadratic block")
                quad.append((a, a, sign * coef))
                j += 2
            elif j + 1 < len(toks) and toks[j] == "*":
                quad.append((a, ensure(toks[j + 1]), sign * coef))
                j += 2
            else:
                raise ValueError("quadratic block term missing '^ 2' or '* name'")
            sign = 1.0
        if j >= len(toks):
            raise ValueError("unterminated quadratic block")
        j += 1  # closing bracket
        if j + 1 < len(toks) and toks[j] == "/" and toks[j + 1] == "2":
            quad = [(a, b2, c2 / 2.0) for a, b2, c2 in quad]
            j += 2
        return quad, j

    def parse_linear(toks: list[str]):
        coeffs: dict[int, float] = {}
        quad: list[tuple[int, int, float]] = []
        const = 0.0
        j = 0
        while j < len(toks):
            if toks[j] in ("<=", ">=", "="):
                break
            sign = 1.0
            while j < len(toks) and toks[j] in ("+", "-"):
                if toks[j] == "-":
                    sign = -sign
                j += 1
            if j >= len(toks):
                break
            tok = toks[j]
            if tok == "[":
                block, j = parse_quadratic(toks, j + 1)
                if sign < 0:
                    block = [(a, b2, -c2) for a, b2, c2 in block]
                quad.extend(block)
                continue
            if tok[0].isdigit() or tok[0] == ".":
                val = float(tok)
                j += 1
                if (
                    j < len(toks)
                    and toks[j] not in _OPERATOR_TOKENS
                    and toks[j] not in ("+", "-")
                    and not _is_number(toks[j])
                ):
                    vid = ensure(toks[j])
                    coeffs[vid] = coeffs.get(vid, 0.0) + sign * val
                    j += 1
                else:
                    const += sign * val
            elif tok.lower() in ("inf", "infinity"):
                const += sign * INF
                j += 1
            else:
                vid = ensure(tok)
                coeffs[vid] = coeffs.get(vid, 0.0) + sign
                j += 1
        return coeffs, quad, const, j

    obj_toks = sections.get("objective", [])
    if len(obj_toks) >= 2 and obj_toks[1] == ":":
        obj_toks = obj_toks[2:]
    coeffs, quad, const, used = parse_linear(obj_toks)
    if used != len(obj_toks):
        raise ValueError(f"unexpected tokens after the objective: {obj_toks[used:used + 5]}")
    model.obj_linear = coeffs
    model.obj_constant = const
    model.obj_quadratic = quad

    rtoks = sections.get("rows", [])
    j = 0
    while j < len(rtoks):
        name = rtoks[j]
        if j + 1 >= len(rtoks) or rtoks[j + 1] != ":":
            raise ValueError(f"constraint missing a label near {name!r}")
        j += 2
        k = j
        while k < len(rtoks) and rtoks[k] not in ("<=", ">=", "="):
            k += 1
        if k >= len(rtoks):
            raise ValueError(f"constraint {name!r} has no relation")
        coeffs, quad, const, used = parse_linear(rtoks[j:k])
        if quad:
            raise ValueError("quadratic terms are only supported in the objective")
        if used != k - j:
            raise ValueError(f"could not parse constraint {name!r}")
        rel = rtoks[k]
        rhs, j = read_number(rtoks, k + 1)
        model.add_constraint(name, coeffs, rel, rhs - const)

    for name in sections.get("binary", []):
        vid = ensure(name)
        v = model.vars[vid]
        v.kind = "binary"
        v.lb = max(v.lb, 0.0) if math.isfinite(v.lb) else 0.0
        v.ub = min(v.ub, 1.0) if math.isfinite(v.ub) else 1.0
    if sections.get("general"):
        raise ValueError("general integer variables are not supported")
    return model


def models_equivalent(a: MipModel, b: MipModel) -> tuple[bool, str]:
    """Row-for-row structural equality, exact on floats."""
    if [v.name for v in a.vars] != [v.name for v in b.vars]:
        return False, "variable names or order differ"
    for va, vb in zip(a.vars, b.vars):
        if va.kind != vb.kind or va.lb != vb.lb or va.ub != vb.ub:
            return False, f"variable {va.name} differs: [{va.lb}, {va.ub}] {va.kind} vs [{vb.lb}, {vb.ub}] {vb.kind}"
    if len(a.cons) != len(b.cons):
        return False, f"constraint counts differ: {len(a.cons)} vs {len(b.cons)}"
    for ca, cb in zip(a.cons, b.cons):
        if ca.name != cb.name or ca.rel != cb.rel or ca.rhs != cb.rhs or ca.coeffs != cb.coeffs:
            return False, f"constraint {ca.name} differs"
    if a.obj_linear != b.obj_linear or a.obj_constant != b.obj_constant:
        return False, "linear objectives differ"
    if sorted(a.obj_quadratic) != sorted(b.obj_quadratic):
        return False, "quadratic objectives differ"
    return True, ""
