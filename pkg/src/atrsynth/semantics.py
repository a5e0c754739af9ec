"""Ground-truth evaluation of tasks on (shifted) trajectories.

This module is the oracle side of the toolkit: direct recursive evaluation
with explicit shift enumeration, no encoding involved. It accepts arbitrary
predicate evaluators (including non-affine ones), so it can check tasks the
encoder cannot express.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .formula import (
    AffineExpr,
    Always,
    And,
    Eventually,
    Formula,
    Not,
    Or,
    Pred,
    TrueNode,
    Until,
)
from .shiftsets import ShiftBound, enumerate_shifts
from .system import Trajectory


@dataclass(frozen=True)
class Witness:
    kappa: tuple[int, ...]
    k: int | None = None
    predicate: str | None = None


@dataclass(frozen=True)
class Verdict:
    """Satisfaction sign: +1 satisfied, -1 violated; witness explains a -1."""

    satisfied: int
    witness: Witness | None = None

    def __post_init__(self):
        if self.satisfied not in (-1, 1):
            raise ValueError("satisfaction sign must be +1 or -1")
        if (self.witness is not None) != (self.satisfied == -1):
            raise ValueError("witness present iff violated")


@dataclass(frozen=True)
class AtrValue:
    """Signed robustness: the largest symmetric shift radius preserving the sign."""

    theta: int
    sign: int


@dataclass(frozen=True)
class TaskPiece:
    """Conjunction of members that must be nonnegative on the given instants.

    Members are AffineExpr or callables ``f(stacked_state) -> float``.
    """

    members: tuple
    instants: tuple[int, ...]
    label: str = "piece"

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "instants", tuple(sorted(set(self.instants))))
        if not self.members:
            raise ValueError("piece needs at least one member")
        if not self.instants:
            raise ValueError("piece needs at least one instant")
        if self.instants[0] < 0:
            raise ValueError("piece instants must be nonnegative")


@dataclass(frozen=True)
class ConstraintTask:
    pieces: tuple[TaskPiece, ...]

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if not self.pieces:
            raise ValueError("task needs at least one piece")

    @property
    def max_instant(self) -> int:
        return max(p.instants[-1] for p in self.pieces)


def _member_value(member, stacked, offsets) -> float:
    if isinstance(member, AffineExpr):
        return member.evaluate(stacked, offsets)
    return float(member(stacked))


def eval_constraint_task(
    task: ConstraintTask, traj: Trajectory, kappa: tuple[int, ...]
) -> tuple[int, Witness | None]:
    """Evaluate all pieces on the shifted trajectory; first violation wins."""
    offsets = traj.state_offsets
    for piece in task.pieces:
        for k in piece.instants:
            stacked = traj.shifted_state(k, kappa)
            for j, member in enumerate(piece.members):
                if _member_value(member, stacked, offsets) < 0.0:
                    return -1, Witness(kappa=tuple(kappa), k=k, predicate=f"{piece.label}[{j}]")
    return 1, None


def eval_stl(
    phi: Formula,
    traj: Trajectory,
    kappa: tuple[int, ...],
    at: int = 0,
    overrides: Mapping[str, Callable] | None = None,
) -> int:
    """Bounded satisfaction sign of ``phi`` on the shifted trajectory at ``at``.

    ``overrides`` substitutes predicate evaluators by label, e.g. to check an
    exact nonlinear form in place of its polytopic inner approximation.
    """
    offsets = traj.state_offsets

    def sat(node: Formula, k: int) -> bool:
        if isinstance(node, TrueNode):
            return True
        if isinstance(node, Pred):
            if overrides and node.pred.label in overrides:
                return float(overrides[node.pred.label](traj.shifted_state(k, kappa))) >= 0.0
            return node.pred.value(traj.shifted_state(k, kappa), offsets) >= 0.0
        if isinstance(node, Not):
            return not sat(node.child, k)
        if isinstance(node, And):
            return all(sat(c, k) for c in node.children)
        if isinstance(node, Or):
            return any(sat(c, k) for c in node.children)
        if isinstance(node, Always):
            return all(sat(node.child, kp) for kp in range(k + node.a, k + node.b + 1))
        if isinstance(node, Eventually):
            return any(sat(node.child, kp) for kp in range(k + node.a, k + node.b + 1))
        if isinstance(node, Until):
            for kp in range(k + node.a, k + node.b + 1):
                if sat(node.right, kp) and all(sat(node.left, kpp) for kpp in range(k, kp + 1)):
                    return True
            return False
        raise TypeError(f"unknown node {type(node).__name__}")

    return 1 if sat(phi, at) else -1


def _blame(phi: Formula, traj: Trajectory, kappa: tuple[int, ...], at: int, overrides) -> tuple[int, str] | None:
    """Some (instant, leaf) pair responsible for a violation, if one is cheap to name."""
    offsets = traj.state_offsets

    def leaf_true(node: Formula, k: int) -> bool:
        return eval_stl(node, traj, kappa, k, overrides) == 1

    def descend(node: Formula, k: int) -> tuple[int, str] | None:
        if isinstance(node, Pred):
            return k, node.pred.label
        if isinstance(node, Not):
            if isinstance(node.child, Pred):
                return k, f"!{node.child.pred.label}"
            return k, "!(until)"
        if isinstance(node, TrueNode):
            return None
        if isinstance(node, And):
            for c in node.children:
                if not leaf_true(c, k):
                    return descend(c, k)
            return None
        if isinstance(node, Or):
            return descend(node.children[0], k)
        if isinstance(node, Always):
            for kp in range(k + node.a, k + node.b + 1):
                if not leaf_true(node.child, kp):
                    return descend(node.child, kp)
            return None
        if isinstance(node, Eventually):
            return descend(node.child, k + node.a)
        if isinstance(node, Until):
            return k, "(until)"
        return None

    return descend(phi, at)


def robust_check(
    task: ConstraintTask | Formula,
    traj: Trajectory,
    bound: ShiftBound,
    overrides: Mapping[str, Callable] | None = None,
) -> Verdict:
    """Check the task under every admissible shift vector.

    Shift vectors are scanned lexicographically; the first failing one is
    returned as the witness, so results are deterministic.
    """
    n = traj.n_agents
    for kappa in enumerate_shifts(bound, n):
        if isinstance(task, ConstraintTask):
            sign, witness = eval_constraint_task(task, traj, kappa)
            if sign == -1:
                return Verdict(-1, witness)
        else:
            if eval_stl(task, traj, kappa, 0, overrides) == -1:
                blame = _blame(task, traj, kappa, 0, overrides)
                k, pred = blame if blame else (None, None)
                return Verdict(-1, Witness(kappa=tuple(kappa), k=k, predicate=pred))
    return Verdict(1, None)


def _sign(task, traj, kappa, overrides) -> int:
    if isinstance(task, ConstraintTask):
        return eval_constraint_task(task, traj, kappa)[0]
    return eval_stl(task, traj, kappa, 0, overrides)


def atr(
    task: ConstraintTask | Formula,
    traj: Trajectory,
    tau_max: int,
    overrides: Mapping[str, Callable] | None = None,
) -> AtrValue:
    """Signed symmetric robustness against shifts, capped at tau_max.

    theta is the largest tau <= tau_max such that every shift vector in
    [-tau, tau]^N leaves the nominal satisfaction sign unchanged; the sign of
    the result is the nominal satisfaction sign itself. tau = 0 always
    preserves the sign, so theta >= 0.
    """
    if tau_max < 0:
        raise ValueError("tau_max must be nonnegative")
    n = traj.n_agents
    nominal = _sign(task, traj, (0,) * n, overrides)
    theta = 0
    for tau in range(1, tau_max + 1):
        # Only shift vectors that touch the new radius need checking.
        ok = True
        for kappa in enumerate_shifts(ShiftBound(-tau, tau), n):
            if max(abs(s) for s in kappa) < tau:
                continue
            if _sign(task, traj, kappa, overrides) != nominal:
                ok = False
                break
        if not ok:
            break
        theta = tau
    return AtrValue(theta=theta, sign=nominal)


def per_side_bounds(
    task: ConstraintTask | Formula,
    traj: Trajectory,
    tau_max: int,
    overrides: Mapping[str, Callable] | None = None,
) -> tuple[int, int]:
    """Largest one-sided shift radii preserving the nominal sign.

    Returns (d1, d2) where every shift vector in [-d1, 0]^N and every one in
    [0, d2]^N preserves the nominal satisfaction sign, each side searched
    independently. Informational companion to the symmetric value.
    """
    n = traj.n_agents
    nominal = _sign(task, traj, (0,) * n, overrides)

    def side(lo_of, hi_of) -> int:
        best = 0
        for tau in range(1, tau_max + 1):
            ok = True
            for kappa in enumerate_shifts(ShiftBound(lo_of(tau), hi_of(tau)), n):
                if max(abs(s) for s in kappa) < tau:
                    continue
                if _sign(task, traj, kappa, overrides) != nominal:
                    ok = False
                    break
            if not ok:
                break
            best = tau
        return best

    return side(lambda t: -t, lambda t: 0), side(lambda t: 0, lambda t: t)
