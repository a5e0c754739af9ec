"""Shift enumeration and deduplication of instant-shift pairs.

A task evaluated under per-agent integer time shifts kappa in
[theta1, theta2]^N must hold for every (instant, shift vector) pair. Two
pairs (k, kappa) and (k', kappa') read exactly the same shifted states when
k + kappa_i = k' + kappa'_i for every agent, so the vector of effective
indices acts as a key. Constraints are generated once per distinct key
instead of once per pair, which avoids the Theta^N blow-up on overlapping
windows.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .formula import (
    And,
    Always,
    Eventually,
    Formula,
    Not,
    Or,
    Pred,
    TrueNode,
    Until,
    required_instants,
)

DEFAULT_SHIFT_CAP = 10_000_000
SHIFT_CAP_ENV = "ATR_SHIFT_CAP"


class ShiftCapExceeded(RuntimeError):
    """Refused to enumerate more shift vectors than the configured cap."""


@dataclass(frozen=True)
class ShiftBound:
    """Inclusive shift interval [theta1, theta2] with theta1 <= 0 <= theta2."""

    theta1: int
    theta2: int

    def __post_init__(self):
        if not (self.theta1 <= 0 <= self.theta2):
            raise ValueError(f"shift bound must satisfy theta1 <= 0 <= theta2, got [{self.theta1}, {self.theta2}]")

    @property
    def width(self) -> int:
        """Number of admissible per-agent shifts."""
        return self.theta2 - self.theta1 + 1

    def count(self, n_agents: int) -> int:
        return self.width**n_agents


def _cap() -> int:
    raw = os.environ.get(SHIFT_CAP_ENV)
    if raw is None:
        return DEFAULT_SHIFT_CAP
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SHIFT_CAP_ENV} must be an integer, got {raw!r}")


def enumerate_shifts(bound: ShiftBound, n_agents: int) -> Iterator[tuple[int, ...]]:
    """All shift vectors in [theta1, theta2]^N, lexicographic.

    Raises ShiftCapExceeded when the count would exceed the enumeration cap
    (ATR_SHIFT_CAP env var, default 10^7).
    """
    if n_agents < 1:
        raise ValueError("n_agents must be positive")
    total = bound.count(n_agents)
    if total > _cap():
        raise ShiftCapExceeded(
            f"{total} shift vectors exceed the cap of {_cap()}; "
            f"raise {SHIFT_CAP_ENV} to override"
        )
    return itertools.product(range(bound.theta1, bound.theta2 + 1), repeat=n_agents)


@dataclass(frozen=True)
class PairSetEntry:
    """One deduplicated class of instant-shift pairs."""

    key: tuple[int, ...]
    representative: tuple[int, tuple[int, ...]]  # (instant, shift vector), lex-smallest
    var_id: int


class PairSetIndex:
    """Registry of distinct effective-index keys over instants x shifts.

    Entries carry dense ids 0..len-1 in registration order (instants
    ascending, shift vectors lexicographic), so the lexicographically
    smallest (k, kappa) of each class is its representative.
    """

    def __init__(self, mode: str = "raw"):
        if mode not in ("raw", "clamped"):
            raise ValueError(f"unknown key mode {mode!r}")
        self.mode = mode
        self._by_key: dict[tuple[int, ...], PairSetEntry] = {}
        self._entries: list[PairSetEntry] = []

    def key_of(self, k: int, kappa: Sequence[int]) -> tuple[int, ...]:
        if self.mode == "clamped":
            return tuple(max(k + s, 0) for s in kappa)
        return tuple(k + s for s in kappa)

    def register(self, k: int, kappa: tuple[int, ...]) -> PairSetEntry:
        key = self.key_of(k, kappa)
        entry = self._by_key.get(key)
        if entry is None:
            entry = PairSetEntry(key=key, representative=(k, kappa), var_id=len(self._entries))
            self._by_key[key] = entry
            self._entries.append(entry)
        return entry

    def lookup(self, key: tuple[int, ...]) -> PairSetEntry:
        return self._by_key[key]

    def get(self, key: tuple[int, ...]) -> PairSetEntry | None:
        return self._by_key.get(key)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[PairSetEntry]:
        return iter(self._entries)

    @property
    def keys(self) -> list[tuple[int, ...]]:
        return [e.key for e in self._entries]


def build_index(
    instants: Iterable[int],
    bound: ShiftBound,
    n_agents: int,
    mode: str = "raw",
) -> PairSetIndex:
    """Deduplicate all (instant, shift vector) pairs over the given instants."""
    index = PairSetIndex(mode=mode)
    shifts = list(enumerate_shifts(bound, n_agents))
    for k in sorted(set(instants)):
        for kappa in shifts:
            index.register(k, kappa)
    return index


def contiguous_count(n_instants: int, bound: ShiftBound, n_agents: int) -> int:
    """Closed-form number of distinct keys for a contiguous instant window.

    For L consecutive instants: L * Theta^N - (L - 1) * (Theta - 1)^N where
    Theta is the per-agent shift count. Matches build_index on any
    contiguous window (the count is translation invariant).
    """
    if n_instants < 0:
        raise ValueError("n_instants must be nonnegative")
    if n_instants == 0:
        return 0
    th = bound.width
    return n_instants * th**n_agents - (n_instants - 1) * (th - 1) ** n_agents


# --- formula counting -------------------------------------------------------


def enforced_boolean_nodes(phi: Formula) -> set[int]:
    """Identity ids of Boolean nodes whose truth is enforced directly.

    The root is enforced; an enforced conjunction enforces its children, and
    an enforced disjunction or negation is itself constraint-only. Enforced
    And/Or/Not nodes carry no variables: only nodes whose value is consumed
    by a temporal operator or by a disjunction need one.
    """
    out: set[int] = set()

    def visit(node: Formula) -> None:
        if isinstance(node, And):
            out.add(id(node))
            for c in node.children:
                visit(c)
        elif isinstance(node, (Or, Not)):
            # Constraint-only at this level; children still carry variables.
            out.add(id(node))

    visit(phi)
    return out


def counted_groups(phi: Formula) -> list[tuple[str, tuple[Formula, ...]]]:
    """Variable-carrying groups of a normalized formula, in preorder.

    Predicate leaves (including negated ones) are grouped by (label,
    negated): the same proposition read at the same effective indices shares
    one variable no matter how many leaves mention it. Temporal operators and
    non-enforced Boolean nodes each form their own group. Returns
    (group kind, nodes) with kind one of "predicate", "temporal", "boolean".
    """
    enforced = enforced_boolean_nodes(phi)
    pred_groups: dict[tuple[str, bool], list[Formula]] = {}
    groups: list[tuple[str, tuple[Formula, ...]]] = []
    order: list[tuple[str, bool]] = []

    def visit(node: Formula) -> None:
        if isinstance(node, TrueNode):
            return
        if isinstance(node, Pred):
            key = (node.pred.label, False)
            if key not in pred_groups:
                pred_groups[key] = []
                order.append(key)
            pred_groups[key].append(node)
            return
        if isinstance(node, Not):
            child = node.child
            if isinstance(child, Pred):
                key = (child.pred.label, True)
                if key not in pred_groups:
                    pred_groups[key] = []
                    order.append(key)
                pred_groups[key].append(node)
                return
            if isinstance(child, TrueNode):
                return
            visit(child)  # Not over Until: the until itself carries the variable
            return
        if isinstance(node, (And, Or)):
            if id(node) not in enforced:
                groups.append(("boolean", (node,)))
            for c in node.children:
                visit(c)
            return
        if isinstance(node, (Always, Eventually)):
            groups.append(("temporal", (node,)))
            visit(node.child)
            return
        if isinstance(node, Until):
            groups.append(("temporal", (node,)))
            visit(node.left)
            visit(node.right)
            return
        raise TypeError(f"unknown node {type(node).__name__}")

    visit(phi)
    pred_part = [("predicate", tuple(pred_groups[k])) for k in order]
    return pred_part + groups


def group_instants(
    groups: list[tuple[str, tuple[Formula, ...]]],
    instants_table: dict[Formula, tuple[int, ...]],
) -> list[tuple[str, tuple[Formula, ...], tuple[int, ...]]]:
    out = []
    for kind, nodes in groups:
        merged: set[int] = set()
        for node in nodes:
            merged.update(instants_table[node])
        out.append((kind, nodes, tuple(sorted(merged))))
    return out


@dataclass(frozen=True)
class StlCount:
    """Breakdown of formula variables for one method."""

    predicate: int
    temporal: int
    boolean: int
    until_aux: int

    @property
    def main(self) -> int:
        """Variables under the per-node rule; until auxiliaries reported apart."""
        return self.predicate + self.temporal + self.boolean

    @property
    def total(self) -> int:
        return self.main + self.until_aux


def count_stl_detail(
    phi: Formula, bound: ShiftBound, n_agents: int, method: str = "reduced", mode: str = "raw"
) -> StlCount:
    """Count binary variables the encoder would allocate, without encoding.

    ``reduced`` counts one variable per distinct effective-index key of each
    group; ``naive`` counts one per (instant, shift vector) pair per node.
    Until operators additionally spend one auxiliary per window offset per
    key (or pair), reported separately.
    """
    if method not in ("reduced", "naive"):
        raise ValueError(f"unknown method {method!r}")
    table = required_instants(phi)
    groups = group_instants(counted_groups(phi), table)
    th_n = bound.count(n_agents)
    sums = {"predicate": 0, "temporal": 0, "boolean": 0}
    until_aux = 0

    for kind, nodes, instants in groups:
        if method == "naive":
            # Per node, no sharing: the deliberately redundant baseline.
            n_vars = sum(len(table[node]) for node in nodes) * th_n
        else:
            use_mode = mode if kind == "predicate" else "raw"
            n_vars = len(build_index(instants, bound, n_agents, mode=use_mode))
        sums[kind] += n_vars
        if kind == "temporal" and isinstance(nodes[0], Until):
            node = nodes[0]
            width = node.b - node.a + 1
            if method == "naive":
                until_aux += len(table[node]) * th_n * width
            else:
                until_aux += len(build_index(instants, bound, n_agents, mode="raw")) * width

    return StlCount(
        predicate=sums["predicate"],
        temporal=sums["temporal"],
        boolean=sums["boolean"],
        until_aux=until_aux,
    )


def count_stl_binaries(
    phi: Formula, bound: ShiftBound, n_agents: int, method: str = "reduced", mode: str = "raw"
) -> int:
    return count_stl_detail(phi, bound, n_agents, method, mode).main


def count_task_inequalities(
    pieces: Sequence[tuple[Sequence, Sequence[int]]],
    bound: ShiftBound,
    n_agents: int,
    method: str = "reduced",
    mode: str = "raw",
) -> int:
    """Inequalities a piecewise constraint task generates.

    ``pieces`` is a sequence of (members, instants); each member contributes
    one inequality per registry entry (reduced) or per pair (naive) of its
    piece.
    """
    if method not in ("reduced", "naive"):
        raise ValueError(f"unknown method {method!r}")
    total = 0
    th_n = bound.count(n_agents)
    for members, instants in pieces:
        uniq = sorted(set(instants))
        if method == "naive":
            total += len(members) * len(uniq) * th_n
        else:
            total += len(members) * len(build_index(uniq, bound, n_agents, mode=mode))
    return total
