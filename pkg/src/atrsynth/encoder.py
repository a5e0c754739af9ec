"""Mixed-integer encodings of shift-robust synthesis problems.

Given a multi-agent system, a task (piecewise constraint functions or a
bounded temporal formula), and a per-agent shift bound, build a MipModel
whose feasible points are exactly the input sequences that keep the task
satisfied under every admissible combination of per-agent time shifts.

Two methods share one row generator. "reduced" allocates one variable (or
inequality) per distinct effective-index key, reusing it across every
(instant, shift vector) pair that reads the same states. "naive" allocates
per pair, the deliberately redundant baseline. Indices before the start of
the horizon read the initial state; indices past the end read the zero-input
extension, which the encoding materializes as extra state variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

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
    horizon,
    iter_nodes,
    normalize,
    required_instants,
)
from .mip import INF, MipModel
from .semantics import ConstraintTask
from .shiftsets import (
    PairSetIndex,
    ShiftBound,
    counted_groups,
    enforced_boolean_nodes,
    enumerate_shifts,
    group_instants,
)
from .system import MultiAgentSystem, Trajectory, simulate

OBJECTIVE_KINDS = ("feasibility", "input_l1", "input_linf", "custom_linear", "exported_quadratic")


@dataclass(frozen=True)
class EncoderConfig:
    """Tunables shared by both encoding paths.

    eps is the strictness margin on predicate and constraint rows. big_m
    overrides the derived linearization constant (it must dominate every
    predicate's range or encoding fails). mode picks the effective-index
    key: "raw" keeps pre-clamp indices distinct, "clamped" merges keys that
    read the initial state, which is only applied where that is sound
    (predicate leaves and constraint pieces).
    """

    eps: float = 1e-4
    big_m: float | None = None
    mode: str = "raw"

    def __post_init__(self):
        if self.mode not in ("raw", "clamped"):
            raise ValueError(f"unknown key mode {self.mode!r}")
        if not (0 < self.eps < 1):
            raise ValueError("eps must sit in (0, 1)")
        if self.big_m is not None and self.big_m <= 0:
            raise ValueError("big_m must be positive")


@dataclass(frozen=True)
class ObjectiveSpec:
    """What the synthesized inputs should minimize.

    kinds: "feasibility" (zero objective), "input_l1" (sum of absolute input
    entries), "input_linf" (per-agent peak magnitude, summed), and
    "custom_linear" / "exported_quadratic" with terms keyed by variable
    name. Quadratic objectives are export-only.
    """

    kind: str = "feasibility"
    terms: dict[str, float] = field(default_factory=dict)
    quadratic: tuple[tuple[str, str, float], ...] = ()

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}; expected one of {OBJECTIVE_KINDS}")
        if self.kind == "exported_quadratic" and not self.quadratic:
            raise ValueError("exported_quadratic needs quadratic terms")
        if self.kind != "exported_quadratic" and self.quadratic:
            raise ValueError("quadratic terms require kind 'exported_quadratic'")
        if self.kind == "custom_linear" and not self.terms:
            raise ValueError("custom_linear needs linear terms")


def _key_text(key: tuple[int, ...]) -> str:
    return "_".join(str(v) if v >= 0 else f"m{-v}" for v in key)


class EncodedProblem:
    """A built model plus the bookkeeping to interpret its solution."""

    def __init__(
        self,
        model: MipModel,
        system: MultiAgentSystem,
        T: int,
        bound: ShiftBound,
        config: EncoderConfig,
        method: str,
        kind: str,
        spec_obj,
        x_ids: dict[tuple[int, int, int], int],
        u_ids: dict[tuple[int, int, int], int],
        counts: dict[str, int | str],
    ):
        self.model = model
        self.system = system
        self.T = T
        self.bound = bound
        self.config = config
        self.method = method
        self.kind = kind
        self.spec_obj = spec_obj
        self.x_ids = x_ids
        self.u_ids = u_ids
        self.counts = counts

    @property
    def extension_steps(self) -> int:
        return self.bound.theta2

    def input_array(self, assignment: np.ndarray) -> np.ndarray:
        m_total = self.system.n_inputs
        inputs = np.zeros((self.T, m_total))
        offsets = self.system.input_offsets
        for (agent, k, coord), vid in self.u_ids.items():
            inputs[k, offsets[agent] + coord] = assignment[vid]
        return inputs

    def decode(self, assignment: np.ndarray) -> Trajectory:
        """Rebuild the trajectory by simulating the solved inputs.

        Simulation re-checks the dynamics and boxes, so a decode that
        returns is internally consistent with the model's state variables.
        """
        inputs = self.input_array(assignment)
        return simulate(
            self.system,
            inputs,
            T=self.T,
            extension_steps=self.extension_steps,
            check_boxes=True,
            box_tol=1e-5,
        )


# --- dynamics ----------------------------------------------------------------


def _encode_dynamics(
    model: MipModel,
    system: MultiAgentSystem,
    T: int,
    ext: int,
) -> tuple[dict[tuple[int, int, int], int], dict[tuple[int, int, int], int], int]:
    """State and input variables plus the update equalities.

    States run over instants 0..T+ext per agent; instants beyond T carry the
    interval-propagated extension bounds instead of the state box, and their
    updates have no input term. The initial state is pinned by bounds.
    """
    x_ids: dict[tuple[int, int, int], int] = {}
    u_ids: dict[tuple[int, int, int], int] = {}
    ext_boxes = system.extension_boxes(ext)
    offsets = system.state_offsets
    rows = 0

    for i, agent in enumerate(system.agents):
        n, m = agent.dims
        for k in range(T + ext + 1):
            for c in range(n):
                if k == 0:
                    lb = ub = float(agent.x0[c])
                elif k <= T:
                    lb, ub = float(agent.state_box[c, 0]), float(agent.state_box[c, 1])
                else:
                    lb, ub = ext_boxes[k - T, offsets[i] + c]
                x_ids[(i, k, c)] = model.add_var(f"x{i + 1}_{k}_{c}", lb, ub)
        for k in range(T):
            for c in range(m):
                lb, ub = float(agent.input_box[c, 0]), float(agent.input_box[c, 1])
                u_ids[(i, k, c)] = model.add_var(f"u{i + 1}_{k}_{c}", lb, ub)

    for i, agent in enumerate(system.agents):
        n, m = agent.dims
        for k in range(T + ext):
            for r in range(n):
                coeffs = {x_ids[(i, k + 1, r)]: 1.0}
                for c in range(n):
                    a = float(agent.A[r, c])
                    if a != 0.0:
                        coeffs[x_ids[(i, k, c)]] = coeffs.get(x_ids[(i, k, c)], 0.0) - a
                if k < T:
                    for c in range(m):
                        bcoef = float(agent.B[r, c])
                        if bcoef != 0.0:
                            coeffs[u_ids[(i, k, c)]] = coeffs.get(u_ids[(i, k, c)], 0.0) - bcoef
                model.add_constraint(f"dyn{i + 1}_{k}_{r}", coeffs, "=", 0.0)
                rows += 1
    return x_ids, u_ids, rows


# --- shared helpers -----------------------------------------------------------


def _clamp_index(idx: int, limit: int) -> int:
    if idx < 0:
        return 0
    if idx > limit:
        raise ValueError(f"effective index {idx} exceeds the materialized horizon {limit}")
    return idx


def _affine_coeffs(
    expr: AffineExpr,
    key: tuple[int, ...],
    x_ids: dict[tuple[int, int, int], int],
    n_agents: int,
    limit: int,
) -> tuple[dict[int, float], float]:
    """Coefficients of an affine read at the per-agent indices in ``key``."""
    coeffs: dict[int, float] = {}
    for agent, coord, coef in expr.coeffs:
        if not (1 <= agent <= n_agents):
            raise ValueError(f"expression references missing agent {agent}")
        idx = _clamp_index(key[agent - 1], limit)
        vid = x_ids.get((agent - 1, idx, coord))
        if vid is None:
            raise ValueError(f"expression references missing coordinate {coord} of agent {agent}")
        coeffs[vid] = coeffs.get(vid, 0.0) + coef
    return coeffs, expr.const


def _validate_references(spec_obj, system: MultiAgentSystem) -> None:
    """Reject affine expressions reading agents or coordinates the system lacks."""
    dims = system.state_dims

    def check(expr, where: str) -> None:
        if not isinstance(expr, AffineExpr):
            return
        for agent, coord, _ in expr.coeffs:
            if not (1 <= agent <= system.n_agents):
                raise ValueError(
                    f"{where} references agent {agent}, but the system has {system.n_agents}"
                )
            if not (0 <= coord < dims[agent - 1]):
                raise ValueError(
                    f"{where} references coordinate {coord} of agent {agent}, "
                    f"which has {dims[agent - 1]} states"
                )

    if isinstance(spec_obj, ConstraintTask):
        for q, piece in enumerate(spec_obj.pieces):
            for member in piece.members:
                check(member, f"piece {piece.label or q}")
    elif isinstance(spec_obj, Formula):
        for node in iter_nodes(spec_obj):
            if isinstance(node, Pred) and node.pred.affine:
                check(node.pred.expr, f"predicate {node.pred.label!r}")


def _expr_range_bound(expr: AffineExpr, system: MultiAgentSystem, ext: int) -> float:
    """Interval-hull bound on |expr| over boxed states and their extension."""
    boxes = system.extension_boxes(ext)  # (ext+1, n, 2)
    envelope = np.max(np.abs(boxes), axis=(0, 2))  # per stacked coordinate
    offsets = system.state_offsets
    total = abs(expr.const)
    for agent, coord, coef in expr.coeffs:
        total += abs(coef) * float(envelope[offsets[agent - 1] + coord])
    return total


# --- constraint-function tasks -------------------------------------------------


def _encode_task(
    model: MipModel,
    task: ConstraintTask,
    bound: ShiftBound,
    system: MultiAgentSystem,
    x_ids: dict[tuple[int, int, int], int],
    T: int,
    config: EncoderConfig,
    method: str,
) -> int:
    n_agents = system.n_agents
    limit = T + bound.theta2
    rows = 0
    for q, piece in enumerate(task.pieces):
        for j, member in enumerate(piece.members):
            if not isinstance(member, AffineExpr):
                raise ValueError(
                    f"piece {q} member {j} is not affine; only affine members can be encoded"
                )
        if method == "reduced":
            index = PairSetIndex(mode=config.mode)
            for k in piece.instants:
                for kappa in enumerate_shifts(bound, n_agents):
                    index.register(k, kappa)
            for entry in index:
                for j, member in enumerate(piece.members):
                    coeffs, const = _affine_coeffs(member, entry.key, x_ids, n_agents, limit)
                    model.add_constraint(
                        f"t{q}_{j}_{_key_text(entry.key)}", coeffs, ">=", config.eps - const
                    )
                    rows += 1
        else:
            serial = 0
            for k in piece.instants:
                for kappa in enumerate_shifts(bound, n_agents):
                    key = tuple(k + s for s in kappa)
                    for j, member in enumerate(piece.members):
                        coeffs, const = _affine_coeffs(member, key, x_ids, n_agents, limit)
                        model.add_constraint(
                            f"t{q}_{j}_p{serial}", coeffs, ">=", config.eps - const
                        )
                        rows += 1
                    serial += 1
    return rows


# --- temporal formulas ---------------------------------------------------------


class _ValueForm:
    """Affine stand-in for a subformula's truth at one key: coef * var + const."""

    __slots__ = ("var", "coef", "const")

    def __init__(self, var: int | None, coef: float, const: float):
        self.var = var
        self.coef = coef
        self.const = const

    @staticmethod
    def of_var(vid: int) -> "_ValueForm":
        return _ValueForm(vid, 1.0, 0.0)

    @staticmethod
    def constant(c: float) -> "_ValueForm":
        return _ValueForm(None, 0.0, c)

    @staticmethod
    def negation(vid: int) -> "_ValueForm":
        return _ValueForm(vid, -1.0, 1.0)


class _StlEncoder:
    """Row generator for a normalized formula over one binder (reduced or naive)."""

    def __init__(
        self,
        model: MipModel,
        phi: Formula,
        bound: ShiftBound,
        system: MultiAgentSystem,
        x_ids: dict[tuple[int, int, int], int],
        T: int,
        config: EncoderConfig,
        method: str,
    ):
        self.model = model
        self.phi = phi
        self.bound = bound
        self.system = system
        self.x_ids = x_ids
        self.T = T
        self.config = config
        self.method = method
        self.n_agents = system.n_agents
        self.limit = T + bound.theta2
        self.shifts = list(enumerate_shifts(bound, self.n_agents))
        self.instants = required_instants(phi)
        self.enforced = enforced_boolean_nodes(phi)
        self.groups = group_instants(counted_groups(phi), self.instants)

        # node id -> index of its group
        self.node_group: dict[int, int] = {}
        for gi, (_, nodes, _) in enumerate(self.groups):
            for node in nodes:
                self.node_group[id(node)] = gi

        # reduced: group idx -> (PairSetIndex, var id list)
        self.registries: dict[int, tuple[PairSetIndex, list[int]]] = {}
        # naive: node id (or (group, node)) -> {(k, kappa): var id}
        self.pair_vars: dict[int, dict[tuple[int, tuple[int, ...]], int]] = {}
        self.until_aux: dict[tuple[int, tuple, int], int] = {}

        self.counts = {
            "binaries_predicate": 0,
            "binaries_temporal": 0,
            "binaries_boolean": 0,
            "until_aux": 0,
            "link_rows": 0,
            "root_rows": 0,
            "root_raw_pairs": 0,
        }
        self._ms: dict[int, float] = {}

    # -- variable allocation ----------------------------------------------

    def _group_mode(self, kind: str) -> str:
        # Merging clamped keys is only sound where the truth value depends
        # on the read states alone; temporal futures diverge after clamping.
        return self.config.mode if kind == "predicate" else "raw"

    def allocate(self) -> None:
        for gi, (kind, nodes, instants) in enumerate(self.groups):
            count_key = {
                "predicate": "binaries_predicate",
                "temporal": "binaries_temporal",
                "boolean": "binaries_boolean",
            }[kind]
            if self.method == "reduced":
                index = PairSetIndex(mode=self._group_mode(kind))
                for k in instants:
                    for kappa in self.shifts:
                        index.register(k, kappa)
                vids = [
                    self.model.add_var(f"z{gi}_{_key_text(e.key)}", kind="binary") for e in index
                ]
                self.registries[gi] = (index, vids)
                self.counts[count_key] += len(vids)
            else:
                for node in nodes:
                    table: dict[tuple[int, tuple[int, ...]], int] = {}
                    serial = 0
                    for k in self.instants[node]:
                        for kappa in self.shifts:
                            table[(k, kappa)] = self.model.add_var(
                                f"z{gi}n{len(self.pair_vars)}_p{serial}", kind="binary"
                            )
                            serial += 1
                    self.pair_vars[id(node)] = table
                    self.counts[count_key] += serial

    # -- lookups ------------------------------------------------------------

    def var_at(self, node: Formula, k: int, kappa: tuple[int, ...]) -> int:
        if self.method == "reduced":
            index, vids = self.registries[self.node_group[id(node)]]
            return vids[index.lookup(index.key_of(k, kappa)).var_id]
        return self.pair_vars[id(node)][(k, kappa)]

    def value_of(self, node: Formula, k: int, kappa: tuple[int, ...]) -> _ValueForm:
        if isinstance(node, TrueNode):
            return _ValueForm.constant(1.0)
        if isinstance(node, Not):
            child = node.child
            if isinstance(child, TrueNode):
                return _ValueForm.constant(0.0)
            if isinstance(child, Pred):
                return _ValueForm.of_var(self.var_at(node, k, kappa))
            if isinstance(child, Until):
                return _ValueForm.negation(self.var_at(child, k, kappa))
            raise ValueError("normalized formulas only negate predicates, true, or until")
        return _ValueForm.of_var(self.var_at(node, k, kappa))

    # -- rows ----------------------------------------------------------------

    def _row(self, name: str, coeffs: dict[int, float], rel: str, rhs: float) -> None:
        self.model.add_constraint(name, coeffs, rel, rhs)
        self.counts["link_rows"] += 1

    def _conjunction(self, name: str, vid: int, parts: list[_ValueForm]) -> None:
        """vid = 1 iff every part is 1 (two-sided)."""
        sum_const = 0.0
        lower: dict[int, float] = {vid: 1.0}
        dead = False
        for idx, part in enumerate(parts):
            sum_const += part.const
            if part.var is None:
                if part.const < 0.5:
                    dead = True
                continue
            self._row(f"{name}u{idx}", {vid: 1.0, part.var: -part.coef}, "<=", part.const)
            lower[part.var] = lower.get(part.var, 0.0) - part.coef
        if dead:
            self._row(f"{name}z", {vid: 1.0}, "<=", 0.0)
        self._row(f"{name}l", lower, ">=", 1 - len(parts) + sum_const)

    def _disjunction(self, name: str, vid: int, parts: list[_ValueForm]) -> None:
        """vid = 1 iff at least one part is 1 (two-sided)."""
        upper: dict[int, float] = {vid: 1.0}
        sum_const = 0.0
        forced = False
        for idx, part in enumerate(parts):
            sum_const += part.const
            if part.var is None:
                if part.const > 0.5:
                    forced = True
                continue
            self._row(f"{name}d{idx}", {vid: 1.0, part.var: -part.coef}, ">=", part.const)
            upper[part.var] = upper.get(part.var, 0.0) - part.coef
        if forced:
            self._row(f"{name}o", {vid: 1.0}, ">=", 1.0)
        self._row(f"{name}u", upper, "<=", sum_const)

    def _entries(self, gi: int, nodes) -> list[tuple[str, int, int, tuple[int, ...], int]]:
        """(tag, serial, k, kappa, vid) for every variable of a group."""
        out = []
        if self.method == "reduced":
            index, vids = self.registries[gi]
            for e in index:
                out.append((f"{gi}k{_key_text(e.key)}", e.var_id, e.representative[0], e.representative[1], vids[e.var_id]))
        else:
            for ni, node in enumerate(nodes):
                table = self.pair_vars[id(node)]
                for serial, ((k, kappa), vid) in enumerate(table.items()):
                    out.append((f"{gi}n{ni}p{serial}", serial, k, kappa, vid))
        return out

    def emit(self) -> None:
        for gi, (kind, nodes, _) in enumerate(self.groups):
            if kind == "predicate":
                self._emit_predicate_group(gi, nodes)
            elif kind == "temporal":
                self._emit_temporal(gi, nodes[0])
            else:
                self._emit_boolean(gi, nodes[0])
        self._enforce_root()

    def _big_m_for(self, expr: AffineExpr) -> float:
        key = id(expr)
        if key not in self._ms:
            need = _expr_range_bound(expr, self.system, self.bound.theta2)
            if self.config.big_m is not None:
                if self.config.big_m < need + self.config.eps:
                    raise ValueError(
                        f"big_m {self.config.big_m} is below the required range bound "
                        f"{need + self.config.eps:.6g}; the encoding would be unsound"
                    )
                self._ms[key] = self.config.big_m
            else:
                self._ms[key] = 1.2 * max(need, 1.0)
        return self._ms[key]

    def _emit_predicate_group(self, gi: int, nodes) -> None:
        sample = nodes[0]
        negated = isinstance(sample, Not)
        pred = sample.child.pred if negated else sample.pred
        if pred.expr is None:
            raise ValueError(
                f"predicate {pred.label!r} is not affine; it can be counted and checked "
                "but not encoded"
            )
        expr = pred.expr
        if negated:
            expr = AffineExpr(
                tuple((a, c, -v) for a, c, v in expr.coeffs), -expr.const
            )
        big_m = self._big_m_for(pred.expr)
        eps = self.config.eps
        for tag, _, k, kappa, vid in self._entries(gi, nodes):
            if self.method == "reduced":
                index, _ = self.registries[gi]
                key = index.key_of(k, kappa)
            else:
                key = tuple(k + s for s in kappa)
            coeffs, const = _affine_coeffs(expr, key, self.x_ids, self.n_agents, self.limit)
            # value 1 forces expr >= eps; value 0 forces expr <= -eps
            up = dict(coeffs)
            up[vid] = up.get(vid, 0.0) - big_m
            self._row(f"p{tag}a", up, "<=", -eps - const)
            down = {v: -c for v, c in coeffs.items()}
            down[vid] = down.get(vid, 0.0) + big_m
            self._row(f"p{tag}b", down, "<=", big_m - eps + const)

    def _emit_temporal(self, gi: int, node: Formula) -> None:
        if isinstance(node, (Always, Eventually)):
            child = node.child
            for tag, _, k, kappa, vid in self._entries(gi, (node,)):
                parts = [self.value_of(child, k + t, kappa) for t in range(node.a, node.b + 1)]
                if isinstance(node, Always):
                    self._conjunction(f"g{tag}", vid, parts)
                else:
                    self._disjunction(f"f{tag}", vid, parts)
            return
        assert isinstance(node, Until)
        for tag, serial, k, kappa, vid in self._entries(gi, (node,)):
            window: list[_ValueForm] = []
            for t in range(node.a, node.b + 1):
                aux = self.model.add_var(f"w{tag}_t{t}", kind="binary")
                self.until_aux[(gi, serial, t)] = aux
                self.counts["until_aux"] += 1
                parts = [self.value_of(node.right, k + t, kappa)]
                parts.extend(self.value_of(node.left, k + s, kappa) for s in range(t + 1))
                self._conjunction(f"w{tag}t{t}", aux, parts)
                window.append(_ValueForm.of_var(aux))
            self._disjunction(f"uz{tag}", vid, window)

    def _emit_boolean(self, gi: int, node: Formula) -> None:
        for tag, _, k, kappa, vid in self._entries(gi, (node,)):
            parts = [self.value_of(c, k, kappa) for c in node.children]
            if isinstance(node, And):
                self._conjunction(f"b{tag}", vid, parts)
            else:
                self._disjunction(f"o{tag}", vid, parts)

    # -- root enforcement ----------------------------------------------------

    def _enforcement_targets(self, node: Formula, out: list[Formula]) -> None:
        if isinstance(node, TrueNode):
            return
        if isinstance(node, And) and id(node) in self.enforced:
            for c in node.children:
                self._enforcement_targets(c, out)
            return
        out.append(node)

    def _enforce_root(self) -> None:
        targets: list[Formula] = []
        self._enforcement_targets(self.phi, targets)
        serial = 0
        for ti, node in enumerate(targets):
            seen: set = set()
            for kappa in self.shifts:
                self.counts["root_raw_pairs"] += 1
                if isinstance(node, Or) and id(node) in self.enforced:
                    parts = [self.value_of(c, 0, kappa) for c in node.children]
                    sig = tuple((p.var, p.coef, p.const) for p in parts)
                    if sig in seen:
                        continue
                    seen.add(sig)
                    coeffs: dict[int, float] = {}
                    const = 0.0
                    for p in parts:
                        if p.var is None:
                            const += p.const
                        else:
                            coeffs[p.var] = coeffs.get(p.var, 0.0) + p.coef
                            const += p.const
                    self.model.add_constraint(f"root{ti}_{serial}", coeffs, ">=", 1.0 - const)
                else:
                    form = self.value_of(node, 0, kappa)
                    sig = (form.var, form.coef, form.const)
                    if sig in seen:
                        continue
                    seen.add(sig)
                    coeffs = {} if form.var is None else {form.var: form.coef}
                    self.model.add_constraint(
                        f"root{ti}_{serial}", coeffs, "=", 1.0 - form.const
                    )
                serial += 1
                self.counts["root_rows"] += 1


def _encode_stl(
    model: MipModel,
    phi: Formula,
    bound: ShiftBound,
    system: MultiAgentSystem,
    x_ids,
    T: int,
    config: EncoderConfig,
    method: str,
) -> dict[str, int]:
    enc = _StlEncoder(model, phi, bound, system, x_ids, T, config, method)
    enc.allocate()
    enc.emit()
    return enc.counts


# --- objectives ----------------------------------------------------------------


def attach_objective(prob: EncodedProblem, spec: ObjectiveSpec) -> None:
    """Install the minimization target on the problem's model."""
    model = prob.model
    aux = 0
    rows = 0
    if spec.kind == "feasibility":
        model.set_objective({})
    elif spec.kind == "input_l1":
        linear: dict[int, float] = {}
        for (agent, k, coord), uid in sorted(prob.u_ids.items()):
            tid = model.add_var(f"a1_{agent + 1}_{k}_{coord}", 0.0, INF)
            model.add_constraint(f"a1p_{agent + 1}_{k}_{coord}", {uid: 1.0, tid: -1.0}, "<=", 0.0)
            model.add_constraint(f"a1n_{agent + 1}_{k}_{coord}", {uid: -1.0, tid: -1.0}, "<=", 0.0)
            linear[tid] = 1.0
            aux += 1
            rows += 2
        model.set_objective(linear)
    elif spec.kind == "input_linf":
        linear = {}
        peaks: dict[int, int] = {}
        for agent in range(prob.system.n_agents):
            tid = model.add_var(f"ainf_{agent + 1}", 0.0, INF)
            peaks[agent] = tid
            linear[tid] = 1.0
            aux += 1
        for (agent, k, coord), uid in sorted(prob.u_ids.items()):
            tid = peaks[agent]
            model.add_constraint(f"aip_{agent + 1}_{k}_{coord}", {uid: 1.0, tid: -1.0}, "<=", 0.0)
            model.add_constraint(f"ain_{agent + 1}_{k}_{coord}", {uid: -1.0, tid: -1.0}, "<=", 0.0)
            rows += 2
        model.set_objective(linear)
    elif spec.kind == "custom_linear":
        name_to_id = {v.name: i for i, v in enumerate(model.vars)}
        linear = {}
        for name, coef in spec.terms.items():
            if name not in name_to_id:
                raise ValueError(f"objective references unknown variable {name!r}")
            linear[name_to_id[name]] = float(coef)
        model.set_objective(linear)
    else:  # exported_quadratic
        name_to_id = {v.name: i for i, v in enumerate(model.vars)}
        linear = {}
        for name, coef in spec.terms.items():
            if name not in name_to_id:
                raise ValueError(f"objective references unknown variable {name!r}")
            linear[name_to_id[name]] = float(coef)
        quad = []
        for na, nb, coef in spec.quadratic:
            if na not in name_to_id or nb not in name_to_id:
                raise ValueError(f"objective references unknown variable {na!r} or {nb!r}")
            quad.append((name_to_id[na], name_to_id[nb], float(coef)))
        model.set_objective(linear, quadratic=quad)
    prob.counts["objective_aux"] = aux
    prob.counts["objective_rows"] = rows


# --- entry point -----------------------------------------------------------------


def encode(
    system: MultiAgentSystem,
    spec_obj,
    bound: ShiftBound,
    T: int,
    config: EncoderConfig | None = None,
    objective: ObjectiveSpec | None = None,
    method: str = "reduced",
    name: str = "model",
) -> EncodedProblem:
    """Build the full model: dynamics, task or formula rows, objective.

    spec_obj is either a ConstraintTask or a Formula (normalized here). T is
    the synthesis horizon; every task instant or formula horizon must fit in
    it. method "reduced" deduplicates effective-index keys; "naive" encodes
    every (instant, shift) pair separately.
    """
    if method not in ("reduced", "naive"):
        raise ValueError(f"unknown method {method!r}")
    config = config or EncoderConfig()
    objective = objective or ObjectiveSpec()
    if T < 1:
        raise ValueError("the horizon T must be at least 1")
    for i, agent in enumerate(system.agents):
        lo, hi = agent.state_box[:, 0], agent.state_box[:, 1]
        if np.any(agent.x0 < lo - 1e-9) or np.any(agent.x0 > hi + 1e-9):
            raise ValueError(f"agent {i + 1} starts outside its state box")

    model = MipModel(name)
    ext = bound.theta2
    x_ids, u_ids, dyn_rows = _encode_dynamics(model, system, T, ext)

    counts: dict[str, int | str] = {"method": method, "mode": config.mode, "dyn_rows": dyn_rows}

    if isinstance(spec_obj, ConstraintTask):
        if spec_obj.max_instant > T:
            raise ValueError(
                f"task needs instant {spec_obj.max_instant} but the horizon is {T}"
            )
        _validate_references(spec_obj, system)
        task_rows = _encode_task(model, spec_obj, bound, system, x_ids, T, config, method)
        counts.update(
            task_rows=task_rows,
            binaries_predicate=0,
            binaries_temporal=0,
            binaries_boolean=0,
            binaries_main=0,
            until_aux=0,
        )
        kind = "task"
    elif isinstance(spec_obj, Formula):
        phi = normalize(spec_obj)
        h = horizon(phi)
        if h > T:
            raise ValueError(f"formula horizon {h} exceeds the synthesis horizon {T}")
        _validate_references(phi, system)
        stl_counts = _encode_stl(model, phi, bound, system, x_ids, T, config, method)
        counts.update(stl_counts)
        counts["binaries_main"] = (
            stl_counts["binaries_predicate"]
            + stl_counts["binaries_temporal"]
            + stl_counts["binaries_boolean"]
        )
        counts["task_rows"] = 0
        spec_obj = phi
        kind = "stl"
    else:
        raise TypeError(f"cannot encode {type(spec_obj).__name__}; expected ConstraintTask or Formula")

    prob = EncodedProblem(
        model, system, T, bound, config, method, kind, spec_obj, x_ids, u_ids, counts
    )
    attach_objective(prob, objective)
    return prob
