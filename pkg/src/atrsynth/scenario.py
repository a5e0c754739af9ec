"""Scenario files: JSON descriptions of a synthesis problem.

A scenario bundles a multi-agent system, a task (constraint pieces or a
formula), a default shift bound, a horizon, and an objective. Predicates are
written either as expression strings over ``x<agent>_<coord>`` or as named
region templates (boxes, norm balls) expanded into affine half-planes at
load time.

Expression strings accept ``+ - * /``, parentheses, and the calls ``abs``,
``min``, ``max``, ``sqrt``. Whatever reduces to an affine function of the
state is extracted as such; anything else is kept as a plain evaluator so
that it can still be counted and checked by the brute-force routines, just
not encoded.
"""

from __future__ import annotations

import ast
import copy
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .encoder import ObjectiveSpec
from .formula import AffineExpr, And, Formula, Pred, Predicate, parse_formula
from .semantics import ConstraintTask, TaskPiece
from .shiftsets import ShiftBound
from .system import AgentModel, MultiAgentSystem


class ScenarioError(ValueError):
    """A scenario file failed validation."""


_VAR_RE = re.compile(r"^x(\d+)(?:_(\d+))?$")
_RESERVED_LABELS = {"true", "U", "G", "F"}
_FUNCS: dict[str, Callable] = {"abs": abs, "min": min, "max": max, "sqrt": math.sqrt}


# --- expression strings ----------------------------------------------------------


def _validate_tree(tree: ast.AST, where: str) -> list[str]:
    """Whitelist-check an expression AST; return the variable names used."""
    names: list[str] = []
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Constant, ast.Load)):
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ScenarioError(f"{where}: non-numeric constant {node.value!r}")
        elif isinstance(node, ast.BinOp):
            if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)):
                raise ScenarioError(f"{where}: operator {type(node.op).__name__} not allowed")
        elif isinstance(node, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)):
            pass
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ScenarioError(f"{where}: unary {type(node.op).__name__} not allowed")
        elif isinstance(node, (ast.UAdd, ast.USub)):
            pass
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ScenarioError(f"{where}: only calls to {sorted(_FUNCS)} are allowed")
            if node.keywords:
                raise ScenarioError(f"{where}: keyword arguments are not allowed")
        elif isinstance(node, ast.Name):
            if node.id in _FUNCS:
                continue
            if _VAR_RE.match(node.id) is None:
                raise ScenarioError(
                    f"{where}: unknown name {node.id!r}; variables look like x1 or x2_0"
                )
            names.append(node.id)
        else:
            raise ScenarioError(f"{where}: {type(node).__name__} not allowed in expressions")
    return names


def _var_key(name: str, system: MultiAgentSystem, where: str) -> tuple[int, int]:
    m = _VAR_RE.match(name)
    agent, coord = int(m.group(1)), int(m.group(2) or 0)
    if not (1 <= agent <= system.n_agents):
        raise ScenarioError(f"{where}: {name} references agent {agent}, but the system has {system.n_agents}")
    dim = system.state_dims[agent - 1]
    if not (0 <= coord < dim):
        raise ScenarioError(f"{where}: {name} references coordinate {coord}, but agent {agent} has {dim} states")
    return agent, coord


def _affine_of(node: ast.AST) -> tuple[dict[str, float], float] | None:
    """Affine form {var name: coef}, const of an AST node, or None."""
    if isinstance(node, ast.Expression):
        return _affine_of(node.body)
    if isinstance(node, ast.Constant):
        return {}, float(node.value)
    if isinstance(node, ast.Name):
        return {node.id: 1.0}, 0.0
    if isinstance(node, ast.UnaryOp):
        inner = _affine_of(node.operand)
        if inner is None:
            return None
        sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
        return {k: sign * v for k, v in inner[0].items()}, sign * inner[1]
    if isinstance(node, ast.BinOp):
        left, right = _affine_of(node.left), _affine_of(node.right)
        if left is None or right is None:
            return None
        if isinstance(node.op, (ast.Add, ast.Sub)):
            sign = 1.0 if isinstance(node.op, ast.Add) else -1.0
            coeffs = dict(left[0])
            for k, v in right[0].items():
                coeffs[k] = coeffs.get(k, 0.0) + sign * v
            return coeffs, left[1] + sign * right[1]
        if isinstance(node.op, ast.Mult):
            if not left[0]:
                scale, lin = left[1], right
            elif not right[0]:
                scale, lin = right[1], left
            else:
                return None
            return {k: scale * v for k, v in lin[0].items()}, scale * lin[1]
        if isinstance(node.op, ast.Div):
            if right[0] or right[1] == 0.0:
                return None
            return {k: v / right[1] for k, v in left[0].items()}, left[1] / right[1]
    return None


def parse_expr(
    text: str, system: MultiAgentSystem, where: str = "expression"
) -> tuple[AffineExpr | None, Callable | None]:
    """Parse an expression string.

    Returns ``(affine, None)`` when the text reduces to an affine function of
    the stacked state, else ``(None, fn)`` with a plain evaluator over the
    stacked state vector.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as e:
        raise ScenarioError(f"{where}: cannot parse {text!r}: {e.msg}") from None
    names = _validate_tree(tree, where)
    keys = {name: _var_key(name, system, where) for name in names}

    affine = _affine_of(tree)
    if affine is not None:
        coeffs, const = affine
        terms: dict[tuple[int, int], float] = {}
        for name, coef in coeffs.items():
            key = keys[name]
            terms[key] = terms.get(key, 0.0) + coef
        return AffineExpr.from_terms(terms, const), None

    offsets = system.state_offsets
    flat = {name: offsets[a - 1] + c for name, (a, c) in keys.items()}
    code = compile(tree, f"<{where}>", "eval")

    def fn(stacked, _code=code, _flat=flat):
        env = dict(_FUNCS)
        for name, idx in _flat.items():
            env[name] = float(stacked[idx])
        return float(eval(_code, {"__builtins__": {}}, env))

    return None, fn


# --- region templates ------------------------------------------------------------


def _unit_directions(sides: int) -> list[tuple[float, float]]:
    return [
        (math.cos(2.0 * math.pi * j / sides), math.sin(2.0 * math.pi * j / sides))
        for j in range(sides)
    ]


def expand_template(spec: dict, system: MultiAgentSystem, where: str) -> list[AffineExpr]:
    """Expand a region template into affine members, each required >= 0."""
    kind = spec.get("template")
    if kind == "box":
        agent = int(spec["agent"])
        lo, hi = list(spec["lo"]), list(spec["hi"])
        coords = [int(c) for c in spec.get("coords", range(len(lo)))]
        if not (len(lo) == len(hi) == len(coords)):
            raise ScenarioError(f"{where}: box needs matching lo/hi/coords lengths")
        members = []
        for c, l, h in zip(coords, lo, hi):
            members.append(AffineExpr.from_terms({(agent, c): 1.0}, -float(l)))
            members.append(AffineExpr.from_terms({(agent, c): -1.0}, float(h)))
        return members
    if kind in ("linf_ball", "l1_ball"):
        agent = int(spec["agent"])
        center = [float(v) for v in spec["center"]]
        radius = float(spec["radius"])
        coords = [int(c) for c in spec.get("coords", range(len(center)))]
        if len(coords) != len(center):
            raise ScenarioError(f"{where}: center/coords length mismatch")
        members = []
        if kind == "linf_ball":
            for c, mid in zip(coords, center):
                members.append(AffineExpr.from_terms({(agent, c): -1.0}, mid + radius))
                members.append(AffineExpr.from_terms({(agent, c): 1.0}, radius - mid))
        else:
            for signs in np.ndindex(*([2] * len(coords))):
                terms = {}
                const = radius
                for s, c, mid in zip(signs, coords, center):
                    sign = 1.0 if s else -1.0
                    terms[(agent, c)] = -sign
                    const += sign * mid
                members.append(AffineExpr.from_terms(terms, const))
        return members
    if kind == "l2_ball_octagon":
        sides = int(spec.get("sides", 8))
        if sides < 3:
            raise ScenarioError(f"{where}: a polygon needs at least 3 sides")
        radius = float(spec["radius"])
        apothem = radius * math.cos(math.pi / sides)
        members = []
        if "agents" in spec:
            a1, a2 = (int(a) for a in spec["agents"])
            cx, cy = (int(c) for c in spec.get("coords", (0, 1)))
            for dx, dy in _unit_directions(sides):
                terms = {
                    (a1, cx): -dx,
                    (a1, cy): -dy,
                    (a2, cx): dx,
                    (a2, cy): dy,
                }
                members.append(AffineExpr.from_terms(terms, apothem))
        else:
            agent = int(spec["agent"])
            center = [float(v) for v in spec["center"]]
            cx, cy = (int(c) for c in spec.get("coords", (0, 1)))
            for dx, dy in _unit_directions(sides):
                terms = {(agent, cx): -dx, (agent, cy): -dy}
                members.append(
                    AffineExpr.from_terms(terms, apothem + dx * center[0] + dy * center[1])
                )
        return members
    raise ScenarioError(f"{where}: unknown template {kind!r}")


def _validate_member_agents(members: list[AffineExpr], system: MultiAgentSystem, where: str):
    for expr in members:
        for agent, coord, _ in expr.coeffs:
            if not (1 <= agent <= system.n_agents):
                raise ScenarioError(f"{where}: references agent {agent}, but the system has {system.n_agents}")
            if not (0 <= coord < system.state_dims[agent - 1]):
                raise ScenarioError(
                    f"{where}: coordinate {coord} is out of range for agent {agent}"
                )


# --- scenario object -------------------------------------------------------------


@dataclass
class Scenario:
    """A loaded synthesis problem, plus its normalized JSON form."""

    name: str
    system: MultiAgentSystem
    T: int
    bound: ShiftBound
    kind: str  # "constraint" or "stl"
    task: ConstraintTask | None
    formula: Formula | None
    objective: ObjectiveSpec
    data: dict

    @property
    def spec_obj(self):
        return self.task if self.kind == "constraint" else self.formula

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.data, indent=2) + "\n")


def _load_system(block, where: str = "system") -> MultiAgentSystem:
    if not isinstance(block, dict) or "agents" not in block:
        raise ScenarioError(f"{where}: expected an object with an 'agents' list")
    agents = []
    for i, spec in enumerate(block["agents"]):
        try:
            agents.append(
                AgentModel(
                    A=np.asarray(spec["A"], dtype=float),
                    B=np.asarray(spec["B"], dtype=float),
                    state_box=np.asarray(spec["state_box"], dtype=float),
                    input_box=np.asarray(spec["input_box"], dtype=float),
                    x0=np.asarray(spec["x0"], dtype=float),
                )
            )
        except KeyError as e:
            raise ScenarioError(f"{where}: agent {i + 1} is missing field {e.args[0]!r}") from None
        except ValueError as e:
            raise ScenarioError(f"{where}: agent {i + 1}: {e}") from None
    return MultiAgentSystem(tuple(agents))


def _load_predicates(
    block: dict, system: MultiAgentSystem
) -> dict[str, tuple[list[AffineExpr], Callable | None]]:
    """label -> (affine members, fallback evaluator). Exactly one of the two is set."""
    out: dict[str, tuple[list[AffineExpr], Callable | None]] = {}
    for label, spec in (block or {}).items():
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", label):
            raise ScenarioError(f"predicate label {label!r} is not an identifier")
        if label in _RESERVED_LABELS:
            raise ScenarioError(f"predicate label {label!r} collides with formula syntax")
        where = f"predicate {label!r}"
        if isinstance(spec, str):
            spec = {"expr": spec}
        if not isinstance(spec, dict):
            raise ScenarioError(f"{where}: expected an expression string or an object")
        if "expr" in spec:
            affine, fn = parse_expr(spec["expr"], system, where)
            out[label] = ([affine] if affine is not None else [], fn)
        elif "template" in spec:
            members = expand_template(spec, system, where)
            _validate_member_agents(members, system, where)
            out[label] = (members, None)
        else:
            raise ScenarioError(f"{where}: needs an 'expr' or a 'template'")
    return out


def _parse_instants(obj, where: str) -> tuple[int, ...]:
    if isinstance(obj, dict) and "range" in obj:
        rng = obj["range"]
        if len(rng) not in (2, 3):
            raise ScenarioError(f"{where}: range needs [first, last] or [first, last, step]")
        first, last = int(rng[0]), int(rng[1])
        step = int(rng[2]) if len(rng) == 3 else 1
        if step < 1 or last < first:
            raise ScenarioError(f"{where}: empty or backwards range")
        return tuple(range(first, last + 1, step))
    if isinstance(obj, list) and obj and all(isinstance(v, int) for v in obj):
        return tuple(sorted(set(obj)))
    raise ScenarioError(f"{where}: instants must be an int list or {{'range': [a, b]}}")


def _load_task(block: dict, predicates, system: MultiAgentSystem) -> ConstraintTask:
    pieces = []
    for q, spec in enumerate(block.get("pieces", [])):
        label = spec.get("label", f"piece{q + 1}")
        where = f"piece {label!r}"
        instants = _parse_instants(spec.get("instants"), where)
        members = []
        for member in spec.get("members", []):
            if not isinstance(member, str):
                raise ScenarioError(f"{where}: members must be label or expression strings")
            if member in predicates:
                affines, fn = predicates[member]
                members.extend(affines if affines else [fn])
            else:
                affine, fn = parse_expr(member, system, where)
                members.append(affine if affine is not None else fn)
        if not members:
            raise ScenarioError(f"{where}: needs at least one member")
        pieces.append(TaskPiece(tuple(members), instants, label))
    if not pieces:
        raise ScenarioError("task: needs at least one piece")
    return ConstraintTask(tuple(pieces))


def _load_formula(block: dict, predicates) -> Formula:
    text = block.get("formula")
    if not isinstance(text, str) or not text.strip():
        raise ScenarioError("task: an stl task needs a 'formula' string")
    bindings: dict[str, Formula | Predicate] = {}
    for label, (affines, fn) in predicates.items():
        if fn is not None:
            bindings[label] = Predicate(label, None, fn=fn)
        elif len(affines) == 1:
            bindings[label] = Predicate(label, affines[0])
        else:
            parts = tuple(
                Pred(Predicate(f"{label}_{j}", expr)) for j, expr in enumerate(affines)
            )
            bindings[label] = And(parts)
    try:
        return parse_formula(text, bindings)
    except ValueError as e:
        raise ScenarioError(f"task formula: {e}") from None


def _quadratic_from_templates(block: dict, system: MultiAgentSystem, T: int):
    quad: list[tuple[str, str, float]] = []
    for t, spec in enumerate(block.get("templates", [])):
        where = f"objective template {t}"
        vars_kind = spec.get("vars")
        weight = float(spec.get("weight", 1.0))
        agents = [int(a) for a in spec.get("agents", range(1, system.n_agents + 1))]
        if vars_kind == "input":
            dims, prefix, last = system.input_dims, "u", T - 1
        elif vars_kind == "state":
            dims, prefix, last = system.state_dims, "x", T
        else:
            raise ScenarioError(f"{where}: 'vars' must be 'input' or 'state'")
        for agent in agents:
            if not (1 <= agent <= system.n_agents):
                raise ScenarioError(f"{where}: agent {agent} out of range")
            coords = [int(c) for c in spec.get("coords", range(dims[agent - 1]))]
            for k in range(last + 1):
                for c in coords:
                    if not (0 <= c < dims[agent - 1]):
                        raise ScenarioError(f"{where}: coordinate {c} out of range for agent {agent}")
                    name = f"{prefix}{agent}_{k}_{c}"
                    quad.append((name, name, weight))
    for item in block.get("quadratic", []):
        na, nb, coef = item
        quad.append((str(na), str(nb), float(coef)))
    return tuple(quad)


def _load_objective(block, system: MultiAgentSystem, T: int) -> ObjectiveSpec:
    if block is None:
        return ObjectiveSpec()
    if isinstance(block, str):
        block = {"kind": block}
    kind = block.get("kind", "feasibility")
    terms = {str(k): float(v) for k, v in block.get("terms", {}).items()}
    quad = ()
    if kind == "exported_quadratic":
        quad = _quadratic_from_templates(block, system, T)
        if not quad:
            raise ScenarioError("objective: exported_quadratic needs templates or quadratic terms")
    try:
        return ObjectiveSpec(kind, terms, quad)
    except ValueError as e:
        raise ScenarioError(f"objective: {e}") from None


def scenario_from_dict(data: dict, name: str | None = None) -> Scenario:
    """Validate a scenario dictionary and build the domain objects."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    data = copy.deepcopy(data)
    name = str(data.get("name") or name or "scenario")
    data["name"] = name

    for field_name in ("system", "task", "horizon", "bound"):
        if field_name not in data:
            raise ScenarioError(f"scenario is missing the {field_name!r} block")

    system = _load_system(data["system"])
    try:
        T = int(data["horizon"])
    except (TypeError, ValueError):
        raise ScenarioError("horizon must be an integer") from None
    if T < 1:
        raise ScenarioError("horizon must be at least 1")

    bound_raw = data["bound"]
    if not (isinstance(bound_raw, list) and len(bound_raw) == 2):
        raise ScenarioError("bound must be [theta1, theta2]")
    try:
        bound = ShiftBound(int(bound_raw[0]), int(bound_raw[1]))
    except ValueError as e:
        raise ScenarioError(str(e)) from None

    predicates = _load_predicates(data.get("predicates"), system)

    task_block = data["task"]
    if not isinstance(task_block, dict):
        raise ScenarioError("task must be an object")
    kind = task_block.get("kind")
    if kind == "constraint":
        task = _load_task(task_block, predicates, system)
        formula = None
        if task.max_instant > T:
            raise ScenarioError(
                f"task needs instant {task.max_instant} but the horizon is {T}"
            )
    elif kind == "stl":
        task = None
        formula = _load_formula(task_block, predicates)
    else:
        raise ScenarioError("task kind must be 'constraint' or 'stl'")

    objective = _load_objective(data.get("objective"), system, T)
    return Scenario(name, system, T, bound, kind, task, formula, objective, data)


def load_scenario(path) -> Scenario:
    """Load and validate a scenario JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError(f"no such scenario file: {path}") from None
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path} is not valid JSON: {e}") from None
    return scenario_from_dict(data, name=path.stem)


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package."""
    root = Path(__file__).resolve().parent / "scenarios"
    path = root / f"{name}.json"
    if not path.exists():
        known = ", ".join(sorted(p.stem for p in root.glob("*.json")))
        raise ScenarioError(f"no bundled scenario {name!r}; available: {known}")
    return path


def load_bundled(name: str) -> Scenario:
    return load_scenario(bundled_scenario_path(name))
