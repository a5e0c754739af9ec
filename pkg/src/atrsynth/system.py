"""Multi-agent discrete-time linear systems and time-shifted trajectory reads.

Each agent evolves as ``x_i(k+1) = A_i x_i(k) + B_i u_i(k)`` inside a state
box, with inputs in an input box. A trajectory stores the synthesized states
on ``[0, T]`` plus an extension of zero-input steps used when a positive time
shift reads past the horizon; negative effective indices clamp to the initial
state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class SimulationError(ValueError):
    pass


class ExtensionExhausted(LookupError):
    """A shifted read fell past the stored zero-input extension."""


@dataclass(frozen=True)
class AgentModel:
    """One agent: dynamics matrices, boxes, and initial state."""

    A: np.ndarray
    B: np.ndarray
    state_box: np.ndarray  # (n, 2) rows [lo, hi]
    input_box: np.ndarray  # (m, 2)
    x0: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "state_box", np.asarray(self.state_box, dtype=float))
        object.__setattr__(self, "input_box", np.asarray(self.input_box, dtype=float))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        n, m = self.dims
        if A.shape != (n, n):
            raise ValueError(f"A must be square ({A.shape})")
        if B.shape != (n, m):
            raise ValueError(f"B shape {B.shape} inconsistent with A and input box")
        if self.state_box.shape != (n, 2) or np.any(self.state_box[:, 0] > self.state_box[:, 1]):
            raise ValueError("state box must be (n, 2) with lo <= hi")
        if self.input_box.shape != (m, 2) or np.any(self.input_box[:, 0] > self.input_box[:, 1]):
            raise ValueError("input box must be (m, 2) with lo <= hi")
        if self.x0.shape != (n,):
            raise ValueError("x0 dimension mismatch")

    @property
    def dims(self) -> tuple[int, int]:
        return self.A.shape[0], self.input_box.shape[0] if self.input_box.ndim == 2 else self.B.shape[1]


@dataclass(frozen=True)
class MultiAgentSystem:
    agents: tuple[AgentModel, ...]

    def __post_init__(self):
        if not self.agents:
            raise ValueError("system needs at least one agent")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def state_dims(self) -> list[int]:
        return [a.A.shape[0] for a in self.agents]

    @property
    def input_dims(self) -> list[int]:
        return [a.B.shape[1] for a in self.agents]

    @property
    def state_offsets(self) -> list[int]:
        out, acc = [], 0
        for d in self.state_dims:
            out.append(acc)
            acc += d
        return out

    @property
    def input_offsets(self) -> list[int]:
        out, acc = [], 0
        for d in self.input_dims:
            out.append(acc)
            acc += d
        return out

    @property
    def n_states(self) -> int:
        return sum(self.state_dims)

    @property
    def n_inputs(self) -> int:
        return sum(self.input_dims)

    @property
    def x0(self) -> np.ndarray:
        return np.concatenate([a.x0 for a in self.agents])

    def extension_boxes(self, steps: int) -> np.ndarray:
        """Interval bounds for zero-input propagation of the state boxes.

        Returns (steps + 1, n, 2): row p bounds A^p x over x in the box,
        stacked across agents. Used for extension variable bounds and the
        default big-M.
        """
        boxes = np.vstack([a.state_box for a in self.agents])
        out = np.empty((steps + 1, boxes.shape[0], 2))
        out[0] = boxes
        cur = boxes
        for p in range(1, steps + 1):
            nxt = np.empty_like(cur)
            off = 0
            for a in self.agents:
                n = a.A.shape[0]
                lo, hi = cur[off : off + n, 0], cur[off : off + n, 1]
                Ap, An = np.maximum(a.A, 0.0), np.minimum(a.A, 0.0)
                nxt[off : off + n, 0] = Ap @ lo + An @ hi
                nxt[off : off + n, 1] = Ap @ hi + An @ lo
                off += n
            out[p] = nxt
            cur = nxt
        return out


@dataclass(frozen=True)
class Trajectory:
    """States on [0, T], inputs on [0, T-1], and a zero-input extension.

    ``states`` is (T+1, n) stacked across agents; ``extension`` is (E, n)
    holding the states at T+1 .. T+E obtained with zero input.
    """

    T: int
    states: np.ndarray
    inputs: np.ndarray
    extension: np.ndarray
    state_dims: tuple[int, ...]
    input_dims: tuple[int, ...]

    @property
    def n_agents(self) -> int:
        return len(self.state_dims)

    @property
    def state_offsets(self) -> list[int]:
        out, acc = [], 0
        for d in self.state_dims:
            out.append(acc)
            acc += d
        return out

    @property
    def extension_steps(self) -> int:
        return self.extension.shape[0]

    def agent_state(self, agent: int, index: int) -> np.ndarray:
        """State block of ``agent`` (0-based) at raw effective index ``index``.

        Negative indices clamp to the initial state; indices past T read the
        zero-input extension.
        """
        off = self.state_offsets[agent]
        n = self.state_dims[agent]
        if index < 0:
            index = 0
        if index <= self.T:
            return self.states[index, off : off + n]
        p = index - self.T
        if p > self.extension_steps:
            raise ExtensionExhausted(
                f"index {index} needs extension step {p}, only {self.extension_steps} stored"
            )
        return self.extension[p - 1, off : off + n]

    def shifted_state(self, k: int, kappa: tuple[int, ...]) -> np.ndarray:
        """Stacked state read with per-agent shifts: agent i at index k + kappa[i]."""
        if len(kappa) != self.n_agents:
            raise ValueError("shift vector length mismatch")
        return np.concatenate(
            [self.agent_state(i, k + kappa[i]) for i in range(self.n_agents)]
        )


def effective_index(k: int, kappa_i: int, T: int, mode: str = "raw") -> int:
    """Effective time index an agent reads under shift kappa_i at instant k.

    ``raw`` keeps the unclamped sum (indices < 0 still read x(0) but stay
    distinct as keys); ``clamped`` maps all below-zero indices to 0.
    """
    idx = k + kappa_i
    if mode == "clamped":
        return max(idx, 0)
    if mode != "raw":
        raise ValueError(f"unknown index mode {mode!r}")
    return idx


def simulate(
    sys: MultiAgentSystem,
    inputs: np.ndarray,
    T: int | None = None,
    extension_steps: int = 0,
    check_boxes: bool = True,
    box_tol: float = 1e-6,
) -> Trajectory:
    """Roll the dynamics forward from x0 under ``inputs`` ((T, m) stacked).

    Box violations raise SimulationError naming the instant and coordinate.
    ``extension_steps`` zero-input steps past T are materialized for shifted
    reads beyond the horizon.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if T is None:
        T = inputs.shape[0]
    if inputs.shape != (T, sys.n_inputs):
        raise SimulationError(f"inputs must be ({T}, {sys.n_inputs}), got {inputs.shape}")

    states = np.empty((T + 1, sys.n_states))
    states[0] = sys.x0
    s_off, u_off = sys.state_offsets, sys.input_offsets
    for k in range(T):
        for i, agent in enumerate(sys.agents):
            n, m = agent.A.shape[0], agent.B.shape[1]
            x = states[k, s_off[i] : s_off[i] + n]
            u = inputs[k, u_off[i] : u_off[i] + m]
            states[k + 1, s_off[i] : s_off[i] + n] = agent.A @ x + agent.B @ u

    if check_boxes:
        _check_boxes(sys, states, inputs, box_tol)

    extension = np.empty((extension_steps, sys.n_states))
    cur = states[T]
    for p in range(extension_steps):
        nxt = np.empty(sys.n_states)
        for i, agent in enumerate(sys.agents):
            n = agent.A.shape[0]
            nxt[s_off[i] : s_off[i] + n] = agent.A @ cur[s_off[i] : s_off[i] + n]
        extension[p] = nxt
        cur = nxt

    return Trajectory(
        T=T,
        states=states,
        inputs=inputs,
        extension=extension,
        state_dims=tuple(sys.state_dims),
        input_dims=tuple(sys.input_dims),
    )


def _check_boxes(sys: MultiAgentSystem, states: np.ndarray, inputs: np.ndarray, tol: float) -> None:
    s_off, u_off = sys.state_offsets, sys.input_offsets
    for i, agent in enumerate(sys.agents):
        n, m = agent.A.shape[0], agent.B.shape[1]
        for k in range(states.shape[0]):
            x = states[k, s_off[i] : s_off[i] + n]
            lo, hi = agent.state_box[:, 0], agent.state_box[:, 1]
            bad = np.where((x < lo - tol) | (x > hi + tol))[0]
            if bad.size:
                c = int(bad[0])
                raise SimulationError(
                    f"state box violated at k={k}, agent {i + 1}, coordinate {c}: "
                    f"{x[c]:g} outside [{lo[c]:g}, {hi[c]:g}]"
                )
        for k in range(inputs.shape[0]):
            u = inputs[k, u_off[i] : u_off[i] + m]
            lo, hi = agent.input_box[:, 0], agent.input_box[:, 1]
            bad = np.where((u < lo - tol) | (u > hi + tol))[0]
            if bad.size:
                c = int(bad[0])
                raise SimulationError(
                    f"input box violated at k={k}, agent {i + 1}, coordinate {c}: "
                    f"{u[c]:g} outside [{lo[c]:g}, {hi[c]:g}]"
                )


def extend_trajectory(traj: Trajectory, sys: MultiAgentSystem, extension_steps: int) -> Trajectory:
    """Return a trajectory whose zero-input extension covers ``extension_steps``."""
    if traj.extension_steps >= extension_steps:
        return traj
    s_off = sys.state_offsets
    rows = list(traj.extension)
    cur = rows[-1] if rows else traj.states[traj.T]
    for _ in range(extension_steps - len(rows)):
        nxt = np.empty(sys.n_states)
        for i, agent in enumerate(sys.agents):
            n = agent.A.shape[0]
            nxt[s_off[i] : s_off[i] + n] = agent.A @ cur[s_off[i] : s_off[i] + n]
        rows.append(nxt)
        cur = nxt
    return Trajectory(
        T=traj.T,
        states=traj.states,
        inputs=traj.inputs,
        extension=np.array(rows),
        state_dims=traj.state_dims,
        input_dims=traj.input_dims,
    )


# --- delimited I/O ---------------------------------------------------------
#
# States file: header k,agent,coord,value with one row per scalar; extension
# rows use k > T. Inputs live in a second file with the same layout.


def write_trajectory(traj: Trajectory, states_path: str | Path, inputs_path: str | Path) -> None:
    states_path, inputs_path = Path(states_path), Path(inputs_path)
    with states_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "agent", "coord", "value"])
        offs = traj.state_offsets
        for k in range(traj.T + 1 + traj.extension_steps):
            row_src = traj.states[k] if k <= traj.T else traj.extension[k - traj.T - 1]
            for i, d in enumerate(traj.state_dims):
                for c in range(d):
                    w.writerow([k, i + 1, c, repr(float(row_src[offs[i] + c]))])
    in_offs, acc = [], 0
    for d in traj.input_dims:
        in_offs.append(acc)
        acc += d
    with inputs_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "agent", "coord", "value"])
        for k in range(traj.inputs.shape[0]):
            for i, d in enumerate(traj.input_dims):
                for c in range(d):
                    w.writerow([k, i + 1, c, repr(float(traj.inputs[k, in_offs[i] + c]))])


def read_trajectory(
    sys: MultiAgentSystem, states_path: str | Path, inputs_path: str | Path | None = None
) -> Trajectory:
    """Load a trajectory written by write_trajectory and validate its shape.

    When the inputs file is present the states are checked against the
    dynamics; the stored extension rows (k > T) are checked against zero-input
    propagation.
    """
    cells: dict[tuple[int, int, int], float] = {}
    with Path(states_path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["k", "agent", "coord", "value"]:
            raise SimulationError(f"malformed states file header: {reader.fieldnames}")
        for row in reader:
            try:
                cells[(int(row["k"]), int(row["agent"]), int(row["coord"]))] = float(row["value"])
            except (TypeError, KeyError, ValueError) as exc:
                raise SimulationError(f"malformed states row: {row}") from exc
    if not cells:
        raise SimulationError("states file has no rows")

    ks = sorted({k for k, _, _ in cells})
    offs, dims = sys.state_offsets, sys.state_dims

    inputs = None
    if inputs_path is not None and Path(inputs_path).exists():
        in_cells: dict[tuple[int, int, int], float] = {}
        with Path(inputs_path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["k", "agent", "coord", "value"]:
                raise SimulationError(f"malformed inputs file header: {reader.fieldnames}")
            for row in reader:
                try:
                    in_cells[(int(row["k"]), int(row["agent"]), int(row["coord"]))] = float(row["value"])
                except (TypeError, KeyError, ValueError) as exc:
                    raise SimulationError(f"malformed inputs row: {row}") from exc
        T = max((k for k, _, _ in in_cells), default=-1) + 1
        u_offs = sys.input_offsets
        inputs = np.zeros((T, sys.n_inputs))
        for (k, agent, coord), v in in_cells.items():
            if not (0 <= k < T and 1 <= agent <= sys.n_agents and 0 <= coord < sys.input_dims[agent - 1]):
                raise SimulationError(f"inputs row out of range: k={k}, agent={agent}, coord={coord}")
            inputs[k, u_offs[agent - 1] + coord] = v
    else:
        T = ks[-1]  # no way to separate extension rows; treat the last k as T

    if inputs is not None:
        ext_steps = ks[-1] - T
    else:
        ext_steps = 0
    if ks != list(range(T + 1 + ext_steps)):
        raise SimulationError("states file has missing instants")

    full = np.zeros((len(ks), sys.n_states))
    seen = 0
    for (k, agent, coord), v in cells.items():
        if not (1 <= agent <= sys.n_agents and 0 <= coord < dims[agent - 1]):
            raise SimulationError(f"states row out of range: agent={agent}, coord={coord}")
        full[k, offs[agent - 1] + coord] = v
        seen += 1
    if seen != len(ks) * sys.n_states:
        raise SimulationError("states file has duplicate or missing cells")

    states, extension = full[: T + 1], full[T + 1 :]
    traj = Trajectory(
        T=T,
        states=states,
        inputs=inputs if inputs is not None else np.zeros((T, sys.n_inputs)),
        extension=extension,
        state_dims=tuple(sys.state_dims),
        input_dims=tuple(sys.input_dims),
    )
    if inputs is not None:
        resim = simulate(sys, inputs, T=T, extension_steps=extension.shape[0], check_boxes=False)
        if not np.allclose(resim.states, states, atol=1e-6):
            raise SimulationError("states are inconsistent with the dynamics and inputs")
        if extension.size and not np.allclose(resim.extension, extension, atol=1e-6):
            raise SimulationError("extension rows are inconsistent with zero-input propagation")
    return traj
