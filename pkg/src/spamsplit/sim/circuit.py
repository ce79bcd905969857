"""Circuit instructions and the density-matrix executor.

Two execution modes are supported. In sampled mode every measurement draws a
true outcome, collapses the state onto it and draws a (possibly wrong) label
from the readout assignment matrix. In exact mode measurements branch: each
branch carries an unnormalised state whose trace is the probability of its
label history, so no randomness is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import superop
from .device import DeviceParams, check_column_stochastic
from .gates import X01, X12, X as X2, is_unitary
from .lindblad import lindblad_channel
from .state import DensityMatrix


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Unitary:
    matrix: np.ndarray
    wires: tuple

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(self.wires))
        if not is_unitary(self.matrix):
            raise ValueError("matrix is not unitary")


@dataclass(frozen=True)
class Channel:
    superop: np.ndarray
    wires: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(self.wires))


@dataclass(frozen=True)
class Delay:
    duration: float
    wires: tuple

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(self.wires))
        if self.duration < 0:
            raise ValueError("negative delay")


@dataclass(frozen=True)
class Measure:
    """Projective measurement of one wire.

    ``mode`` selects binary (``"qubit"``) or three-outcome (``"qutrit"``)
    discrimination. The noisy label is stored under ``key``.
    """

    wire: int
    mode: str = "qubit"
    key: str = "m"
    record: bool = True

    def __post_init__(self):
        if self.mode not in ("qubit", "qutrit"):
            raise ValueError(f"unknown discrimination mode {self.mode!r}")


@dataclass(frozen=True)
class ConditionalUnitary:
    """Apply ``matrix`` when the label stored under ``key`` equals ``value``."""

    matrix: np.ndarray
    wires: tuple
    key: str
    value: int

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(self.wires))
        if not is_unitary(self.matrix):
            raise ValueError("matrix is not unitary")


Instruction = Union[Unitary, Channel, Delay, Measure, ConditionalUnitary]


@dataclass
class Circuit:
    dims: tuple
    instructions: list = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        self.dims = tuple(self.dims)

    def append(self, inst: Instruction) -> "Circuit":
        self.instructions.append(inst)
        return self

    def extend(self, insts) -> "Circuit":
        self.instructions.extend(insts)
        return self

    def __len__(self):
        return len(self.instructions)


def reset_feedforward(mode: str, dim: int) -> dict[int, np.ndarray]:
    """Feedforward gates of an active reset, keyed by the measured label."""
    if dim == 2:
        return {1: X2}
    if mode == "qubit":
        return {1: X01}
    return {1: X01, 2: X01 @ X12}


def active_reset(wire: int, mode: str, dim: int, key: str = "reset") -> list[Instruction]:
    """Measurement followed by label-conditioned feedforward back to ``|0>``."""
    insts: list[Instruction] = [Measure(wire, mode, key, record=False)]
    for value, gate in reset_feedforward(mode, dim).items():
        insts.append(ConditionalUnitary(gate, (wire,), key, value))
    return insts


@dataclass
class Readout:
    """Readout assignment matrices; ``qutrit[j, k] = P(label j | level k)``."""

    qutrit: np.ndarray = field(default_factory=lambda: np.eye(3))
    qubit: Optional[np.ndarray] = None

    def __post_init__(self):
        self.qutrit = np.asarray(self.qutrit, dtype=float)
        check_column_stochastic(self.qutrit)
        if self.qubit is None:
            self.qubit = qubit_collapse(self.qutrit)[:, :2]
        self.qubit = np.asarray(self.qubit, dtype=float)
        check_column_stochastic(self.qubit)

    def matrix(self, dim: int, mode: str) -> np.ndarray:
        if dim == 2:
            return self.qubit
        if mode == "qutrit":
            return self.qutrit
        return qubit_collapse(self.qutrit)


def qubit_collapse(r: np.ndarray) -> np.ndarray:
    """Binary-discrimination readout of a qutrit: labels 1 and 2 are merged.

    Returns the 2x3 matrix with rows ``(q_0k, q_1k + q_2k)``.
    """
    r = np.asarray(r, dtype=float)
    return np.vstack([r[0], r[1] + r[2]])


@dataclass
class Branch:
    state: DensityMatrix
    memory: dict
    weight: float = 1.0


@dataclass
class RunResult:
    """Outcome of executing one circuit.

    ``branches`` has one entry in sampled mode. ``label_probs`` maps each
    recorded measurement key to the label distribution computed just before
    that measurement (averaged over branches in exact mode).
    """

    branches: list
    label_probs: dict

    @property
    def state(self) -> DensityMatrix:
        if len(self.branches) == 1:
            return self.branches[0].state
        data = sum(b.state.data for b in self.branches)
        return DensityMatrix(data, self.branches[0].state.dims)

    @property
    def memory(self) -> dict:
        return self.branches[0].memory


class Simulator:
    """Executes circuits on density matrices with device noise on delays."""

    def __init__(self, params: Optional[DeviceParams] = None, readout: Optional[Readout] = None):
        self.params = params
        if readout is None:
            readout = Readout(params.R) if params is not None else Readout()
        self.readout = readout

    def _delay_superop(self, duration: float, dim: int) -> np.ndarray:
        if self.params is None or duration == 0:
            return np.eye(dim * dim, dtype=complex)
        return lindblad_channel(self.params, duration, dim)

    def _apply(self, state: DensityMatrix, inst) -> None:
        if isinstance(inst, Unitary):
            state.apply_unitary(inst.matrix, inst.wires)
        elif isinstance(inst, Channel):
            state.apply_superop(inst.superop, inst.wires)
        elif isinstance(inst, Delay):
            for w in inst.wires:
                state.apply_superop(self._delay_superop(inst.duration, state.dims[w]), [w])
        else:
            raise TypeError(f"not a quantum instruction: {inst!r}")

    def run(
        self,
        circuit: Circuit,
        state: Optional[DensityMatrix] = None,
        rng: Optional[np.random.Generator] = None,
        exact: bool = False,
    ) -> RunResult:
        if state is None:
            state = DensityMatrix.basis(circuit.dims)
        if tuple(state.dims) != tuple(circuit.dims):
            raise ValueError(f"state dims {state.dims} != circuit dims {circuit.dims}")
        if not exact and rng is None:
            raise ValueError("sampled execution needs an rng")
        branches = [Branch(state.copy(), {})]
        label_probs: dict = {}
        for inst in circuit.instructions:
            if isinstance(inst, Measure):
                branches = self._measure(branches, inst, rng, exact, label_probs)
            elif isinstance(inst, ConditionalUnitary):
                for b in branches:
                    if b.memory.get(inst.key) == inst.value:
                        b.state.apply_unitary(inst.matrix, inst.wires)
            else:
                for b in branches:
                    self._apply(b.state, inst)
        return RunResult(branches, label_probs)

    def _measure(self, branches, inst: Measure, rng, exact, label_probs):
        dims = branches[0].state.dims
        r = self.readout.matrix(dims[inst.wire], inst.mode)
        new = []
        total = np.zeros(r.shape[0])
        for b in branches:
            pops = b.state.populations([inst.wire])
            norm = pops.sum()
            if exact:
                total += r @ pops
                for label in range(r.shape[0]):
                    weights = r[label] * pops
                    if weights.sum() <= 0.0:
                        continue
                    data = sum(
                        r[label, o] * b.state.project(inst.wire, o).data
                        for o in range(len(pops))
                        if r[label, o] > 0.0
                    )
                    memory = dict(b.memory)
                    memory[inst.key] = label
                    new.append(Branch(DensityMatrix(data, dims), memory, float(weights.sum())))
            else:
                label, post, probs = measure_and_collapse(b.state, inst.wire, r, rng)
                total += probs
                b.memory[inst.key] = label
                b.state = post
                new.append(b)
        if inst.record:
            norm_total = total.sum()
            label_probs[inst.key] = total / norm_total if norm_total > 0 else total
        if exact:
            new = _merge_branches(new)
        return new


def _merge_branches(branches: list[Branch]) -> list[Branch]:
    # branches with identical memories are indistinguishable from here on
    merged: dict = {}
    for b in branches:
        key = tuple(sorted(b.memory.items()))
        if key in merged:
            merged[key].state.data = merged[key].state.data + b.state.data
            merged[key].weight += b.weight
        else:
            merged[key] = b
    return list(merged.values())


def measure_and_collapse(
    state: DensityMatrix, wire: int, assignment: np.ndarray, rng: np.random.Generator
) -> tuple[int, DensityMatrix, np.ndarray]:
    """Sample a projective measurement of ``wire`` and a noisy label.

    Returns ``(label, post_state, label_probabilities)``. The post-measurement
    state is the projection onto the true outcome; the label is drawn from
    column ``outcome`` of ``assignment``.
    """
    pops = state.populations([wire])
    total = state.trace()
    if abs(pops.sum() - total) > 1e-8 or abs(total - 1.0) > 1e-8:
        raise SimulationError(f"populations sum to {pops.sum()}, trace {total}")
    pops = np.clip(pops, 0.0, None)
    pops = pops / pops.sum()
    outcome = int(rng.choice(len(pops), p=pops))
    post = state.project(wire, outcome)
    post = DensityMatrix(post.data / post.trace(), state.dims)
    column = assignment[:, outcome]
    label = int(rng.choice(len(column), p=column))
    return label, post, assignment @ pops


def fuse(circuit: Circuit, sim: Simulator) -> Circuit:
    """Fuse runs of non-measurement instructions into single full-register channels."""
    size = int(np.prod(circuit.dims))
    out = Circuit(circuit.dims, name=circuit.name)
    acc = None

    def flush():
        nonlocal acc
        if acc is not None:
            out.append(Channel(acc, tuple(range(len(circuit.dims))), label="fused"))
            acc = None

    for inst in circuit.instructions:
        if isinstance(inst, (Measure, ConditionalUnitary)):
            flush()
            out.append(inst)
            continue
        # superop of inst on the full register
        cols = np.eye(size * size, dtype=complex)
        probe = np.empty_like(cols)
        for j in range(size * size):
            st = DensityMatrix(cols[:, j].reshape(size, size), circuit.dims)
            sim._apply(st, inst)
            probe[:, j] = st.data.reshape(-1)
        acc = probe if acc is None else probe @ acc
    flush()
    return out


def ensemble_reset_channel(mode: str, dim: int, readout: Readout) -> np.ndarray:
    """Outcome-averaged active reset: measure, relabel through ``R``, feed forward.

    Equals the average of the sampled reset over its outcomes.
    """
    r = readout.matrix(dim, mode)
    gates = reset_feedforward(mode, dim)
    total = np.zeros((dim * dim, dim * dim), dtype=complex)
    for label in range(r.shape[0]):
        g = gates.get(label, np.eye(dim))
        kraus_like = sum(
            r[label, o] * superop.from_unitary(np.diag(np.eye(dim)[o])) for o in range(dim)
        )
        total = total + superop.from_unitary(g) @ kraus_like
    return total


