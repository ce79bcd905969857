"""Sequential execution of circuits with shot-to-shot state carryover."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .circuit import Circuit, Measure, Simulator
from .state import DensityMatrix


@dataclass
class ShotRecord:
    """One execution of a recorded circuit inside a chain.

    ``outcomes`` holds sampled labels (empty in exact mode), ``label_probs``
    the label distribution each recorded measurement had, and
    ``input_populations`` the level populations of the state entering the
    circuit (summed over all other wires).
    """

    circuit: str
    outcomes: dict
    label_probs: dict
    input_populations: np.ndarray


def _records(circuit: Circuit) -> bool:
    return any(isinstance(i, Measure) and i.record for i in circuit.instructions)


def run_chain(
    circuits: Sequence[Circuit],
    sim: Simulator,
    n_samples: int,
    rng: Optional[np.random.Generator] = None,
    exact: bool = False,
    initial: Optional[DensityMatrix] = None,
    input_wire: int = 0,
) -> tuple[list[ShotRecord], DensityMatrix]:
    """Run ``circuits`` in order, ``n_samples`` times, feeding each output state forward.

    Only circuits with recorded measurements produce a :class:`ShotRecord`.
    Returns the records and the final state.
    """
    if not circuits:
        raise ValueError("empty chain")
    state = initial.copy() if initial is not None else DensityMatrix.basis(circuits[0].dims)
    recorded = [_records(c) for c in circuits]
    records: list[ShotRecord] = []
    for _ in range(n_samples):
        for circuit, keep in zip(circuits, recorded):
            if keep:
                pops = state.populations([input_wire]).copy()
            result = sim.run(circuit, state, rng, exact)
            if keep:
                outcomes = {} if exact else {
                    k: v for k, v in result.memory.items() if k in result.label_probs
                }
                records.append(ShotRecord(circuit.name, outcomes, result.label_probs, pops))
            state = result.state
            if exact:
                state = state.normalized()
    return records, state
