"""TREX and split-SPAM mitigation of the GHZ-ladder stabilizer ``<X^n>``.

Gates are ideal. Preparation errors are X errors after each reset and the
final readout of every qubit is the CNOT-picture measurement of
:func:`spamsplit.experiments.mcb.measurement_superop`, reduced to its label
kernel. Measurement twirls are applied to the outcome distribution, which is
exact because the twirl only flips bits before readout and relabels after.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..experiments.mcb import measurement_superop
from ..fitting import Estimate, propagate_mitigation_error, split_mitigate
from ..ptm import NoiseFidelities
from ..sim import superop
from ..sim.circuit import Channel, Circuit, Simulator, Unitary
from ..sim.gates import CNOT, H, I2, X
from ..sim.state import DensityMatrix

MAX_QUBITS = 12
RAW_SHOTS = 128
ZSTAR_RANDOMIZATIONS = 16
ZSTAR_SHOTS = 5000


def brick_layers(n: int) -> dict[str, list[tuple[int, int]]]:
    """The two CNOT layers as ``(control, target)`` pairs.

    ``L1`` couples ``(2j, 2j+1)`` and ``L2`` couples ``(2j+1, 2j+2)``.
    """
    return {
        "L1": [(2 * j, 2 * j + 1) for j in range(n // 2)],
        "L2": [(2 * j + 1, 2 * j + 2) for j in range((n - 1) // 2)],
    }


def _pull_x(xs: tuple, pairs, reverse: bool) -> tuple:
    # Heisenberg image of an X string under one CNOT layer; a reversed layer swaps roles
    out = list(xs)
    for c, t in pairs:
        if reverse:
            c, t = t, c
        if out[c]:
            out[t] ^= 1
    return tuple(out)


def two_layer_schedule(n: int) -> list[tuple[str, bool]]:
    """Shortest sequence of ``(layer, reversed)`` steps that maps ``X^n`` back to ``X_0``.

    A reversed layer is the same CNOT layer conjugated by Hadamards on its
    qubits, so the circuit uses only the two CNOT layers of
    :func:`brick_layers`. The list is in circuit (first-applied) order.
    """
    layers = brick_layers(n)
    start, goal = (1,) * n, (1,) + (0,) * (n - 1)
    prev: dict = {start: None}
    queue = deque([start])
    while queue and goal not in prev:
        s = queue.popleft()
        for name in ("L1", "L2"):
            for rev in (False, True):
                t = _pull_x(s, layers[name], rev)
                if t not in prev:
                    prev[t] = (s, (name, rev))
                    queue.append(t)
    if goal not in prev:
        raise ValueError(f"no two-layer schedule for n={n}")
    steps = []
    s = goal
    while prev[s] is not None:
        s, step = prev[s]
        steps.append(step)
    # pulling back walks backwards in time, so backtracking from X_0 yields circuit order
    return steps


def build_ghz_ladder(n: int, two_layer: bool = False, measure_x: bool = True) -> Circuit:
    """GHZ preparation on ``n`` qubits with an optional ``H^n`` basis change.

    ``two_layer=False`` gives the CNOT ladder; ``two_layer=True`` the
    variant built from the layers ``L1`` and ``L2`` (and Hadamard layers),
    which has the same ``<X^n>`` but not the same state.
    """
    if not 2 <= n <= MAX_QUBITS:
        raise ValueError(f"n must lie in [2, {MAX_QUBITS}]")
    if two_layer and n % 2:
        raise ValueError("the two-layer variant needs an even number of qubits")
    circ = Circuit((2,) * n, name=f"ghz{'_b' if two_layer else '_a'}_n{n}")
    circ.append(Unitary(H, (0,)))
    if not two_layer:
        for i in range(n - 1):
            circ.append(Unitary(CNOT, (i, i + 1)))
    else:
        layers = brick_layers(n)
        for name, rev in two_layer_schedule(n):
            pairs = layers[name]
            touched = sorted({q for p in pairs for q in p})
            if rev:
                circ.extend(Unitary(H, (q,)) for q in touched)
            circ.extend(Unitary(CNOT, p) for p in pairs)
            if rev:
                circ.extend(Unitary(H, (q,)) for q in touched)
    if measure_x:
        circ.extend(Unitary(H, (q,)) for q in range(n))
    return circ


def label_kernel(f: NoiseFidelities, correlated_as: str = "post") -> np.ndarray:
    """``K[l, o]``: probability of label ``l`` given outcome ``o`` for one final measurement.

    Read off the CNOT-picture measurement with a fresh classical wire, so
    the correlated error enters either natively (``"pre"``) or as the
    engineered post-measurement X (``"post"``).
    """
    meas = measurement_superop(f, correlated_as)
    k = np.zeros((2, 2))
    for o in range(2):
        st = DensityMatrix.basis((2, 2), (o, 0))
        st.apply_superop(meas, [0, 1])
        k[:, o] = st.populations([1])
    return k


def _apply_per_qubit(p: np.ndarray, kernel: np.ndarray, n: int) -> np.ndarray:
    t = p.reshape((2,) * n)
    for q in range(n):
        t = np.moveaxis(np.tensordot(kernel, t, axes=([1], [q])), 0, q)
    return t.reshape(-1)


def _flip(p: np.ndarray, x: np.ndarray, n: int) -> np.ndarray:
    t = p.reshape((2,) * n)
    axes = tuple(int(q) for q in np.flatnonzero(x))
    return (np.flip(t, axis=axes) if axes else t).reshape(-1)


def _parity_signs(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    bits = ((idx[:, None] >> np.arange(n)) & 1).sum(axis=1)
    return 1.0 - 2.0 * (bits % 2)


def ideal_distribution(circuit: Circuit, f_sp: float) -> np.ndarray:
    """Outcome distribution before readout, with X preparation errors on every qubit."""
    p_sp = (1.0 - f_sp) / 2.0
    prep = superop.mixture([(1.0 - p_sp, I2), (p_sp, X)])
    n = len(circuit.dims)
    noisy = Circuit(circuit.dims, [Channel(prep, (q,), "prep") for q in range(n)])
    noisy.extend(circuit.instructions)
    state = Simulator().run(noisy, exact=True).state
    return np.clip(state.populations().reshape(-1), 0.0, None)


@dataclass
class ParityRun:
    """Per-randomization parity means of a twirled readout experiment."""

    means: np.ndarray
    shots: int
    exact: bool = False

    @property
    def estimate(self) -> Estimate:
        if self.exact:
            return Estimate(float(self.means.mean()), 0.0)
        m = self.means
        if m.size == 1:
            v = float(m[0])
            return Estimate(v, float(np.sqrt(max(1 - v * v, 0.0) / self.shots)))
        return Estimate(float(m.mean()), float(m.std(ddof=1) / np.sqrt(m.size)))


def twirled_parity(
    p: np.ndarray,
    kernel: np.ndarray,
    randomizations: int,
    shots: int,
    rng: Optional[np.random.Generator] = None,
    exact: bool = False,
) -> ParityRun:
    """Measure ``Z^n`` parity of distribution ``p`` through X-twirled noisy readout."""
    n = int(np.log2(p.size))
    signs = _parity_signs(n)
    if exact:
        return ParityRun(np.array([signs @ _apply_per_qubit(p, kernel, n)]), shots, exact=True)
    if rng is None:
        raise ValueError("sampled mode needs an rng")
    means = np.empty(randomizations)
    for r in range(randomizations):
        x = rng.integers(0, 2, size=n)
        labels = _flip(_apply_per_qubit(_flip(p, x, n), kernel, n), x, n)
        # only the parity is needed, so sample it directly
        p_even = float(np.clip(labels[signs > 0].sum(), 0.0, 1.0))
        even = rng.binomial(shots, p_even)
        means[r] = (2 * even - shots) / shots
    return ParityRun(means, shots)


def simulate_raw(
    n: int,
    f: NoiseFidelities,
    two_layer: bool = True,
    randomizations: Optional[int] = None,
    shots: int = RAW_SHOTS,
    rng: Optional[np.random.Generator] = None,
    exact: bool = False,
    correlated_as: str = "post",
) -> Estimate:
    """Raw ``<X^n>`` on the GHZ circuit; ``2^10 n^2`` total shots by default."""
    if randomizations is None:
        randomizations = max(1, (2**10 * n * n) // shots)
    p = ideal_distribution(build_ghz_ladder(n, two_layer), f.f_sp)
    return twirled_parity(p, label_kernel(f, correlated_as), randomizations, shots, rng, exact).estimate


def learn_zstar(
    n: int,
    f: NoiseFidelities,
    randomizations: int = ZSTAR_RANDOMIZATIONS,
    shots: int = ZSTAR_SHOTS,
    rng: Optional[np.random.Generator] = None,
    exact: bool = False,
    correlated_as: str = "post",
) -> Estimate:
    """TREX mitigator: twirled ``<Z^n>`` on the reset (not ideal) all-zero state."""
    if n < 1:
        raise ValueError("n must be positive")
    p = ideal_distribution(Circuit((2,) * n), f.f_sp)
    return twirled_parity(p, label_kernel(f, correlated_as), randomizations, shots, rng, exact).estimate


def raw_closed_form(n: int, f: NoiseFidelities) -> float:
    """Only qubit 0's preparation error reaches ``X^n``."""
    return f.f_sp * (f.f_a * f.f_s) ** n


def zstar_closed_form(n: int, f: NoiseFidelities) -> float:
    return (f.f_sp * f.f_a * f.f_s) ** n


def mitigate_trex(raw: Estimate, zstar: Estimate) -> Estimate:
    return mitigate_split(raw, zstar, ())


def mitigate_split(raw: Estimate, zstar: Estimate, f_sp: Sequence[Estimate]) -> Estimate:
    """``raw * prod(f_sp) / zstar`` for the preparation fidelities of qubits ``1..n-1``."""
    vals = [e.value for e in f_sp]
    errs = [e.stderr for e in f_sp]
    value = split_mitigate(raw.value, zstar.value, vals)
    sigma = propagate_mitigation_error(raw.value, raw.stderr, zstar.value, zstar.stderr, vals, errs)
    return Estimate(value, sigma)


@dataclass
class GhzRow:
    n: int
    raw: Estimate
    zstar: Estimate
    trex: Estimate
    split: Estimate

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "raw": self.raw.value,
            "raw_sigma": self.raw.stderr,
            "zstar": self.zstar.value,
            "zstar_sigma": self.zstar.stderr,
            "trex": self.trex.value,
            "trex_sigma": self.trex.stderr,
            "split": self.split.value,
            "split_sigma": self.split.stderr,
        }


def run_ghz_mitigation(
    ns: Sequence[int],
    f: NoiseFidelities,
    f_sp_model: Estimate,
    rng_for=None,
    exact: bool = False,
    two_layer: bool = True,
    correlated_as: str = "post",
) -> list[GhzRow]:
    """Raw, TREX and split-mitigated ``<X^n>`` for each ``n``.

    ``f`` is the injected noise, ``f_sp_model`` the preparation fidelity the
    mitigator assumes for qubits ``1..n-1``. ``rng_for(n, task)`` returns the
    generator for one task so that results do not depend on ``ns``.
    """
    rows = []
    for n in ns:
        r_raw = None if exact else rng_for(n, "raw")
        r_z = None if exact else rng_for(n, "zstar")
        raw = simulate_raw(n, f, two_layer, rng=r_raw, exact=exact, correlated_as=correlated_as)
        zstar = learn_zstar(n, f, rng=r_z, exact=exact, correlated_as=correlated_as)
        trex = mitigate_trex(raw, zstar)
        split = mitigate_split(raw, zstar, [f_sp_model] * (n - 1))
        rows.append(GhzRow(n, raw, zstar, trex, split))
    return rows
