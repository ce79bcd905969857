"""Measurement cycle benchmarking (MCB) with twirled mid-circuit measurements.

Circuits are simulated in the CNOT picture on three two-level wires: the
qubit, a classical register that accumulates the XOR of all twirl-corrected
mid-circuit labels, and a fresh classical wire receiving the final label.
``<IZ>`` is read from the register, ``<ZI>`` from the final label and
``<ZZ>`` from their product, which reproduces the restricted PTM of the whole
circuit with the register playing the role of the cbit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..fitting import DecayFit, DegenerateFitError, Estimate, fit_decay
from ..ptm import NoiseFidelities, from_stochastic
from ..sim import superop
from ..sim.circuit import Channel, Circuit, Simulator, Unitary
from ..sim.gates import CNOT, I2, X, Z
from ..sim.state import DensityMatrix

QUBIT, REGISTER, FINAL = 0, 1, 2
OBSERVABLES = ("IZ", "ZI", "ZZ")
RESET_P_SP = {"slow": 0.01946, "fast": 0.01206}


@dataclass(frozen=True)
class TwirlSample:
    """``Z^z1 X^x`` before the measurement, ``X^x Z^z2`` after, label XORed with ``x``."""

    x: int
    z1: int
    z2: int

    def __post_init__(self):
        if any(v not in (0, 1) for v in (self.x, self.z1, self.z2)):
            raise ValueError("twirl bits must be 0 or 1")


IDENTITY_TWIRL = TwirlSample(0, 0, 0)
ALL_TWIRLS = tuple(TwirlSample(x, z1, z2) for x in (0, 1) for z1 in (0, 1) for z2 in (0, 1))


def draw_twirls(n: int, rng: np.random.Generator) -> list[TwirlSample]:
    bits = rng.integers(0, 2, size=(n, 3))
    return [TwirlSample(*map(int, b)) for b in bits]


@dataclass
class McbConfig:
    depths: tuple = (0, 1, 2, 5, 8)
    randomizations: int = 256
    shots: int = 128
    reset_mode: str = "slow"

    def __post_init__(self):
        self.depths = tuple(int(k) for k in self.depths)
        if 0 not in self.depths:
            raise ValueError("depths must include 0")
        if any(k < 0 for k in self.depths) or len(set(self.depths)) != len(self.depths):
            raise ValueError("depths must be distinct non-negative integers")
        if self.randomizations < 1 or self.shots < 1:
            raise ValueError("randomizations and shots must be >= 1")
        if self.reset_mode not in RESET_P_SP:
            raise ValueError(f"reset_mode must be one of {tuple(RESET_P_SP)}")


def measurement_superop(f: NoiseFidelities, correlated_as: str = "pre") -> np.ndarray:
    """Noisy CNOT-picture measurement on (qubit, target) as a 4x4-dim superoperator.

    Errors act before the CNOT in the order correlated, assignment, state.
    With ``correlated_as="post"`` the correlated error is replaced by an X on
    the qubit after the CNOT with the same probability.
    """
    if correlated_as not in ("pre", "post"):
        raise ValueError("correlated_as must be 'pre' or 'post'")
    eye = np.eye(4)
    xx, ix, xi = np.kron(X, X), np.kron(I2, X), np.kron(X, I2)
    lam_a = superop.mixture([(1 - f.p_a, eye), (f.p_a, ix)])
    lam_s = superop.mixture([(1 - f.p_s, eye), (f.p_s, xi)])
    if correlated_as == "pre":
        lam_c = superop.mixture([(1 - f.p_c, eye), (f.p_c, xx)])
        return superop.from_unitary(CNOT) @ lam_s @ lam_a @ lam_c
    post = superop.mixture([(1 - f.p_c, eye), (f.p_c, xi)])
    return post @ superop.from_unitary(CNOT) @ lam_s @ lam_a


def stochastic_measurement_superop(kernel: np.ndarray) -> np.ndarray:
    """Measurement with general classical noise ``kernel[l, s, o] = P(label l, post s | outcome o)``.

    The qubit is dephased, its outcome ``o`` drawn, then it is left in ``s``
    while ``l`` is XORed onto the target wire.
    """
    kernel = np.asarray(kernel, dtype=float)
    if kernel.shape != (2, 2, 2) or np.any(kernel < 0):
        raise ValueError("kernel must be a non-negative 2x2x2 array")
    if not np.allclose(kernel.sum(axis=(0, 1)), 1.0, atol=1e-12):
        raise ValueError("kernel must be normalised for each outcome")
    out = np.zeros((16, 16))
    for o in range(2):
        for c in range(2):
            src = 2 * o + c
            for l in range(2):
                for s in range(2):
                    dst = 2 * s + (c ^ l)
                    out[dst * 4 + dst, src * 4 + src] += kernel[l, s, o]
    return out


def _twirl_before(t: TwirlSample) -> np.ndarray:
    return np.linalg.matrix_power(Z, t.z1) @ np.linalg.matrix_power(X, t.x)


def _twirl_after(t: TwirlSample) -> np.ndarray:
    return np.linalg.matrix_power(Z, t.z2) @ np.linalg.matrix_power(X, t.x)


def measurement_block(
    t: TwirlSample, target: int, meas: np.ndarray, dephase: bool = True
) -> list:
    """Twirled noisy measurement of the qubit onto ``target``."""
    insts = [Unitary(_twirl_before(t), (QUBIT,)), Channel(meas, (QUBIT, target), label="meas")]
    if dephase:
        insts.append(Channel(superop.dephasing(2), (QUBIT,), label="collapse"))
    insts.append(Unitary(_twirl_after(t), (QUBIT,)))
    if t.x:
        insts.append(Unitary(X, (target,)))
    return insts


def build_mcb_circuit(
    k: int,
    twirl: Sequence[TwirlSample],
    f: NoiseFidelities,
    correlated_as: str = "pre",
    meas: Optional[np.ndarray] = None,
) -> Circuit:
    """Preparation, ``2k`` twirled mid-circuit measurements and a twirled final measurement.

    ``meas`` overrides the measurement superoperator built from ``f`` (used to
    inject non-Pauli noise).
    """
    if k < 0:
        raise ValueError("depth must be non-negative")
    if len(twirl) != 2 * k + 1:
        raise ValueError(f"need {2 * k + 1} twirl samples, got {len(twirl)}")
    if meas is None:
        meas = measurement_superop(f, correlated_as)
    circ = Circuit((2, 2, 2), name=f"mcb_k{k}")
    circ.append(Channel(superop.mixture([(1 - f.p_sp, I2), (f.p_sp, X)]), (QUBIT,), label="prep"))
    for t in twirl[:-1]:
        circ.extend(measurement_block(t, REGISTER, meas))
    circ.extend(measurement_block(twirl[-1], FINAL, meas))
    return circ


def outcome_distribution(circuit: Circuit, sim: Optional[Simulator] = None) -> np.ndarray:
    """Exact joint distribution of (register, final label), flattened as ``2 r + f``."""
    sim = sim or Simulator()
    state = sim.run(circuit, DensityMatrix.basis(circuit.dims), exact=True).state
    return np.clip(state.populations([REGISTER, FINAL]).reshape(-1), 0.0, None)


def expectations_from_distribution(p: np.ndarray) -> dict[str, float]:
    p = np.asarray(p, dtype=float).reshape(2, 2)
    sign = np.array([1.0, -1.0])
    return {
        "IZ": float(sign @ p.sum(axis=1)),
        "ZI": float(sign @ p.sum(axis=0)),
        "ZZ": float(np.sum(np.outer(sign, sign) * p)),
    }


@dataclass
class McbRecord:
    """One randomization: its depth, twirls and outcome counts (or exact probabilities)."""

    k: int
    twirls: list
    counts: np.ndarray  # length 4, indexed 2 * register + final
    exact: bool = False


@dataclass
class McbResult:
    config: McbConfig
    fidelities: NoiseFidelities
    records: list
    expectations: dict  # k -> {obs: Estimate}
    fits: dict = field(default_factory=dict)  # obs -> DecayFit

    def table(self) -> list[dict]:
        rows = []
        for k in sorted(self.expectations):
            row = {"k": k}
            for obs, est in self.expectations[k].items():
                row[obs] = est.value
                row[f"{obs}_stderr"] = est.stderr
            rows.append(row)
        return rows


def mcb_expectations(records: Sequence[McbRecord]) -> dict[int, dict[str, Estimate]]:
    """Per-depth means of the +-1 estimators with standard errors over randomizations."""
    if not records:
        raise ValueError("no records")
    by_depth: dict[int, list] = {}
    for r in records:
        by_depth.setdefault(r.k, []).append(r)
    out = {}
    for k, recs in sorted(by_depth.items()):
        vals = {o: [] for o in OBSERVABLES}
        shots = 0
        for r in recs:
            c = np.asarray(r.counts, dtype=float)
            e = expectations_from_distribution(c / c.sum())
            shots += 0 if r.exact else c.sum()
            for o in OBSERVABLES:
                vals[o].append(e[o])
        out[k] = {}
        for o in OBSERVABLES:
            v = np.array(vals[o])
            if all(r.exact for r in recs):
                err = 0.0
            elif len(v) > 1:
                err = float(v.std(ddof=1) / np.sqrt(len(v)))
            else:
                err = float(np.sqrt(max(1 - v[0] ** 2, 0.0) / shots))
            out[k][o] = Estimate(float(v.mean()), err)
    return out


def fit_mcb(
    expectations: dict[int, dict[str, Estimate]], constant_fallback: bool = False
) -> dict[str, DecayFit]:
    """Fit ``A f^(2k)`` to each observable.

    Points are weighted by ``1/stderr^2`` when every standard error is
    positive. With ``constant_fallback`` a perfectly flat decay (noiseless
    device) yields ``f = 1`` and a warning instead of an error.
    """
    ks = np.array(sorted(expectations))
    fits = {}
    for o in OBSERVABLES:
        ys = np.array([expectations[k][o].value for k in ks])
        errs = np.array([expectations[k][o].stderr for k in ks])
        weights = 1.0 / errs**2 if np.all(errs > 0) else None
        try:
            fits[o] = fit_decay(ks, ys, weights)
        except DegenerateFitError:
            if not constant_fallback:
                raise
            warnings.warn(f"<{o}> does not decay; using f = 1", RuntimeWarning, stacklevel=2)
            fits[o] = DecayFit(float(ys[0]), 1.0, np.zeros((2, 2)), 0.0)
    return fits


def simulate_mcb(
    f: NoiseFidelities,
    cfg: McbConfig,
    rng: Optional[np.random.Generator] = None,
    exact: bool = False,
    correlated_as: str = "pre",
) -> list[McbRecord]:
    """Run all randomizations at every depth.

    Sampled mode draws fresh twirls per randomization and multinomial shot
    counts from the exact outcome distribution of that twirled circuit. Exact
    mode evaluates one untwirled circuit per depth, which is equivalent for
    the Pauli-diagonal noise built from ``f``.
    """
    if not exact and rng is None:
        raise ValueError("sampled MCB needs an rng")
    sim = Simulator()
    meas = measurement_superop(f, correlated_as)
    records = []
    for k in cfg.depths:
        if exact:
            tw = [IDENTITY_TWIRL] * (2 * k + 1)
            p = outcome_distribution(build_mcb_circuit(k, tw, f, meas=meas), sim)
            records.append(McbRecord(k, tw, p, exact=True))
            continue
        for _ in range(cfg.randomizations):
            tw = draw_twirls(2 * k + 1, rng)
            p = outcome_distribution(build_mcb_circuit(k, tw, f, meas=meas), sim)
            records.append(McbRecord(k, tw, rng.multinomial(cfg.shots, p / p.sum())))
    return records


def run_mcb(
    f: NoiseFidelities,
    cfg: McbConfig,
    rng: Optional[np.random.Generator] = None,
    exact: bool = False,
) -> McbResult:
    records = simulate_mcb(f, cfg, rng, exact)
    exps = mcb_expectations(records)
    return McbResult(cfg, f, records, exps, fit_mcb(exps))


def twirled_measurement_ptm(meas: np.ndarray, twirls: Sequence[TwirlSample] = ALL_TWIRLS) -> np.ndarray:
    """Restricted PTM of the twirl-averaged measurement block on (qubit, target).

    Classical basis states are pushed through each twirled block and the
    averaged transition matrix is converted with the Walsh-Hadamard transform.
    """
    sim = Simulator()
    stoch = np.zeros((4, 4))
    for t in twirls:
        circ = Circuit((2, 2)).extend(measurement_block(t, 1, meas))
        for src in range(4):
            rho = DensityMatrix.basis((2, 2), divmod(src, 2))
            out = sim.run(circ, rho, exact=True).state.populations().reshape(-1)
            stoch[:, src] += out
    return from_stochastic(stoch / len(twirls))

