"""Probabilistic error cancellation of SPAM noise in a dynamic teleportation circuit.

The circuit runs in the CNOT picture on five wires ``q0, q1, q2, c0, c1``:
mid-circuit measurements copy ``q0`` and ``q1`` onto the classical wires
and the corrections are CNOT/CZ gates controlled by them. Each noise channel
is a bit flip; under PEC its quasi-probability inverse is sampled right
before the noisy measurement, or right after the noisy preparation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..fitting import Estimate
from ..ptm import NoiseFidelities, from_stochastic
from ..sim import superop
from ..sim.circuit import Channel, Circuit, Simulator, Unitary
from ..sim.gates import CNOT, CZ, H, I2, X, pauli_string, rx
from ..sim.state import DensityMatrix
from .tomography import bloch_vector, rho_from_bloch, state_fidelity, tomography_fit

Q0, Q1, Q2, C0, C1 = range(5)
DIMS = (2,) * 5
BERNOULLI_SHOTS = 100
POOL = 1000
SETS = 300
PER_SET = 128
THETAS = np.linspace(0.0, 2 * np.pi, 15)


@dataclass(frozen=True)
class QuasiProbChannel:
    """Signed mixture of Pauli strings; ``gamma`` is the sampling overhead."""

    terms: tuple  # ((pauli label, quasi-probability), ...)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((str(p), float(q)) for p, q in self.terms))
        if not self.terms:
            raise ValueError("need at least one term")
        if abs(sum(q for _, q in self.terms) - 1.0) > 1e-12:
            raise ValueError("quasi-probabilities must sum to 1")
        if len({len(p) for p, _ in self.terms}) != 1:
            raise ValueError("Pauli labels must have equal length")

    @property
    def gamma(self) -> float:
        return float(sum(abs(q) for _, q in self.terms))

    @property
    def n_qubits(self) -> int:
        return len(self.terms[0][0])

    def superop(self) -> np.ndarray:
        return sum(q * superop.from_unitary(pauli_string(p)) for p, q in self.terms)

    def sample(self, rng: np.random.Generator) -> tuple[int, int]:
        """Draw term index ``i`` with probability ``|q_i| / gamma``; returns ``(i, sign bit)``."""
        w = np.array([abs(q) for _, q in self.terms])
        i = int(rng.choice(len(w), p=w / w.sum()))
        return i, int(self.terms[i][1] < 0)


def inverse_bitflip(p: float, pauli: str = "X") -> QuasiProbChannel:
    """Inverse of ``(1 - p) rho + p P rho P``."""
    if p >= 0.5:
        raise ValueError("p must be below 0.5")
    identity = "I" * len(pauli)
    if p == 0:
        return QuasiProbChannel(((identity, 1.0),))
    d = 1.0 - 2.0 * p
    return QuasiProbChannel(((identity, (1.0 - p) / d), (pauli, -p / d)))


def bitflip_superop(p: float, pauli: str = "X") -> np.ndarray:
    eye = np.eye(2 ** len(pauli))
    return superop.mixture([(1.0 - p, eye), (p, pauli_string(pauli))])


@dataclass(frozen=True)
class Site:
    """A noise channel and the wires it acts on."""

    name: str
    wires: tuple
    pauli: str
    p: float  # injected flip probability
    p_inv: float  # probability assumed by the inverse


def _p(f: float) -> float:
    return (1.0 - f) / 2.0


@dataclass
class Teleportation:
    """Circuit family for teleporting ``R_X(theta)|0>`` with SPAM noise.

    ``noise`` is injected; ``inverse`` holds the fidelities the PEC inverses
    assume (default: the injected ones).
    """

    theta: float
    noise: NoiseFidelities
    inverse: Optional[NoiseFidelities] = None
    sim: Simulator = field(default_factory=Simulator)

    def __post_init__(self):
        if not 0.0 <= self.theta <= 2 * np.pi + 1e-12:
            raise ValueError("theta must lie in [0, 2 pi]")
        inv = self.inverse or self.noise
        f = self.noise
        self.sites = [Site(f"sp{q}", (q,), "X", _p(f.f_sp), _p(inv.f_sp)) for q in (Q0, Q1, Q2)]
        for q, c in ((Q0, C0), (Q1, C1)):
            self.sites += [
                Site(f"s{q}", (q,), "X", _p(f.f_s), _p(inv.f_s)),
                Site(f"a{q}", (c,), "X", _p(f.f_a), _p(inv.f_a)),
                Site(f"c{q}", (q, c), "XX", _p(f.f_c), _p(inv.f_c)),
            ]
        self.inverses = [inverse_bitflip(s.p_inv, s.pauli) for s in self.sites]
        self._cache: dict = {}

    @property
    def gamma(self) -> float:
        return float(np.prod([c.gamma for c in self.inverses]))

    def ideal_state(self) -> np.ndarray:
        u = rx(self.theta)
        return u @ np.diag([1.0, 0.0]) @ u.conj().T

    def circuit(self, choice: Optional[Sequence[int]] = None, noisy: bool = True) -> Circuit:
        """Teleportation circuit; ``choice[i]`` picks the inverse term at site ``i`` (None: no PEC)."""
        ops: dict = {}
        for i, site in enumerate(self.sites):
            noise = [Channel(bitflip_superop(site.p, site.pauli), site.wires, site.name)] if noisy else []
            inv = []
            if choice is not None:
                label = self.inverses[i].terms[choice[i]][0]
                if set(label) != {"I"}:
                    inv = [Unitary(pauli_string(label), site.wires)]
            # preparation inverses follow the noise, measurement inverses precede it
            ops[site.name] = noise + inv if site.name.startswith("sp") else inv + noise

        circ = Circuit(DIMS, name="teleport")
        for q in (Q0, Q1, Q2):
            circ.extend(ops[f"sp{q}"])
        circ.append(Unitary(rx(self.theta), (Q0,)))
        circ.append(Unitary(H, (Q1,)))
        circ.append(Unitary(CNOT, (Q1, Q2)))
        circ.append(Unitary(CNOT, (Q0, Q1)))
        circ.append(Unitary(H, (Q0,)))
        for q, c in ((Q0, C0), (Q1, C1)):
            # noise order: correlated, assignment, state, then the copying CNOT
            for kind in ("c", "a", "s"):
                circ.extend(ops[f"{kind}{q}"])
            circ.append(Unitary(CNOT, (q, c)))
        circ.append(Unitary(CNOT, (C1, Q2)))
        circ.append(Unitary(CZ, (C0, Q2)))
        return circ

    def output_state(self, choice: Optional[Sequence[int]] = None, noisy: bool = True) -> np.ndarray:
        key = (None if choice is None else tuple(choice), noisy)
        if key not in self._cache:
            st = self.sim.run(self.circuit(choice, noisy), DensityMatrix.basis(DIMS), exact=True).state
            self._cache[key] = st.reduced([Q2])
        return self._cache[key]

    def sample(self, rng: np.random.Generator) -> tuple[tuple, int]:
        draws = [c.sample(rng) for c in self.inverses]
        return tuple(i for i, _ in draws), int(sum(s for _, s in draws))

    def exact_mitigated_bloch(self) -> np.ndarray:
        """Full quasi-probability expansion of the PEC estimator without sampling."""
        total = np.zeros(3)
        for choice in itertools.product(*(range(len(c.terms)) for c in self.inverses)):
            w = np.prod([c.terms[i][1] for c, i in zip(self.inverses, choice)])
            total += w * bloch_vector(self.output_state(choice))
        return total


def build_teleportation(
    theta: float,
    model=None,
    pec: bool = False,
    noise: Optional[NoiseFidelities] = None,
    reset: str = "slow",
) -> Teleportation:
    """Teleportation family whose inverses come from a learned model.

    ``model`` is a :class:`~spamsplit.learning.LearnedModel` or
    :class:`NoiseFidelities`; ``noise`` defaults to the model's fidelities.
    """
    inverse = None
    if model is not None:
        inverse = model_fidelities(model, reset) if not isinstance(model, NoiseFidelities) else model
    elif pec:
        raise ValueError("PEC needs a noise model")
    noise = noise or inverse or NoiseFidelities()
    return Teleportation(theta, noise, inverse if pec else None)


def model_fidelities(model, reset: str = "slow") -> NoiseFidelities:
    """Point values of a learned model; fidelities above 1 are capped just below 1."""
    est = {"f_a": model.f_a, "f_s": model.f_s, "f_c": model.f_c, "f_sp": model.f_sp(reset)}
    missing = [k for k, v in est.items() if v is None]
    if missing:
        raise ValueError(f"incomplete model: missing {missing}")
    return NoiseFidelities(**{k: min(v.value, 1.0) for k, v in est.items()})


def pec_estimate(signs: Sequence[int], values: Sequence[float], gamma: float) -> float:
    """``gamma`` times the mean of ``(-1)^m_j E_j``."""
    m = np.asarray(signs)
    e = np.asarray(values, dtype=float)
    if e.size < 1 or m.shape != e.shape:
        raise ValueError("need N >= 1 realizations with one sign each")
    return float(gamma * np.mean(np.where(m % 2, -e, e)))


@dataclass
class Pool:
    """Sampled PEC realizations for one angle."""

    signs: np.ndarray  # (N,)
    exact: np.ndarray  # (N, 3) noiseless-shot Pauli expectations
    sampled: np.ndarray  # (N, 3) Bernoulli estimates


def realization_pool(
    tel: Teleportation, size: int, rng: np.random.Generator, shots: int = BERNOULLI_SHOTS
) -> Pool:
    signs = np.empty(size, dtype=int)
    exact = np.empty((size, 3))
    for j in range(size):
        choice, m = tel.sample(rng)
        signs[j] = m
        exact[j] = bloch_vector(tel.output_state(choice))
    p_plus = np.clip((1.0 + exact) / 2.0, 0.0, 1.0)
    sampled = 2.0 * rng.binomial(shots, p_plus) / shots - 1.0
    return Pool(signs, exact, sampled)


def mitigated_fidelity(pool: Pool, idx: np.ndarray, gamma: float, ideal: np.ndarray) -> float:
    exps = [pec_estimate(pool.signs[idx], pool.sampled[idx, k], gamma) for k in range(3)]
    state = tomography_fit(*exps)
    return state_fidelity(ideal, state.rho)


@dataclass
class FidelityRow:
    theta: float
    median: float
    q25: float
    q75: float
    unmitigated: float

    def to_dict(self) -> dict:
        return dict(theta=self.theta, median=self.median, q25=self.q25, q75=self.q75,
                    unmitigated=self.unmitigated)


def bootstrap_fidelities(
    pool: Pool,
    gamma: float,
    ideal: np.ndarray,
    rng: np.random.Generator,
    sets: int = SETS,
    per_set: int = PER_SET,
) -> np.ndarray:
    """Mitigated fidelity of ``sets`` resamples (with replacement) of ``per_set`` realizations."""
    n = pool.signs.size
    if n < per_set:
        raise ValueError("pool is smaller than a bootstrap set")
    return np.array(
        [mitigated_fidelity(pool, rng.integers(0, n, per_set), gamma, ideal) for _ in range(sets)]
    )


def unmitigated_fidelity(tel: Teleportation) -> float:
    return state_fidelity(tel.ideal_state(), tel.output_state(None))


def exact_pec_fidelity(tel: Teleportation) -> float:
    """Fidelity after exact PEC; the expansion is physical here, so no tomography is needed."""
    r = tel.exact_mitigated_bloch()
    return state_fidelity(tel.ideal_state(), rho_from_bloch(r))


def teleportation_table(
    model,
    noise: Optional[NoiseFidelities] = None,
    thetas: Sequence[float] = THETAS,
    rng_for=None,
    pool_size: int = POOL,
    sets: int = SETS,
    per_set: int = PER_SET,
    shots: int = BERNOULLI_SHOTS,
    pec: bool = True,
    exact: bool = False,
) -> list[FidelityRow]:
    """Per-angle fidelity statistics; ``rng_for(i, task)`` gives per-task generators."""
    rows = []
    for i, theta in enumerate(thetas):
        tel = build_teleportation(float(theta), model, pec=pec, noise=noise)
        raw = unmitigated_fidelity(tel)
        if not pec:
            rows.append(FidelityRow(float(theta), raw, raw, raw, raw))
            continue
        if exact:
            f = exact_pec_fidelity(tel)
            rows.append(FidelityRow(float(theta), f, f, f, raw))
            continue
        pool = realization_pool(tel, pool_size, rng_for(i, "pool"), shots)
        fids = bootstrap_fidelities(pool, tel.gamma, tel.ideal_state(), rng_for(i, "bootstrap"), sets, per_set)
        q25, med, q75 = np.percentile(fids, [25, 50, 75])
        rows.append(FidelityRow(float(theta), float(med), float(q25), float(q75), raw))
    return rows
