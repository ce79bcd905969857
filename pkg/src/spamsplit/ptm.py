"""Pauli transfer matrices over the restricted ``{I, Z}^n`` basis.

Wires are ordered ``qubit (x) cbit`` and labels are enumerated
lexicographically (``II, IZ, ZI, ZZ``), so index 0 is always the all-``I``
label and wire 0 is the most significant character of a label.
"""

from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_WIRES = 12


def _check_wires(n: int) -> None:
    if not 1 <= n <= MAX_WIRES:
        raise ValueError(f"wire count must be in [1, {MAX_WIRES}], got {n}")


def labels(n: int) -> list[str]:
    """Restricted Pauli labels for ``n`` wires in lexicographic order."""
    _check_wires(n)
    return ["".join(p) for p in itertools.product("IZ", repeat=n)]


@functools.lru_cache(maxsize=None)
def _z_mask(n: int) -> np.ndarray:
    # mask[i, w] is True when label i carries a Z on wire w
    idx = np.arange(2**n)
    mask = ((idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1).astype(bool)
    mask.flags.writeable = False
    return mask


def _check_prob(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")


def n_wires(ptm: np.ndarray) -> int:
    dim = ptm.shape[0]
    n = int(round(np.log2(dim)))
    if ptm.ndim != 2 or ptm.shape != (dim, dim) or 2**n != dim:
        raise ValueError(f"not a square 2^n PTM: shape {ptm.shape}")
    return n


def identity(n: int) -> np.ndarray:
    _check_wires(n)
    return np.eye(2**n)


def bitflip_ptm(p: float, support: Iterable[int], n: int) -> np.ndarray:
    """PTM of ``rho -> (1-p) rho + p X_S rho X_S`` with ``X_S`` the X string on ``support``.

    A label is damped by ``1 - 2p`` exactly when it anticommutes with the
    flip, i.e. when it has an odd number of Z's on the support wires.
    """
    _check_prob(p)
    support = sorted(set(support))
    if any(not 0 <= w < n for w in support):
        raise ValueError(f"support {support} out of range for {n} wires")
    _check_wires(n)
    odd = _z_mask(n)[:, support].sum(axis=1) % 2 == 1
    return np.diag(np.where(odd, 1.0 - 2.0 * p, 1.0))


def pauli_x_ptm(support: Iterable[int], n: int) -> np.ndarray:
    """PTM of the X string on ``support`` (a deterministic flip)."""
    return bitflip_ptm(1.0, support, n)


def cnot_ptm() -> np.ndarray:
    """Ideal CNOT controlled by wire 0 (qubit) targeting wire 1 (cbit).

    Conjugation maps ``IZ -> ZZ``, ``ZZ -> IZ`` and fixes ``II``, ``ZI``.
    """
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ]
    )


def reset_ptm() -> np.ndarray:
    """Reset to ``|0>``: every input is mapped to ``(1, 1)`` in the ``(I, Z)`` basis."""
    return np.array([[1.0, 0.0], [1.0, 0.0]])


def swap_ptm() -> np.ndarray:
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def compose(*ptms: np.ndarray) -> np.ndarray:
    """Matrix product ``ptms[0] @ ptms[1] @ ...``; the last one acts first."""
    if not ptms:
        raise ValueError("compose needs at least one PTM")
    out = np.asarray(ptms[0], dtype=float)
    n = n_wires(out)
    for other in ptms[1:]:
        other = np.asarray(other, dtype=float)
        if n_wires(other) != n:
            raise ValueError(f"dimension mismatch: {out.shape} vs {other.shape}")
        out = out @ other
    return out


def tensor(*ptms: np.ndarray) -> np.ndarray:
    # 2-D Kronecker product by broadcasting; np.kron's generic path dominated the cost
    out = np.ones((1, 1))
    for p in ptms:
        p = np.asarray(p, dtype=float)
        out = (out[:, None, :, None] * p[None, :, None, :]).reshape(
            out.shape[0] * p.shape[0], out.shape[1] * p.shape[1]
        )
    return out


def power(ptm: np.ndarray, k: int) -> np.ndarray:
    if k < 0:
        raise ValueError("power must be non-negative")
    return np.linalg.matrix_power(np.asarray(ptm, dtype=float), k)


def discard(ptm: np.ndarray, wire: int) -> np.ndarray:
    """Drop ``wire`` by keeping only rows/columns with ``I`` on it."""
    n = n_wires(ptm)
    keep = ~_z_mask(n)[:, wire]
    return ptm[np.ix_(keep, keep)]


def from_stochastic(stochastic: np.ndarray) -> np.ndarray:
    """Restricted PTM of a classical map on ``n`` bits.

    ``stochastic[b_out, b_in]`` is the probability of ``b_out`` given ``b_in``
    (column-stochastic). On diagonal states the restricted PTM is the
    Walsh-Hadamard transform ``W S W / 2^n``.
    """
    dim = stochastic.shape[0]
    n = int(round(np.log2(dim)))
    h = np.array([[1.0, 1.0], [1.0, -1.0]])
    w = tensor(*([h] * n))
    return w @ stochastic @ w / dim


def to_stochastic(ptm: np.ndarray) -> np.ndarray:
    n = n_wires(ptm)
    h = np.array([[1.0, 1.0], [1.0, -1.0]])
    w = tensor(*([h] * n))
    return w @ ptm @ w / 2**n


def is_trace_preserving(ptm: np.ndarray, atol: float = 1e-12) -> bool:
    row = np.zeros(ptm.shape[1])
    row[0] = 1.0
    return bool(np.allclose(ptm[0], row, atol=atol, rtol=0.0))


def to_json(ptm: np.ndarray) -> str:
    return json.dumps({"n": n_wires(ptm), "entries": [float(x) for x in np.ravel(ptm)]})


def from_json(text: str) -> np.ndarray:
    data = json.loads(text)
    dim = 2 ** int(data["n"])
    return np.asarray(data["entries"], dtype=float).reshape(dim, dim)


# -- measurement noise model -------------------------------------------------


@dataclass(frozen=True)
class NoiseFidelities:
    """Error fidelities ``f_x = 1 - 2 p_x`` of the measurement/preparation model."""

    f_a: float = 1.0
    f_s: float = 1.0
    f_c: float = 1.0
    f_sp: float = 1.0

    def __post_init__(self):
        for name in ("f_a", "f_s", "f_c", "f_sp"):
            f = getattr(self, name)
            if not -1.0 < f <= 1.0:
                raise ValueError(f"{name}={f} outside (-1, 1]")

    @classmethod
    def from_probabilities(cls, p_a=0.0, p_s=0.0, p_c=0.0, p_sp=0.0) -> "NoiseFidelities":
        return cls(1 - 2 * p_a, 1 - 2 * p_s, 1 - 2 * p_c, 1 - 2 * p_sp)

    @property
    def p_a(self) -> float:
        return (1 - self.f_a) / 2

    @property
    def p_s(self) -> float:
        return (1 - self.f_s) / 2

    @property
    def p_c(self) -> float:
        return (1 - self.f_c) / 2

    @property
    def p_sp(self) -> float:
        return (1 - self.f_sp) / 2


def state_error_ptm(f: NoiseFidelities) -> np.ndarray:
    return bitflip_ptm(f.p_s, [0], 2)


def assignment_error_ptm(f: NoiseFidelities) -> np.ndarray:
    return bitflip_ptm(f.p_a, [1], 2)


def correlated_error_ptm(f: NoiseFidelities) -> np.ndarray:
    return bitflip_ptm(f.p_c, [0, 1], 2)


def state_prep_ptm(f: NoiseFidelities) -> np.ndarray:
    """Preparation error on the qubit, as a 2-wire (qubit, cbit) PTM."""
    return bitflip_ptm(f.p_sp, [0], 2)


def measurement_ptm(f: NoiseFidelities) -> np.ndarray:
    """Noisy mid-circuit measurement: CNOT after state, assignment and correlated errors."""
    return compose(cnot_ptm(), state_error_ptm(f), assignment_error_ptm(f), correlated_error_ptm(f))


def measurement_ptm_closed_form(f: NoiseFidelities) -> np.ndarray:
    out = np.zeros((4, 4))
    out[0, 0] = 1.0
    out[1, 3] = f.f_a * f.f_s
    out[2, 2] = f.f_c * f.f_s
    out[3, 1] = f.f_c * f.f_a
    return out


def repeated_measurement_closed_form(f: NoiseFidelities, k: int) -> np.ndarray:
    """Closed form of the measurement PTM raised to ``2k``."""
    side = f.f_a ** (2 * k) * (f.f_c * f.f_s) ** k
    return np.diag([1.0, side, (f.f_c * f.f_s) ** (2 * k), side])


def final_measurement_ptm(f: NoiseFidelities, keep_ancilla: bool = False) -> np.ndarray:
    """Final measurement whose outcome is written back onto the measured wire.

    Built from an ancilla reset, the noisy CNOT-picture measurement onto the
    ancilla, a reset of the measured wire and a swap. With ``keep_ancilla``
    the 2-wire PTM is returned; otherwise the ancilla is discarded.
    """
    full = compose(
        swap_ptm(),
        tensor(reset_ptm(), identity(1)),
        measurement_ptm(f),
        tensor(identity(1), reset_ptm()),
    )
    return full if keep_ancilla else discard(full, 1)


def final_measurement_closed_form(f: NoiseFidelities) -> np.ndarray:
    return tensor(np.diag([1.0, f.f_a * f.f_s]), reset_ptm())


def mcb_ptm(f: NoiseFidelities, k: int) -> np.ndarray:
    """PTM of the full cycle-benchmarking circuit with ``2k`` measurements."""
    fm = tensor(discard(final_measurement_ptm(f, keep_ancilla=True), 1), identity(1))
    return compose(fm, power(measurement_ptm(f), 2 * k), state_prep_ptm(f))


def mcb_ptm_closed_form(f: NoiseFidelities, k: int) -> np.ndarray:
    side = f.f_a ** (2 * k) * (f.f_c * f.f_s) ** k
    head = f.f_a * f.f_s * f.f_sp
    return np.diag([1.0, side, (f.f_c * f.f_s) ** (2 * k) * head, side * head])


def mcb_expectations_closed_form(f: NoiseFidelities, k: int) -> dict[str, float]:
    """Noisy ``<IZ>, <ZI>, <ZZ>`` of the cycle-benchmarking circuit started in ``|00>``."""
    d = np.diag(mcb_ptm_closed_form(f, k))
    return {"IZ": float(d[1]), "ZI": float(d[2]), "ZZ": float(d[3])}


def apply(ptm: np.ndarray, vector: Sequence[float]) -> np.ndarray:
    return np.asarray(ptm) @ np.asarray(vector, dtype=float)
