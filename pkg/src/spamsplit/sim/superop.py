"""Superoperator helpers.

Density matrices are vectorised row-major, ``vec(rho)[i*d + j] = rho[i, j]``,
so ``vec(A rho B) = (A kron B^T) vec(rho)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def from_unitary(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    return np.kron(u, u.conj())


def from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(k, np.conj(k)) for k in np.asarray(kraus, dtype=complex))


def mixture(terms: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    """Superoperator of ``sum_i p_i U_i rho U_i^dag``; weights may be negative."""
    return sum(p * from_unitary(u) for p, u in terms)


def dissipator(op: np.ndarray) -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    d = op.shape[0]
    eye = np.eye(d)
    ld = op.conj().T @ op
    return np.kron(op, op.conj()) - 0.5 * np.kron(ld, eye) - 0.5 * np.kron(eye, ld.T)


def apply(superop: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    return (superop @ rho.reshape(-1)).reshape(d, d)


def choi(superop: np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) S(|i><j|)``."""
    d = int(round(np.sqrt(superop.shape[0])))
    s4 = superop.reshape(d, d, d, d)  # [out_r, out_c, in_r, in_c]
    return s4.transpose(2, 0, 3, 1).reshape(d * d, d * d)


def is_cptp(superop: np.ndarray, psd_tol: float = 1e-9, tp_tol: float = 1e-10) -> bool:
    d = int(round(np.sqrt(superop.shape[0])))
    c = choi(superop)
    if not np.allclose(c, c.conj().T, atol=psd_tol):
        return False
    if np.linalg.eigvalsh(0.5 * (c + c.conj().T)).min() < -psd_tol:
        return False
    # trace preservation: sum_i S[(i,i), :] equals vec(I)
    tr_row = superop.reshape(d, d, d * d)[np.arange(d), np.arange(d)].sum(axis=0)
    return bool(np.allclose(tr_row, np.eye(d).reshape(-1), atol=tp_tol))


def dephasing(dim: int) -> np.ndarray:
    """Complete dephasing in the computational basis (non-selective measurement)."""
    projectors = [np.diag(np.eye(dim)[k]) for k in range(dim)]
    return from_kraus(projectors)
