"""Gate matrices. Qubit gates on qutrit wires are embedded block-diagonally."""

from __future__ import annotations

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
CZ = np.diag([1, 1, 1, -1]).astype(complex)

PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def embed(u: np.ndarray, dim: int) -> np.ndarray:
    """Embed a qubit gate into a ``dim``-level wire, acting trivially on ``|2>``."""
    u = np.asarray(u, dtype=complex)
    if dim == u.shape[0]:
        return u
    out = np.eye(dim, dtype=complex)
    out[:2, :2] = u
    return out


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def r12(theta: float) -> np.ndarray:
    """Rotation ``exp(-i theta X_12 / 2)`` in the ``{|1>, |2>}`` block of a qutrit."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[1, 0, 0], [0, c, -1j * s], [0, -1j * s, c]], dtype=complex)


X01 = embed(X, 3)
X12 = np.array([[1, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=complex)


def pauli_string(label: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(out, PAULIS[ch])
    return out


def is_unitary(u: np.ndarray, atol: float = 1e-10) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol)
