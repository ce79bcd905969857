from __future__ import annotations

from typing import Sequence

import numpy as np


class DensityMatrix:
    """Density matrix of a register of qubits and qutrits.

    Wire 0 is the most significant tensor factor. The matrix may be left
    unnormalised while branches of an exact (non-sampled) run are tracked.
    """

    def __init__(self, data: np.ndarray, dims: Sequence[int]):
        self.dims = tuple(int(d) for d in dims)
        if any(d not in (2, 3) for d in self.dims):
            raise ValueError(f"wire dimensions must be 2 or 3, got {self.dims}")
        size = int(np.prod(self.dims))
        data = np.asarray(data, dtype=complex)
        if data.shape != (size, size):
            raise ValueError(f"matrix shape {data.shape} does not match dims {self.dims}")
        self.data = data

    @classmethod
    def basis(cls, dims: Sequence[int], levels: Sequence[int] | None = None) -> "DensityMatrix":
        dims = tuple(dims)
        levels = levels or [0] * len(dims)
        idx = int(np.ravel_multi_index(tuple(levels), dims))
        size = int(np.prod(dims))
        data = np.zeros((size, size), dtype=complex)
        data[idx, idx] = 1.0
        return cls(data, dims)

    @classmethod
    def from_populations(cls, populations: Sequence[float]) -> "DensityMatrix":
        p = np.asarray(populations, dtype=float)
        return cls(np.diag(p).astype(complex), [p.size])

    @classmethod
    def product(cls, states: Sequence[np.ndarray]) -> "DensityMatrix":
        data = np.ones((1, 1), dtype=complex)
        dims = []
        for s in states:
            data = np.kron(data, s)
            dims.append(s.shape[0])
        return cls(data, dims)

    def copy(self) -> "DensityMatrix":
        return DensityMatrix(self.data.copy(), self.dims)

    @property
    def n(self) -> int:
        return len(self.dims)

    def trace(self) -> float:
        return float(np.real(np.trace(self.data)))

    def normalized(self) -> "DensityMatrix":
        return DensityMatrix(self.data / self.trace(), self.dims)

    def _tensor(self) -> np.ndarray:
        return self.data.reshape(self.dims + self.dims)

    def _from_tensor(self, t: np.ndarray) -> None:
        size = int(np.prod(self.dims))
        self.data = np.ascontiguousarray(t).reshape(size, size)

    def apply_unitary(self, u: np.ndarray, wires: Sequence[int]) -> "DensityMatrix":
        wires = list(wires)
        if len(wires) == self.n and wires == list(range(self.n)):
            self.data = u @ self.data @ u.conj().T
            return self
        n, m = self.n, len(wires)
        dw = [self.dims[w] for w in wires]
        u4 = np.asarray(u, dtype=complex).reshape(dw + dw)
        t = self._tensor()
        t = np.tensordot(u4, t, axes=(list(range(m, 2 * m)), wires))
        t = np.moveaxis(t, list(range(m)), wires)
        t = np.tensordot(u4.conj(), t, axes=(list(range(m, 2 * m)), [n + w for w in wires]))
        t = np.moveaxis(t, list(range(m)), [n + w for w in wires])
        self._from_tensor(t)
        return self

    def apply_superop(self, s: np.ndarray, wires: Sequence[int]) -> "DensityMatrix":
        wires = list(wires)
        if len(wires) == self.n and wires == list(range(self.n)):
            size = self.data.shape[0]
            self.data = (s @ self.data.reshape(-1)).reshape(size, size)
            return self
        n, m = self.n, len(wires)
        dw = [self.dims[w] for w in wires]
        s8 = np.asarray(s).reshape(dw * 4)
        cols = [n + w for w in wires]
        t = np.tensordot(s8, self._tensor(), axes=(list(range(2 * m, 4 * m)), wires + cols))
        t = np.moveaxis(t, list(range(2 * m)), wires + cols)
        self._from_tensor(t)
        return self

    def populations(self, wires: Sequence[int] | None = None) -> np.ndarray:
        """Diagonal populations, marginalised onto ``wires`` (all wires by default)."""
        diag = np.real(np.diag(self.data)).reshape(self.dims)
        if wires is None:
            return diag
        wires = list(wires)
        other = tuple(w for w in range(self.n) if w not in wires)
        marg = diag.sum(axis=other)
        # sum keeps remaining axes in increasing wire order
        order = np.argsort(np.argsort(wires))
        return np.transpose(marg, order) if marg.ndim > 1 else marg

    def project(self, wire: int, level: int) -> "DensityMatrix":
        """Unnormalised projection of ``wire`` onto ``level``."""
        mask = np.zeros(self.dims[wire])
        mask[level] = 1.0
        shape = [1] * self.n
        shape[wire] = self.dims[wire]
        vec = np.broadcast_to(mask.reshape(shape), self.dims).reshape(-1)
        return DensityMatrix(self.data * np.outer(vec, vec), self.dims)

    def reduced(self, keep: Sequence[int]) -> np.ndarray:
        """Partial trace onto ``keep`` (in the given order)."""
        keep = list(keep)
        n = self.n
        t = self._tensor()
        letters = "abcdefghijklmnopqrstuvwxyz"
        rows = list(letters[:n])
        cols = list(letters[n:2 * n])
        for w in range(n):
            if w not in keep:
                cols[w] = rows[w]
        out = "".join(rows[w] for w in keep) + "".join(cols[w] for w in keep)
        res = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
        d = int(np.prod([self.dims[w] for w in keep]))
        return res.reshape(d, d)

    def expectation(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(op @ self.data)))

    def check_valid(self, herm_tol: float = 1e-10, trace_tol: float = 1e-9, psd_tol: float = 1e-8) -> None:
        if np.abs(self.data - self.data.conj().T).max() > herm_tol:
            raise ValueError("state is not Hermitian")
        if abs(self.trace() - 1.0) > trace_tol:
            raise ValueError(f"state trace {self.trace()} != 1")
        if np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T)).min() < -psd_tol:
            raise ValueError("state is not positive semidefinite")
