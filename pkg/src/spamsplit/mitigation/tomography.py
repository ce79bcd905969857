"""Single-qubit state tomography from (possibly unphysical) Pauli expectations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import sqrtm
from scipy.optimize import minimize

from ..sim.gates import X, Y, Z

RESTARTS = 5
MSE_TOL = 1e-12
PAULIS = (X, Y, Z)


class TomographyError(RuntimeError):
    def __init__(self, message: str, best: "TomographyState"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class TomographyState:
    """``rho = T^dag T / Tr[T^dag T]`` with ``T = [[t1, 0], [t3 + i t4, t2]]``."""

    t1: float
    t2: float
    t3: float
    t4: float
    mse: float = 0.0

    @property
    def params(self) -> np.ndarray:
        return np.array([self.t1, self.t2, self.t3, self.t4])

    @property
    def rho(self) -> np.ndarray:
        return rho_from_params(self.params)

    def bloch(self) -> np.ndarray:
        return bloch_vector(self.rho)


def rho_from_params(t: np.ndarray) -> np.ndarray:
    t1, t2, t3, t4 = t
    T = np.array([[t1, 0.0], [t3 + 1j * t4, t2]])
    m = T.conj().T @ T
    tr = np.real(np.trace(m))
    if tr <= 0:
        raise ValueError("T must be non-zero")
    return m / tr


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    return np.array([np.real(np.trace(P @ rho)) for P in PAULIS])


def rho_from_bloch(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return 0.5 * (np.eye(2) + r[0] * X + r[1] * Y + r[2] * Z)


def params_from_rho(rho: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Triangular factor of ``rho``; eigenvalues are floored so that ``t2 > 0``."""
    w, v = np.linalg.eigh(rho)
    rho = (v * np.clip(w, floor, None)) @ v.conj().T
    rho = rho / np.real(np.trace(rho))
    t2 = np.sqrt(np.real(rho[1, 1]))
    off = rho[1, 0] / t2
    t1 = np.sqrt(max(np.real(rho[0, 0]) - abs(off) ** 2, 0.0))
    return np.array([t1, t2, off.real, off.imag])


def bloch_from_params(t) -> tuple[float, float, float]:
    """Closed-form Bloch vector of :func:`rho_from_params`."""
    t1, t2, t3, t4 = t
    tr = t1 * t1 + t2 * t2 + t3 * t3 + t4 * t4
    if tr <= 0:
        raise ValueError("T must be non-zero")
    return 2 * t2 * t3 / tr, 2 * t2 * t4 / tr, (t1 * t1 + t3 * t3 + t4 * t4 - t2 * t2) / tr


def _mse(t: np.ndarray, target: np.ndarray) -> float:
    try:
        x, y, z = bloch_from_params(t)
    except ValueError:
        return np.inf
    return (x - target[0]) ** 2 + (y - target[1]) ** 2 + (z - target[2]) ** 2


def tomography_fit(
    ex: float, ey: float, ez: float, rng: Optional[np.random.Generator] = None
) -> TomographyState:
    """Physical state minimising the squared distance to ``(<X>, <Y>, <Z>)``.

    Nelder-Mead over ``(t1..t4)`` from the clipped direct inversion plus
    random restarts; the best run is returned.
    """
    target = np.array([ex, ey, ez], dtype=float)
    if not np.all(np.isfinite(target)):
        raise ValueError("expectations must be finite")
    rng = rng or np.random.default_rng(0)
    norm = np.linalg.norm(target)
    clipped = target / norm if norm > 1 else target
    starts = [params_from_rho(rho_from_bloch(clipped))]
    starts += [rng.normal(size=4) for _ in range(RESTARTS - 1)]
    best = None
    for x0 in starts:
        res = minimize(
            _mse, x0, args=(target,), method="Nelder-Mead",
            # rho is invariant under rescaling T, so only the objective spread is a sound stop
            options={"xatol": np.inf, "fatol": MSE_TOL, "maxiter": 4000, "maxfev": 8000},
        )
        if best is None or res.fun < best.fun:
            best = res
    state = TomographyState(*map(float, best.x), mse=float(best.fun))
    if not best.success:
        raise TomographyError(f"simplex did not converge: {best.message}", state)
    return state


def check_state(rho: np.ndarray, tol: float = 1e-9) -> None:
    rho = np.asarray(rho)
    if rho.shape[0] != rho.shape[1]:
        raise ValueError("state must be square")
    if not np.allclose(rho, rho.conj().T, atol=tol):
        raise ValueError("state is not Hermitian")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValueError("state is not positive semidefinite")
    if abs(np.trace(rho) - 1) > 1e-7:
        raise ValueError("state does not have unit trace")


def state_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    check_state(rho)
    check_state(sigma)
    s = sqrtm(rho)
    inner = sqrtm(s @ sigma @ s)
    return float(np.clip(np.real(np.trace(inner)) ** 2, 0.0, 1.0))
