"""Thermal relaxation channels for transmon qubits and qutrits."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from . import superop
from .device import DeviceParams


def _ket_bra(i: int, j: int, dim: int) -> np.ndarray:
    m = np.zeros((dim, dim))
    m[i, j] = 1.0
    return m


def lindblad_operators(params: DeviceParams, dim: int = 3) -> list[tuple[float, np.ndarray]]:
    """(rate, operator) pairs for relaxation, heating and dephasing.

    For ``dim == 2`` the operators touching ``|2>`` are dropped. There is no
    direct ``|2> -> |0>`` decay.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    r = params.rates()
    ops = [
        (r["g1"], _ket_bra(0, 1, 3)),
        (r["g2"], _ket_bra(1, 0, 3)),
        (r["g5"], np.diag([1.0, -1.0, 0.0])),
    ]
    if dim == 3:
        ops += [
            (r["g3"], _ket_bra(1, 2, 3)),
            (r["g4"], _ket_bra(2, 1, 3)),
            (r["g6"], np.diag([0.0, 1.0, -1.0])),
        ]
    return [(g, op[:dim, :dim]) for g, op in ops]


def lindblad_generator(params: DeviceParams, dim: int = 3) -> np.ndarray:
    return sum(g * superop.dissipator(op) for g, op in lindblad_operators(params, dim))


@lru_cache(maxsize=256)
def _cached_channel(params: DeviceParams, t: float, dim: int) -> np.ndarray:
    out = expm(lindblad_generator(params, dim) * t)
    out.setflags(write=False)
    return out


def lindblad_channel(params: DeviceParams, t: float, dim: int = 3) -> np.ndarray:
    """Superoperator ``exp(L t)`` of free thermal evolution for a time ``t`` (seconds)."""
    if t < 0:
        raise ValueError(f"evolution time must be non-negative, got {t}")
    if t == 0:
        return np.eye(dim * dim, dtype=complex)
    return _cached_channel(params, float(t), dim)


def measurement_channel(params: DeviceParams, dim: int = 3) -> np.ndarray:
    """Noise before an ideal qutrit measurement: relaxation over ``t_meas`` then leakage to ``|2>``."""
    thermal = lindblad_channel(params, params.t_meas, dim)
    if dim == 2:
        return thermal
    # constant map rho -> Tr(rho) |2><2|
    to_two = np.zeros((dim * dim, dim * dim), dtype=complex)
    to_two[2 * dim + 2, [k * dim + k for k in range(dim)]] = 1.0
    return (1.0 - params.p_leak) * thermal + params.p_leak * to_two


def steady_state(params: DeviceParams, dim: int = 3) -> np.ndarray:
    """Fixed point of the generator (null vector normalised to unit trace)."""
    gen = lindblad_generator(params, dim)
    w, v = np.linalg.eig(gen)
    vec = v[:, np.argmin(np.abs(w))]
    rho = vec.reshape(dim, dim)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)
