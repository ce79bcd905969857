"""Device parameters for the qutrit simulator (transmon defaults)."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy import constants

# 3x3 column-stochastic readout assignment matrix, R[j, k] = P(label j | state k)
DEFAULT_ASSIGNMENT = (
    (0.991, 0.009, 0.0),
    (0.009, 0.931, 0.06),
    (0.0, 0.06, 0.94),
)

IDENTITY_ASSIGNMENT = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def check_column_stochastic(matrix: np.ndarray, atol: float = 1e-12) -> None:
    matrix = np.asarray(matrix, dtype=float)
    if np.any(matrix < -atol):
        raise ValueError("assignment matrix has negative entries")
    sums = matrix.sum(axis=0)
    if not np.allclose(sums, 1.0, atol=atol, rtol=0.0):
        raise ValueError(f"assignment matrix columns must sum to 1, got {sums}")


@dataclass(frozen=True)
class DeviceParams:
    """Transmon parameters. Times in seconds, frequencies in Hz (cycles, not radians)."""

    t_eff: float = 60e-3
    t1: float = 200e-6
    t2: float = 100e-6
    t1_12: float = 100e-6
    t2_12: float = 50e-6
    omega01: float = 4.9e9
    delta: float = -0.3e9
    t_rep_delay: float = 250e-6
    t_meas: float = 1244e-9
    p_leak: float = 0.002
    assignment: tuple = field(default=DEFAULT_ASSIGNMENT)

    def __post_init__(self):
        for name in ("t_eff", "t1", "t2", "t1_12", "t2_12", "t_rep_delay", "t_meas"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.p_leak <= 1.0:
            raise ValueError(f"p_leak must be a probability, got {self.p_leak}")
        rows = tuple(tuple(float(x) for x in row) for row in np.asarray(self.assignment, dtype=float))
        if len(rows) != 3 or any(len(r) != 3 for r in rows):
            raise ValueError("assignment matrix must be 3x3")
        check_column_stochastic(np.array(rows))
        object.__setattr__(self, "assignment", rows)

    @property
    def R(self) -> np.ndarray:
        return np.array(self.assignment)

    @property
    def boltzmann_01(self) -> float:
        """``exp(-h f01 / k_B T)``, the 1/0 population ratio at equilibrium."""
        return float(np.exp(-constants.h * self.omega01 / (constants.k * self.t_eff)))

    @property
    def boltzmann_12(self) -> float:
        return float(np.exp(-constants.h * (self.omega01 + self.delta) / (constants.k * self.t_eff)))

    def rates(self) -> dict[str, float]:
        g1 = 1.0 / self.t1
        g3 = 1.0 / self.t1_12
        return {
            "g1": g1,
            "g2": g1 * self.boltzmann_01,
            "g3": g3,
            "g4": g3 * self.boltzmann_12,
            "g5": 1.0 / self.t2,
            "g6": 1.0 / self.t2_12,
        }

    def thermal_populations(self, dim: int = 3) -> np.ndarray:
        """Boltzmann populations of the lowest ``dim`` levels."""
        weights = np.array([1.0, self.boltzmann_01, self.boltzmann_01 * self.boltzmann_12])[:dim]
        return weights / weights.sum()

    def replace(self, **changes) -> "DeviceParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return DeviceParams(**values)


DEFAULT_DEVICE = DeviceParams()

# config key -> (attribute, scale to SI)
CONFIG_KEYS = {
    "t_eff_mK": ("t_eff", 1e-3),
    "t1_us": ("t1", 1e-6),
    "t2_us": ("t2", 1e-6),
    "t1_12_us": ("t1_12", 1e-6),
    "t2_12_us": ("t2_12", 1e-6),
    "omega01_ghz": ("omega01", 1e9),
    "delta_ghz": ("delta", 1e9),
    "t_rep_delay_us": ("t_rep_delay", 1e-6),
    "t_meas_ns": ("t_meas", 1e-9),
    "p_leak": ("p_leak", 1.0),
}


def device_from_mapping(values: dict) -> DeviceParams:
    """Build parameters from config-file keys; missing keys keep their defaults.

    ``assignment`` is 9 numbers, row-major.
    """
    kwargs = {}
    for key, value in values.items():
        if key == "assignment":
            flat = np.asarray(value, dtype=float).ravel()
            if flat.size != 9:
                raise ValueError("assignment needs exactly 9 numbers (row-major 3x3)")
            kwargs["assignment"] = tuple(map(tuple, flat.reshape(3, 3)))
        elif key in CONFIG_KEYS:
            attr, scale = CONFIG_KEYS[key]
            kwargs[attr] = float(value) * scale
        else:
            raise KeyError(key)
    return DEFAULT_DEVICE.replace(**kwargs)


def device_to_mapping(params: DeviceParams) -> dict:
    out = {key: getattr(params, attr) / scale for key, (attr, scale) in CONFIG_KEYS.items()}
    out["assignment"] = [x for row in params.assignment for x in row]
    return out
