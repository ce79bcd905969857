"""RabiEF sensitivity to readout errors from overlapping Gaussian discrimination.

A three-level toy with ideal gates and input state ``(1-alpha)|0><0| + alpha|1><1|``.
Level 0 reads out as ``N(-1, sigma_m)``, levels 1 and 2 as ``N(+1, sigma_m)``,
and a shot counts as 1 when the sample is positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from ..fitting import Estimate, SinusoidFit, fit_sin_squared_pair, _sin_jac
from .rabief import estimate_psp

DEFAULT_ANGLES = np.linspace(0.0, 4 * np.pi, 40)
SIGMA_GRID = tuple(np.round(np.arange(0.1, 0.81, 0.1), 10))


def misassignment(sigma_m: float) -> float:
    """``P(1|0) = P(0|1) = Phi(-1/sigma_m)``."""
    if sigma_m <= 0:
        raise ValueError("sigma_m must be positive")
    return float(norm.cdf(-1.0 / sigma_m))


def readout_fidelity(sigma_m: float) -> float:
    """``F = 1 - [P(1|0) + P(0|1)] / 2``."""
    return 1.0 - misassignment(sigma_m)


def bright_probability(alpha: float, theta, with_pi: bool) -> np.ndarray:
    """Probability that the toy ends outside ``|0>`` (the ``mu = +1`` population)."""
    s2 = np.sin(np.asarray(theta, dtype=float) / 2) ** 2
    if with_pi:
        return alpha + (1 - alpha) * s2
    return (1 - alpha) + alpha * s2


@dataclass
class ToyResult:
    estimate: Estimate
    nopi_fit: SinusoidFit
    pi_fit: SinusoidFit
    s_nopi: np.ndarray
    s_pi: np.ndarray


def sample_labels(
    p_bright: np.ndarray, sigma_m: float, normals: np.ndarray, uniforms: np.ndarray
) -> np.ndarray:
    """Gaussian readout of shots given per-angle bright probabilities.

    ``uniforms`` picks the level, ``normals`` the readout noise; both have
    shape ``(angles, shots)`` so that callers can reuse them across
    ``sigma_m`` values.
    """
    mu = np.where(uniforms < p_bright[:, None], 1.0, -1.0)
    return (mu + sigma_m * normals > 0).astype(float)


def gaussian_discrimination_rabief(
    alpha: float,
    sigma_m: float,
    shots: int,
    rng: Optional[np.random.Generator] = None,
    angles: Sequence[float] = DEFAULT_ANGLES,
    draws: Optional[tuple] = None,
    share_phase: bool = True,
) -> ToyResult:
    """Run the toy RabiEF once and return the estimate with its propagated fit error.

    ``draws`` may hold pre-generated ``(normals, uniforms)`` for the no-pi
    and pi circuits, each of shape ``(2, angles, shots)``. Both signals are
    fitted jointly with a common frequency and, by default, a common phase,
    since they come from the same rotation.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if sigma_m <= 0:
        raise ValueError("sigma_m must be positive")
    x = np.asarray(angles, dtype=float)
    if draws is None:
        if rng is None:
            raise ValueError("need an rng or pre-generated draws")
        draws = (rng.standard_normal((2, len(x), shots)), rng.random((2, len(x), shots)))
    normals, uniforms = draws
    signals = []
    for i, with_pi in enumerate((False, True)):
        labels = sample_labels(bright_probability(alpha, x, with_pi), sigma_m, normals[i], uniforms[i])
        signals.append(labels.mean(axis=1))
    f_nopi, f_pi = fit_sin_squared_pair(x, signals[0], signals[1], share_phase=share_phase)
    return ToyResult(estimate_psp(f_nopi, f_pi), f_nopi, f_pi, signals[0], signals[1])


def expected_error_bar(
    alpha: float, sigma_m: float, shots: int, angles: Sequence[float] = DEFAULT_ANGLES
) -> float:
    """Asymptotic standard error of the toy estimate.

    Linearises both sin^2 fits around the noiseless signals with binomial
    per-point variances.
    """
    x = np.asarray(angles, dtype=float)
    eps = misassignment(sigma_m)
    amps = []
    for with_pi in (False, True):
        p = eps + (1 - 2 * eps) * bright_probability(alpha, x, with_pi)
        a = (1 - 2 * eps) * (alpha if not with_pi else 1 - alpha)
        J = _sin_jac(x, a, 0.5, 0.0)
        w = shots / np.maximum(p * (1 - p), 1e-300)
        cov = np.linalg.inv(J.T @ (w[:, None] * J))
        amps.append((a, np.sqrt(cov[0, 0])))
    (a1, s1), (a2, s2) = amps
    total = a1 + a2
    return float(np.hypot(a2 * s1, a1 * s2) / total**2)


@dataclass
class SweepPoint:
    sigma_m: float
    fidelity: float
    estimates: np.ndarray
    error_bars: np.ndarray
    expected_error_bar: float

    @property
    def mean(self) -> float:
        return float(self.estimates.mean())


def sensitivity_sweep(
    alpha: float,
    sigmas: Sequence[float],
    shots: int,
    repeats: int,
    rng: np.random.Generator,
    angles: Sequence[float] = DEFAULT_ANGLES,
    share_phase: bool = True,
) -> list[SweepPoint]:
    """Repeat the toy for each ``sigma_m`` with common random numbers across ``sigmas``."""
    x = np.asarray(angles, dtype=float)
    draws = [
        (rng.standard_normal((2, len(x), shots)), rng.random((2, len(x), shots)))
        for _ in range(repeats)
    ]
    out = []
    for s in sigmas:
        res = [
            gaussian_discrimination_rabief(alpha, s, shots, angles=x, draws=d, share_phase=share_phase)
            for d in draws
        ]
        out.append(
            SweepPoint(
                float(s),
                readout_fidelity(s),
                np.array([r.estimate.value for r in res]),
                np.array([r.estimate.stderr for r in res]),
                expected_error_bar(alpha, s, shots, x),
            )
        )
    return out
