"""Nonlinear least squares for Rabi (sin^2) and exponential-decay models.

The optimizer is a plain Levenberg-Marquardt loop with analytic Jacobians.
Parameter covariances are ``s^2 (J^T W J)^-1`` with the residual variance
``s^2 = chi^2 / (N - p)`` unless ``absolute_sigma`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

MAX_ITER = 200
XTOL = 1e-10
DECAY_F_MAX = 1.05


class FitError(RuntimeError):
    """Optimizer did not converge; ``params`` and ``residual_norm`` hold the best iterate."""

    def __init__(self, message: str, params=None, residual_norm: float = float("nan")):
        super().__init__(f"{message} (residual norm {residual_norm:.3e})")
        self.params = params
        self.residual_norm = residual_norm


class DegenerateFitError(FitError):
    pass


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float = 0.0

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr}


@dataclass
class LMResult:
    params: np.ndarray
    jacobian: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    p0: Sequence[float],
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_iter: int = MAX_ITER,
    xtol: float = XTOL,
) -> LMResult:
    """Minimise ``||fun(p)||^2``.

    ``project`` maps a trial point back into the feasible set (simple box
    constraints). Convergence is declared when an accepted step is shorter than
    ``xtol`` relative to the parameter vector norm, or when the damping
    has grown so large that no representable step reduces the cost.
    """
    p = np.asarray(p0, dtype=float).copy()
    if project is not None:
        p = project(p)
    r = fun(p)
    cost = r @ r
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = jac(p)
        g = J.T @ r
        A = J.T @ J
        scale = np.maximum(np.diag(A), 1e-12 * max(np.diag(A).max(), 1e-300))
        if cost == 0.0 or not np.any(g):
            return LMResult(p, J, r, it, True)
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                step = np.full_like(p, np.nan)
            trial = p + step
            if project is not None:
                trial = project(trial)
            r_trial = fun(trial) if np.all(np.isfinite(trial)) else None
            if r_trial is not None and np.all(np.isfinite(r_trial)) and r_trial @ r_trial <= cost:
                break
            lam *= 10.0
            if lam > 1e16:
                return LMResult(p, J, r, it, True)
        dp = trial - p
        p, r = trial, r_trial
        cost = r @ r
        lam = max(lam / 10.0, 1e-12)
        if np.linalg.norm(dp) <= xtol * (np.linalg.norm(p) + xtol):
            return LMResult(p, jac(p), r, it, True)
    return LMResult(p, jac(p), r, max_iter, False)


def _covariance(J: np.ndarray, r: np.ndarray, absolute_sigma: bool) -> np.ndarray:
    n, k = J.shape
    cov = np.linalg.pinv(J.T @ J)
    if not absolute_sigma:
        dof = n - k
        cov = cov * ((r @ r) / dof if dof > 0 else np.inf)
    return 0.5 * (cov + cov.T)


def _weights(ys: np.ndarray, weights) -> np.ndarray:
    if weights is None:
        return np.ones_like(ys)
    w = np.asarray(weights, dtype=float)
    if w.shape != ys.shape or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite, non-negative and match ys")
    return w


# -- sin^2 model ---------------------------------------------------------------

SIN_PARAMS = ("a", "b", "phi", "c")


@dataclass
class SinusoidFit:
    """Fit of ``a sin^2(b x + phi) + c``.

    The representation is canonical: ``b > 0`` and ``phi`` in ``(-pi/4, pi/4]``,
    so that the sign of ``a`` is meaningful.
    """

    a: float
    b: float
    phi: float
    c: float
    covariance: np.ndarray
    residual_norm: float
    iterations: int = 0

    @property
    def params(self) -> np.ndarray:
        return np.array([self.a, self.b, self.phi, self.c])

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def a_err(self) -> float:
        return float(self.stderr[0])

    @property
    def b_err(self) -> float:
        return float(self.stderr[1])

    @property
    def phi_err(self) -> float:
        return float(self.stderr[2])

    @property
    def c_err(self) -> float:
        return float(self.stderr[3])

    def __call__(self, x) -> np.ndarray:
        return sin_squared(np.asarray(x, dtype=float), *self.params)

    def to_dict(self) -> dict:
        return {
            "model": "a*sin(b*x+phi)**2+c",
            "params": dict(zip(SIN_PARAMS, map(float, self.params))),
            "stderr": dict(zip(SIN_PARAMS, map(float, self.stderr))),
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
        }


def sin_squared(x, a, b, phi, c):
    return a * np.sin(b * x + phi) ** 2 + c


def _sin_jac(x, a, b, phi):
    u = b * x + phi
    s2 = np.sin(u) ** 2
    d = a * np.sin(2 * u)  # derivative of a sin^2(u) w.r.t. u
    return np.column_stack([s2, d * x, d, np.ones_like(x)])


def _canonical(a, b, phi, c):
    """Map to ``b > 0`` and ``phi`` in ``(-pi/4, pi/4]`` without changing the curve.

    Uses ``sin^2(-u) = sin^2(u)``, period pi in ``u``, and
    ``a sin^2(u + pi/2) + c = -a sin^2(u) + (a + c)``. Returns the new
    parameters and the Jacobian of the map (for covariance transport).
    """
    T = np.eye(4)
    if b < 0:
        b, phi = -b, -phi
        T = np.diag([1.0, -1.0, -1.0, 1.0]) @ T
    phi = (phi + np.pi / 2) % np.pi - np.pi / 2  # now in [-pi/2, pi/2)
    if phi > np.pi / 4 or phi <= -np.pi / 4:
        phi = phi - np.pi / 2 if phi > np.pi / 4 else phi + np.pi / 2
        a, c = -a, c + a
        flip = np.eye(4)
        flip[0, 0] = -1.0
        flip[3, 0] = 1.0
        T = flip @ T
    return a, b, phi, c, T


def _dominant_frequencies(x: np.ndarray, y: np.ndarray, n_peaks: int = 3) -> list[float]:
    """Angular frequencies of the strongest non-zero Fourier components of ``y``."""
    span = x.max() - x.min()
    if span <= 0:
        raise ValueError("xs must span a non-zero range")
    dx = np.min(np.diff(np.sort(x)))
    # zero-padded DFT grid, evaluated directly so non-uniform sampling works
    w = np.linspace(0.5 * np.pi / span, np.pi / dx, 16 * len(x))
    yc = y - y.mean()
    power = np.abs(np.exp(-1j * np.outer(w, x)) @ yc) ** 2
    peaks = [i for i in range(1, len(w) - 1) if power[i] >= power[i - 1] and power[i] >= power[i + 1]]
    peaks.sort(key=lambda i: -power[i])
    out = [float(w[i]) for i in peaks[:n_peaks]]
    return out or [float(w[np.argmax(power)])]


def _linear_seed(x, y, w, omega):
    """Amplitude, phase and offset at fixed frequency ``omega = 2 b`` by weighted linear least squares."""
    M = np.column_stack([np.ones_like(x), np.cos(omega * x), np.sin(omega * x)])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(M * sw[:, None], y * sw, rcond=None)
    c0, alpha, beta = coef
    # a sin^2(u) + c = (a/2 + c) - (a/2) cos(2u)
    r = np.hypot(alpha, beta)
    a = 2 * r
    phi = 0.5 * np.arctan2(beta, -alpha)
    return np.array([a, omega / 2, phi, c0 - r])


def fit_sin_squared(
    xs,
    ys,
    weights=None,
    b0: Optional[float] = None,
    absolute_sigma: bool = False,
) -> SinusoidFit:
    """Least-squares fit of ``a sin^2(b x + phi) + c``.

    The frequency is seeded from the dominant Fourier component (or ``b0``);
    amplitude, phase and offset are then seeded by a linear fit at that
    frequency. The best of the candidate starts is returned.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D arrays of equal length")
    if len(x) < 4:
        raise ValueError("need at least 4 points")
    w = _weights(y, weights)
    sw = np.sqrt(w)
    omegas = [2 * b0] if b0 is not None else _dominant_frequencies(x, y)

    def fun(p):
        return sw * (sin_squared(x, *p) - y)

    def jac(p):
        return sw[:, None] * _sin_jac(x, p[0], p[1], p[2])

    runs = [levenberg_marquardt(fun, jac, _linear_seed(x, y, w, omega)) for omega in omegas]
    converged = [r for r in runs if r.converged]
    best = min(converged or runs, key=lambda r: r.residuals @ r.residuals)
    norm = float(np.sqrt(best.residuals @ best.residuals))
    if not converged:
        raise FitError("sin^2 fit did not converge", best.params, norm)
    a, b, phi, c, T = _canonical(*best.params)
    cov = T @ _covariance(best.jacobian, best.residuals, absolute_sigma) @ T.T
    return SinusoidFit(float(a), float(b), float(phi), float(c), cov, norm, best.iterations)


def _amplitude_offset(x, y, w, b, phi):
    """Weighted linear fit of ``(a, c)`` at fixed ``b`` and ``phi``."""
    M = np.column_stack([np.sin(b * x + phi) ** 2, np.ones_like(x)])
    sw = np.sqrt(w)
    (a, c), *_ = np.linalg.lstsq(M * sw[:, None], y * sw, rcond=None)
    return a, c


def fit_sin_squared_pair(
    xs,
    ys1,
    ys2,
    weights1=None,
    weights2=None,
    share_phase: bool = False,
    absolute_sigma: bool = False,
) -> tuple[SinusoidFit, SinusoidFit]:
    """Joint fit of two sin^2 signals sharing the frequency ``b`` (and optionally ``phi``).

    The stronger signal seeds ``b`` and ``phi``; amplitudes and offsets are
    seeded by linear least squares at that frequency and phase.
    """
    x = np.asarray(xs, dtype=float)
    y1 = np.asarray(ys1, dtype=float)
    y2 = np.asarray(ys2, dtype=float)
    w1, w2 = _weights(y1, weights1), _weights(y2, weights2)
    s1, s2 = np.sqrt(w1), np.sqrt(w2)
    strong, w_strong = (y1, weights1) if np.ptp(y1) >= np.ptp(y2) else (y2, weights2)
    seed = fit_sin_squared(x, strong, w_strong)
    a1, c1 = _amplitude_offset(x, y1, w1, seed.b, seed.phi)
    a2, c2 = _amplitude_offset(x, y2, w2, seed.b, seed.phi)
    n = len(x)
    if share_phase:
        p0 = np.array([a1, a2, seed.b, seed.phi, c1, c2])
        idx1, idx2 = [0, 2, 3, 4], [1, 2, 3, 5]
    else:
        p0 = np.array([a1, a2, seed.b, seed.phi, seed.phi, c1, c2])
        idx1, idx2 = [0, 2, 3, 5], [1, 2, 4, 6]
    size = len(p0)

    def fun(p):
        return np.concatenate(
            [s1 * (sin_squared(x, *p[idx1]) - y1), s2 * (sin_squared(x, *p[idx2]) - y2)]
        )

    def jac(p):
        J = np.zeros((2 * n, size))
        J[:n, idx1] = s1[:, None] * _sin_jac(x, *p[idx1][:3])
        J[n:, idx2] += s2[:, None] * _sin_jac(x, *p[idx2][:3])
        return J

    res = levenberg_marquardt(fun, jac, p0)
    norm = float(np.sqrt(res.residuals @ res.residuals))
    if not res.converged:
        raise FitError("shared-frequency fit did not converge", res.params, norm)
    cov = _covariance(res.jacobian, res.residuals, absolute_sigma)
    fits = []
    for idx, rows in ((idx1, slice(0, n)), (idx2, slice(n, 2 * n))):
        a, b, phi, c, T = _canonical(*res.params[idx])
        sub = cov[np.ix_(idx, idx)]
        r = res.residuals[rows]
        fits.append(
            SinusoidFit(float(a), float(b), float(phi), float(c), T @ sub @ T.T,
                        float(np.sqrt(r @ r)), res.iterations)
        )
    return fits[0], fits[1]


# -- decay model ---------------------------------------------------------------


@dataclass
class DecayFit:
    """Fit of ``A f^(2k)``."""

    A: float
    f: float
    covariance: np.ndarray
    residual_norm: float
    iterations: int = 0

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def A_err(self) -> float:
        return float(self.stderr[0])

    @property
    def f_err(self) -> float:
        return float(self.stderr[1])

    @property
    def rate(self) -> Estimate:
        """The per-double-measurement factor ``f^2``."""
        return Estimate(self.f**2, 2 * abs(self.f) * self.f_err)

    def __call__(self, k) -> np.ndarray:
        return self.A * self.f ** (2 * np.asarray(k, dtype=float))

    def to_dict(self) -> dict:
        return {
            "model": "A*f**(2*k)",
            "params": {"A": self.A, "f": self.f},
            "stderr": {"A": self.A_err, "f": self.f_err},
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
        }


def fit_decay(ks, ys, weights=None, absolute_sigma: bool = False) -> DecayFit:
    """Least-squares fit of ``y = A f^(2k)`` with ``f`` constrained to ``(0, 1.05]``."""
    k = np.asarray(ks, dtype=float)
    y = np.asarray(ys, dtype=float)
    if k.shape != y.shape or k.ndim != 1:
        raise ValueError("ks and ys must be 1-D arrays of equal length")
    if len(np.unique(k)) < 2:
        raise ValueError("need at least two distinct depths")
    if np.ptp(y) == 0.0:
        raise DegenerateFitError("all expectation values are equal; decay is undetermined")
    w = _weights(y, weights)
    sw = np.sqrt(w)
    t = 2 * k

    pos = y > 0
    if pos.sum() >= 2 and len(np.unique(t[pos])) >= 2:
        slope, icpt = np.polyfit(t[pos], np.log(y[pos]), 1)
        p0 = np.array([np.exp(icpt), np.exp(slope)])
    else:
        p0 = np.array([y[np.argmin(k)], 0.99])

    def project(p):
        return np.array([p[0], np.clip(p[1], 1e-12, DECAY_F_MAX)])

    def fun(p):
        return sw * (p[0] * p[1] ** t - y)

    def jac(p):
        A, f = p
        ft = f**t
        dft = np.where(t > 0, t * f ** np.maximum(t - 1, 0), 0.0)
        return sw[:, None] * np.column_stack([ft, A * dft])

    res = levenberg_marquardt(fun, jac, project(p0), project=project)
    norm = float(np.sqrt(res.residuals @ res.residuals))
    if not res.converged:
        raise FitError("decay fit did not converge", res.params, norm)
    cov = _covariance(res.jacobian, res.residuals, absolute_sigma)
    return DecayFit(float(res.params[0]), float(res.params[1]), cov, norm, res.iterations)


# -- mitigation error propagation ---------------------------------------------


def split_mitigate(raw: float, zstar: float, f_sp: Sequence[float] = ()) -> float:
    """``raw * prod(f_sp) / zstar``."""
    if zstar == 0:
        raise ZeroDivisionError("zstar is zero")
    return float(raw * np.prod(np.asarray(f_sp, dtype=float)) / zstar)


def propagate_mitigation_error(
    raw: float,
    raw_sigma: float,
    zstar: float,
    zstar_sigma: float,
    f_sp: Sequence[float] = (),
    f_sp_sigma: Sequence[float] = (),
) -> float:
    """First-order uncertainty of ``raw * prod(f_sp) / zstar`` with independent inputs."""
    if zstar == 0:
        raise ZeroDivisionError("zstar is zero")
    f = np.asarray(f_sp, dtype=float)
    fs = np.asarray(f_sp_sigma, dtype=float)
    if f.shape != fs.shape:
        raise ValueError("f_sp and f_sp_sigma must have equal length")
    prod = np.prod(f)
    terms = [prod / zstar * raw_sigma, raw * prod / zstar**2 * zstar_sigma]
    for i in range(len(f)):
        others = np.prod(np.delete(f, i))
        terms.append(raw * others / zstar * fs[i])
    return float(np.sqrt(np.sum(np.square(terms))))
