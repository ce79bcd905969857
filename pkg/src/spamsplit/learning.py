"""Noise-model learning: fidelity extraction, the two-path workflow, assignment maps."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .experiments.mcb import McbConfig, McbResult, mcb_expectations, simulate_mcb, fit_mcb
from .experiments.rabief import RabiefConfig, RabiefResult, run_rabief
from .fitting import DecayFit, Estimate
from .ptm import NoiseFidelities
from .sim.circuit import qubit_collapse
from .sim.device import DeviceParams, check_column_stochastic

CONSISTENCY_SIGMAS = 5.0


class ModelViolationError(ArithmeticError):
    """Fitted decays are incompatible with the bit-flip measurement model."""


class ModelConsistencyWarning(UserWarning):
    pass


@dataclass
class LearnedModel:
    f_a: Estimate
    f_s: Estimate
    f_c: Estimate
    f_sp_slow: Optional[Estimate] = None
    f_sp_fast: Optional[Estimate] = None
    path: str = ""
    seed: Optional[int] = None
    timestamp: str = ""
    flags: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("f_a", "f_s", "f_c", "f_sp_slow", "f_sp_fast"):
            e = getattr(self, name)
            if e is not None and e.value > 1.0 and name not in self.flags:
                self.flags.append(name)

    def f_sp(self, reset: str = "slow") -> Estimate:
        est = self.f_sp_slow if reset == "slow" else self.f_sp_fast
        if est is None:
            raise ValueError(f"model has no {reset}-reset preparation fidelity")
        return est

    def to_dict(self) -> dict:
        names = ("f_a", "f_s", "f_c", "f_sp_slow", "f_sp_fast")
        out = {n: (getattr(self, n).value if getattr(self, n) else None) for n in names}
        out["std_errs"] = {n: (getattr(self, n).stderr if getattr(self, n) else None) for n in names}
        out.update(path=self.path, seed=self.seed, timestamp=self.timestamp, flags=list(self.flags))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "LearnedModel":
        errs = d.get("std_errs") or {}

        def est(name):
            v = d.get(name)
            return None if v is None else Estimate(float(v), float(errs.get(name) or 0.0))

        for name in ("f_a", "f_s", "f_c"):
            if d.get(name) is None:
                raise ValueError(f"model is missing {name}")
        return cls(
            est("f_a"), est("f_s"), est("f_c"), est("f_sp_slow"), est("f_sp_fast"),
            d.get("path", ""), d.get("seed"), d.get("timestamp", ""), list(d.get("flags", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "LearnedModel":
        return cls.from_dict(json.loads(text))


def _log_cov(fit: DecayFit) -> np.ndarray:
    """Covariance of ``(log A, log f)``."""
    x = np.array([fit.A, fit.f])
    return fit.covariance / np.outer(x, x)


def extract_fidelities(
    fits: dict[str, DecayFit], p_sp_hat: Estimate, path: str = ""
) -> LearnedModel:
    """Invert the three decays into ``f_a, f_s, f_c`` given a preparation-error estimate.

    ``f_c f_s`` is the ``<ZI>`` decay base, ``f_a`` follows from the ``<IZ>``
    base, and the ``<ZI>`` offset ``f_a f_s f_sp`` is split using
    ``f_sp = 1 - 2 p_sp``. Errors propagate to first order in log space with
    the within-fit covariance of the ``<ZI>`` parameters.
    """
    iz, zi = fits["IZ"], fits["ZI"]
    r1, r2 = iz.f**2, zi.f**2
    if r1 <= 0 or r2 <= 0 or zi.A <= 0:
        raise ModelViolationError("decay rates and the <ZI> offset must be positive")
    f_sp = 1.0 - 2.0 * p_sp_hat.value
    if f_sp <= 0:
        raise ModelViolationError(f"preparation fidelity {f_sp} is not positive")
    f_a = np.sqrt(r1 / np.sqrt(r2))
    f_s = zi.A / (f_a * f_sp)
    f_c = np.sqrt(r2) / f_s

    # log-space variables: (log f_IZ, log A_ZI, log f_ZI, log f_sp)
    cov = np.zeros((4, 4))
    cov[0, 0] = _log_cov(iz)[1, 1]
    cov[1:3, 1:3] = _log_cov(zi)
    cov[3, 3] = (2.0 * p_sp_hat.stderr / f_sp) ** 2
    grads = {
        "f_a": np.array([1.0, 0.0, -0.5, 0.0]),
        "f_s": np.array([-1.0, 1.0, 0.5, -1.0]),
        "f_c": np.array([1.0, -1.0, 0.5, 1.0]),
    }
    values = {"f_a": f_a, "f_s": f_s, "f_c": f_c}
    est = {n: Estimate(float(values[n]), float(values[n] * np.sqrt(max(g @ cov @ g, 0.0))))
           for n, g in grads.items()}

    zz = fits.get("ZZ")
    if zz is not None:
        diff = zz.rate.value - iz.rate.value
        sigma = np.hypot(zz.rate.stderr, iz.rate.stderr)
        if sigma > 0 and abs(diff) > CONSISTENCY_SIGMAS * sigma:
            warnings.warn(
                f"<ZZ> decay rate differs from <IZ> rate by {abs(diff) / sigma:.1f} sigma",
                ModelConsistencyWarning,
                stacklevel=2,
            )
    return LearnedModel(est["f_a"], est["f_s"], est["f_c"], Estimate(f_sp, 2 * p_sp_hat.stderr), path=path)


def learn_fast_psp(zi_offset: Estimate, model: LearnedModel) -> Estimate:
    """``f_sp = A / (f_a f_s)`` from the ``<ZI>`` offset of a fast-reset MCB run."""
    prod = model.f_a.value * model.f_s.value
    if abs(prod) < 1e-12:
        raise ZeroDivisionError("f_a f_s is zero")
    value = zi_offset.value / prod
    rel = np.sqrt(
        (zi_offset.stderr / zi_offset.value) ** 2
        + (model.f_a.stderr / model.f_a.value) ** 2
        + (model.f_s.stderr / model.f_s.value) ** 2
    ) if zi_offset.value != 0 else 0.0
    return Estimate(float(value), float(abs(value) * rel))


# -- workflow -----------------------------------------------------------------


@dataclass
class MeasurementNoise:
    """Injected measurement and preparation noise for simulated MCB runs."""

    f_a: float = 0.99096
    f_s: float = 0.99096
    f_c: float = 0.995
    p_sp_slow: float = 0.01946
    p_sp_fast: float = 0.01206

    def fidelities(self, reset: str) -> NoiseFidelities:
        p = self.p_sp_slow if reset == "slow" else self.p_sp_fast
        return NoiseFidelities(self.f_a, self.f_s, self.f_c, 1.0 - 2.0 * p)


@dataclass
class WorkflowResult:
    model: LearnedModel
    rabief: RabiefResult
    mcb: dict  # reset mode -> McbResult

    def intermediate_fits(self) -> dict:
        out = {"rabief": self.rabief.summary()}
        for mode, res in self.mcb.items():
            out[f"mcb_{mode}"] = {o: fit.to_dict() for o, fit in res.fits.items()}
        return out


def _mcb(noise: MeasurementNoise, cfg: McbConfig, reset: str, rng, exact) -> McbResult:
    cfg = McbConfig(cfg.depths, cfg.randomizations, cfg.shots, reset)
    f = noise.fidelities(reset)
    records = simulate_mcb(f, cfg, rng, exact)
    exps = mcb_expectations(records)
    return McbResult(cfg, f, records, exps, fit_mcb(exps, constant_fallback=True))


def run_workflow(
    has_qutrit_fast_reset: bool,
    params: DeviceParams,
    noise: Optional[MeasurementNoise] = None,
    rabief_cfg: Optional[RabiefConfig] = None,
    mcb_cfg: Optional[McbConfig] = None,
    rng: Optional[np.random.Generator] = None,
    exact: bool = False,
) -> WorkflowResult:
    """Learn the SPAM model along one of the two paths.

    With a stable fast qutrit reset (blue path) the fast-reset preparation
    error comes straight from RabiEF and one fast MCB run completes the model.
    Otherwise (purple path) RabiEF and MCB run with slow resets, and a second
    MCB run with fast resets yields the fast preparation fidelity, assuming
    the measurement noise does not depend on the reset.
    """
    noise = noise or MeasurementNoise()
    mcb_cfg = mcb_cfg or McbConfig()
    mode = "fast_qutrit" if has_qutrit_fast_reset else "slow_qutrit"
    base = rabief_cfg or RabiefConfig()
    rcfg = RabiefConfig(base.angles, base.shots, mode, base.reset_sampling, base.signal)
    rab = run_rabief(params, rcfg, rng, exact)
    if rab.unphysical:
        warnings.warn("RabiEF estimate is unphysical", ModelConsistencyWarning, stacklevel=2)
    if has_qutrit_fast_reset:
        fast = _mcb(noise, mcb_cfg, "fast", rng, exact)
        m = extract_fidelities(fast.fits, rab.p_sp_hat, path="blue")
        model = LearnedModel(m.f_a, m.f_s, m.f_c, None, m.f_sp_slow, path="blue")
        return WorkflowResult(model, rab, {"fast": fast})
    slow = _mcb(noise, mcb_cfg, "slow", rng, exact)
    m = extract_fidelities(slow.fits, rab.p_sp_hat, path="purple")
    fast = _mcb(noise, mcb_cfg, "fast", rng, exact)
    zi = fast.fits["ZI"]
    f_fast = learn_fast_psp(Estimate(zi.A, zi.A_err), m)
    model = LearnedModel(m.f_a, m.f_s, m.f_c, m.f_sp_slow, f_fast, path="purple")
    return WorkflowResult(model, rab, {"slow": slow, "fast": fast})


# -- assignment matrices ------------------------------------------------------


def fidelities_to_qubit_assignment(f_a: float, f_s: float) -> np.ndarray:
    """Symmetric 2x2 assignment matrix of a final measurement, ``p_00 = (1 + f_a f_s) / 2``."""
    for name, f in (("f_a", f_a), ("f_s", f_s)):
        if not 0.0 < f <= 1.0:
            raise ValueError(f"{name}={f} outside (0, 1]")
    prod = f_a * f_s
    good, bad = (1 + prod) / 2, (1 - prod) / 2
    return np.array([[good, bad], [bad, good]])


def qubit_assignment_to_fidelity(m: np.ndarray) -> float:
    """Product ``f_a f_s`` of a symmetric assignment matrix; the split is not identifiable."""
    m = np.asarray(m, dtype=float)
    check_column_stochastic(m)
    return float(m[0, 0] + m[1, 1] - 1.0)


def qutrit_to_qubit_assignment(r: np.ndarray) -> np.ndarray:
    """Binary-discrimination matrix of a qutrit readout restricted to qubit inputs."""
    r = np.asarray(r, dtype=float)
    check_column_stochastic(r)
    return qubit_collapse(r)[:, :2]


def amplify_psp(p_sp: float, p_amp: float) -> float:
    _check_half_open(p_sp, "p_sp")
    _check_half_open(p_amp, "p_amp")
    return p_amp + p_sp * (1.0 - 2.0 * p_amp)


def deamplify_psp(p_tilde: float, p_amp: float) -> float:
    if p_amp == 0.5:
        raise ZeroDivisionError("p_amp = 0.5 is not invertible")
    _check_half_open(p_amp, "p_amp")
    return (p_tilde - p_amp) / (1.0 - 2.0 * p_amp)


def _check_half_open(p: float, name: str) -> None:
    if not 0.0 <= p < 0.5:
        raise ValueError(f"{name}={p} outside [0, 0.5)")
