"""RabiEF: residual excited-state population from |1>-|2> Rabi oscillations.

The pi experiment applies ``X - R12(theta) - X`` and the no-pi experiment
``R12(theta) - X``; both end in a binary-discriminated measurement. The ratio
of the two fitted amplitudes estimates the ``|1>`` population of the state
that entered the circuits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..fitting import Estimate, SinusoidFit, fit_sin_squared, fit_sin_squared_pair
from ..sim.chain import ShotRecord, run_chain
from ..sim.circuit import (
    Channel,
    Circuit,
    Delay,
    Measure,
    Readout,
    Simulator,
    Unitary,
    active_reset,
    ensemble_reset_channel,
    fuse,
)
from ..sim.device import DeviceParams
from ..sim.gates import X01, r12
from ..sim.lindblad import measurement_channel

RESET_MODES = ("fast_qubit", "fast_qutrit", "slow_qubit", "slow_qutrit")
SLOW_DELAY = 10e-3
N_RESETS = 3
SIGNAL_KEY = "rabief"


class DegenerateEstimateError(ArithmeticError):
    pass


@dataclass
class RabiefConfig:
    angles: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 4 * np.pi, 40))
    shots: int = 1000
    reset_mode: str = "slow_qutrit"
    # "ensemble" applies the outcome-averaged reset channel; "trajectory" samples each reset
    reset_sampling: str = "ensemble"
    # "probability" fits per-shot label probabilities, "counts" fits sampled labels
    signal: str = "probability"

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        if self.angles.ndim != 1 or self.angles.size < 1:
            raise ValueError("angles must be a non-empty 1-D sequence")
        if np.any(np.diff(self.angles) <= 0):
            raise ValueError("angles must be strictly increasing")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.reset_mode not in RESET_MODES:
            raise ValueError(f"reset_mode must be one of {RESET_MODES}")
        if self.reset_sampling not in ("ensemble", "trajectory"):
            raise ValueError("reset_sampling must be 'ensemble' or 'trajectory'")
        if self.signal not in ("probability", "counts"):
            raise ValueError("signal must be 'probability' or 'counts'")

    @property
    def discrimination(self) -> str:
        return self.reset_mode.split("_")[1]

    @property
    def slow(self) -> bool:
        return self.reset_mode.startswith("slow")


def repetition_circuit(params: DeviceParams, cfg: RabiefConfig) -> Circuit:
    """Repetition delay holding three evenly spaced active resets.

    The delay is split into four equal idle segments with a reset between
    consecutive ones. Slow modes append a 10 ms thermalising delay.
    """
    gap = params.t_rep_delay / (N_RESETS + 1)
    circ = Circuit((3,), name="rep")
    meas_noise = Channel(measurement_channel(params, 3), (0,), label="meas")
    readout = Readout(params.R)
    for _ in range(N_RESETS):
        circ.append(Delay(gap, (0,)))
        circ.append(meas_noise)
        if cfg.reset_sampling == "ensemble":
            circ.append(
                Channel(ensemble_reset_channel(cfg.discrimination, 3, readout), (0,), label="reset")
            )
        else:
            circ.extend(active_reset(0, cfg.discrimination, 3))
    circ.append(Delay(gap, (0,)))
    if cfg.slow:
        circ.append(Delay(SLOW_DELAY, (0,)))
    return circ


def payload_circuit(params: DeviceParams, theta: float, with_pi: bool) -> Circuit:
    circ = Circuit((3,), name=("pi" if with_pi else "nopi"))
    if with_pi:
        circ.append(Unitary(X01, (0,)))
    circ.append(Unitary(r12(theta), (0,)))
    circ.append(Unitary(X01, (0,)))
    circ.append(Channel(measurement_channel(params, 3), (0,), label="meas"))
    circ.append(Measure(0, "qubit", SIGNAL_KEY, record=True))
    return circ


def build_rabief_circuits(params: DeviceParams, cfg: RabiefConfig):
    """Return ``(no_pi circuits, pi circuits, repetition circuit)``, one payload pair per angle."""
    nopi = [payload_circuit(params, t, False) for t in cfg.angles]
    pi = [payload_circuit(params, t, True) for t in cfg.angles]
    return nopi, pi, repetition_circuit(params, cfg)


@dataclass
class RabiefData:
    """Signals and input-state statistics of one RabiEF chain."""

    angles: np.ndarray
    s_nopi: np.ndarray
    s_pi: np.ndarray
    input_populations: np.ndarray  # (n_records, 3)
    nopi_labels: Optional[np.ndarray] = None  # (angles, shots), sampled mode only
    pi_labels: Optional[np.ndarray] = None

    @property
    def p_sp_true(self) -> float:
        return float(self.input_populations[:, 1].mean())

    @property
    def p_sp_true_std(self) -> float:
        return float(self.input_populations[:, 1].std())

    @property
    def p_sp2_true(self) -> float:
        return float(self.input_populations[:, 2].mean())

    @property
    def p_sp2_true_std(self) -> float:
        return float(self.input_populations[:, 2].std())


def simulate_rabief(
    params: DeviceParams,
    cfg: RabiefConfig,
    rng: Optional[np.random.Generator] = None,
    exact: bool = False,
) -> RabiefData:
    """Simulate the RabiEF chain: for each angle, ``shots`` loops of rep, no-pi, rep, pi."""
    sim = Simulator(params)
    nopi, pi, rep = build_rabief_circuits(params, cfg)
    rep = fuse(rep, sim) if cfg.reset_sampling == "ensemble" else rep
    nopi = [fuse(c, sim) for c in nopi]
    pi = [fuse(c, sim) for c in pi]
    shots = 1 if exact else cfg.shots
    n = len(cfg.angles)
    s_nopi = np.empty(n)
    s_pi = np.empty(n)
    labels_nopi = np.empty((n, shots), dtype=np.int8)
    labels_pi = np.empty((n, shots), dtype=np.int8)
    pops = []
    state = None
    for i in range(n):
        # exact mode needs enough loops for the carried-over state to settle
        loops = cfg.shots if exact else shots
        records, state = run_chain([rep, nopi[i], rep, pi[i]], sim, loops, rng, exact, initial=state)
        rec_nopi = [r for r in records if r.circuit == "nopi"]
        rec_pi = [r for r in records if r.circuit == "pi"]
        pops.extend(r.input_populations for r in records)
        s_nopi[i] = _signal(rec_nopi, cfg, exact)
        s_pi[i] = _signal(rec_pi, cfg, exact)
        if not exact:
            labels_nopi[i] = [r.outcomes[SIGNAL_KEY] for r in rec_nopi]
            labels_pi[i] = [r.outcomes[SIGNAL_KEY] for r in rec_pi]
    return RabiefData(
        np.array(cfg.angles),
        s_nopi,
        s_pi,
        np.array(pops),
        None if exact else labels_nopi,
        None if exact else labels_pi,
    )


def _signal(records: list[ShotRecord], cfg: RabiefConfig, exact: bool) -> float:
    if exact or cfg.signal == "probability":
        return float(np.mean([r.label_probs[SIGNAL_KEY][1] for r in records]))
    return float(np.mean([r.outcomes[SIGNAL_KEY] for r in records]))


def estimate_psp(no_pi_fit: SinusoidFit, pi_fit: SinusoidFit) -> Estimate:
    """``a_nopi / (a_nopi + a_pi)`` with first-order error propagation."""
    a, b = no_pi_fit.a, pi_fit.a
    total = a + b
    if total == 0:
        raise DegenerateEstimateError("fitted amplitudes sum to zero")
    value = a / total
    # d/da = b / total^2, d/db = -a / total^2
    sigma = np.hypot(b * no_pi_fit.a_err, a * pi_fit.a_err) / total**2
    return Estimate(float(value), float(sigma))


def rabief_bias(p_sp: float, p_sp2: float) -> float:
    """Estimator value for a static input state with ``|2>`` population ``p_sp2``."""
    if not (0.0 <= p_sp <= 1.0 and 0.0 <= p_sp2 <= 1.0 and p_sp + p_sp2 <= 1.0):
        raise ValueError("populations must be probabilities summing to at most 1")
    denom = 1.0 - 3.0 * p_sp2
    if denom <= 0:
        raise ValueError("1 - 3 p_sp2 must be positive")
    return (p_sp - p_sp2) / denom


@dataclass
class RabiefResult:
    data: RabiefData
    nopi_fit: SinusoidFit
    pi_fit: SinusoidFit
    p_sp_hat: Estimate

    @property
    def unphysical(self) -> bool:
        return not 0.0 <= self.p_sp_hat.value <= 1.0

    def summary(self) -> dict:
        return {
            "p_sp_hat": self.p_sp_hat.value,
            "p_sp_hat_stderr": self.p_sp_hat.stderr,
            "p_sp_true_mean": self.data.p_sp_true,
            "p_sp_true_std": self.data.p_sp_true_std,
            "p_sp2_true_mean": self.data.p_sp2_true,
            "p_sp2_true_std": self.data.p_sp2_true_std,
            "a_nopi": self.nopi_fit.a,
            "a_pi": self.pi_fit.a,
            "unphysical_estimate": self.unphysical,
        }


def analyze_rabief(data: RabiefData, shared_frequency: bool = False) -> RabiefResult:
    if shared_frequency:
        nopi_fit, pi_fit = fit_sin_squared_pair(data.angles, data.s_nopi, data.s_pi)
    else:
        nopi_fit = fit_sin_squared(data.angles, data.s_nopi)
        pi_fit = fit_sin_squared(data.angles, data.s_pi)
    return RabiefResult(data, nopi_fit, pi_fit, estimate_psp(nopi_fit, pi_fit))


def run_rabief(
    params: DeviceParams,
    cfg: RabiefConfig,
    rng: Optional[np.random.Generator] = None,
    exact: bool = False,
    shared_frequency: bool = False,
) -> RabiefResult:
    return analyze_rabief(simulate_rabief(params, cfg, rng, exact), shared_frequency)


def relabel_shots(
    nopi_labels: np.ndarray, pi_labels: np.ndarray, p_amp: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Swap paired no-pi/pi shots with probability ``p_amp``.

    Equivalent to a random X on the prepared state before each circuit,
    which amplifies the preparation error to ``p_amp + p_sp (1 - 2 p_amp)``.
    """
    swap = rng.random(np.shape(nopi_labels)) < p_amp
    return np.where(swap, pi_labels, nopi_labels), np.where(swap, nopi_labels, pi_labels)
