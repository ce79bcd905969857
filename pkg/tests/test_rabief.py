import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spamsplit.experiments.rabief import (
    DegenerateEstimateError, RabiefConfig, build_rabief_circuits, estimate_psp,
    payload_circuit, rabief_bias, relabel_shots, run_rabief,
)
from spamsplit.fitting import SinusoidFit, fit_sin_squared
from spamsplit.learning import amplify_psp
from spamsplit.sim.circuit import Simulator
from spamsplit.sim.device import DeviceParams, DEFAULT_DEVICE
from spamsplit.sim.state import DensityMatrix

IDEAL = DeviceParams(t1=1e9, t2=1e9, t1_12=1e9, t2_12=1e9, p_leak=0.0,
                     assignment=tuple(map(tuple, np.eye(3))))


def _fit(a, err=0.0):
    return SinusoidFit(a, 0.5, 0.0, 0.0, np.diag([err**2, 0, 0, 0]), 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        RabiefConfig(angles=[0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        RabiefConfig(shots=0)
    with pytest.raises(ValueError):
        RabiefConfig(reset_mode="medium")
    assert RabiefConfig().angles.size == 40 and RabiefConfig().shots == 1000


def _bright(theta, with_pi):
    res = Simulator(IDEAL).run(payload_circuit(IDEAL, theta, with_pi), DensityMatrix.basis((3,)), exact=True)
    return res.label_probs["rabief"][1]


def test_payload_examples():
    # R12 leaves |0> alone, so the trailing X sends a pure ground state to |1> at every angle
    for theta in (0.0, 1.3, np.pi):
        assert _bright(theta, False) == pytest.approx(1.0, abs=1e-12)
    assert _bright(0.0, True) == pytest.approx(0.0, abs=1e-12)
    assert _bright(np.pi, True) == pytest.approx(1.0, abs=1e-12)
    # pi circuit: |0> -> |1> -> |2> -> |2>
    res = Simulator(IDEAL).run(payload_circuit(IDEAL, np.pi, True), DensityMatrix.basis((3,)), exact=True)
    assert res.state.populations()[2] == pytest.approx(1.0)


def test_circuit_layout():
    nopi, pi, rep = build_rabief_circuits(DEFAULT_DEVICE, RabiefConfig(reset_mode="slow_qubit"))
    assert len(nopi) == len(pi) == 40
    assert sum(getattr(i, "label", None) == "reset" for i in rep.instructions) == 3


def test_estimate_psp_examples():
    est = estimate_psp(_fit(0.02, 1e-3), _fit(0.98, 1e-3))
    assert est.value == pytest.approx(0.02, abs=1e-15)
    want = np.hypot(0.98e-3, 0.02e-3)
    assert est.stderr == pytest.approx(want, rel=1e-12)
    with pytest.raises(DegenerateEstimateError):
        estimate_psp(_fit(0.5), _fit(-0.5))


@given(st.floats(0.01, 100.0))
@settings(max_examples=50, deadline=None)
def test_estimate_psp_scale_invariant(lam):
    x = np.linspace(0, 4 * np.pi, 40)
    y1 = 0.02 * np.sin(x / 2) ** 2 + 0.01
    y2 = 0.95 * np.sin(x / 2) ** 2 + 0.03
    base = estimate_psp(fit_sin_squared(x, y1), fit_sin_squared(x, y2)).value
    scaled = estimate_psp(fit_sin_squared(x, lam * y1), fit_sin_squared(x, lam * y2)).value
    assert scaled == pytest.approx(base, abs=1e-12)


def test_rabief_bias_examples():
    assert rabief_bias(0.0195, 0.0) == 0.0195
    assert rabief_bias(0.01, 0.02) == pytest.approx(-0.01 / 0.94, abs=1e-15)
    assert rabief_bias(0.03, 0.01) == pytest.approx(0.02 / 0.97, abs=1e-15)
    with pytest.raises(ValueError):
        rabief_bias(0.1, 0.4)
    with pytest.raises(ValueError):
        rabief_bias(0.7, 0.4)


def test_exact_slow_mode_equals_bias_formula():
    res = run_rabief(DEFAULT_DEVICE, RabiefConfig(shots=5, reset_mode="slow_qutrit"), exact=True)
    want = rabief_bias(res.data.p_sp_true, res.data.p_sp2_true)
    assert res.p_sp_hat.value == pytest.approx(want, abs=1e-9)
    assert res.p_sp_hat.value == pytest.approx(0.018994, abs=1e-6)


def test_exact_signals_shape():
    res = run_rabief(DEFAULT_DEVICE, RabiefConfig(shots=5, reset_mode="slow_qutrit"), exact=True)
    assert res.pi_fit.a > 10 * res.nopi_fit.a > 0
    assert np.all(res.data.s_nopi >= 0) and np.all(res.data.s_pi >= 0)


def test_fast_qubit_no_pi_amplitude_is_negative():
    res = run_rabief(DEFAULT_DEVICE, RabiefConfig(shots=30, reset_mode="fast_qubit"), exact=True)
    assert res.nopi_fit.a < 0
    assert res.unphysical


def test_sampled_run_is_reproducible():
    cfg = RabiefConfig(np.linspace(0, 4 * np.pi, 12), shots=40, reset_mode="slow_qutrit")
    a = run_rabief(DEFAULT_DEVICE, cfg, np.random.default_rng(5))
    b = run_rabief(DEFAULT_DEVICE, cfg, np.random.default_rng(5))
    assert np.array_equal(a.data.s_pi, b.data.s_pi)
    assert a.data.nopi_labels.shape == (12, 40)


def test_relabel_equals_physical_swap():
    # independent Bernoulli shots with the ideal bright probabilities of each circuit
    rng = np.random.default_rng(11)
    p_sp, p_amp, n = 0.02, 0.1, 10_000
    x = np.linspace(0, 4 * np.pi, 20)
    s2 = np.sin(x / 2) ** 2
    bright = {False: p_sp * s2, True: (1 - p_sp) * s2}

    def shots(p):
        return (rng.random((x.size, n)) < p[:, None]).astype(float)

    nopi, pi = relabel_shots(shots(bright[False]), shots(bright[True]), p_amp, rng)
    est_relabel = estimate_psp(fit_sin_squared(x, nopi.mean(1)), fit_sin_squared(x, pi.mean(1)))
    p_tilde = amplify_psp(p_sp, p_amp)
    physical = {False: p_tilde * s2, True: (1 - p_tilde) * s2}
    est_phys = estimate_psp(fit_sin_squared(x, shots(physical[False]).mean(1)),
                            fit_sin_squared(x, shots(physical[True]).mean(1)))
    assert est_relabel.value == pytest.approx(p_tilde, abs=4 * est_relabel.stderr)
    assert abs(est_relabel.value - est_phys.value) < 4 * np.hypot(est_relabel.stderr, est_phys.stderr)
