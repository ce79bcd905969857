import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spamsplit import ptm
from spamsplit.experiments.mcb import (
    ALL_TWIRLS, IDENTITY_TWIRL, McbConfig, McbRecord, TwirlSample, build_mcb_circuit,
    draw_twirls, expectations_from_distribution, fit_mcb, mcb_expectations, measurement_superop,
    outcome_distribution, simulate_mcb, stochastic_measurement_superop, twirled_measurement_ptm,
)
from spamsplit.sim import superop
from spamsplit.sim.gates import CNOT, rx
from spamsplit.ptm import NoiseFidelities

INJECTED = NoiseFidelities(f_a=0.99096, f_s=0.99096, f_c=0.995, f_sp=1 - 2 * 0.01946)
fidelity = st.floats(0.9, 1.0)


def test_config_and_twirl_validation(rng):
    with pytest.raises(ValueError):
        McbConfig(depths=(1, 2))
    with pytest.raises(ValueError):
        McbConfig(reset_mode="medium")
    with pytest.raises(ValueError):
        TwirlSample(2, 0, 0)
    with pytest.raises(ValueError):
        build_mcb_circuit(1, [IDENTITY_TWIRL], INJECTED)
    bits = np.array([[t.x, t.z1, t.z2] for t in draw_twirls(20_000, rng)])
    assert np.allclose(bits.mean(axis=0), 0.5, atol=0.02)


def test_noiseless_depth_zero():
    exps = mcb_expectations(simulate_mcb(NoiseFidelities(), McbConfig(depths=(0,)), exact=True))
    assert {o: e.value for o, e in exps[0].items()} == pytest.approx({"IZ": 1, "ZI": 1, "ZZ": 1})


def test_depth_zero_offset():
    exps = mcb_expectations(simulate_mcb(INJECTED, McbConfig(depths=(0,)), exact=True))
    assert exps[0]["ZI"].value == pytest.approx(INJECTED.f_a * INJECTED.f_s * INJECTED.f_sp, abs=1e-12)


@given(fidelity, fidelity, fidelity, fidelity)
@settings(max_examples=10, deadline=None)
def test_exact_mode_matches_closed_form(fa, fs, fc, fsp):
    f = NoiseFidelities(fa, fs, fc, fsp)
    exps = mcb_expectations(simulate_mcb(f, McbConfig(depths=tuple(range(9))), exact=True))
    for k in range(9):
        want = ptm.mcb_expectations_closed_form(f, k)
        for o in ("IZ", "ZI", "ZZ"):
            assert exps[k][o].value == pytest.approx(want[o], abs=1e-12)


@pytest.mark.parametrize("k", [0, 1, 3])
def test_pre_and_post_correlated_error_agree(k):
    tw = [IDENTITY_TWIRL] * (2 * k + 1)
    pre = outcome_distribution(build_mcb_circuit(k, tw, INJECTED, "pre"))
    post = outcome_distribution(build_mcb_circuit(k, tw, INJECTED, "post"))
    assert np.allclose(pre, post, atol=1e-12)


def test_twirled_circuits_average_to_untwirled(rng):
    k = 1
    untwirled = outcome_distribution(build_mcb_circuit(k, [IDENTITY_TWIRL] * 3, INJECTED))
    avg = np.zeros(4)
    for a in ALL_TWIRLS:
        for b in ALL_TWIRLS:
            for c in ALL_TWIRLS:
                avg += outcome_distribution(build_mcb_circuit(k, [a, b, c], INJECTED))
    assert np.allclose(avg / 512, untwirled, atol=1e-12)


def _random_kernel(rng):
    k = rng.random((2, 2, 2)) + 0.05
    return k / k.sum(axis=(0, 1))


IDEAL = twirled_measurement_ptm(superop.from_unitary(CNOT), [IDENTITY_TWIRL])


def _noise_part(meas, twirls=ALL_TWIRLS):
    # the ideal measurement permutes {I,Z} strings, so the noise is what remains after undoing it
    return twirled_measurement_ptm(meas, twirls) @ np.linalg.inv(IDEAL)


@given(st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_twirl_diagonalizes_random_noise(seed):
    rng = np.random.default_rng(seed)
    stoch = stochastic_measurement_superop(_random_kernel(rng))
    rotation = superop.from_unitary(np.kron(rx(rng.uniform(0, np.pi)), np.eye(2)))
    for meas in (stoch, stoch @ rotation):
        noise = _noise_part(meas)
        assert np.allclose(noise, np.diag(np.diag(noise)), atol=1e-10)
        assert np.allclose(np.diag(noise), np.diag(_noise_part(meas, [IDENTITY_TWIRL])), atol=1e-10)
    assert not np.allclose(_noise_part(stoch, [IDENTITY_TWIRL]), np.diag(np.diag(_noise_part(stoch))))


def test_pauli_noise_is_already_diagonal():
    meas = measurement_superop(INJECTED)
    assert np.allclose(twirled_measurement_ptm(meas, [IDENTITY_TWIRL]), ptm.measurement_ptm(INJECTED), atol=1e-12)


def test_kernel_validation():
    with pytest.raises(ValueError):
        stochastic_measurement_superop(np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        measurement_superop(INJECTED, "during")


def test_all_zero_outcomes():
    rec = [McbRecord(0, [IDENTITY_TWIRL], np.array([128, 0, 0, 0]))]
    exps = mcb_expectations(rec)
    assert all(e.value == 1.0 for e in exps[0].values())
    with pytest.raises(ValueError):
        mcb_expectations([])
    assert expectations_from_distribution([0, 0, 0, 1]) == {"IZ": -1.0, "ZI": -1.0, "ZZ": 1.0}


def test_sampled_matches_exact(rng):
    cfg = McbConfig(depths=(0, 2), randomizations=64, shots=128)
    sampled = mcb_expectations(simulate_mcb(INJECTED, cfg, rng))
    exact = mcb_expectations(simulate_mcb(INJECTED, cfg, exact=True))
    for k in cfg.depths:
        for o in ("IZ", "ZI", "ZZ"):
            s = sampled[k][o]
            assert abs(s.value - exact[k][o].value) <= 5 * s.stderr
    with pytest.raises(ValueError):
        simulate_mcb(INJECTED, cfg)


def test_noiseless_fit_fallback():
    exps = mcb_expectations(simulate_mcb(NoiseFidelities(), McbConfig(), exact=True))
    with pytest.warns(RuntimeWarning):
        fits = fit_mcb(exps, constant_fallback=True)
    assert fits["ZI"].f == 1.0
