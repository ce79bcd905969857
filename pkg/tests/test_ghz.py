import numpy as np
import pytest

import oracles
from spamsplit.mitigation.ghz import (
    brick_layers, build_ghz_ladder, label_kernel, learn_zstar, mitigate_split, mitigate_trex,
    raw_closed_form, run_ghz_mitigation, simulate_raw, two_layer_schedule, zstar_closed_form,
)
from spamsplit.fitting import Estimate
from spamsplit.ptm import NoiseFidelities
from spamsplit.rng import stream
from spamsplit.sim.circuit import Simulator

SECTION = NoiseFidelities(f_a=0.99096, f_s=0.99096, f_c=0.995, f_sp=0.96108)
NS = (4, 6, 8, 10)


def _x_parity(circuit_state, n):
    return float(np.real(np.trace(oracles.pauli("X" * n) @ circuit_state)))


@pytest.mark.parametrize("n", [2, 3, 4, 6, 8, 10])
def test_noiseless_ladder_is_stabilized(n):
    state = Simulator().run(build_ghz_ladder(n, measure_x=False), exact=True).state.data
    assert _x_parity(state, n) == pytest.approx(1.0, abs=1e-12)
    assert simulate_raw(n, NoiseFidelities(), two_layer=False, exact=True).value == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [4, 6, 8, 10])
def test_two_layer_variant_is_stabilized(n):
    state = Simulator().run(build_ghz_ladder(n, two_layer=True, measure_x=False), exact=True).state.data
    assert _x_parity(state, n) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [4, 6, 8, 10])
def test_two_layer_uses_only_two_cnot_layers(n):
    layers = brick_layers(n)
    cnots = {inst.wires for inst in build_ghz_ladder(n, two_layer=True).instructions if inst.matrix.shape == (4, 4)}
    assert cnots <= set(layers["L1"]) | set(layers["L2"])
    assert {name for name, _ in two_layer_schedule(n)} == {"L1", "L2"}


def test_ladder_matches_oracle_ghz_state():
    n = 4
    u = np.eye(2**n)
    u = oracles.embed(np.array([[1, 1], [1, -1]]) / np.sqrt(2), [0], n) @ u
    for i in range(n - 1):
        u = oracles.cnot(i, i + 1, n) @ u
    psi = u[:, 0]
    state = Simulator().run(build_ghz_ladder(n, measure_x=False), exact=True).state.data
    assert np.allclose(state, np.outer(psi, psi.conj()), atol=1e-12)


def test_odd_qubit_count_rejected_for_two_layer():
    with pytest.raises(ValueError):
        build_ghz_ladder(5, two_layer=True)
    with pytest.raises(ValueError):
        build_ghz_ladder(13)


@pytest.mark.parametrize("n", [4, 6])
def test_variants_agree_with_spam_noise(n):
    a = simulate_raw(n, SECTION, two_layer=False, exact=True).value
    b = simulate_raw(n, SECTION, two_layer=True, exact=True).value
    assert a == pytest.approx(b, abs=1e-12)


def test_raw_closed_form_against_oracle():
    n = 4
    p = (1 - SECTION.f_sp) / 2
    ch = oracles.Channel([np.eye(2**n)], n)
    for q in range(n):
        ch = ch.then(oracles.flip(p, [q], n))
    u = oracles.embed(np.array([[1, 1], [1, -1]]) / np.sqrt(2), [0], n)
    for i in range(n - 1):
        u = oracles.cnot(i, i + 1, n) @ u
    ch = ch.then(oracles.unitary(u, n))
    rho0 = np.zeros((2**n, 2**n))
    rho0[0, 0] = 1
    # symmetric bit-flip readout scales each qubit's Z (after the H basis change, X) by f_a f_s
    want = _x_parity(ch(rho0), n) * (SECTION.f_a * SECTION.f_s) ** n
    assert raw_closed_form(n, SECTION) == pytest.approx(want, abs=1e-12)
    assert simulate_raw(n, SECTION, exact=True).value == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("n", NS)
def test_exact_zstar_closed_form(n):
    assert learn_zstar(n, SECTION, exact=True).value == pytest.approx(zstar_closed_form(n, SECTION), abs=1e-12)


def test_zstar_n4_example():
    assert zstar_closed_form(4, SECTION) == pytest.approx((0.96108 * 0.982) ** 4, rel=1e-4)
    assert zstar_closed_form(4, SECTION) == pytest.approx(0.79339, abs=5e-6)
    assert learn_zstar(4, NoiseFidelities(), exact=True).value == pytest.approx(1.0)


@pytest.mark.parametrize("n", NS)
def test_sampled_raw_within_three_sigma(n):
    est = simulate_raw(n, SECTION, rng=stream(7, "raw", n))
    assert abs(est.value - raw_closed_form(n, SECTION)) < 3 * est.stderr


def test_zstar_error_scales_with_shots():
    lo = learn_zstar(4, SECTION, randomizations=64, shots=1000, rng=stream(3, "lo"))
    hi = learn_zstar(4, SECTION, randomizations=64, shots=16000, rng=stream(3, "hi"))
    ratio = lo.stderr / hi.stderr
    assert 4 / 1.5 < ratio < 4 * 1.5


def test_pre_and_post_kernels_agree():
    assert np.allclose(label_kernel(SECTION, "pre"), label_kernel(SECTION, "post"), atol=1e-12)
    k = label_kernel(SECTION)
    assert k[0, 0] == pytest.approx((1 + SECTION.f_a * SECTION.f_s) / 2, abs=1e-12)


def test_mitigation_formulas():
    raw, z = Estimate(0.8, 0.01), Estimate(0.9, 0.005)
    assert mitigate_trex(raw, z).value == pytest.approx(0.8 / 0.9)
    split = mitigate_split(raw, z, [Estimate(0.96, 0.001)] * 3)
    assert split.value == pytest.approx(0.8 * 0.96**3 / 0.9)
    one = Estimate(1.0)
    assert mitigate_trex(one, one).value == 1.0 and mitigate_split(one, one, [one] * 3).value == 1.0
    with pytest.raises(ZeroDivisionError):
        mitigate_trex(raw, Estimate(0.0))


def test_trex_over_split_is_fsp_product():
    f_sp = Estimate(SECTION.f_sp, 1e-3)
    for row in run_ghz_mitigation(NS, SECTION, f_sp, lambda n, t: stream(1, "ghz", n, t)):
        assert row.trex.value / row.split.value == pytest.approx(f_sp.value ** (1 - row.n), rel=1e-12)
        assert row.split.stderr > 0


def test_exact_mitigation_recovers_one():
    rows = run_ghz_mitigation(NS, SECTION, Estimate(SECTION.f_sp), exact=True)
    for row in rows:
        assert row.split.value == pytest.approx(1.0, abs=1e-12)
        assert row.trex.value == pytest.approx(SECTION.f_sp ** (1 - row.n), rel=1e-12)
