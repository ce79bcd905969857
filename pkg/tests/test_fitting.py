import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import finite_difference_grad
from spamsplit.experiments.mcb import McbConfig, fit_mcb, mcb_expectations, simulate_mcb
from spamsplit.fitting import (
    DegenerateFitError, fit_decay, fit_sin_squared, fit_sin_squared_pair,
    propagate_mitigation_error, sin_squared, split_mitigate,
)
from spamsplit.ptm import NoiseFidelities

ANGLES = np.linspace(0, 4 * np.pi, 40)


def test_sin_squared_exact_round_trip():
    fit = fit_sin_squared(ANGLES, 0.3 * np.sin(0.5 * ANGLES) ** 2 + 0.1)
    assert (fit.a, fit.b, fit.c) == pytest.approx((0.3, 0.5, 0.1), abs=1e-8)
    assert abs(fit.phi) < 1e-8
    assert np.allclose(fit.stderr, np.sqrt(np.diag(fit.covariance)))


def test_negative_amplitude_is_representable():
    fit = fit_sin_squared(ANGLES, -0.02 * np.sin(0.5 * ANGLES) ** 2 + 0.03)
    assert fit.a == pytest.approx(-0.02, abs=1e-10)


@given(
    st.floats(-0.5, 0.5).filter(lambda a: abs(a) > 0.02),
    st.floats(0.3, 1.2),
    st.floats(-0.7, 0.7),
    st.floats(-0.2, 0.2),
)
@settings(max_examples=100, deadline=None)
def test_sin_squared_round_trip_property(a, b, phi, c):
    y = sin_squared(ANGLES, a, b, phi, c)
    fit = fit_sin_squared(ANGLES, y)
    assert np.allclose(fit(ANGLES), y, atol=1e-7)
    assert fit.b == pytest.approx(b, abs=1e-7)
    assert abs(fit.a) == pytest.approx(abs(a), abs=1e-7)


def test_sin_squared_unbiased_under_noise():
    rng = np.random.default_rng(7)
    truth = np.array([0.3, 0.5, 0.1])
    est, err = [], []
    for _ in range(300):
        y = 0.3 * np.sin(0.5 * ANGLES) ** 2 + 0.1 + rng.normal(0, 0.01, ANGLES.size)
        fit = fit_sin_squared(ANGLES, y)
        est.append([fit.a, fit.b, fit.c])
        err.append([fit.a_err, fit.b_err, fit.c_err])
    mean = np.mean(est, axis=0)
    sem = np.std(est, axis=0, ddof=1) / np.sqrt(len(est))
    assert np.all(np.abs(mean - truth) < 3 * sem)
    assert np.allclose(np.mean(err, axis=0), np.std(est, axis=0), rtol=0.5)


def test_covariance_matches_bootstrap():
    rng = np.random.default_rng(3)
    ks = np.array([0, 1, 2, 5, 8] * 4, dtype=float)
    y = 0.95 * 0.98 ** (2 * ks) + rng.normal(0, 0.005, ks.size)
    fit = fit_decay(ks, y)
    boot = []
    for _ in range(500):
        idx = rng.integers(0, ks.size, ks.size)
        if len(np.unique(ks[idx])) < 2:
            continue
        b = fit_decay(ks[idx], y[idx])
        boot.append([b.A, b.f])
    ratio = np.std(boot, axis=0, ddof=1) / fit.stderr
    assert np.all((ratio > 0.5) & (ratio < 2.0))


def test_sin_squared_rejects_short_input():
    with pytest.raises(ValueError):
        fit_sin_squared(ANGLES[:3], ANGLES[:3])


def test_pair_fit_shares_frequency():
    y1 = 0.4 * np.sin(0.5 * ANGLES) ** 2 + 0.05
    y2 = -0.01 * np.sin(0.5 * ANGLES) ** 2 + 0.02
    f1, f2 = fit_sin_squared_pair(ANGLES, y1, y2)
    assert f1.b == f2.b == pytest.approx(0.5, abs=1e-8)
    assert (f1.a, f2.a) == pytest.approx((0.4, -0.01), abs=1e-8)


@given(st.floats(0.5, 1.0), st.floats(0.9, 0.9999))
@settings(max_examples=100, deadline=None)
def test_decay_round_trip(A, f):
    ks = np.array([0, 1, 2, 5, 8], dtype=float)
    fit = fit_decay(ks, A * f ** (2 * ks))
    assert (fit.A, fit.f) == pytest.approx((A, f), abs=1e-7)


def test_decay_exact_example():
    ks = np.array([0, 1, 2, 5, 8], dtype=float)
    fit = fit_decay(ks, 0.95 * 0.98 ** (2 * ks))
    assert (fit.A, fit.f) == pytest.approx((0.95, 0.98), abs=1e-10)
    assert fit.rate.value == pytest.approx(0.98**2)


def test_decay_on_exact_mcb_zi():
    f = NoiseFidelities(f_a=0.99096, f_s=0.99096, f_c=0.995, f_sp=1 - 2 * 0.01946)
    exps = mcb_expectations(simulate_mcb(f, McbConfig(), None, exact=True))
    fit = fit_mcb(exps)["ZI"]
    assert fit.f == pytest.approx(0.995 * 0.99096, abs=1e-10)
    assert fit.f == pytest.approx(0.98600, abs=1e-5)
    assert fit.A == pytest.approx(0.99096 * 0.99096 * (1 - 2 * 0.01946), abs=1e-10)


def test_decay_degenerate_and_invalid():
    with pytest.raises(DegenerateFitError):
        fit_decay([0, 1, 2], [0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        fit_decay([1, 1, 1], [0.1, 0.2, 0.3])


def test_propagation_examples():
    assert propagate_mitigation_error(0.9, 0, 0.95, 0, [0.98], [0]) == 0.0
    expected = np.hypot(0.01 / 0.95, 0.9 * 0.01 / 0.95**2)
    assert propagate_mitigation_error(0.9, 0.01, 0.95, 0.01) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ZeroDivisionError):
        propagate_mitigation_error(0.9, 0.01, 0.0, 0.01)
    with pytest.raises(ZeroDivisionError):
        split_mitigate(0.9, 0.0)


def _fd_sigma(x, sigmas):
    g = finite_difference_grad(lambda v: v[0] * np.prod(v[2:]) / v[1], np.asarray(x, float))
    return float(np.sqrt(np.sum((g * sigmas) ** 2)))


def test_propagation_with_fsp_matches_finite_difference():
    got = propagate_mitigation_error(0.9, 0.01, 0.95, 0.01, [0.98], [0.005])
    assert got == pytest.approx(_fd_sigma([0.9, 0.95, 0.98], [0.01, 0.01, 0.005]), rel=1e-8)


@given(
    st.floats(0.1, 1.0), st.floats(0.5, 1.0),
    st.lists(st.floats(0.9, 1.0), min_size=0, max_size=6),
    st.floats(1e-4, 0.05),
)
@settings(max_examples=100, deadline=None)
def test_propagation_property(raw, zstar, fsp, s):
    sig = [s] * len(fsp)
    got = propagate_mitigation_error(raw, s, zstar, 2 * s, fsp, sig)
    want = _fd_sigma([raw, zstar, *fsp], np.array([s, 2 * s, *sig]))
    assert got == pytest.approx(want, rel=1e-8)
