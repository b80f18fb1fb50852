import numpy as np
import pytest

from oracles import central_diff, closed_form_by_hand
from timedmix import theory
from timedmix.characteristic import DelayCharacteristic, gamma_stats, mean_delay
from timedmix.mix import apply_delay
from timedmix.theory import (
    closed_form_mse,
    effective_characteristic,
    grad_sharp0,
    grad_sharp1,
    grad_shortterm,
    objective_sharp0,
    objective_sharp1,
    objective_shortterm,
    stopband,
)
from timedmix.traffic import gen_poisson_traffic


def test_closed_form_hand_example():
    rep = closed_form_mse([1, 1], [0, 0], DelayCharacteristic([1.0]), 100)
    assert rep.term_filter_dependent == pytest.approx(0.03, rel=1e-14)
    assert rep.term_filter_independent == 0
    assert rep.mse_total == pytest.approx(0.03, rel=1e-14)
    assert rep.assumption_flags == ("total_rate_not_much_larger_than_one",)
    rep = closed_form_mse([1, 1], [0, 0], [1.0], 19)
    assert "rho_not_much_larger_than_senders" in rep.assumption_flags
    rep = closed_form_mse(np.full(10, 5.0), np.zeros(10), [1.0], 2000)
    assert rep.assumption_flags == ()


def test_closed_form_zero_sharpness_has_no_second_term():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 8))
        rep = closed_form_mse(rng.uniform(0.1, 9, n), np.zeros(n),
                              rng.dirichlet(np.ones(4)), 500)
        assert rep.term_filter_independent == 0


def test_closed_form_uniform4_over_delta():
    for s in (1.0, 10.0, 100.0, 1000.0):
        lam = np.full(4, s / 4)
        q = np.zeros(4)
        ratio = (closed_form_mse(lam, q, DelayCharacteristic.uniform(4), 1000).mse_total
                 / closed_form_mse(lam, q, [1.0], 1000).mse_total)
        assert ratio == pytest.approx(((s / 4 + 1 / 16) / (1 / 16)) / (s + 1), rel=1e-12)
    assert ratio == pytest.approx(4, rel=0.01)


def test_closed_form_matches_scalar_transcription():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 12))
        lam = rng.uniform(0.1, 10, n)
        q = rng.uniform(0, 1, n)
        taps = rng.dirichlet(np.ones(rng.integers(1, 20)))
        rho = int(rng.integers(1, 5000))
        g = gamma_stats(taps)
        want = closed_form_by_hand(lam, q, g.gamma1, g.gamma2, g.gamma3, rho)
        rep = closed_form_mse(lam, q, taps, rho)
        assert rep.mse_total == pytest.approx(want, rel=1e-12)
        assert rep.mse_total == pytest.approx(rep.term_filter_dependent
                                              + rep.term_filter_independent, rel=1e-14)
        assert rep.mse_total >= 0


def test_inverse_gamma1_scaling_up_to_gamma3():
    rng = np.random.default_rng(2)
    lam = rng.uniform(0.5, 6, 7)
    s, s2 = lam.sum(), np.sum(lam ** 2)
    base = (s - s2 / s) * s / 300
    for _ in range(300):
        taps = rng.dirichlet(np.ones(rng.integers(1, 30)))
        g = gamma_stats(taps)
        mse = closed_form_mse(lam, np.zeros(7), taps, 300).mse_total
        dev = abs(mse * g.gamma1 / base - 1)
        assert dev <= g.gamma3 / (g.gamma1 * s) + 1e-12


def test_closed_form_input_checks():
    with pytest.raises(ValueError):
        closed_form_mse([1, 2], [0.5], [1.0], 10)
    with pytest.raises(ValueError):
        closed_form_mse([1, -2], [0.5, 0.5], [1.0], 10)
    with pytest.raises(ValueError):
        closed_form_mse([1, 2], [0.5, 1.5], [1.0], 10)


def test_report_text_block():
    text = closed_form_mse([1, 1], [0, 0], [1.0], 100).to_text()
    kv = dict(line.split("=", 1) for line in text.splitlines())
    assert float(kv["mse_total"]) == pytest.approx(0.03)
    assert kv["gamma1"] == "1"
    assert kv["assumption_flags"] == "total_rate_not_much_larger_than_one"


# -- internal appendix helpers -----------------------------------------------------

def test_sherman_morrison_inverse():
    rng = np.random.default_rng(3)
    for _ in range(100):
        lam = rng.uniform(0.1, 10, int(rng.integers(1, 10)))
        g1 = rng.uniform(0.01, 1)
        np.testing.assert_allclose(theory._rxx_inverse(lam, g1),
                                   np.linalg.inv(theory._rxx(lam, g1)), rtol=1e-9, atol=1e-12)


def test_rxx_matches_sample_average():
    lam = np.array([1.0, 3.0, 5.0])
    f = DelayCharacteristic([0.5, 0.3, 0.2])
    rho = 200_000
    dx = apply_delay(f, gen_poisson_traffic(lam, rho, seed=0).counts)
    est = dx.T @ dx / rho
    want = theory._rxx(lam, gamma_stats(f).gamma1)
    np.testing.assert_allclose(est, want, rtol=0.02)


def test_trace_form_approaches_closed_form():
    f = DelayCharacteristic.uniform(4)
    g1 = gamma_stats(f).gamma1
    gaps = []
    for s in (5.0, 50.0, 500.0):
        lam = np.full(10, s / 10)
        q = np.full(10, 0.3)
        cf = closed_form_mse(lam, q, f, 1000).mse_total
        gap = abs(theory._asymptotic_mse(lam, q, f, 1000) - cf) / cf
        assert gap <= 2 * g1 / s
        gaps.append(gap)
    assert gaps[0] > gaps[1] > gaps[2]


# -- design objectives -------------------------------------------------------------

@pytest.mark.parametrize("taps, want", [([1.0], 1.0), ([0.5, 0.5], 2.0), ([0.2] * 5, 5.0)])
def test_sharp0_examples(taps, want):
    assert objective_sharp0(DelayCharacteristic(taps)) == pytest.approx(want)


def test_sharp1_examples():
    assert objective_sharp1(DelayCharacteristic([1.0])) == 0
    assert objective_sharp1([0.5, 0.5], lags="nonnegative") == pytest.approx(0.75)
    assert objective_sharp1([0.5, 0.5]) == pytest.approx(0.5)


def test_sharp1_nonnegative_on_simplex():
    rng = np.random.default_rng(4)
    for _ in range(10_000):
        taps = rng.dirichlet(np.full(rng.integers(1, 40), rng.choice([0.1, 1.0, 5.0])))
        assert objective_sharp1(taps) >= -1e-12
        assert objective_sharp1(taps, "nonnegative") >= -1e-12


def test_stopband_bins():
    assert np.flatnonzero(stopband(4, 8)).tolist() == [3, 4, 5]
    assert np.flatnonzero(stopband(5, 12)).tolist() == [4, 5, 6, 7, 8]
    assert not stopband(7, 8).any()
    for n, rho in ((4, 8), (10, 50), (20, 100)):
        assert stopband(n, rho).sum() == rho - n - 1
    with pytest.raises(ValueError):
        stopband(8, 8)


def test_shortterm_examples():
    assert objective_shortterm(DelayCharacteristic([1.0]), 4, 8) == pytest.approx(3.0)
    assert objective_shortterm(DelayCharacteristic.uniform(8), 4, 8) == pytest.approx(0, abs=1e-28)
    assert objective_shortterm(DelayCharacteristic.uniform(6), 5, 6) == 0


def test_shortterm_conjugate_symmetry():
    rng = np.random.default_rng(5)
    rho, n = 30, 6
    mask = stopband(n, rho)
    for _ in range(20):
        spec = np.fft.fft(rng.dirichlet(np.ones(9)), rho)
        k = np.flatnonzero(mask)
        np.testing.assert_allclose(np.abs(spec[k]), np.abs(spec[(rho - k) % rho]), atol=1e-14)
        np.testing.assert_array_equal(mask[k], mask[(rho - k) % rho])


def _interior_points(rng, count):
    for _ in range(count):
        yield rng.dirichlet(np.full(rng.integers(2, 25), 2.0)) + 1e-3


def _rel_err(g, fd):
    return np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    for x in _interior_points(rng, 100):
        assert _rel_err(grad_sharp0(x), central_diff(objective_sharp0, x)) <= 1e-5
        for lags in ("all", "nonnegative"):
            fd = central_diff(lambda v: objective_sharp1(v, lags), x)
            assert _rel_err(grad_sharp1(x, lags), fd) <= 1e-5
        n, rho = 4, x.size + 10
        fd = central_diff(lambda v: objective_shortterm(v, n, rho), x)
        assert _rel_err(grad_shortterm(x, n, rho), fd) <= 1e-5


def test_effective_characteristic():
    rng = np.random.default_rng(7)
    f = DelayCharacteristic(rng.dirichlet(np.ones(5)))
    g = DelayCharacteristic(rng.dirichlet(np.ones(3)))
    np.testing.assert_allclose(effective_characteristic(f, [1.0]).taps, f.taps, atol=1e-15)
    np.testing.assert_allclose(effective_characteristic(f, g).taps,
                               effective_characteristic(g, f).taps, atol=1e-15)
    assert mean_delay(effective_characteristic(f, g)) == pytest.approx(
        mean_delay(f) + mean_delay(g), rel=1e-12)
