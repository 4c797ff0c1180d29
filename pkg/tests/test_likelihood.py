import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spacetime_embed.likelihood import (
    FdParams,
    Likelihood,
    TfdParams,
    calibrate_k,
    edge_nll,
    fd,
    log_fd,
    tfd,
    tfd_partials,
    wrapped_tfd,
)
from spacetime_embed.manifolds import Kind, ManifoldSpec, interval_images

# 30-digit reference values computed with mpmath
FD_03 = 0.354343693774204547
FD_03_SHIFTED = 0.377540668798145435
TFD_A = 0.565196666904878071
TFD_B = 0.392589896699882147
WRAPPED_CYL = 0.0276784414422931109
TFD_UNIT = 0.644107149698143420  # tau1 = tau2 = 1, alpha = 0, s = -1, dt = 1


def test_fd_oracles():
    assert fd(FdParams(0.5), 0.3) == pytest.approx(FD_03, rel=1e-14)
    assert fd(FdParams(0.5, r=-0.1, alpha=0.5), 0.3) == pytest.approx(FD_03_SHIFTED, rel=1e-14)


def test_tfd_oracles():
    assert tfd(TfdParams(0.4, 0.07, 0.09), 0.1, 0.2) == pytest.approx(TFD_A, rel=1e-13)
    p = TfdParams(0.075, 0.03, 0.06, r=-0.1, k=0.9)
    assert tfd(p, -0.5, -0.05) == pytest.approx(TFD_B, rel=1e-13)
    assert tfd(TfdParams(1.0, 1.0, 0.0), -1.0, 1.0) == pytest.approx(TFD_UNIT, rel=1e-14)
    assert tfd(TfdParams(1.0, 1.0, 1.0), 0.0, 0.0) == pytest.approx(0.5, rel=1e-15)


def test_wrapped_tfd_oracle():
    spec = ManifoldSpec(Kind.CYLINDRICAL_MINKOWSKI, 1, 10.0)
    lik = Likelihood.tfd(0.4, 0.07, 0.09, wrap_m=3)
    got = lik.probability(spec, np.array([0.0, 0.0]), np.array([9.0, 1.0]))
    assert got == pytest.approx(WRAPPED_CYL, rel=1e-12)


def test_fd_is_stable_at_extremes():
    lf, om = log_fd(np.array([-1e6, 0.0, 1e6]), 0.1, 0.0, 1.0)
    assert np.all(np.isfinite(lf))
    np.testing.assert_allclose(np.exp(lf), [1.0, 0.5, 0.0], atol=1e-300)
    np.testing.assert_allclose(om, [0.0, 0.5, 1.0])
    assert lf[2] == pytest.approx(-1e7)


def test_tfd_shape_causal_asymmetry():
    p = TfdParams(0.1, 0.1, 0.1)
    future = tfd(p, -1.0, 1.0)
    past = tfd(p, -1.0, -1.0)
    assert future > 0.6 and past < 0.05
    # alpha = 1 makes the time window symmetric, giving a small value either way
    sym = TfdParams(0.1, 0.1, 1.0)
    assert tfd(sym, -1.0, 1.0) == pytest.approx(tfd(sym, -1.0, -1.0))


def test_parameter_validation():
    with pytest.raises(ValueError):
        FdParams(0.0)
    with pytest.raises(ValueError):
        TfdParams(0.1, 0.1, 1.5)
    with pytest.raises(ValueError):
        TfdParams(0.1, 0.1, 0.1, k=1.2)
    with pytest.raises(ValueError):
        Likelihood("gaussian", 0.1)


def test_edge_nll_oracle_and_clamp():
    np.testing.assert_allclose(edge_nll([0.3, 0.3], [1, 0]),
                               [1.20397280432593599, 0.356674943938732379], rtol=1e-14)
    assert np.isfinite(edge_nll(0.0, 1)) and np.isfinite(edge_nll(1.0, 0))
    assert edge_nll(0.0, 1) == pytest.approx(-np.log(1e-12))
    assert edge_nll(1 - 1e-12, 0) == pytest.approx(27.631, abs=1e-3)
    assert edge_nll(1.0, 1) == pytest.approx(0.0, abs=1e-11)


@settings(max_examples=80, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.02, 1.0), st.floats(0.02, 1.0),
       st.floats(0.0, 1.0))
def test_tfd_partials_match_finite_differences(s, dt, tau1, tau2, alpha):
    p = TfdParams(tau1, tau2, alpha)
    ds, dd = tfd_partials(p, s, dt)
    h = 1e-6
    num_s = (tfd(p, s + h, dt) - tfd(p, s - h, dt)) / (2 * h)
    num_t = (tfd(p, s, dt + h) - tfd(p, s, dt - h)) / (2 * h)
    assert ds == pytest.approx(num_s, rel=1e-4, abs=1e-9)
    assert dd == pytest.approx(num_t, rel=1e-4, abs=1e-9)


def test_tfd_partials_match_high_precision_derivatives():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    rng = np.random.default_rng(7)

    def ref(t1, t2, a, r, k, s_sq, dt):
        def f(x, y):
            f1 = 1 / (mpmath.exp((x - r) / t1) + 1)
            f2 = 1 / (mpmath.exp(-y / t2) + 1)
            f3 = 1 / (mpmath.exp(a * y / t2) + 1)
            return k * mpmath.cbrt(f1 * f2 * f3)
        return (mpmath.diff(lambda x: f(x, dt), s_sq), mpmath.diff(lambda y: f(s_sq, y), dt))

    for _ in range(1000):
        t1, t2 = rng.uniform(0.05, 1.0, 2)
        a, k = rng.uniform(0.0, 1.0), rng.uniform(0.5, 1.0)
        r = rng.uniform(-0.2, 0.2)
        s_sq, dt = rng.uniform(-2, 2, 2)
        got = tfd_partials(TfdParams(t1, t2, a, r=r, k=k), s_sq, dt)
        want = ref(*(mpmath.mpf(float(v)) for v in (t1, t2, a, r, k, s_sq, dt)))
        for g, w in zip(got, want):
            assert g == pytest.approx(float(w), rel=1e-7, abs=1e-300)


def test_wrap_truncation_converges():
    spec = ManifoldSpec(Kind.CYLINDRICAL_MINKOWSKI, 2, 10.0)
    rng = np.random.default_rng(3)
    p = np.column_stack([rng.uniform(0, 10, (2000, 1)), rng.normal(0, 1, (2000, 2))])
    q = np.column_stack([rng.uniform(0, 10, (2000, 1)), rng.normal(0, 1, (2000, 2))])
    a = Likelihood.tfd(0.4, 0.05, 0.075, wrap_m=3).probability(spec, p, q)
    b = Likelihood.tfd(0.4, 0.05, 0.075, wrap_m=4).probability(spec, p, q)
    assert np.max(np.abs(b - a)) < 1e-6 * np.max(a)


@settings(max_examples=80, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_tfd_in_unit_interval(s, dt):
    v = tfd(TfdParams(0.05, 0.05, 0.5), s, dt)
    assert 0.0 <= v <= 1.0


def test_wrapped_partials_sum_over_images():
    spec = ManifoldSpec(Kind.CYLINDRICAL_MINKOWSKI, 1, 4.0)
    params = TfdParams(0.4, 0.5, 0.3, wrap_m=2)
    im = interval_images(spec, np.array([0.2, 0.0]), np.array([3.1, 0.3]), 2)
    out = wrapped_tfd(params, im)
    ds, dd = tfd_partials(params, im.s_sq, im.dt)
    np.testing.assert_allclose(out.partial_s_sq, ds)
    np.testing.assert_allclose(out.partial_dt, dd)
    assert out.value == pytest.approx(np.sum(tfd(params, im.s_sq, im.dt)))


@pytest.mark.parametrize("C,tau2,alpha", [(2.0, 1.0, 1.0), (10.0, 0.07, 0.09), (6.0, 0.5, 0.3)])
def test_calibration_keeps_probability_below_one(C, tau2, alpha):
    spec = ManifoldSpec(Kind.CYLINDRICAL_MINKOWSKI, 1, C)
    lik = Likelihood.tfd(0.4, tau2, alpha, wrap_m=3).calibrated(spec)
    assert 0 < lik.k <= 1.0
    rng = np.random.default_rng(0)
    p = np.column_stack([rng.uniform(0, C, 4000), rng.normal(0, 1, 4000)])
    q = np.column_stack([rng.uniform(0, C, 4000), rng.normal(0, 1, 4000)])
    assert np.max(lik.probability(spec, p, q)) <= 1.0 + 1e-9


def test_calibration_noop_without_circle_time():
    spec = ManifoldSpec(Kind.MINKOWSKI, 1)
    assert calibrate_k(TfdParams(0.1, 0.1, 0.1, k=0.7), spec) == 0.7
    assert Likelihood.fd(0.3).calibrated(spec) == Likelihood.fd(0.3)


def test_wrap_ignored_on_open_time():
    spec = ManifoldSpec(Kind.MINKOWSKI, 1)
    lik = Likelihood.tfd(0.1, 0.1, 0.1, wrap_m=3)
    assert lik.effective_m(spec) == 0
    p, q = np.zeros(2), np.array([0.5, 0.1])
    expected = tfd(lik.tfd_params, -0.25 + 0.01, 0.5)
    assert lik.probability(spec, p, q) == pytest.approx(expected)
