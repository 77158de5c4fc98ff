from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qubitseq.algebra import I2, SX, SY, SZ, DomainError, dag, from_bloch, herm_exp, ket_state, op_norm, trace_distance
from qubitseq.exact import run_nonselective
from qubitseq.model import ModelParams, derive
from qubitseq.nseries import (
    NSeriesConfig,
    UnderResolvedGrid,
    UnphysicalReadout,
    backaction_unitary,
    binomial_element,
    binomial_gaussian_tv,
    binomial_weights,
    completeness,
    completeness_defect,
    gaussian_element,
    gaussian_elements,
    nseries_nonselective,
    rate_from_s,
    readout_moments,
    s_from_rate,
)
from strategies import random_model_params, random_state


def test_binomial_n1_is_single_step(rng):
    m = derive(random_model_params(rng))
    assert np.allclose(binomial_element(1, 1, m), m.M_plus @ m.U, atol=1e-15)
    assert np.allclose(binomial_element(0, 1, m), m.M_minus @ m.U, atol=1e-15)


def test_binomial_completeness_n50(rng):
    m = derive(random_model_params(rng))
    total = sum(dag(e) @ e for e in (binomial_element(k, 50, m) for k in range(51)))
    assert np.max(np.abs(total - I2)) < 1e-10


def test_binomial_diagonal_direct_product_oracle():
    m = derive(ModelParams(p1=0.48, p2=0.52, tau=0.01))
    N = 30
    for k in (0, 7, 15, 22, 30):
        prod = np.linalg.matrix_power(m.M_plus_abs, k) @ np.linalg.matrix_power(m.M_minus_abs, N - k)
        oracle = math.sqrt(math.comb(N, k)) * np.diag(prod).real
        assert np.allclose(np.diag(binomial_element(k, N, m)).real, oracle, rtol=1e-12, atol=0)


def test_binomial_large_n_no_overflow():
    m = derive(ModelParams(p1=0.499, p2=0.501, tau=1e-4))
    w = binomial_weights(0.5 * I2, m, 10_000)
    assert np.all(np.isfinite(w)) and w.sum() == pytest.approx(1.0, abs=1e-10)


def test_binomial_rejects_bad_count():
    m = derive(ModelParams(p1=0.4, p2=0.5, tau=0.1))
    with pytest.raises(DomainError):
        binomial_element(5, 4, m)


def test_gaussian_s0_is_scalar():
    m = derive(ModelParams.from_gamma(1.0, 0.5, 1e-4))
    cfg = NSeriesConfig(N=100)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        el = gaussian_element(0.0, m, 0.01, cfg)
    assert el.M_s_abs[0, 0] == pytest.approx(el.M_s_abs[1, 1], rel=1e-15)
    assert el.M_s_abs[0, 1] == 0


def test_gaussian_structure(rng):
    p = random_model_params(rng, dp_max=0.05)
    m = derive(p)
    cfg = NSeriesConfig(N=20)
    dt = 20 * p.tau
    mod, us, ms = gaussian_elements(np.array([-1.0, 0.3, 2.0]), m, dt, cfg)
    free = herm_exp(p.H, dt)
    assert np.allclose(ms, us @ mod @ free)
    for u in us:
        assert np.allclose(u @ dag(u), I2, atol=1e-13)


def test_backaction_unitary_s_independent_without_discrimination(rng):
    p = random_model_params(rng)
    m = derive(ModelParams(p1=0.4, p2=0.4, tau=p.tau, Hplus=p.Hplus, Hminus=p.Hminus))
    us = backaction_unitary(np.array([-3.0, 0.0, 5.0]), m, 0.2)
    assert np.allclose(us[0], us[1]) and np.allclose(us[1], us[2])
    assert np.allclose(us[0], herm_exp(m.H_AV, 0.2))


def test_gaussian_needs_discrimination():
    m = derive(ModelParams(p1=0.4, p2=0.4, tau=0.01))
    with pytest.raises(DomainError):
        gaussian_elements([0.0], m, 0.1, NSeriesConfig(N=10))


def test_gaussian_rejects_sharp_measurement():
    m = derive(ModelParams(p1=0.0, p2=0.3, tau=0.01))
    with pytest.raises(DomainError):
        nseries_nonselective(0.5 * I2, m, 0.1, NSeriesConfig(N=10))


def test_gaussian_validity_window_warning():
    m = derive(ModelParams.from_p0(0.5, 0.2, 0.01))
    with pytest.warns(UserWarning, match="dp << tau/dt"):
        gaussian_element(0.0, m, 0.1, NSeriesConfig(N=10))


def test_binomial_gaussian_tv_n200():
    m = derive(ModelParams.from_p0(0.5, 0.02, 0.01))
    assert binomial_gaussian_tv(0.5 * I2, m, 200) < 0.01


def test_binomial_gaussian_tv_decreases_with_n():
    tv = []
    for N in (50, 100, 200, 400):
        m = derive(ModelParams.from_p0(0.5, 2.0 / N, 0.01))  # fixed N dp = 2
        tv.append(binomial_gaussian_tv(0.5 * I2, m, N))
    assert all(b < a for a, b in zip(tv, tv[1:])), tv


def test_readout_map_examples():
    m = derive(ModelParams.from_p0(0.4, 0.1, 0.01))
    N = 100
    assert s_from_rate(40, N, m) == pytest.approx(0.0, abs=1e-13)
    assert s_from_rate(35, N, m) == pytest.approx(1.0, abs=1e-13)


@given(st.floats(0.0, 1.0))
def test_rate_roundtrip(rate):
    m = derive(ModelParams.from_p0(0.45, 0.08, 0.01))
    s = s_from_rate(rate * 1000, 1000, m)
    assert rate_from_s(s, m) == pytest.approx(rate, abs=1e-14)


def test_unphysical_readout_flagged_not_refused():
    m = derive(ModelParams.from_p0(0.5, 0.1, 0.01))
    with pytest.warns(UnphysicalReadout):
        r = rate_from_s(12.0, m)
    assert r == pytest.approx(-0.1)


@pytest.mark.parametrize("p0", [0.2, 0.35, 0.5, 0.65, 0.8])
def test_gaussian_completeness(p0):
    m = derive(ModelParams.from_gamma(1.0, p0, 1e-3))
    assert completeness_defect(m, 0.1, NSeriesConfig(N=100)) <= 2e-6


def test_completeness_physical_range_degrades_near_edges():
    cfg = NSeriesConfig(N=100)
    mid = derive(ModelParams.from_gamma(1.0, 0.5, 1e-3))
    edge = derive(ModelParams.from_gamma(1.0, 0.05, 1e-3))
    d_mid = completeness_defect(mid, 0.1, cfg, physical_range=True)
    d_edge = completeness_defect(edge, 0.1, cfg, physical_range=True)
    assert d_edge > d_mid


def test_qnumber_width_is_small_correction():
    m = derive(ModelParams.from_p0(0.4, 0.02, 1e-3, H=0.3 * SX, Hplus=0.2 * SY))
    dt = 0.1
    rho = from_bloch([0.5, 0.2, 0.6])
    a = nseries_nonselective(rho, m, dt, NSeriesConfig(N=100))
    b = nseries_nonselective(rho, m, dt, NSeriesConfig(N=100, use_qnumber_width=True))
    d = trace_distance(a, b)
    assert 0 < d <= 5 * m.delta_p * dt * m.gamma
    assert op_norm(completeness(m, dt, NSeriesConfig(N=100, use_qnumber_width=True)) - I2) < 2e-6


def test_nonselective_keeps_diagonal_states():
    m = derive(ModelParams.from_gamma(1.0, 0.5, 1e-3))
    rho = from_bloch([0, 0, 0.4])
    out = nseries_nonselective(rho, m, 0.1, NSeriesConfig(N=100))
    assert np.max(np.abs(out - rho)) < 2e-6


def test_nonselective_trace(rng):
    m = derive(ModelParams.from_gamma(1.0, 0.45, 1e-3, H=0.5 * SX, Hplus=0.3 * SY, Hminus=-0.2 * SZ))
    out = nseries_nonselective(random_state(rng), m, 0.05, NSeriesConfig(N=50))
    assert abs(np.trace(out) - 1) < 2e-6


def test_nonselective_against_exact_channel():
    p = ModelParams.from_gamma(1.0, 0.5, 1e-3, H=0.3 * SX, Hplus=0.2 * SY, Hminus=-0.1 * SY)
    m = derive(p)
    N = 50
    rho = from_bloch([0.6, 0.2, 0.5])
    gauss = nseries_nonselective(rho, m, N * p.tau, NSeriesConfig(N=N))
    exact = run_nonselective(rho, m, N)[-1]
    dp, dt = m.delta_p, N * p.tau
    envelope = N * dp * dt * (0.3 + 0.2) + dt**2 * 0.3 * 0.2 + N * dp**3
    assert trace_distance(gauss, exact) < envelope


def test_readout_moments():
    m = derive(ModelParams.from_gamma(1.0, 0.5, 1e-3))
    dt = 0.1
    for r in ([0, 0, 1], [0, 0, -0.4], [0.8, 0, 0.0]):
        rho = from_bloch(r)
        mean, var = readout_moments(rho, m, dt, NSeriesConfig(N=100))
        assert mean == pytest.approx(r[2], abs=1e-9)
        # mixture of two Gaussians centred at +-1 with weights (1 +- <sz>)/2
        assert var == pytest.approx(1 / (m.gamma * dt) + 1 - r[2] ** 2, rel=1e-9)


def test_under_resolved_grid_warns():
    m = derive(ModelParams.from_gamma(1.0, 0.5, 1e-3))
    with pytest.warns(UnderResolvedGrid, match="estimated quadrature error"):
        completeness(m, 0.1, NSeriesConfig(N=100, s_points=41))


def test_nseries_config_needs_n2():
    with pytest.raises(DomainError):
        NSeriesConfig(N=1)
