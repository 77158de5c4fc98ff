from __future__ import annotations

import math

import numpy as np
import pytest

from qubitseq.algebra import I2, SX, SY, SZ, DomainError, bloch_vector, from_bloch, herm_exp, ket_state, purity, trace_distance
from qubitseq.continuum import (
    ContinuumModel,
    discrete_to_continuum_convergence,
    integrate_master,
    master_rhs,
    master_step_rk4,
    path_noise,
    purity_residue,
    readout_statistics,
    run_sme_ensemble,
    scale_to_continuum,
    simulate_sme_path,
    simulate_sme_paths,
    sme_step_euler,
    sme_step_milstein,
)
from qubitseq.model import ModelParams, derive

ZERO = np.zeros((2, 2), dtype=complex)


def test_scale_to_continuum_halving():
    p = ModelParams.from_gamma(1.0, 0.4, 0.01, H=0.2 * SX, Hplus=0.3 * SY, Hminus=-0.1 * SZ)
    q = scale_to_continuum(p, 0.005)
    assert q.delta_p == pytest.approx(p.delta_p / math.sqrt(2), rel=1e-14)
    assert derive(q).gamma == pytest.approx(derive(p).gamma, rel=1e-14)
    assert q.p0 == pytest.approx(p.p0, abs=1e-16)
    assert np.max(np.abs(derive(q).H_AV - derive(p).H_AV)) <= 1e-16
    assert q.H is p.H and q.Hplus is p.Hplus


def test_scale_to_continuum_gamma_zero():
    p = ModelParams(p1=0.3, p2=0.3, tau=0.1)
    for tau in (0.05, 1e-4):
        assert scale_to_continuum(p, tau).delta_p == 0.0


def test_scale_to_continuum_roundtrip():
    p = ModelParams.from_gamma(1.0, 0.5, 0.01)
    back = scale_to_continuum(scale_to_continuum(p, 0.0025), 0.01)
    assert abs(back.delta_p - p.delta_p) <= 1e-14


def test_scale_to_continuum_errors():
    p = ModelParams.from_gamma(1.0, 0.1, 0.001)
    with pytest.raises(DomainError):
        scale_to_continuum(p, 1.0)
    with pytest.raises(DomainError):
        scale_to_continuum(p, 0.0)


def test_continuum_model_validation():
    with pytest.raises(DomainError):
        ContinuumModel(np.array([[0, 1], [0, 0]]), 1.0)
    with pytest.raises(DomainError):
        ContinuumModel(ZERO, -1.0)


def test_master_decay_factor():
    out = integrate_master(from_bloch([1, 0, 0]), ContinuumModel(ZERO, 1.0), 1.0, 1e-3)
    assert abs(2 * out[-1][0, 1].real - 0.60653) < 1e-5
    assert abs(2 * out[-1][0, 1].real - math.exp(-0.5)) < 1e-6


def test_master_unitary_limit():
    h = 0.7 * SX + 0.2 * SZ
    rho = from_bloch([0.1, 0.5, 0.4])
    out = integrate_master(rho, ContinuumModel(h, 0.0), 1.0, 1e-3)[-1]
    u = herm_exp(h, 1.0)
    assert np.max(np.abs(out - u @ rho @ u.conj().T)) < 1e-10


def test_master_maximally_mixed_stationary():
    cm = ContinuumModel(0.9 * SX - 0.4 * SY, 2.0)
    assert np.allclose(master_step_rk4(0.5 * I2, cm, 0.01), 0.5 * I2, atol=1e-16)


def test_master_trace_and_sz_conservation():
    cm = ContinuumModel(0.8 * SZ, 1.5)
    rho = from_bloch([0.5, 0.1, 0.6])
    out = integrate_master(rho, cm, 1.0, 1e-2)
    tr = np.trace(out, axis1=1, axis2=2)
    assert np.max(np.abs(tr - 1)) < 1e-12
    assert np.max(np.abs(bloch_vector(out)[:, 2] - 0.6)) < 1e-14


def test_master_rhs_traceless():
    cm = ContinuumModel(0.8 * SX, 1.5)
    assert abs(np.trace(master_rhs(from_bloch([0.2, 0.3, 0.4]), cm))) < 1e-15


@pytest.mark.filterwarnings("ignore:master_step_rk4")
def test_rk4_fourth_order():
    cm = ContinuumModel(1.0 * SX + 0.3 * SZ, 1.0)
    rho = from_bloch([0.0, 0.6, 0.8])
    ref = integrate_master(rho, cm, 1.0, 1e-4)[-1]
    errs = [trace_distance(integrate_master(rho, cm, 1.0, dt)[-1], ref) for dt in (0.1, 0.05, 0.025)]
    slope = np.polyfit(np.log([0.1, 0.05, 0.025]), np.log(errs), 1)[0]
    assert 3.7 < slope < 4.3


def test_master_rejects_non_integer_steps():
    with pytest.raises(DomainError):
        integrate_master(0.5 * I2, ContinuumModel(ZERO, 1.0), 1.0, 0.3)


def test_sme_eigenstate_frozen():
    cm = ContinuumModel(ZERO, 2.0)
    for k in (0, 1):
        rho = ket_state(k)
        out, s = sme_step_euler(rho, cm, 1e-3, 0.07)
        assert np.array_equal(out, rho)
        assert s == pytest.approx((1 if k == 0 else -1) + 0.07 / (math.sqrt(2.0) * 1e-3))


def test_sme_gamma_zero_drift_only():
    cm = ContinuumModel(0.5 * SX, 0.0)
    rho = from_bloch([0, 0, 1])
    out, s = sme_step_euler(rho, cm, 1e-3, 0.5)
    assert math.isnan(s)
    assert np.allclose(out, rho + master_rhs(rho, cm) * 1e-3)


def test_sme_step_hermitian_unit_trace():
    cm = ContinuumModel(0.5 * SX, 1.0)
    path = simulate_sme_path(from_bloch([1, 0, 0]), cm, 1.0, 1e-3, seed=11)
    st = path.states
    assert np.max(np.abs(st - st.conj().transpose(0, 2, 1))) < 1e-9
    assert np.max(np.abs(np.trace(st, axis1=1, axis2=2) - 1)) < 1e-9
    assert len(path.noise) == len(path.readout) == 1000 and len(st) == 1001


def test_sme_readout_shares_increment_with_state():
    cm = ContinuumModel(ZERO, 1.0)
    path = simulate_sme_path(from_bloch([0.6, 0, 0.8]), cm, 0.01, 1e-3, seed=2)
    sz = bloch_vector(path.states[:-1])[:, 2]
    assert np.allclose(path.readout, sz + path.noise / (math.sqrt(1.0) * 1e-3))
    assert np.array_equal(path.noise, path_noise(2, 0, 10, 1e-3))


def test_milstein_reduces_purity_residue():
    cm = ContinuumModel(0.5 * SX, 1.0)
    rho = from_bloch([1, 0, 0])
    em = run_sme_ensemble(rho, cm, 1.0, 1e-2, 400, seed=5, scheme="euler")
    mil = run_sme_ensemble(rho, cm, 1.0, 1e-2, 400, seed=5, scheme="milstein")
    assert purity_residue(mil).mean() < purity_residue(em).mean() / 3


def test_sme_ensemble_thread_independent():
    cm = ContinuumModel(0.5 * SX, 1.0)
    rho = from_bloch([1, 0, 0])
    a = run_sme_ensemble(rho, cm, 0.2, 1e-3, 600, seed=9, threads=1)
    b = run_sme_ensemble(rho, cm, 0.2, 1e-3, 600, seed=9, threads=4)
    assert np.array_equal(a.mean_bloch, b.mean_bloch)
    assert np.array_equal(a.final_states, b.final_states)


def test_sme_ensemble_matches_single_paths():
    cm = ContinuumModel(0.5 * SX, 1.0)
    rho = from_bloch([1, 0, 0])
    ens = run_sme_ensemble(rho, cm, 0.05, 1e-3, 5, seed=4, keep_readout=True)
    paths = simulate_sme_paths(rho, cm, 0.05, 1e-3, 5, seed=4)
    for i, p in enumerate(paths):
        assert np.allclose(ens.readout[i], p.readout, atol=1e-9)
        assert np.allclose(ens.final_states[i], p.states[-1], atol=1e-12)


def test_sme_mean_matches_master_small():
    cm = ContinuumModel(0.5 * SX, 1.0)
    rho = from_bloch([1, 0, 0])
    ens = run_sme_ensemble(rho, cm, 0.5, 1e-3, 2000, seed=1)
    ref = bloch_vector(integrate_master(rho, cm, 0.5, 1e-3)[-1])
    assert np.all(np.abs(ens.mean_bloch[-1] - ref) <= 3 * ens.sem_bloch[-1] + 1e-12)


def test_sme_positivity_abort_flag():
    cm = ContinuumModel(ZERO, 400.0)
    path = simulate_sme_path(from_bloch([1, 0, 0]), cm, 0.1, 1e-2, seed=0, abort_below=-1e-8)
    assert path.aborted_at is not None and path.min_eigenvalue < -1e-8


def test_readout_statistics_refusals():
    cm = ContinuumModel(ZERO, 1.0)
    paths = simulate_sme_paths(ket_state(0), cm, 0.05, 1e-3, 100, seed=0)
    with pytest.raises(DomainError):
        readout_statistics(paths[:99], 0.02, 1.0)
    with pytest.raises(DomainError):
        readout_statistics(paths, 0.005, 1.0)
    rep = readout_statistics(paths, 0.02, 1.0)
    assert rep.mean_sz == 1.0
    assert abs(rep.mean_s - 1.0) < 4 * rep.sem_mean_s


def test_readout_strong_measurement_bimodal():
    cm = ContinuumModel(ZERO, 50.0)
    paths = simulate_sme_paths(0.5 * I2, cm, 1.0, 1e-3, 200, seed=3)
    rep = readout_statistics(paths, 0.5, 50.0)
    assert rep.bimodality > 0.9
    finals = np.array([bloch_vector(p.states[-1])[2] for p in paths])
    assert abs(finals.mean()) < 0.2
    assert np.mean(np.abs(finals) > 0.9) > 0.9


def test_convergence_pure_decoherence_analytic():
    p = ModelParams.from_gamma(1.0, 0.5, 0.1)
    rho0 = from_bloch([0.6, 0.0, 0.8])
    taus = [0.1, 0.01, 0.001]
    rep = discrete_to_continuum_convergence(p, 1.0, taus, 1.0, rho0)
    for tau, d in zip(taus, rep.distances):
        m = derive(scale_to_continuum(p, tau))
        lam = math.sqrt(m.params.p1 * m.params.p2) + math.sqrt((1 - m.params.p1) * (1 - m.params.p2))
        analytic = 0.3 * abs(lam ** round(1 / tau) - math.exp(-0.5))
        assert d == pytest.approx(analytic, rel=1e-6, abs=1e-12)


def test_convergence_requires_decreasing_taus():
    with pytest.raises(DomainError):
        discrete_to_continuum_convergence(ModelParams.from_gamma(1.0, 0.5, 0.1), 1.0, [0.01, 0.1], 1.0)


def test_convergence_gamma_zero_trotter():
    p = ModelParams(p1=0.5, p2=0.5, tau=0.1, H=0.4 * SX, Hplus=0.3 * SZ, Hminus=0.3 * SZ)
    rep = discrete_to_continuum_convergence(p, 0.0, [0.1, 0.01, 0.001], 1.0)
    assert rep.monotone and 0.8 < rep.slope < 1.2


def test_readout_statistics_from_ensemble():
    cm = ContinuumModel(ZERO, 1.0)
    paths = simulate_sme_paths(ket_state(0), cm, 0.05, 1e-3, 120, seed=6)
    ens = run_sme_ensemble(ket_state(0), cm, 0.05, 1e-3, 120, seed=6, keep_readout=True)
    a, b = readout_statistics(paths, 0.05, 1.0), readout_statistics(ens, 0.05, 1.0)
    assert a.var_s == pytest.approx(b.var_s, rel=1e-12) and math.isnan(b.mean_sz)
    with pytest.raises(DomainError):
        readout_statistics(run_sme_ensemble(ket_state(0), cm, 0.05, 1e-3, 120, seed=6), 0.05, 1.0)
