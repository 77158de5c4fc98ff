from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given

from qubitseq.algebra import I2, SX, SZ, DomainError, dag, from_bloch, ket_state
from qubitseq.model import (
    ModelParams,
    check_regime,
    derive,
    effects_closed_form,
    outcome_probabilities,
    require_unsharp,
)
from strategies import model_params, states


def test_no_discrimination():
    m = derive(ModelParams(p1=0.5, p2=0.5, tau=0.1))
    assert np.allclose(m.M_plus_abs, I2 / np.sqrt(2)) and np.allclose(m.M_minus_abs, I2 / np.sqrt(2))
    assert m.delta_p == 0 and m.gamma == 0


def test_sharp_projectors():
    m = derive(ModelParams(p1=0.0, p2=1.0, tau=0.1))
    assert np.array_equal(m.M_plus_abs, ket_state(1))
    assert np.array_equal(m.M_minus_abs, ket_state(0))


def test_gamma_formula_value():
    m = derive(ModelParams(p1=0.45, p2=0.55, tau=0.01))
    assert m.p0 == pytest.approx(0.5, abs=1e-15)
    assert m.delta_p == pytest.approx(0.1, abs=1e-15)
    assert m.gamma == pytest.approx(1.0, rel=1e-12)


def test_gamma_doubles_when_tau_halves():
    a = derive(ModelParams(p1=0.3, p2=0.4, tau=0.02))
    b = derive(ModelParams(p1=0.3, p2=0.4, tau=0.01))
    assert b.gamma == 2 * a.gamma


def test_from_gamma_roundtrip():
    p = ModelParams.from_gamma(1.3, 0.35, 0.004)
    assert derive(p).gamma == pytest.approx(1.3, rel=1e-12)
    assert p.p0 == pytest.approx(0.35, abs=1e-15)


@given(model_params())
def test_derived_invariants(params):
    m = derive(params)
    mp, mm = m.kraus()
    assert np.max(np.abs(dag(mp) @ mp + dag(mm) @ mm - I2)) < 1e-12
    assert np.max(np.abs(m.E_plus + m.E_minus - I2)) < 1e-12
    assert np.array_equal(m.M_plus_abs @ m.M_minus_abs, m.M_minus_abs @ m.M_plus_abs)
    ep, em = effects_closed_form(m.p0, m.delta_p)
    assert np.max(np.abs(m.E_plus - ep)) < 1e-14 and np.max(np.abs(m.E_minus - em)) < 1e-14
    assert np.allclose(m.H_AV, m.p0 * params.Hplus + (1 - m.p0) * params.Hminus)
    assert np.allclose(m.Delta_H, params.Hminus - params.Hplus)
    assert m.gamma == m.delta_p**2 / (4 * m.p0 * (1 - m.p0) * params.tau)
    for a in (m.M_plus_abs, m.M_minus_abs):
        assert a[0, 1] == 0 and a[1, 0] == 0


@given(model_params(), states())
def test_probabilities_sum_to_one(params, rho):
    pp, pm = outcome_probabilities(rho, derive(params))
    assert 0 <= pp <= 1 and 0 <= pm <= 1
    assert pp + pm == pytest.approx(1.0, abs=1e-12)


def test_probability_examples():
    m = derive(ModelParams(p1=0.3, p2=0.45, tau=0.1))
    assert outcome_probabilities(ket_state(0), m)[0] == pytest.approx(0.3, abs=1e-15)
    assert outcome_probabilities(0.5 * I2, m)[0] == pytest.approx(m.p0, abs=1e-15)
    sharp = derive(ModelParams(p1=0.0, p2=1.0, tau=0.1))
    assert outcome_probabilities(ket_state(1), sharp)[0] == 1.0


@pytest.mark.parametrize(
    "kw",
    [dict(p1=0.6, p2=0.5, tau=1.0), dict(p1=-0.1, p2=0.5, tau=1.0), dict(p1=0.1, p2=0.5, tau=0.0)],
)
def test_invalid_params(kw):
    with pytest.raises(DomainError):
        ModelParams(**kw)


def test_non_hermitian_hamiltonian_rejected():
    with pytest.raises(DomainError):
        ModelParams(p1=0.4, p2=0.5, tau=0.1, H=np.array([[0, 1], [0, 0]]))


def test_regime_all_pass():
    p = ModelParams.from_p0(0.5, 1e-3, 1e-4, H=0.5 * SX)
    r = check_regime(p, 100)
    assert r.ok, r.as_dict()


def test_regime_flags():
    r = check_regime(ModelParams.from_p0(0.5, 0.2, 0.01), 10)
    assert r.as_dict()["N_delta_p"]["status"] == "violated"
    assert r.as_dict()["N_delta_p"]["value"] == pytest.approx(2.0)
    r1 = check_regime(ModelParams.from_p0(0.5, 0.01, 0.01), 1)
    assert r1.as_dict()["inv_N"]["status"] == "violated"
    assert {c.name for c in r.flagged()} >= {"N_delta_p"}


def test_require_unsharp():
    with pytest.raises(DomainError):
        require_unsharp(ModelParams(p1=0.0, p2=0.3, tau=0.1))
    require_unsharp(ModelParams(p1=0.1, p2=0.3, tau=0.1))


def test_kraus_action_on_coherent_state():
    m = derive(ModelParams(p1=0.4, p2=0.6, tau=0.1, H=0 * SZ))
    rho = from_bloch([1, 0, 0])
    out = m.M_plus @ rho @ dag(m.M_plus)
    assert np.allclose(out, 0.5 * np.array([[0.4, np.sqrt(0.24)], [np.sqrt(0.24), 0.6]]))
