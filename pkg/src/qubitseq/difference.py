"""Discrete-time update laws for one N-series of duration ``dt``.

Every contribution is a named function ``(rho, model, dt) -> delta_rho`` so that
steps can be assembled, ablated and compared term by term against the exact
oracle. Superoperator shorthand used below: ``Z2(rho) = [sz, [sz, rho]]``.

The higher-order update collects terms up to ``O(dt^2)`` and ``O(dt dp^2)``:

* ``dt`` group: Hamiltonian ``H + H_AV``, measurement decoherence with its
  ``dp^2`` correction factor, back-action decoherence and friction;
* ``dt^2`` group: decoherence/Hamiltonian cross terms, the second-order unitary
  terms, and ``gamma^2/32 Z2(rho)``;
* a mixed group with prefactor ``-i dt^2 gamma/(2 hbar) + 3 i dt dp^2/(8 hbar p0 (1-p0))``.

The cross terms use the sign obtained by composing the first-order unitary and
decoherence generators (``+i gamma/(8 hbar)``). ``cross_sign=-1`` reproduces the
opposite sign for comparison; see ``scripts/appendix_c_ranking.py``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebra import SZ, CMat, DomainError, anticommutator, commutator, dag, min_eigenvalue
from .model import DerivedModel

Term = Callable[[CMat, DerivedModel, float], CMat]


def _z2(rho: CMat) -> CMat:
    return commutator(SZ, commutator(SZ, rho))


def hamiltonian(rho, model, dt):
    return -1j / model.hbar * commutator(model.H + model.H_AV, rho) * dt


def decoherence(rho, model, dt):
    return -model.gamma / 8.0 * _z2(rho) * dt


def decoherence_correction_factor(p0: float, delta_p: float) -> float:
    """``1 - 1/2 (dp (p0 - 1/2) / (p0 q0))^2 (1 - sqrt(p0 q0) (p0 q0 + 3 - 2^(-1/4)))``."""
    q0 = 1.0 - p0
    if p0 * q0 == 0:
        raise DomainError("decoherence correction undefined for p0 in {0, 1}")
    pq = p0 * q0
    return 1.0 - 0.5 * (delta_p * (p0 - 0.5) / pq) ** 2 * (1.0 - math.sqrt(pq) * (pq + 3.0 - 2.0**-0.25))


def decoherence_correction(rho, model, dt):
    """Difference between the corrected and the plain decoherence term."""
    f = decoherence_correction_factor(model.p0, model.delta_p)
    return -model.gamma / 8.0 * (f - 1.0) * _z2(rho) * dt


def backaction_decoherence(rho, model, dt):
    # dp^2 / (8 gamma) == p0 (1 - p0) tau / 2, finite also at dp = 0
    coef = model.p0 * (1.0 - model.p0) * model.tau / 2.0 / model.hbar**2
    dh = model.Delta_H
    return -coef * commutator(dh, commutator(dh, rho)) * dt


def friction(rho, model, dt):
    return -1j * model.delta_p / (4.0 * model.hbar) * commutator(model.Delta_H, anticommutator(SZ, rho)) * dt


def _cross(rho, model, dt, sign):
    g, hb = model.gamma, model.hbar
    t = commutator(SZ, commutator(SZ, commutator(model.H, rho))) + commutator(model.H_AV, _z2(rho))
    return sign * 1j * g / (8.0 * hb) * t * dt**2


def cross_decoherence_hamiltonian(rho, model, dt):
    return _cross(rho, model, dt, +1.0)


def second_order_unitary(rho, model, dt):
    a = (model.H + model.H_AV) / model.hbar
    return (-0.5 * anticommutator(a @ a, rho) + a @ rho @ a) * dt**2


def second_order_decoherence(rho, model, dt):
    return model.gamma**2 / 32.0 * _z2(rho) * dt**2


def mixed_prefactor(model: DerivedModel, dt: float) -> complex:
    p0, q0, hb = model.p0, 1.0 - model.p0, model.hbar
    return -1j * dt**2 * model.gamma / (2.0 * hb) + 3j * dt * model.delta_p**2 / (8.0 * hb * p0 * q0)


def mixed(rho, model, dt):
    """``c X + (c X)^dagger`` for each operator-ordering item ``X`` of the mixed group.

    The Hermitian conjugate is taken of the prefactor times the item, which keeps
    the update Hermitian; the double commutator item is already of that form.
    """
    p = model.params
    c = mixed_prefactor(model, dt)
    x1 = commutator(p.H, SZ) @ rho @ SZ
    x2 = 0.25 * commutator(SZ, (1.0 - model.p0) * p.Hplus + model.p0 * p.Hminus) @ rho @ SZ
    x = x1 + x2
    hh = -1j / model.hbar * commutator(commutator(p.H, model.H_AV), rho)
    return c * x + dag(c * x) + c * hh


TERMS: dict[str, Term] = {
    "hamiltonian": hamiltonian,
    "decoherence": decoherence,
    "decoherence_correction": decoherence_correction,
    "backaction_decoherence": backaction_decoherence,
    "friction": friction,
    "cross_decoherence_hamiltonian": cross_decoherence_hamiltonian,
    "second_order_unitary": second_order_unitary,
    "second_order_decoherence": second_order_decoherence,
    "mixed": mixed,
}

FIRST_ORDER = ("hamiltonian", "decoherence")
WITH_BACKACTION = FIRST_ORDER + ("backaction_decoherence", "friction")
APPENDIX_C = (
    "hamiltonian",
    "decoherence",
    "decoherence_correction",
    "backaction_decoherence",
    "friction",
    "cross_decoherence_hamiltonian",
    "second_order_unitary",
    "second_order_decoherence",
    "mixed",
)


@dataclass
class DifferenceTerms:
    """Named contributions to ``delta_rho`` for one state and step."""

    contributions: dict[str, CMat] = field(default_factory=dict)

    def total(self, names: Sequence[str] | None = None) -> CMat:
        names = self.contributions.keys() if names is None else names
        return sum((self.contributions[n] for n in names), np.zeros((2, 2), dtype=complex))


def difference_terms(
    rho: CMat, model: DerivedModel, delta_t: float, names: Sequence[str] = APPENDIX_C, cross_sign: float = 1.0
) -> DifferenceTerms:
    rho = np.asarray(rho, dtype=complex)
    out = {}
    for n in names:
        if n == "cross_decoherence_hamiltonian":
            out[n] = _cross(rho, model, delta_t, cross_sign)
        else:
            out[n] = TERMS[n](rho, model, delta_t)
    return DifferenceTerms(out)


def step_terms(rho: CMat, model: DerivedModel, delta_t: float, names: Sequence[str], cross_sign: float = 1.0) -> CMat:
    if not delta_t > 0:
        raise DomainError("delta_t must be positive")
    rho = np.asarray(rho, dtype=complex)
    return rho + difference_terms(rho, model, delta_t, names, cross_sign).total()


def step_first_order(rho: CMat, model: DerivedModel, delta_t: float) -> CMat:
    """Euler-type update with the Hamiltonian ``H + H_AV`` and measurement decoherence.

    Positivity is not guaranteed; use :func:`positivity_violation` to check.
    """
    return step_terms(rho, model, delta_t, FIRST_ORDER)


def step_with_backaction_terms(rho: CMat, model: DerivedModel, delta_t: float) -> CMat:
    """First-order update plus back-action decoherence and friction; needs ``dp > 0``."""
    if not model.delta_p > 0:
        raise DomainError("back-action terms need dp > 0 (their coefficient is dp^2 / gamma)")
    return step_terms(rho, model, delta_t, WITH_BACKACTION)


def step_appendix_c(
    rho: CMat, model: DerivedModel, delta_t: float, N: int | None = None, cross_sign: float = 1.0
) -> CMat:
    """Higher-order update including the ``dt^2``, ``dt dp^2`` and mixed groups.

    ``N`` is only used to check ``delta_t == N tau``; the displayed terms carry no
    explicit ``N``.
    """
    p0 = model.p0
    if p0 <= 0.0 or p0 >= 1.0:
        raise DomainError("step_appendix_c requires 0 < p0 < 1")
    if N is not None and not math.isclose(N * model.tau, delta_t, rel_tol=1e-9):
        raise DomainError(f"delta_t={delta_t} inconsistent with N*tau={N * model.tau}")
    return step_terms(rho, model, delta_t, APPENDIX_C, cross_sign)


def positivity_violation(rho: CMat) -> float:
    """Amount by which the smallest eigenvalue is negative (0 if positive)."""
    return max(0.0, -float(min_eigenvalue(rho)))


def offdiag_rate_first_order(gamma: float, delta_t: float, steps: int) -> float:
    """Effective off-diagonal decay rate of ``steps`` first-order updates with ``H = 0``."""
    factor = (1.0 - gamma * delta_t / 2.0) ** steps
    return -math.log(factor) / (steps * delta_t)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class ScalingReport:
    delta_t: list[float]
    N: list[int]
    errors: dict[str, list[float]]
    slopes: dict[str, float]

    @property
    def first_order_ok(self) -> bool:
        return 1.7 <= self.slopes["first_order"] <= 2.3

    @property
    def appendix_c_ok(self) -> bool:
        if "appendix_c" not in self.slopes:
            return False
        fo, ac = np.array(self.errors["first_order"]), np.array(self.errors["appendix_c"])
        return self.slopes["appendix_c"] >= 2.7 or bool(np.all(ac * 10.0 <= fo))

    def as_dict(self) -> dict:
        return {"delta_t": self.delta_t, "N": self.N, "errors": self.errors, "slopes": self.slopes}


STEPPERS = {
    "first_order": lambda rho, m, dt, N: step_first_order(rho, m, dt),
    "with_backaction": lambda rho, m, dt, N: step_with_backaction_terms(rho, m, dt),
    "appendix_c": lambda rho, m, dt, N: step_appendix_c(rho, m, dt, N),
}


def error_scaling_study(
    model_family: Callable,
    delta_t_list: Sequence[float],
    N_list: Sequence[int] | int,
    rho0: CMat | None = None,
    methods: Sequence[str] = ("first_order", "appendix_c"),
) -> ScalingReport:
    """One-step error of each difference law against the exact N-series.

    ``model_family(delta_t, N)`` returns :class:`~qubitseq.model.ModelParams`
    with ``tau == delta_t / N``. Errors are trace distances.
    """
    from .algebra import from_bloch, trace_distance
    from .exact import run_nonselective
    from .model import derive

    if len(delta_t_list) < 4:
        raise DomainError("error_scaling_study needs at least 4 delta_t points")
    if isinstance(N_list, int):
        N_list = [N_list] * len(delta_t_list)
    if len(N_list) != len(delta_t_list):
        raise DomainError("N_list and delta_t_list must have equal length")
    rho0 = from_bloch([0.6, 0.3, 0.5]) if rho0 is None else rho0
    errors: dict[str, list[float]] = {m: [] for m in methods}
    for dt, N in zip(delta_t_list, N_list):
        params = model_family(dt, N)
        if not math.isclose(params.tau * N, dt, rel_tol=1e-9):
            raise DomainError(f"model family returned tau={params.tau} inconsistent with dt/N={dt / N}")
        model = derive(params)
        oracle = run_nonselective(rho0, model, N)[-1]
        for m in methods:
            errors[m].append(float(trace_distance(STEPPERS[m](rho0, model, dt, N), oracle)))
    slopes = {m: loglog_slope(delta_t_list, e) for m, e in errors.items()}
    return ScalingReport(list(map(float, delta_t_list)), list(map(int, N_list)), errors, slopes)
