"""Single-operation objects of a periodic unsharp qubit measurement.

A measurement with outcomes ``+``/``-`` has operation elements
``M_pm = U_pm |M_pm|`` where ``|M_+| = diag(sqrt(p1), sqrt(p2))`` and
``|M_-| = diag(sqrt(1-p1), sqrt(1-p2))`` in the ``{|1>, |2>}`` basis and
``U_pm = exp(-i H_pm tau / hbar)`` is the outcome-dependent back-action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    I2,
    SZ,
    CMat,
    DomainError,
    check_density,
    expect,
    herm_exp,
    is_hermitian,
    op_norm,
)

WARN_LEVEL = 0.1
VIOLATION_LEVEL = 0.5


def _zeros() -> CMat:
    return np.zeros((2, 2), dtype=complex)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Physical configuration: eigenvalues of ``E_+``, period, and Hamiltonians."""

    p1: float
    p2: float
    tau: float
    H: CMat = field(default_factory=_zeros)
    Hplus: CMat = field(default_factory=_zeros)
    Hminus: CMat = field(default_factory=_zeros)
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("H", "Hplus", "Hminus"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=complex))
        if not (0.0 <= self.p1 <= self.p2 <= 1.0):
            raise DomainError(f"need 0 <= p1 <= p2 <= 1, got p1={self.p1}, p2={self.p2}")
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if not self.hbar > 0:
            raise DomainError(f"hbar must be positive, got {self.hbar}")
        for name in ("H", "Hplus", "Hminus"):
            if not is_hermitian(getattr(self, name)):
                raise DomainError(f"{name} is not Hermitian")

    @property
    def p0(self) -> float:
        return 0.5 * (self.p1 + self.p2)

    @property
    def delta_p(self) -> float:
        return self.p2 - self.p1

    @property
    def is_sharp(self) -> bool:
        return self.p1 == 0.0 or self.p2 == 1.0

    @classmethod
    def from_p0(cls, p0: float, delta_p: float, tau: float, **kw) -> ModelParams:
        return cls(p1=p0 - 0.5 * delta_p, p2=p0 + 0.5 * delta_p, tau=tau, **kw)

    @classmethod
    def from_gamma(cls, gamma: float, p0: float, tau: float, **kw) -> ModelParams:
        """Parameters with decoherence rate ``gamma`` at period ``tau``."""
        dp = math.sqrt(4.0 * gamma * p0 * (1.0 - p0) * tau)
        return cls.from_p0(p0, dp, tau, **kw)


@dataclass(frozen=True, eq=False)
class DerivedModel:
    params: ModelParams
    p0: float
    delta_p: float
    gamma: float
    M_plus_abs: CMat
    M_minus_abs: CMat
    E_plus: CMat
    E_minus: CMat
    U_plus: CMat
    U_minus: CMat
    U: CMat
    H_AV: CMat
    Delta_H: CMat

    @property
    def tau(self) -> float:
        return self.params.tau

    @property
    def hbar(self) -> float:
        return self.params.hbar

    @property
    def H(self) -> CMat:
        return self.params.H

    @property
    def M_plus(self) -> CMat:
        return self.U_plus @ self.M_plus_abs

    @property
    def M_minus(self) -> CMat:
        return self.U_minus @ self.M_minus_abs

    def kraus(self) -> tuple[CMat, CMat]:
        return self.M_plus, self.M_minus


def decoherence_rate(p0: float, delta_p: float, tau: float) -> float:
    """``gamma = dp^2 / (4 p0 (1-p0) tau)``; zero when there is no discrimination."""
    denom = 4.0 * p0 * (1.0 - p0) * tau
    if denom == 0.0:
        if delta_p > 0:
            raise DomainError("gamma undefined for p0 in {0, 1}")
        return 0.0
    return delta_p**2 / denom


def derive(params: ModelParams) -> DerivedModel:
    p1, p2, tau, hbar = params.p1, params.p2, params.tau, params.hbar
    p0 = 0.5 * (p1 + p2)
    dp = p2 - p1
    m_plus = np.diag([math.sqrt(p1), math.sqrt(p2)]).astype(complex)
    m_minus = np.diag([math.sqrt(1.0 - p1), math.sqrt(1.0 - p2)]).astype(complex)
    return DerivedModel(
        params=params,
        p0=p0,
        delta_p=dp,
        gamma=decoherence_rate(p0, dp, tau),
        M_plus_abs=m_plus,
        M_minus_abs=m_minus,
        E_plus=m_plus @ m_plus,
        E_minus=m_minus @ m_minus,
        U_plus=herm_exp(params.Hplus, tau, hbar),
        U_minus=herm_exp(params.Hminus, tau, hbar),
        U=herm_exp(params.H, tau, hbar),
        H_AV=p0 * params.Hplus + (1.0 - p0) * params.Hminus,
        Delta_H=params.Hminus - params.Hplus,
    )


def effects_closed_form(p0: float, delta_p: float) -> tuple[CMat, CMat]:
    """``E_+ = p0 - dp/2 sz`` and ``E_- = (1-p0) + dp/2 sz``."""
    return p0 * I2 - 0.5 * delta_p * SZ, (1.0 - p0) * I2 + 0.5 * delta_p * SZ


def outcome_probabilities(rho: CMat, model: DerivedModel) -> tuple[float, float]:
    rho = check_density(rho, tol=1e-10)
    p_plus = float(np.clip(expect(model.E_plus, rho), 0.0, 1.0))
    return p_plus, 1.0 - p_plus


@dataclass(frozen=True)
class RegimeCheck:
    name: str
    value: float
    status: str  # "pass", "warn" or "violated"


@dataclass(frozen=True)
class RegimeReport:
    N: int
    delta_t: float
    checks: tuple[RegimeCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.status == "pass" for c in self.checks)

    def flagged(self) -> list[RegimeCheck]:
        return [c for c in self.checks if c.status != "pass"]

    def as_dict(self) -> dict:
        return {c.name: {"value": c.value, "status": c.status} for c in self.checks}


def _status(x: float) -> str:
    if x >= VIOLATION_LEVEL:
        return "violated"
    if x >= WARN_LEVEL:
        return "warn"
    return "pass"


def check_regime(params: ModelParams, N: int) -> RegimeReport:
    """Advisory dimensionless products for an N-series; never raises on a bad regime."""
    if N < 1:
        raise DomainError("N must be at least 1")
    dt = N * params.tau
    values = {
        "inv_N": 1.0 / N,
        "N_delta_p": N * params.delta_p,
        "dt_H": dt * op_norm(params.H) / params.hbar,
        "dt_Hpm": dt * max(op_norm(params.Hplus), op_norm(params.Hminus)) / params.hbar,
    }
    checks = tuple(RegimeCheck(k, float(v), _status(v)) for k, v in values.items())
    return RegimeReport(N=N, delta_t=dt, checks=checks)


def require_unsharp(params: ModelParams) -> None:
    """Coarse-grained descriptions need ``0 < p1 <= p2 < 1``."""
    if params.is_sharp:
        raise DomainError("sharp measurement (p1=0 or p2=1) not supported by the coarse-grained models")
