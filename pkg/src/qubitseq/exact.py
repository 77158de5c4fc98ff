"""Exact Kraus-chain dynamics: selective runs, the non-selective channel and branch enumeration.

Step convention: each period applies free evolution ``U = exp(-i H tau/hbar)``
first and then the measurement ``M_pm``, so the first measurement happens at
``t0 + tau``. An N-series therefore has operation elements
``M_{m_N} U ... M_{m_1} U``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .algebra import (
    I2,
    CMat,
    DomainError,
    check_density,
    dag,
    expect,
    herm_exp,
    inv2,
    min_eigenvalue,
    op_norm,
    renormalize,
)
from .model import DerivedModel

log = logging.getLogger(__name__)

ZERO_PROB = 1e-14
MAX_ENUMERATION = 20


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass
class TrajectoryRecord:
    times: list[float]
    states: list[CMat]
    outcomes: list[int]  # +1 or -1
    probabilities: list[float]
    seed: int | None = None


@dataclass
class BranchTable:
    """All ``2**N`` outcome sequences of an N-series.

    Branch ``k`` has outcome bits in MSB-first order: bit ``j`` (counting from the
    left of ``format(k, f"0{N}b")``) is ``0`` for ``+`` and ``1`` for ``-`` at step ``j+1``.
    ``states`` are unnormalized (trace equals the weight).
    """

    N: int
    weights: NDArray
    states: NDArray

    def key(self, k: int) -> str:
        return format(k, f"0{self.N}b").replace("0", "+").replace("1", "-")

    def items(self):
        for k in range(len(self.weights)):
            yield self.key(k), (float(self.weights[k]), self.states[k])

    def __getitem__(self, seq: str) -> tuple[float, CMat]:
        k = int(seq.replace("+", "0").replace("-", "1"), 2)
        return float(self.weights[k]), self.states[k]

    def __len__(self) -> int:
        return len(self.weights)

    def total(self) -> CMat:
        return self.states.sum(axis=0)


def _conj(m: CMat, rho: CMat) -> CMat:
    return m @ rho @ dag(m)


def selective_step(rho: CMat, model: DerivedModel, rng: np.random.Generator):
    """One period with a sampled outcome; returns ``(state, outcome, probability)``."""
    rho_u = _conj(model.U, rho)
    p_plus = float(np.clip(expect(model.E_plus, rho_u), 0.0, 1.0))
    outcome = 1 if rng.random() < p_plus else -1
    prob = p_plus if outcome == 1 else 1.0 - p_plus
    if prob < ZERO_PROB:
        raise DomainError("zero-probability branch")
    m = model.M_plus if outcome == 1 else model.M_minus
    return renormalize(_conj(m, rho_u) / prob), outcome, prob


def forced_step(rho: CMat, model: DerivedModel, outcome: int):
    """Selective step with a prescribed outcome; returns ``(state, probability)``."""
    rho_u = _conj(model.U, rho)
    m = model.M_plus if outcome == 1 else model.M_minus
    out = _conj(m, rho_u)
    prob = float(np.real(out[0, 0] + out[1, 1]))
    if prob < ZERO_PROB:
        raise DomainError("zero-probability branch")
    return renormalize(out / prob), prob


def nonselective_step(rho: CMat, model: DerivedModel) -> CMat:
    rho_u = _conj(model.U, rho)
    return _conj(model.M_plus, rho_u) + _conj(model.M_minus, rho_u)


def run_sequence(rho0: CMat, model: DerivedModel, N: int, rng: np.random.Generator | int) -> TrajectoryRecord:
    if N < 1:
        raise DomainError("N must be at least 1")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    rho = check_density(rho0, tol=1e-10)
    rec = TrajectoryRecord(times=[0.0], states=[rho], outcomes=[], probabilities=[], seed=seed)
    for n in range(1, N + 1):
        rho, m, p = selective_step(rho, model, rng)
        rec.times.append(n * model.tau)
        rec.states.append(rho)
        rec.outcomes.append(m)
        rec.probabilities.append(p)
    return rec


def run_nonselective(
    rho0: CMat, model: DerivedModel, N: int, renorm_every: int | None = None
) -> list[CMat]:
    """States after 0..N periods of the non-selective channel.

    With ``renorm_every`` set, the state is re-Hermitized and re-traced every that
    many steps and the drift removed is logged at debug level.
    """
    if N < 1:
        raise DomainError("N must be at least 1")
    rho = np.asarray(rho0, dtype=complex)
    out = [rho]
    for n in range(1, N + 1):
        rho = nonselective_step(rho, model)
        if renorm_every and n % renorm_every == 0:
            drift = abs(np.trace(rho).real - 1.0)
            log.debug("step %d: trace drift %.3e before renormalization", n, drift)
            rho = renormalize(rho)
        out.append(rho)
    return out


def nseries_kraus(model: DerivedModel, N: int) -> NDArray:
    """Exact operation elements ``M_{m_N} U ... M_{m_1} U`` for all sequences, MSB-first."""
    if N > MAX_ENUMERATION:
        raise DomainError(f"enumeration refused for N={N} > {MAX_ENUMERATION}")
    steps = np.stack([model.M_plus @ model.U, model.M_minus @ model.U])
    omega = np.broadcast_to(I2, (1, 2, 2)).copy()
    for _ in range(N):
        # new branch index 2*k + bit: the later outcome is the low bit
        omega = np.einsum("bij,kjl->kbil", steps, omega).reshape(-1, 2, 2)
    return omega


def enumerate_branches(rho0: CMat, model: DerivedModel, N: int, max_N: int = MAX_ENUMERATION) -> BranchTable:
    if N < 1:
        raise DomainError("N must be at least 1")
    if N > max_N:
        raise DomainError(f"enumeration refused for N={N} > {max_N} (2**N branches)")
    rho = np.asarray(rho0, dtype=complex)
    steps = np.stack([model.M_plus @ model.U, model.M_minus @ model.U])
    states = rho[None]
    for _ in range(N):
        states = np.einsum("bij,kjl,bml->kbim", steps, states, steps.conj()).reshape(-1, 2, 2)
    weights = (states[:, 0, 0] + states[:, 1, 1]).real
    return BranchTable(N=N, weights=weights, states=states)


def run_ensemble(
    rho0: CMat, model: DerivedModel, N: int, n_traj: int, seed: int, start: int = 0
) -> tuple[NDArray, NDArray]:
    """Vectorized selective runs; trajectory ``i`` draws from ``trajectory_rng(seed, start+i)``.

    Returns ``(final_states, outcomes)`` with shapes ``(n_traj, 2, 2)`` and ``(n_traj, N)``.
    """
    u = np.stack([trajectory_rng(seed, start + i).random(N) for i in range(n_traj)])
    rho = np.broadcast_to(np.asarray(rho0, dtype=complex), (n_traj, 2, 2)).copy()
    outcomes = np.empty((n_traj, N), dtype=np.int8)
    mp, mm = model.M_plus, model.M_minus
    for n in range(N):
        rho = _conj(model.U, rho)
        p_plus = np.clip(expect(model.E_plus, rho), 0.0, 1.0)
        plus = u[:, n] < p_plus
        prob = np.where(plus, p_plus, 1.0 - p_plus)
        if np.any(prob < ZERO_PROB):
            raise DomainError("zero-probability branch")
        m = np.where(plus[:, None, None], mp, mm)
        rho = renormalize(_conj(m, rho) / prob[:, None, None])
        outcomes[:, n] = np.where(plus, 1, -1)
    return rho, outcomes


def n_plus_of(N: int) -> NDArray:
    """Number of ``+`` outcomes of each MSB-first branch index."""
    idx = np.arange(2**N)
    bits = (idx[:, None] >> np.arange(N)) & 1
    return N - bits.sum(axis=1)


@dataclass
class BoundReport:
    N: int
    max_norm_C1: float
    max_norm_C2: float
    bound_C1: float
    bound_C2: float
    constant: float
    skipped: list[str] = field(default_factory=list)

    @staticmethod
    def _ratio(norm: float, bound: float) -> float:
        if bound > 0:
            return norm / bound
        return 0.0 if norm <= 1e-12 else float("inf")

    @property
    def ratio_C1(self) -> float:
        """Empirical constant in ``||C1|| <= c * bound``."""
        return self._ratio(self.max_norm_C1, self.bound_C1)

    @property
    def ratio_C2(self) -> float:
        return self._ratio(self.max_norm_C2, self.bound_C2)

    @property
    def within(self) -> bool:
        return self.ratio_C1 <= self.constant and self.ratio_C2 <= self.constant

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "max_norm_C1": self.max_norm_C1,
            "max_norm_C2": self.max_norm_C2,
            "bound_C1": self.bound_C1,
            "bound_C2": self.bound_C2,
            "ratio_C1": self.ratio_C1,
            "ratio_C2": self.ratio_C2,
            "constant": self.constant,
            "within": self.within,
            "skipped": list(self.skipped),
        }


def commutator_bound_values(model: DerivedModel, N: int) -> tuple[float, float]:
    p = model.params
    dt = N * p.tau
    h = op_norm(p.H) / p.hbar
    hp, hm = op_norm(p.Hplus) / p.hbar, op_norm(p.Hminus) / p.hbar
    b1 = N * model.delta_p * dt * h + dt**2 * h * max(hp, hm)
    b2 = N * model.delta_p * dt * max(hp, hm) + dt**2 * hp * hm
    return b1, b2


def check_commutator_bounds(model: DerivedModel, N: int, constant: float = 10.0, max_N: int = 12) -> BoundReport:
    """Exact reordering corrections ``C1``, ``C2`` over every outcome sequence.

    ``C1`` compares ``M_{m_N} U ... M_{m_1} U`` with ``M_{m_N}...M_{m_1} U^N``;
    ``C2`` compares ``M_{m_N}...M_{m_1} U^N`` with
    ``U_+^{N+} U_-^{N-N+} |M_+|^{N+} |M_-|^{N-N+} U^N``.
    """
    if N > max_N:
        raise DomainError(f"commutator bound check limited to N <= {max_N}")
    exact = nseries_kraus(model, N)
    UN = np.linalg.matrix_power(model.U, N)
    m_steps = np.stack([model.M_plus, model.M_minus])
    prod = np.broadcast_to(I2, (1, 2, 2)).copy()
    for _ in range(N):
        prod = np.einsum("bij,kjl->kbil", m_steps, prod).reshape(-1, 2, 2)
    reordered1 = prod @ UN
    n_plus = n_plus_of(N)
    p = model.params
    reordered2 = np.stack(
        [
            herm_exp(p.Hplus, k * p.tau, p.hbar)
            @ herm_exp(p.Hminus, (N - k) * p.tau, p.hbar)
            @ np.linalg.matrix_power(model.M_plus_abs, int(k))
            @ np.linalg.matrix_power(model.M_minus_abs, int(N - k))
            @ UN
            for k in n_plus
        ]
    )
    skipped = []
    c1_norms, c2_norms = [], []
    keys = [format(k, f"0{N}b").replace("0", "+").replace("1", "-") for k in range(2**N)]
    for k in range(2**N):
        if abs(np.linalg.det(reordered1[k])) < 1e-300 or abs(np.linalg.det(reordered2[k])) < 1e-300:
            skipped.append(keys[k])
            continue
        c1_norms.append(op_norm(inv2(reordered1[k]) @ exact[k] - I2))
        c2_norms.append(op_norm(inv2(reordered2[k]) @ reordered1[k] - I2))
    b1, b2 = commutator_bound_values(model, N)
    return BoundReport(
        N=N,
        max_norm_C1=float(max(c1_norms, default=0.0)),
        max_norm_C2=float(max(c2_norms, default=0.0)),
        bound_C1=b1,
        bound_C2=b2,
        constant=constant,
        skipped=skipped,
    )


def offdiag_factor(model: DerivedModel) -> float:
    """Per-period off-diagonal contraction ``sqrt(p1 p2) + sqrt((1-p1)(1-p2))`` for ``H = H_pm = 0``."""
    p1, p2 = model.params.p1, model.params.p2
    return float(np.sqrt(p1 * p2) + np.sqrt((1 - p1) * (1 - p2)))


def min_eig_along(states) -> float:
    return float(np.min(min_eigenvalue(np.asarray(states))))
