"""Continuum limit: deterministic master equation and the Ito stochastic master equation.

Master equation::

    d rho/dt = -i/hbar [H_total, rho] - gamma/8 [sz, [sz, rho]]

Conditional (Ito) form, with white noise ``w`` realized per step as ``dW/dt``::

    d rho = (master rhs) dt + sqrt(gamma)/2 {sz - <sz>, rho} dW
    s     = <sz> + w / sqrt(gamma)

The same increment drives the state and the readout.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .algebra import (
    SZ,
    CMat,
    DomainError,
    bloch_vector,
    commutator,
    expect,
    is_hermitian,
    min_eigenvalue,
    op_norm,
    purity,
    renormalize,
    trace_distance,
)
from .difference import loglog_slope
from .model import DerivedModel, ModelParams, decoherence_rate, derive

PATH_BLOCK = 256


@dataclass(frozen=True, eq=False)
class ContinuumModel:
    H_total: CMat
    gamma: float
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "H_total", np.asarray(self.H_total, dtype=complex))
        if not is_hermitian(self.H_total):
            raise DomainError("H_total is not Hermitian")
        if self.gamma < 0:
            raise DomainError("gamma must be non-negative")

    @classmethod
    def from_model(cls, model: DerivedModel) -> ContinuumModel:
        return cls(H_total=model.H + model.H_AV, gamma=model.gamma, hbar=model.hbar)


def scale_to_continuum(params: ModelParams, tau_new: float) -> ModelParams:
    """Move to period ``tau_new`` holding ``p0``, ``gamma``, ``H`` and ``H_pm`` fixed."""
    if not tau_new > 0:
        raise DomainError("tau_new must be positive")
    p0 = params.p0
    gamma = decoherence_rate(p0, params.delta_p, params.tau)
    dp = math.sqrt(4.0 * gamma * p0 * (1.0 - p0) * tau_new)
    if dp > min(2.0 * p0, 2.0 * (1.0 - p0)):
        raise DomainError(f"dp={dp:.4g} at tau={tau_new:g} pushes p1 or p2 out of [0, 1]")
    return replace(params, p1=p0 - 0.5 * dp, p2=p0 + 0.5 * dp, tau=tau_new)


def master_rhs(rho: CMat, cm: ContinuumModel) -> CMat:
    return -1j / cm.hbar * commutator(cm.H_total, rho) - cm.gamma / 8.0 * commutator(SZ, commutator(SZ, rho))


def master_step_rk4(rho: CMat, cm: ContinuumModel, dt: float) -> CMat:
    k1 = master_rhs(rho, cm)
    k2 = master_rhs(rho + 0.5 * dt * k1, cm)
    k3 = master_rhs(rho + 0.5 * dt * k2, cm)
    k4 = master_rhs(rho + dt * k3, cm)
    return rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _n_steps(t_final: float, dt: float) -> int:
    n = int(round(t_final / dt))
    if n < 1 or not math.isclose(n * dt, t_final, rel_tol=1e-9, abs_tol=1e-15):
        raise DomainError(f"t_final={t_final} is not a whole number of steps dt={dt}")
    return n


def integrate_master(rho0: CMat, cm: ContinuumModel, t_final: float, dt: float) -> NDArray:
    """States at ``0, dt, ..., t_final``; shape ``(n+1, 2, 2)``."""
    n = _n_steps(t_final, dt)
    if dt * (op_norm(cm.H_total) / cm.hbar + cm.gamma) > 0.1:
        warnings.warn("master_step_rk4: dt * (|H|/hbar + gamma) > 0.1", stacklevel=2)
    out = np.empty((n + 1, 2, 2), dtype=complex)
    out[0] = rho = np.asarray(rho0, dtype=complex)
    for k in range(1, n + 1):
        out[k] = rho = master_step_rk4(rho, cm, dt)
    return out


def _diffusion(rho: CMat, cm: ContinuumModel) -> CMat:
    z = expect(SZ, rho)[..., None, None]
    return 0.5 * math.sqrt(cm.gamma) * (SZ @ rho + rho @ SZ - 2.0 * z * rho)


def _readout(rho: CMat, cm: ContinuumModel, dt: float, dW):
    if cm.gamma == 0:
        return np.full(np.shape(dW), np.nan)
    return expect(SZ, rho) + np.asarray(dW) / (math.sqrt(cm.gamma) * dt)


def sme_step_euler(rho: CMat, cm: ContinuumModel, dt: float, dW):
    """Euler-Maruyama step; returns ``(rho', s)``.

    ``rho`` may be a stack ``(n, 2, 2)`` with ``dW`` of shape ``(n,)``. The readout
    uses the pre-step ``<sz>`` (Ito). With ``gamma = 0`` the step is deterministic
    and ``s`` is NaN.
    """
    dW_ = np.asarray(dW, dtype=float)[..., None, None]
    s = _readout(rho, cm, dt, dW)
    new = rho + master_rhs(rho, cm) * dt
    if cm.gamma > 0:
        new = new + _diffusion(rho, cm) * dW_
    return renormalize(new), s


def sme_step_milstein(rho: CMat, cm: ContinuumModel, dt: float, dW):
    """Euler-Maruyama plus the Ito-Milstein correction ``1/2 b'(b) (dW^2 - dt)``."""
    dW_ = np.asarray(dW, dtype=float)[..., None, None]
    s = _readout(rho, cm, dt, dW)
    new = rho + master_rhs(rho, cm) * dt
    if cm.gamma > 0:
        b = _diffusion(rho, cm)
        z = expect(SZ, rho)[..., None, None]
        zb = expect(SZ, b)[..., None, None]
        bb = 0.5 * math.sqrt(cm.gamma) * (SZ @ b + b @ SZ - 2.0 * z * b - 2.0 * zb * rho)
        new = new + b * dW_ + 0.5 * bb * (dW_**2 - dt)
    return renormalize(new), s


SCHEMES = {"euler": sme_step_euler, "milstein": sme_step_milstein}


@dataclass
class SmePath:
    dt: float
    times: NDArray
    states: NDArray | None  # (n+1, 2, 2), or None when not stored
    noise: NDArray
    readout: NDArray
    seed: int
    index: int = 0
    min_eigenvalue: float = 0.0
    aborted_at: int | None = None


@dataclass
class SmeEnsemble:
    """Aggregate of many SME paths, kept in path-index order."""

    dt: float
    times: NDArray
    mean_bloch: NDArray  # (n+1, 3)
    sem_bloch: NDArray  # (n+1, 3)
    final_states: NDArray  # (n_paths, 2, 2)
    min_eigenvalues: NDArray  # (n_paths,)
    aborted: NDArray  # (n_paths,) bool
    seed: int
    mean_readout: NDArray | None = None  # (n,) ensemble mean of s per step
    path_mean_readout: NDArray | None = None  # (n_paths,) time average of s per path
    readout: NDArray | None = None  # (n_paths, n)
    noise: NDArray | None = None


def path_noise(seed: int, index: int, n: int, dt: float) -> NDArray:
    """Wiener increments of path ``index``; independent of how paths are batched."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    return rng.standard_normal(n) * math.sqrt(dt)


def _run_block(rho0, cm, dt, n, seed, indices, scheme, keep_readout, abort_below):
    step = SCHEMES[scheme]
    m = len(indices)
    dW = np.stack([path_noise(seed, int(i), n, dt) for i in indices])
    rho = np.broadcast_to(np.asarray(rho0, dtype=complex), (m, 2, 2)).copy()
    bsum = np.zeros((n + 1, 3))
    bsq = np.zeros((n + 1, 3))
    b = bloch_vector(rho)
    bsum[0], bsq[0] = b.sum(0), (b**2).sum(0)
    readout = np.empty((m, n)) if keep_readout else None
    ssum = np.zeros(n)
    spath = np.zeros(m)
    min_ev = np.zeros(m)
    aborted = np.zeros(m, dtype=bool)
    for k in range(n):
        new, s = step(rho, cm, dt, dW[:, k])
        if abort_below is not None:
            ev = min_eigenvalue(new)
            min_ev = np.minimum(min_ev, ev)
            aborted |= ev < abort_below
            # frozen at the last admissible state once aborted
            new = np.where(aborted[:, None, None], rho, new)
        rho = new
        if keep_readout:
            readout[:, k] = s
        ssum[k] = s.sum()
        spath += s
        b = bloch_vector(rho)
        bsum[k + 1], bsq[k + 1] = b.sum(0), (b**2).sum(0)
    if abort_below is None:
        min_ev = min_eigenvalue(rho)
    return bsum, bsq, rho, min_ev, aborted, readout, dW if keep_readout else None, ssum, spath / n


def run_sme_ensemble(
    rho0: CMat,
    cm: ContinuumModel,
    t_final: float,
    dt: float,
    n_paths: int,
    seed: int,
    scheme: str = "euler",
    threads: int = 1,
    keep_readout: bool = False,
    abort_below: float | None = -0.25,
) -> SmeEnsemble:
    """Vectorized SME ensemble.

    Paths are processed in fixed blocks of ``PATH_BLOCK`` and merged in block
    order, so results do not depend on ``threads``. A path whose smallest
    eigenvalue drops below ``abort_below`` is frozen and flagged as aborted.
    """
    n = _n_steps(t_final, dt)
    blocks = [range(i, min(i + PATH_BLOCK, n_paths)) for i in range(0, n_paths, PATH_BLOCK)]

    def work(idx):
        return _run_block(rho0, cm, dt, n, seed, idx, scheme, keep_readout, abort_below)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, blocks))
    else:
        results = [work(b) for b in blocks]
    bsum = sum(r[0] for r in results)
    bsq = sum(r[1] for r in results)
    mean = bsum / n_paths
    var = np.maximum(bsq / n_paths - mean**2, 0.0) * n_paths / max(n_paths - 1, 1)
    return SmeEnsemble(
        dt=dt,
        times=np.arange(n + 1) * dt,
        mean_bloch=mean,
        sem_bloch=np.sqrt(var / n_paths),
        final_states=np.concatenate([r[2] for r in results]),
        min_eigenvalues=np.concatenate([r[3] for r in results]),
        aborted=np.concatenate([r[4] for r in results]),
        seed=seed,
        mean_readout=sum(r[7] for r in results) / n_paths,
        path_mean_readout=np.concatenate([r[8] for r in results]),
        readout=np.concatenate([r[5] for r in results]) if keep_readout else None,
        noise=np.concatenate([r[6] for r in results]) if keep_readout else None,
    )


def simulate_sme_path(
    rho0: CMat,
    cm: ContinuumModel,
    t_final: float,
    dt: float,
    seed: int,
    index: int = 0,
    scheme: str = "euler",
    abort_below: float | None = -0.25,
    store_states: bool = True,
) -> SmePath:
    """Single SME path with its noise, readout and (optionally) every state."""
    n = _n_steps(t_final, dt)
    dW = path_noise(seed, index, n, dt)
    step = SCHEMES[scheme]
    rho = np.asarray(rho0, dtype=complex)
    states = np.empty((n + 1, 2, 2), dtype=complex) if store_states else None
    if store_states:
        states[0] = rho
    readout = np.empty(n)
    min_ev, aborted_at = float(min_eigenvalue(rho)), None
    for k in range(n):
        new, s = step(rho, cm, dt, dW[k])
        ev = float(min_eigenvalue(new))
        min_ev = min(min_ev, ev)
        readout[k] = s
        if abort_below is not None and ev < abort_below:
            aborted_at = k + 1
            readout = readout[: k + 1]
            if store_states:
                states = states[: k + 1]
            break
        rho = new
        if store_states:
            states[k + 1] = rho
    return SmePath(
        dt=dt,
        times=np.arange(len(readout) + 1) * dt,
        states=states,
        noise=dW[: len(readout)],
        readout=readout,
        seed=seed,
        index=index,
        min_eigenvalue=min_ev,
        aborted_at=aborted_at,
    )


def simulate_sme_paths(rho0, cm, t_final, dt, n_paths, seed, **kw) -> list[SmePath]:
    return [simulate_sme_path(rho0, cm, t_final, dt, seed, i, **kw) for i in range(n_paths)]


@dataclass
class ReadoutReport:
    window: float
    n_paths: int
    mean_s: float
    sem_mean_s: float
    mean_sz: float  # ensemble mean of <sz> over the first window
    var_s: float
    sem_var_s: float
    expected_var: float
    bimodality: float  # fraction of windowed readouts with |s| > 0.5 at the last window
    window_means: NDArray = field(repr=False, default=None)

    @property
    def var_relative_error(self) -> float:
        return abs(self.var_s / self.expected_var - 1.0)

    def as_dict(self) -> dict:
        return {
            "window": self.window,
            "n_paths": self.n_paths,
            "mean_s": self.mean_s,
            "sem_mean_s": self.sem_mean_s,
            "mean_sz": self.mean_sz,
            "var_s": self.var_s,
            "sem_var_s": self.sem_var_s,
            "expected_var": self.expected_var,
            "var_relative_error": self.var_relative_error,
            "bimodality": self.bimodality,
        }


def _readouts_and_sz(paths):
    if isinstance(paths, SmeEnsemble):
        if paths.readout is None:
            raise DomainError("readout_statistics needs an ensemble run with keep_readout=True")
        return paths.dt, paths.readout, None
    dt = paths[0].dt
    s = np.stack([p.readout for p in paths])
    sz = None
    if all(p.states is not None for p in paths):
        sz = np.stack([expect(SZ, p.states[:-1]) for p in paths])
    return dt, s, sz


def readout_statistics(paths, window: float, gamma: float) -> ReadoutReport:
    """Windowed time averages of the readout across paths.

    The variance of a window average of ``<sz> + w/sqrt(gamma)`` tends to
    ``1/(gamma window)`` when ``<sz>`` is frozen.
    """
    dt, s, sz = _readouts_and_sz(paths)
    if len(s) < 100:
        raise DomainError("readout_statistics needs at least 100 paths")
    k = int(round(window / dt))
    if k < 10:
        raise DomainError(f"window {window} is shorter than 10 steps of dt={dt}")
    n_win = s.shape[1] // k
    if n_win < 1:
        raise DomainError("paths shorter than one window")
    n = len(s)
    means = s[:, : n_win * k].reshape(n, n_win, k).mean(axis=2)
    first = means[:, 0]
    var = float(first.var(ddof=1))
    # standard error of a sample variance (normal approximation)
    sem_var = var * math.sqrt(2.0 / (n - 1))
    mean_sz = float(sz[:, :k].mean()) if sz is not None else float("nan")
    return ReadoutReport(
        window=k * dt,
        n_paths=n,
        mean_s=float(first.mean()),
        sem_mean_s=float(first.std(ddof=1) / math.sqrt(n)),
        mean_sz=mean_sz,
        var_s=var,
        sem_var_s=sem_var,
        expected_var=1.0 / (gamma * k * dt),
        bimodality=float(np.mean(np.abs(means[:, -1]) > 0.5)),
        window_means=means,
    )


@dataclass
class ConvergenceReport:
    taus: list[float]
    distances: list[float]
    slope: float
    monotone: bool

    def as_dict(self) -> dict:
        return {"taus": self.taus, "distances": self.distances, "slope": self.slope, "monotone": self.monotone}


def discrete_to_continuum_convergence(
    params: ModelParams,
    gamma: float,
    tau_list,
    t_final: float,
    rho0: CMat | None = None,
    master_dt: float = 1e-3,
) -> ConvergenceReport:
    """Distance between the exact discrete channel and the master equation at ``t_final``.

    ``params`` supplies ``p0``, ``H``, ``H_pm`` and ``hbar``; for each ``tau`` the
    measurement strength is set so that the decoherence rate equals ``gamma``.
    """
    from .algebra import from_bloch
    from .exact import run_nonselective

    taus = [float(t) for t in tau_list]
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise DomainError("tau_list must be strictly decreasing")
    rho0 = from_bloch([0.6, 0.0, 0.8]) if rho0 is None else rho0
    base = ModelParams.from_gamma(gamma, params.p0, taus[0], H=params.H, Hplus=params.Hplus, Hminus=params.Hminus, hbar=params.hbar)
    cm = ContinuumModel.from_model(derive(base))
    target = integrate_master(rho0, cm, t_final, master_dt)[-1]
    dists = []
    for tau in taus:
        model = derive(scale_to_continuum(base, tau))
        n = _n_steps(t_final, tau)
        dists.append(float(trace_distance(run_nonselective(rho0, model, n)[-1], target)))
    monotone = all(b < a for a, b in zip(dists, dists[1:]))
    return ConvergenceReport(taus=taus, distances=dists, slope=loglog_slope(taus, dists), monotone=monotone)


def purity_residue(ensemble: SmeEnsemble) -> NDArray:
    """``|1 - tr rho^2|`` of each final state; meaningful for a pure initial state.

    Euler-Maruyama states can leave the Bloch ball, so the signed residue may be negative.
    """
    return np.abs(1.0 - purity(ensemble.final_states))
