"""Coarse-grained N-series operation: binomial elements and their Gaussian form.

Bundling ``N`` periods of length ``tau`` into one step of ``delta_t = N tau``
gives operation elements labelled by the number ``N+`` of ``+`` outcomes. For
large ``N`` they are replaced by Gaussian elements labelled by the continuous
readout ``s`` defined through ``N+/N = p0 - dp s / 2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .algebra import I2, CMat, DomainError, dag, herm_exp, op_norm
from .model import DerivedModel, require_unsharp

Z_EIGS = np.array([1.0, -1.0])  # sigma_z on |1>, |2>


class UnphysicalReadout(UserWarning):
    """Readout ``s`` maps to a rate outside ``[0, 1]``."""


class UnderResolvedGrid(UserWarning):
    pass


@dataclass(frozen=True)
class NSeriesConfig:
    """Quadrature and width settings for the Gaussian N-series.

    The default s-grid is uniform with ``s_points`` nodes over
    ``+-(1 + s_halfwidth_sd / sqrt(gamma dt))`` and trapezoid weights. An explicit
    ``s_values`` array overrides it.
    """

    N: int = 100
    s_points: int = 1601
    s_halfwidth_sd: float = 10.0
    use_qnumber_width: bool = False
    s_values: tuple[float, ...] | None = None
    min_points_per_sd: float = 20.0

    def __post_init__(self):
        if self.N < 2:
            raise DomainError("an N-series needs N >= 2")

    def grid(self, gamma_dt: float) -> tuple[NDArray, NDArray]:
        if self.s_values is not None:
            s = np.asarray(self.s_values, dtype=float)
        else:
            half = 1.0 + self.s_halfwidth_sd / math.sqrt(gamma_dt)
            s = np.linspace(-half, half, self.s_points)
        w = np.empty_like(s)
        ds = np.diff(s)
        w[0], w[-1] = 0.5 * ds[0], 0.5 * ds[-1]
        w[1:-1] = 0.5 * (ds[:-1] + ds[1:])
        return s, w


@dataclass(frozen=True)
class GaussianElement:
    s: float
    M_s_abs: CMat
    U_s: CMat
    M_s: CMat


def _log_binom(n: int, k: NDArray) -> NDArray:
    k = np.asarray(k, dtype=float)
    return math.lgamma(n + 1) - np.vectorize(math.lgamma)(k + 1) - np.vectorize(math.lgamma)(n - k + 1)


def binomial_abs_diag(N_plus, N: int, model: DerivedModel) -> NDArray:
    """Diagonal of ``|M(N+, N)|``, evaluated in the log domain. Shape ``(..., 2)``."""
    p = np.array([model.params.p1, model.params.p2])
    k = np.asarray(N_plus, dtype=float)
    with np.errstate(divide="ignore"):
        logp, logq = np.log(p), np.log1p(-p)
    lb = _log_binom(N, k)[..., None]
    # 0 * log 0 contributes 0
    a = np.where(k[..., None] > 0, k[..., None] * logp, 0.0)
    b = np.where((N - k)[..., None] > 0, (N - k)[..., None] * logq, 0.0)
    return np.exp(0.5 * (lb + a + b))


def binomial_element(N_plus: int, N: int, model: DerivedModel) -> CMat:
    """``U_+^{N+} U_-^{N-N+} |M(N+, N)| exp(-i H dt / hbar)`` with ``dt = N tau``."""
    if not 0 <= N_plus <= N:
        raise DomainError(f"need 0 <= N+ <= N, got N+={N_plus}, N={N}")
    p = model.params
    back = herm_exp(p.Hplus, N_plus * p.tau, p.hbar) @ herm_exp(p.Hminus, (N - N_plus) * p.tau, p.hbar)
    mod = np.diag(binomial_abs_diag(N_plus, N, model)).astype(complex)
    return back @ mod @ herm_exp(p.H, N * p.tau, p.hbar)


def binomial_weights(rho: CMat, model: DerivedModel, N: int) -> NDArray:
    """Outcome distribution ``tr(M(N+,N)^dagger M(N+,N) rho)`` over ``N+ = 0..N``."""
    p = model.params
    rho_u = herm_exp(p.H, N * p.tau, p.hbar)
    rho_u = rho_u @ rho @ dag(rho_u)
    diag = binomial_abs_diag(np.arange(N + 1), N, model) ** 2
    return diag @ np.real(np.diag(rho_u))


def _widths(model: DerivedModel, cfg: NSeriesConfig) -> NDArray:
    """Per-eigenvalue Gaussian rate: ``gamma`` twice, or ``dp^2 / (4 E+E- tau)``."""
    if not cfg.use_qnumber_width:
        return np.array([model.gamma, model.gamma])
    p = np.array([model.params.p1, model.params.p2])
    return model.delta_p**2 / (4.0 * p * (1.0 - p) * model.tau)


def abs_diag(s, model: DerivedModel, delta_t: float, cfg: NSeriesConfig) -> NDArray:
    """Diagonal of ``|M_s|``; shape ``(len(s), 2)``."""
    g = _widths(model, cfg)
    gdt = g * delta_t
    s = np.atleast_1d(np.asarray(s, dtype=float))[:, None]
    return (gdt / (2 * np.pi)) ** 0.25 * np.exp(-gdt * (Z_EIGS - s) ** 2 / 4.0)


def backaction_unitary(s, model: DerivedModel, delta_t: float) -> CMat:
    """``U_s = exp(-i (H_AV + dH s dp / 2) dt / hbar)``, stacked over ``s``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    gen = model.H_AV[None] + 0.5 * model.delta_p * s[:, None, None] * model.Delta_H[None]
    return herm_exp(gen, delta_t, model.hbar)


def _check_dt(model: DerivedModel, delta_t: float) -> None:
    require_unsharp(model.params)
    if not model.gamma * delta_t > 0:
        raise DomainError("gaussian N-series needs gamma * delta_t > 0")


def gaussian_elements(s, model: DerivedModel, delta_t: float, cfg: NSeriesConfig) -> tuple[CMat, CMat, CMat]:
    """Stacked ``(|M_s|, U_s, M_s)`` for an array of readouts."""
    _check_dt(model, delta_t)
    d = abs_diag(s, model, delta_t, cfg)
    mod = np.zeros(d.shape[:1] + (2, 2), dtype=complex)
    mod[:, 0, 0], mod[:, 1, 1] = d[:, 0], d[:, 1]
    us = backaction_unitary(s, model, delta_t)
    free = herm_exp(model.H, delta_t, model.hbar)
    return mod, us, us @ mod @ free


def gaussian_element(s: float, model: DerivedModel, delta_t: float, cfg: NSeriesConfig) -> GaussianElement:
    ratio = model.tau / delta_t
    if not (model.delta_p < ratio < 1.0):
        warnings.warn(
            f"Gaussian form assumes dp << tau/dt << 1 (dp={model.delta_p:.3g}, tau/dt={ratio:.3g})",
            stacklevel=2,
        )
    mod, us, ms = gaussian_elements([s], model, delta_t, cfg)
    return GaussianElement(s=float(s), M_s_abs=mod[0], U_s=us[0], M_s=ms[0])


def s_from_rate(N_plus, N: int, model: DerivedModel):
    """Readout ``s = (p0 - N+/N) / (dp / 2)``."""
    if model.delta_p == 0:
        raise DomainError("readout undefined for dp = 0")
    rate = np.asarray(N_plus, dtype=float) / N
    if np.any((rate < 0) | (rate > 1)):
        raise DomainError("rate N+/N must lie in [0, 1]")
    s = 2.0 * (model.p0 - rate) / model.delta_p
    return float(s) if np.ndim(s) == 0 else s


def rate_from_s(s, model: DerivedModel):
    """Inverse of :func:`s_from_rate`; warns when the rate leaves ``[0, 1]``."""
    rate = model.p0 - 0.5 * model.delta_p * np.asarray(s, dtype=float)
    if np.any((rate < 0) | (rate > 1)):
        warnings.warn("unphysical readout: rate outside [0, 1]", UnphysicalReadout, stacklevel=2)
    return float(rate) if np.ndim(rate) == 0 else rate


def physical_s_range(model: DerivedModel) -> tuple[float, float]:
    return 2.0 * (model.p0 - 1.0) / model.delta_p, 2.0 * model.p0 / model.delta_p


def _grid(model: DerivedModel, delta_t: float, cfg: NSeriesConfig) -> tuple[NDArray, NDArray]:
    s, w = cfg.grid(model.gamma * delta_t)
    g = _widths(model, cfg)
    sd = 1.0 / math.sqrt(max(g) * delta_t)
    per_sd = sd / np.max(np.diff(s))
    if per_sd < cfg.min_points_per_sd:
        coarse = np.zeros_like(w)
        coarse[::2] = 2 * w[::2]
        est = abs(float(np.sum(w) - np.sum(coarse)))
        warnings.warn(
            f"s-grid resolves the Gaussian with {per_sd:.1f} points per sd (< {cfg.min_points_per_sd}); "
            f"estimated quadrature error ~{est:.1e}",
            UnderResolvedGrid,
            stacklevel=3,
        )
    return s, w


def completeness(model: DerivedModel, delta_t: float, cfg: NSeriesConfig, physical_range: bool = False) -> CMat:
    """Quadrature of ``M_s^dagger M_s`` over the s-grid (optionally the physical range only)."""
    s, w = _grid(model, delta_t, cfg)
    if physical_range:
        lo, hi = physical_s_range(model)
        w = np.where((s >= lo) & (s <= hi), w, 0.0)
    d = abs_diag(s, model, delta_t, cfg)
    return np.diag(w @ d**2).astype(complex)


def completeness_defect(model: DerivedModel, delta_t: float, cfg: NSeriesConfig, physical_range: bool = False) -> float:
    return op_norm(completeness(model, delta_t, cfg, physical_range) - I2)


def nseries_nonselective(rho: CMat, model: DerivedModel, delta_t: float, cfg: NSeriesConfig) -> CMat:
    """Quadrature of ``M_s rho M_s^dagger`` over the s-grid."""
    s, w = _grid(model, delta_t, cfg)
    _, _, ms = gaussian_elements(s, model, delta_t, cfg)
    out = np.einsum("k,kij,jl,kml->im", w, ms, np.asarray(rho, dtype=complex), ms.conj())
    return out


def readout_density(rho: CMat, model: DerivedModel, delta_t: float, cfg: NSeriesConfig) -> tuple[NDArray, NDArray, NDArray]:
    """``(s, w, p_s)`` with ``p_s = <M_s^dagger M_s>_rho`` on the grid."""
    s, w = _grid(model, delta_t, cfg)
    free = herm_exp(model.H, delta_t, model.hbar)
    rho_u = free @ np.asarray(rho, dtype=complex) @ dag(free)
    d = abs_diag(s, model, delta_t, cfg)
    return s, w, d**2 @ np.real(np.diag(rho_u))


def readout_moments(rho: CMat, model: DerivedModel, delta_t: float, cfg: NSeriesConfig) -> tuple[float, float]:
    s, w, ps = readout_density(rho, model, delta_t, cfg)
    mean = float(np.sum(w * ps * s))
    var = float(np.sum(w * ps * (s - mean) ** 2))
    return mean, var


def gaussian_weights_on_counts(rho: CMat, model: DerivedModel, N: int, cfg: NSeriesConfig) -> NDArray:
    """Gaussian readout density mapped onto ``N+ = 0..N`` with Jacobian ``ds = 2/(N dp)``."""
    dt = N * model.tau
    s = s_from_rate(np.arange(N + 1), N, model)
    free = herm_exp(model.H, dt, model.hbar)
    rho_u = free @ np.asarray(rho, dtype=complex) @ dag(free)
    ps = abs_diag(s, model, dt, cfg) ** 2 @ np.real(np.diag(rho_u))
    return ps * 2.0 / (N * model.delta_p)


def binomial_gaussian_tv(rho: CMat, model: DerivedModel, N: int, cfg: NSeriesConfig | None = None) -> float:
    """Total-variation distance between the binomial and Gaussian outcome distributions."""
    cfg = cfg or NSeriesConfig(N=N)
    return 0.5 * float(np.sum(np.abs(binomial_weights(rho, model, N) - gaussian_weights_on_counts(rho, model, N, cfg))))
