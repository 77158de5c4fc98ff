"""Closed-form complex 2x2 linear algebra for single-qubit operators.

Every function accepts a single ``(2, 2)`` array and, where it is cheap to do so,
a stack of shape ``(..., 2, 2)``. States and operators are plain complex numpy
arrays; the basis is ``index 0 <-> |1>``, ``index 1 <-> |2>`` so that
``SZ = |1><1| - |2><2|``.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

CMat = NDArray[np.complex128]

HERM_TOL = 1e-12
POS_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = np.stack([SX, SY, SZ])


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


def dag(a: CMat) -> CMat:
    return np.swapaxes(np.conj(a), -1, -2)


def commutator(a: CMat, b: CMat) -> CMat:
    return a @ b - b @ a


def anticommutator(a: CMat, b: CMat) -> CMat:
    return a @ b + b @ a


def is_hermitian(a: CMat, tol: float = HERM_TOL) -> bool:
    return bool(np.all(np.abs(a - dag(a)) <= tol))


def pauli_coefficients(a: CMat) -> NDArray:
    """Return ``(c0, cx, cy, cz)`` with ``a = c0*I + c.sigma``.

    Coefficients are complex in general and real for Hermitian input.
    """
    a = np.asarray(a, dtype=complex)
    c0 = 0.5 * (a[..., 0, 0] + a[..., 1, 1])
    cx = 0.5 * (a[..., 0, 1] + a[..., 1, 0])
    cy = 0.5j * (a[..., 0, 1] - a[..., 1, 0])
    cz = 0.5 * (a[..., 0, 0] - a[..., 1, 1])
    return np.stack([c0, cx, cy, cz], axis=-1)


def from_pauli(c0: float, cx: float, cy: float, cz: float) -> CMat:
    return c0 * I2 + cx * SX + cy * SY + cz * SZ


def herm_exp(h: CMat, t: float | NDArray = 1.0, hbar: float = 1.0) -> CMat:
    """Unitary ``exp(-i h t / hbar)`` for Hermitian ``h``.

    Uses ``h = c0 + c.sigma`` and
    ``exp(-i theta n.sigma) = cos(theta) - i sin(theta) n.sigma``, written with
    ``sinc`` so the ``c -> 0`` case needs no branch. ``t`` may be an array, in
    which case it broadcasts against the leading axes of ``h``.
    """
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h):
        raise DomainError("herm_exp requires a Hermitian generator")
    c = pauli_coefficients(h).real
    t = np.asarray(t, dtype=float)
    scale = t / hbar
    norm = np.sqrt(np.sum(c[..., 1:] ** 2, axis=-1))
    theta = norm * scale
    phase = np.exp(-1j * c[..., 0] * scale)
    # sin(theta)/|c| * scale == scale * sinc(theta/pi)
    s = scale * np.sinc(theta / np.pi)
    vec = np.einsum("...k,kij->...ij", c[..., 1:], PAULIS)
    out = np.cos(theta)[..., None, None] * I2 - 1j * s[..., None, None] * vec
    return phase[..., None, None] * out


def det2(a: CMat) -> NDArray:
    return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]


def inv2(a: CMat) -> CMat:
    d = det2(a)
    adj = np.empty_like(a)
    adj[..., 0, 0] = a[..., 1, 1]
    adj[..., 1, 1] = a[..., 0, 0]
    adj[..., 0, 1] = -a[..., 0, 1]
    adj[..., 1, 0] = -a[..., 1, 0]
    return adj / d[..., None, None]


def op_norm(a: CMat) -> NDArray | float:
    """Largest singular value, closed form for 2x2."""
    a = np.asarray(a, dtype=complex)
    fro2 = np.sum(np.abs(a) ** 2, axis=(-2, -1))
    d2 = np.abs(det2(a)) ** 2
    disc = np.maximum(fro2**2 - 4.0 * d2, 0.0)
    val = np.sqrt(0.5 * (fro2 + np.sqrt(disc)))
    return float(val) if np.ndim(val) == 0 else val


def matrix_sqrt_pos(p: CMat, tol: float = POS_TOL) -> CMat:
    """Principal square root of a positive semidefinite 2x2 matrix.

    For 2x2 PSD ``P``: ``sqrt(P) = (P + sqrt(det P) I) / sqrt(tr P + 2 sqrt(det P))``.
    """
    p = np.asarray(p, dtype=complex)
    if not is_hermitian(p, tol):
        raise DomainError("matrix_sqrt_pos requires a Hermitian matrix")
    ev = np.linalg.eigvalsh(0.5 * (p + dag(p)))
    if np.any(ev < -tol):
        raise DomainError(f"matrix_sqrt_pos requires a positive matrix (min eigenvalue {ev.min():.3e})")
    d = np.maximum(det2(p).real, 0.0)
    sd = np.sqrt(d)
    tr = np.maximum((p[..., 0, 0] + p[..., 1, 1]).real, 0.0)
    denom = np.sqrt(tr + 2.0 * sd)
    safe = np.where(denom > 0, denom, 1.0)
    out = (p + sd[..., None, None] * I2) / safe[..., None, None]
    return np.where((denom > 0)[..., None, None], out, 0.0)


def polar_decompose(m: CMat, tol: float = 1e-14) -> tuple[CMat, CMat]:
    """Split ``m = u @ p`` with ``u`` unitary and ``p = sqrt(m^dagger m)``.

    Raises :class:`DomainError` for singular ``m``, where ``u`` is not unique.
    """
    m = np.asarray(m, dtype=complex)
    if np.any(np.abs(det2(m)) <= tol):
        raise DomainError("polar_decompose: singular matrix, unitary factor not unique")
    mm = dag(m) @ m
    p = matrix_sqrt_pos(0.5 * (mm + dag(mm)), tol=1e-9)
    u = m @ inv2(p)
    return u, p


def renormalize(rho: CMat) -> CMat:
    """Re-Hermitize and re-trace a state. Callers apply this explicitly."""
    rho = 0.5 * (rho + dag(rho))
    tr = (rho[..., 0, 0] + rho[..., 1, 1]).real
    return rho / tr[..., None, None]


def trace(a: CMat) -> NDArray:
    return a[..., 0, 0] + a[..., 1, 1]


def expect(op: CMat, rho: CMat) -> NDArray:
    """``tr(op rho)`` as a real number (or array) for Hermitian ``op``."""
    return np.einsum("ij,...ji->...", op, rho).real


def bloch_vector(rho: CMat) -> NDArray:
    return np.stack([expect(SX, rho), expect(SY, rho), expect(SZ, rho)], axis=-1)


def from_bloch(r) -> CMat:
    r = np.asarray(r, dtype=float)
    if np.linalg.norm(r) > 1.0 + 1e-12:
        raise DomainError(f"Bloch vector length {np.linalg.norm(r):.6g} exceeds 1")
    return 0.5 * (I2 + r[0] * SX + r[1] * SY + r[2] * SZ)


def purity(rho: CMat) -> NDArray:
    return np.einsum("...ij,...ji->...", rho, rho).real


def trace_distance(rho: CMat, sigma: CMat) -> NDArray | float:
    """Half the trace norm of ``rho - sigma`` (Hermitian inputs)."""
    d = np.asarray(rho) - np.asarray(sigma)
    d = 0.5 * (d + dag(d))
    val = 0.5 * np.sum(np.abs(np.linalg.eigvalsh(d)), axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def min_eigenvalue(rho: CMat) -> NDArray | float:
    val = np.linalg.eigvalsh(0.5 * (rho + dag(rho)))[..., 0]
    return float(val) if np.ndim(val) == 0 else val


def check_density(rho: CMat, tol: float = 1e-12) -> CMat:
    """Validate the density-matrix invariants, returning ``rho`` unchanged."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (2, 2):
        raise DomainError(f"expected a 2x2 state, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise DomainError("state has non-finite entries")
    if np.max(np.abs(rho - dag(rho))) > tol:
        raise DomainError("state is not Hermitian")
    if np.max(np.abs(trace(rho) - 1.0)) > tol:
        raise DomainError("state does not have unit trace")
    if np.min(min_eigenvalue(rho)) < -tol:
        raise DomainError("state is not positive semidefinite")
    return rho


def ket_state(index: int) -> CMat:
    """``|1><1|`` for index 0 and ``|2><2|`` for index 1."""
    rho = np.zeros((2, 2), dtype=complex)
    rho[index, index] = 1.0
    return rho
