"""Real parametrization of Hermitian matrices.

A d x d Hermitian matrix is stored as d^2 real coordinates: the d
diagonal entries followed, for each pair a < b in row-major order, by
sqrt(2)*Re(Y[a,b]) and sqrt(2)*Im(Y[a,b]). The scaling makes the map an
isometry: Tr(A B) equals the Euclidean dot product of the coordinate
vectors, so gradients and inner products stay real and unweighted.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def _pair_index(d: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.triu_indices(d, k=1)
    return rows, cols


def hvec(y: np.ndarray) -> np.ndarray:
    """Map Hermitian matrices (..., d, d) to real coordinates (..., d^2)."""
    d = y.shape[-1]
    rows, cols = _pair_index(d)
    diag = np.real(np.diagonal(y, axis1=-2, axis2=-1))
    off = y[..., rows, cols]
    parts = np.empty(y.shape[:-2] + (d * d,), dtype=float)
    parts[..., :d] = diag
    parts[..., d::2] = _SQRT2 * off.real
    parts[..., d + 1::2] = _SQRT2 * off.imag
    return parts


def hunvec(v: np.ndarray, d: int) -> np.ndarray:
    """Inverse of hvec: real coordinates (..., d^2) to Hermitian (..., d, d)."""
    rows, cols = _pair_index(d)
    y = np.zeros(v.shape[:-1] + (d, d), dtype=complex)
    idx = np.arange(d)
    y[..., idx, idx] = v[..., :d]
    off = (v[..., d::2] + 1j * v[..., d + 1::2]) / _SQRT2
    y[..., rows, cols] = off
    y[..., cols, rows] = np.conj(off)
    return y


@lru_cache(maxsize=None)
def herm_basis(d: int) -> np.ndarray:
    """Orthonormal Hermitian basis (d^2, d, d) matching the hvec order."""
    basis = np.zeros((d * d, d, d), dtype=complex)
    for a in range(d):
        basis[a, a, a] = 1.0
    rows, cols = _pair_index(d)
    for p, (a, b) in enumerate(zip(rows, cols)):
        basis[d + 2 * p, a, b] = 1.0 / _SQRT2
        basis[d + 2 * p, b, a] = 1.0 / _SQRT2
        basis[d + 2 * p + 1, a, b] = 1j / _SQRT2
        basis[d + 2 * p + 1, b, a] = -1j / _SQRT2
    basis.setflags(write=False)
    return basis


def congruence_maps(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """X^H B_a X for every basis matrix: (d^2, n, n) given X of shape (d, n)."""
    return np.einsum("dm,adk,kn->amn", np.conj(x), basis, x, optimize=True)


def random_hermitian(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * 0.5 * (a + a.conj().T)


def random_psd(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * (a @ a.conj().T) / d


def min_eig(y: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(y)[..., 0].min())


@lru_cache(maxsize=None)
def _pair_grids(d: int):
    a, b = _pair_index(d)
    return (a[:, None], b[:, None], a[None, :], b[None, :])


def sym_kron_batch(c: np.ndarray) -> np.ndarray:
    """K[alpha, beta] = Re Tr(C B_alpha C B_beta) for Hermitian C, batched.

    The matrix of the linear map X -> C X C on Hermitian space in the
    hvec coordinates, assembled from closed-form entry formulas instead
    of matrix products; exact for Hermitian C.
    """
    d = c.shape[-1]
    batch = c.shape[:-2]
    rows, cols = _pair_index(d)
    n_p = rows.size
    k = np.empty(batch + (d * d, d * d), dtype=float)

    k[..., :d, :d] = (c * c.conj()).real
    if n_p:
        a_r, b_r, c_c, d_c = _pair_grids(d)
        # diag row i, pair column p=(a,b): sqrt(2) * (Re, -Im) of C_ia conj(C_ib)
        z = c[..., :, rows] * c[..., :, cols].conj()
        k[..., :d, d::2] = _SQRT2 * z.real
        k[..., :d, d + 1::2] = -_SQRT2 * z.imag
        k[..., d::2, :d] = np.swapaxes(k[..., :d, d::2], -1, -2)
        k[..., d + 1::2, :d] = np.swapaxes(k[..., :d, d + 1::2], -1, -2)
        # pair-pair blocks from z1 = C_bc C_da, z2 = C_bd C_ca
        z1 = c[..., b_r, c_c] * c[..., d_c, a_r]
        z2 = c[..., b_r, d_c] * c[..., c_c, a_r]
        k[..., d::2, d::2] = z1.real + z2.real
        k[..., d + 1::2, d + 1::2] = z2.real - z1.real
        ri = z2.imag - z1.imag
        k[..., d::2, d + 1::2] = ri
        k[..., d + 1::2, d::2] = np.swapaxes(ri, -1, -2)
    return k
