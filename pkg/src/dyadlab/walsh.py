"""Walsh functions in the Paley ordering and fast transforms.

W_m = prod over set bits j of m of the Rademacher function r_j, where
r_j(x) = (-1)**floor(2**(j+1) x).  On a grid of 2**r cells this reduces to
W_m(cell i) = (-1)**popcount(m & bitrev_r(i)), i.e. a Hadamard matrix with
bit-reversed columns.  The key structural fact used throughout: restricted to
a dyadic subinterval, W_m is (a sign times) the Walsh function of the shifted
index, which makes packets of disjoint phase-plane tiles exactly orthogonal.
"""

from __future__ import annotations

import numpy as np


def bit_reverse(indices, bits: int) -> np.ndarray:
    """Reverse the lowest `bits` bits of each index."""
    idx = np.asarray(indices, dtype=np.int64)
    out = np.zeros_like(idx)
    for b in range(bits):
        out |= ((idx >> b) & 1) << (bits - 1 - b)
    return out


def walsh_values(m: int, bits: int) -> np.ndarray:
    """W_m sampled on the 2**bits cells of [0, 1), values in {-1, +1}."""
    if not 0 <= m < (1 << bits) and not (m == 0 and bits == 0):
        raise ValueError(f"Walsh index {m} out of range for {bits} bits")
    rev = bit_reverse(np.arange(1 << bits), bits)
    signs = np.bitwise_count(np.int64(m) & rev) & 1
    return 1.0 - 2.0 * signs


def walsh_values_at(m_per_cell: np.ndarray, rel_cell: np.ndarray, bits: int) -> np.ndarray:
    """W_{m[i]}(cell u[i]) for paired arrays of indices and relative cells."""
    rev = bit_reverse(np.asarray(rel_cell, dtype=np.int64), bits)
    signs = np.bitwise_count(np.asarray(m_per_cell, dtype=np.int64) & rev) & 1
    return 1.0 - 2.0 * signs


def hadamard(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalized Hadamard butterfly along one axis (length a power of two)."""
    a = np.asarray(a)
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1]
    if n & (n - 1):
        raise ValueError(f"length must be a power of two, got {n}")
    out = a.astype(np.complex128 if np.iscomplexobj(a) else np.float64).copy()
    h = 1
    while h < n:
        shape = out.shape[:-1] + (n // (2 * h), 2, h)
        v = out.reshape(shape)
        top = v[..., 0, :] + v[..., 1, :]
        bot = v[..., 0, :] - v[..., 1, :]
        v[..., 0, :] = top
        v[..., 1, :] = bot
        h *= 2
    return np.moveaxis(out, -1, axis)


def walsh_analysis(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Coefficients a_m = sum_i values_i W_m(cell i), Paley order."""
    values = np.moveaxis(np.asarray(values), axis, -1)
    n = values.shape[-1]
    bits = n.bit_length() - 1
    rev = bit_reverse(np.arange(n), bits)
    return np.moveaxis(hadamard(values[..., rev]), -1, axis)


def walsh_synthesis(coeffs: np.ndarray, axis: int = -1) -> np.ndarray:
    """values_i = sum_m coeffs_m W_m(cell i); inverse of analysis up to n."""
    coeffs = np.moveaxis(np.asarray(coeffs), axis, -1)
    n = coeffs.shape[-1]
    bits = n.bit_length() - 1
    rev = bit_reverse(np.arange(n), bits)
    return np.moveaxis(hadamard(coeffs)[..., rev], -1, axis)
