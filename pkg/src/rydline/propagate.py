"""Chebyshev propagator for H = (omega/2) X + diag(d).

Applies exp(-i H dt) to one state or a batch of states (columns) to
machine precision.  X is the real transverse-drive matrix (full space or a
symmetry sector), d a diagonal that may differ per column.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.special import jv

CHEB_TOL = 1e-16


def chebyshev_coefficients(z: float) -> np.ndarray:
    """(2 - delta_k0) (-i)^k J_k(z), truncated once |J_k| < CHEB_TOL past k > z."""
    kmax = int(z + 20 + 4 * np.sqrt(z + 1))
    while True:
        k = np.arange(kmax + 1)
        j = jv(k, z)
        small = np.nonzero((np.abs(j) < CHEB_TOL) & (k > z))[0]
        if small.size:
            k = k[: small[0] + 1]
            j = j[: small[0] + 1]
            break
        kmax *= 2
    coef = (-1j) ** k * j
    coef[1:] *= 2.0
    return coef


class DriveSystem:
    """Sparse drive matrix with the bookkeeping needed for spectral bounds."""

    def __init__(self, drive_x: sp.spmatrix, n_sites: int):
        self.drive_x = sp.csr_matrix(drive_x, dtype=complex)
        self.n_sites = n_sites
        self.dim = drive_x.shape[0]

    def apply(self, omega: float, diag: np.ndarray, vecs: np.ndarray) -> np.ndarray:
        if diag.ndim == 1 and vecs.ndim == 2:
            diag = diag[:, None]
        out = diag * vecs
        if omega != 0:
            out += (0.5 * omega) * (self.drive_x @ vecs)
        return out

    def propagate(self, omega: float, diag: np.ndarray, vecs: np.ndarray, dt: float) -> np.ndarray:
        """exp(-i [(omega/2) X + diag] dt) @ vecs.

        ``diag`` has shape (dim,) or (dim, n_columns) for column-dependent
        diagonals; ``vecs`` shape (dim,) or (dim, n_columns).
        """
        half_drive = 0.5 * abs(omega) * self.n_sites  # ||X|| = N
        lo = float(np.min(diag)) - half_drive
        hi = float(np.max(diag)) + half_drive
        center = 0.5 * (hi + lo)
        radius = 0.5 * (hi - lo) + 1e-12
        if diag.ndim == 1 and vecs.ndim == 2:
            diag = diag[:, None]
        shifted = (diag - center) / radius
        omega_s = omega / radius

        def h_scaled(v):
            out = shifted * v
            if omega != 0:
                out += (0.5 * omega_s) * (self.drive_x @ v)
            return out

        coef = chebyshev_coefficients(radius * dt)
        t_prev = vecs
        t_cur = h_scaled(vecs)
        acc = coef[0] * t_prev + coef[1] * t_cur
        for c in coef[2:]:
            t_next = 2.0 * h_scaled(t_cur) - t_prev
            acc += c * t_next
            t_prev, t_cur = t_cur, t_next
        return np.exp(-1j * center * dt) * acc
