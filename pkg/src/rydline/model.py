"""Hilbert space, Hamiltonian and observables of an open Rydberg chain.

Basis convention: computational product states are indexed by the integer
whose binary expansion lists the site occupations with site 1 as the most
significant bit, so for N=3 the index 5 is |101>.  Bit value 1 means the
atom is in the Rydberg state.
"""
from __future__ import annotations

import functools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, FormatError

__all__ = [
    "ChainParams",
    "OperatorMatrix",
    "ChainOperators",
    "chain_operators",
    "build_hamiltonian",
    "interaction_observable",
    "z2_order_parameter",
    "total_number_operator",
    "reflection_operator",
    "symmetric_sector_basis",
    "antisymmetric_sector_basis",
    "basis_state",
    "basis_index",
    "save_operator",
    "load_operator",
    "save_state",
    "load_state",
]

MAX_SITES = 13


@dataclass(frozen=True)
class ChainParams:
    """Chain geometry and interaction strength.

    ``strict=False`` lifts the odd-length restriction; it exists for test
    helpers (two-site blockade checks, single-site Rabi physics) and is
    rejected by the campaign layer.
    """

    n_sites: int
    v_dd: float = 1.0
    interaction_exponent: int = 3
    strict: bool = True

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise DomainError(f"n_sites must be a positive integer, got {self.n_sites}")
        if self.strict and (self.n_sites < 3 or self.n_sites % 2 == 0):
            raise DomainError(f"n_sites must be odd and >= 3, got {self.n_sites}")
        if self.n_sites > MAX_SITES:
            raise DomainError(f"n_sites={self.n_sites} exceeds state-vector limit {MAX_SITES}")
        if not self.v_dd > 0:
            raise DomainError("v_dd must be positive")
        if self.interaction_exponent != 3:
            raise DomainError("only dipole-dipole (1/r^3) interactions are supported")

    @property
    def dim(self) -> int:
        return 1 << self.n_sites


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """A (usually Hermitian) operator on the 2^N chain Hilbert space.

    ``matrix`` is stored as CSR; call :meth:`toarray` for a dense copy.
    """

    matrix: sp.csr_matrix
    hermitian: bool = True

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise DomainError("operator must be square")
        dim = m.shape[0]
        if dim & (dim - 1):
            raise DomainError(f"operator dimension {dim} is not a power of two")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_sites(self) -> int:
        return self.dim.bit_length() - 1

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def is_diagonal(self) -> bool:
        coo = self.matrix.tocoo()
        off = coo.row != coo.col
        return not np.any(coo.data[off])

    def hermiticity_residual(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def expectation(self, psi: np.ndarray) -> float:
        """<psi|A|psi> for a normalized state (real part for Hermitian A)."""
        val = np.vdot(psi, self.matrix @ psi)
        return float(val.real) if self.hermitian else val

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.matrix @ other.matrix, hermitian=False)
        return self.matrix @ other


# -- basis helpers ---------------------------------------------------------


def _occupations(n_sites: int) -> np.ndarray:
    """(2^N, N) array of 0/1 occupations, column k-1 = site k."""
    idx = np.arange(1 << n_sites, dtype=np.int64)
    shifts = np.arange(n_sites - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.int8)


def basis_index(bits) -> int:
    """Index of the product state given as a 0/1 sequence or string like '101'."""
    if isinstance(bits, str):
        bits = [int(c) for c in bits]
    out = 0
    for b in bits:
        if b not in (0, 1):
            raise DomainError(f"occupation must be 0 or 1, got {b}")
        out = (out << 1) | int(b)
    return out


def basis_state(bits) -> np.ndarray:
    """Normalized computational basis vector for an occupation pattern."""
    if isinstance(bits, str):
        n = len(bits)
    else:
        n = len(bits)
    psi = np.zeros(1 << n, dtype=complex)
    psi[basis_index(bits)] = 1.0
    return psi


def _reverse_bits(idx: np.ndarray, n_sites: int) -> np.ndarray:
    out = np.zeros_like(idx)
    for k in range(n_sites):
        out |= ((idx >> k) & 1) << (n_sites - 1 - k)
    return out


class ChainOperators:
    """Precomputed diagonals and drive structure for one chain.

    The Hamiltonian decomposes as
    ``H = (Omega/2) * X_phi - delta * n + H_int`` where ``X_phi`` is the
    phase-dressed transverse drive and the last two terms are diagonal.
    Building blocks are kept separately so the propagator can reassemble
    ``H(t)`` without rebuilding sparse structure every step.
    """

    def __init__(self, params: ChainParams):
        self.params = params
        n = params.n_sites
        occ = _occupations(n)
        self.occupations = occ
        self.number = occ.sum(axis=1).astype(float)

        hint = np.zeros(params.dim)
        occf = occ.astype(float)
        for k in range(n):
            for l in range(k + 1, n):
                hint += occf[:, k] * occf[:, l] / float(l - k) ** params.interaction_exponent
        self.interaction = params.v_dd * hint

        signs = 2.0 * occf - 1.0
        stagger = (-1.0) ** np.arange(1, n + 1)
        if n > 1:
            m = signs @ stagger
            self.z2 = (m**2 - n) / (n * (n - 1))
        else:
            self.z2 = np.zeros(params.dim)

        idx = np.arange(params.dim, dtype=np.int64)
        rows, cols, lowering = [], [], []
        for k in range(n):
            mask = 1 << (n - 1 - k)
            flipped = idx ^ mask
            rows.append(flipped)
            cols.append(idx)
            # column state has the site excited -> element <flipped|.|idx> is |0><1|
            lowering.append((idx & mask) != 0)
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)
        self._lowering = np.concatenate(lowering)
        self.drive_x = sp.csr_matrix(
            (np.ones(self._rows.size), (self._rows, self._cols)), shape=(params.dim, params.dim)
        )
        self.reflection_perm = _reverse_bits(idx, n)

    def drive(self, phi: float = 0.0) -> sp.csr_matrix:
        """Sum_k [e^{-i phi}|0><1|_k + h.c.] as CSR."""
        phase = np.where(self._lowering, np.exp(-1j * phi), np.exp(1j * phi))
        return sp.csr_matrix((phase, (self._rows, self._cols)), shape=(self.params.dim,) * 2)

    def hamiltonian(self, omega: float, delta: float, phi: float = 0.0) -> sp.csr_matrix:
        diag = sp.diags(self.interaction - delta * self.number, format="csr")
        if omega == 0:
            return diag.astype(complex)
        return (0.5 * omega) * self.drive(phi) + diag


@functools.lru_cache(maxsize=16)
def chain_operators(params: ChainParams) -> ChainOperators:
    return ChainOperators(params)


def _check_finite(*vals):
    for v in vals:
        if not np.isfinite(v):
            raise DomainError(f"non-finite Hamiltonian parameter {v}")


def build_hamiltonian(params: ChainParams, omega: float, delta: float, phi: float = 0.0) -> OperatorMatrix:
    """Rydberg chain Hamiltonian at drive (omega, delta) and laser phase phi.

    (omega/2) sum_k [e^{-i phi}|0><1|_k + h.c.] - delta sum_k n_k
    + v_dd sum_{k<l} n_k n_l / |k-l|^3, with n_k the Rydberg projector.
    """
    _check_finite(omega, delta, phi)
    return OperatorMatrix(chain_operators(params).hamiltonian(omega, delta, phi))


def interaction_observable(params: ChainParams) -> OperatorMatrix:
    return OperatorMatrix(sp.diags(chain_operators(params).interaction.astype(complex), format="csr"))


def z2_order_parameter(params: ChainParams) -> OperatorMatrix:
    """Staggered sigma_z correlator over all k != l, divided by N(N-1).

    Equals 1 on both Neel patterns; sigma_z = +1 on the Rydberg state.
    """
    return OperatorMatrix(sp.diags(chain_operators(params).z2.astype(complex), format="csr"))


def total_number_operator(params: ChainParams) -> OperatorMatrix:
    return OperatorMatrix(sp.diags(chain_operators(params).number.astype(complex), format="csr"))


def reflection_operator(params: ChainParams) -> OperatorMatrix:
    """Permutation |b_1 ... b_N> -> |b_N ... b_1>."""
    perm = chain_operators(params).reflection_perm
    dim = params.dim
    mat = sp.csr_matrix((np.ones(dim, dtype=complex), (perm, np.arange(dim))), shape=(dim, dim))
    return OperatorMatrix(mat)


def _sector_basis(params: ChainParams, sign: int) -> sp.csr_matrix:
    perm = chain_operators(params).reflection_perm
    idx = np.arange(params.dim)
    if sign > 0:
        reps = idx[idx <= perm]
    else:
        reps = idx[idx < perm]
    partners = perm[reps]
    pal = reps == partners
    cols = np.arange(reps.size)
    s = 1.0 / np.sqrt(2.0)
    rows = np.concatenate([reps[pal], reps[~pal], partners[~pal]])
    cc = np.concatenate([cols[pal], cols[~pal], cols[~pal]])
    vals = np.concatenate([np.ones(pal.sum()), np.full((~pal).sum(), s), np.full((~pal).sum(), sign * s)])
    return sp.csr_matrix((vals, (rows, cc)), shape=(params.dim, reps.size))


def symmetric_sector_basis(params: ChainParams) -> sp.csr_matrix:
    """Orthonormal columns spanning the R = +1 sector.

    Palindromic product states enter as-is, every other pair {b, Rb} as
    (|b> + |Rb>)/sqrt(2); columns are ordered by their smaller index.
    Dimension is (2^N + 2^ceil(N/2)) / 2.
    """
    return _sector_basis(params, +1)


def antisymmetric_sector_basis(params: ChainParams) -> sp.csr_matrix:
    """Orthonormal columns (|b> - |Rb>)/sqrt(2) spanning the R = -1 sector."""
    return _sector_basis(params, -1)


# -- binary layout ---------------------------------------------------------
# header: two little-endian uint64 (rows, cols); payload: row-major complex64
# (float32 real, float32 imag) pairs.  States are stored with cols == 1.

_HEADER = struct.Struct("<QQ")


def _write_array(path, arr: np.ndarray):
    arr = np.asarray(arr)
    rows, cols = (arr.shape[0], 1) if arr.ndim == 1 else arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(rows, cols))
        fh.write(np.ascontiguousarray(arr, dtype="<c8").tobytes())


def _read_array(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    rows, cols = _HEADER.unpack_from(raw)
    if (len(raw) - _HEADER.size) % 8:
        raise FormatError(f"{path}: payload is not a whole number of complex64 entries")
    payload = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size)
    if payload.size != rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} entries, found {payload.size}")
    return payload.reshape(rows, cols).astype(complex)


def save_operator(path, op: OperatorMatrix):
    _write_array(path, op.toarray())


def load_operator(path, hermitian: bool = True) -> OperatorMatrix:
    return OperatorMatrix(sp.csr_matrix(_read_array(path)), hermitian=hermitian)


def save_state(path, psi: np.ndarray):
    _write_array(path, np.asarray(psi).reshape(-1))


def load_state(path) -> np.ndarray:
    arr = _read_array(path)
    if arr.shape[1] != 1:
        raise FormatError(f"{path}: not a state vector (shape {arr.shape})")
    return arr[:, 0]
