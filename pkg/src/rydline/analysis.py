"""Exact diagonalization and spectral diagnostics for the Rydberg chain."""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DomainError
from .model import (
    ChainParams,
    OperatorMatrix,
    antisymmetric_sector_basis,
    build_hamiltonian,
    chain_operators,
    symmetric_sector_basis,
)

__all__ = [
    "Eigensystem",
    "diagonalize",
    "chain_eigensystem",
    "ground_space",
    "ground_gap",
    "phase_diagram",
    "MatrixElementTable",
    "operator_matrix_elements",
    "SectorSweep",
    "sector_spectrum_sweep",
    "cluster_metric",
    "DEGENERACY_RTOL",
]

DEGENERACY_RTOL = 1e-9
HERMITIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Eigensystem:
    """Ascending energies with orthonormal full-space eigenvector columns."""

    energies: np.ndarray
    vectors: np.ndarray
    params: dict = field(default_factory=dict)
    sector: str = "full"

    def __len__(self):
        return self.energies.size

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.energies))) if self.energies.size else 0.0

    @property
    def complete(self) -> bool:
        return self.vectors.shape[0] == self.vectors.shape[1]

    def diagonal_elements(self, op) -> np.ndarray:
        """<E_i|A|E_i> for every eigenvector."""
        mat = op.matrix if isinstance(op, OperatorMatrix) else op
        if sp.issparse(mat) and _is_diagonal(mat):
            d = mat.diagonal()
            vals = np.einsum("ij,i,ij->j", self.vectors.conj(), d, self.vectors)
        else:
            vals = np.einsum("ij,ij->j", self.vectors.conj(), mat @ self.vectors)
        return vals.real

    def degenerate_blocks(self, rtol: float = DEGENERACY_RTOL) -> list[slice]:
        """Contiguous index ranges of (near-)degenerate energies."""
        tol = rtol * max(self.norm, 1.0)
        breaks = np.nonzero(np.diff(self.energies) > tol)[0] + 1
        edges = np.concatenate([[0], breaks, [self.energies.size]])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _is_diagonal(mat) -> bool:
    coo = sp.coo_matrix(mat)
    return not np.any(coo.data[coo.row != coo.col])


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-modulus component of every column real and positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    lead = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(lead) / lead)[None, :]


def _eigh(mat) -> tuple[np.ndarray, np.ndarray]:
    dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
    if np.iscomplexobj(dense) and not np.any(dense.imag):
        dense = dense.real
    return sla.eigh(dense, driver="evd")


def _reflection_symmetric(mat: sp.csr_matrix, perm: np.ndarray) -> bool:
    reflected = mat[perm][:, perm]
    diff = mat - reflected
    return diff.nnz == 0 or abs(diff).max() < HERMITIAN_TOL


def diagonalize(h: OperatorMatrix, sector: str = "full", params: dict | None = None) -> Eigensystem:
    """Complete spectrum of a Hermitian chain operator.

    ``sector='symmetric'`` diagonalizes inside the reflection-even subspace
    (vectors are still returned in the full 2^N basis).  Reflection-symmetric
    operators are always diagonalized sector by sector, which is exact and
    much cheaper than one full-space solve.
    """
    if sector not in ("full", "symmetric", "antisymmetric"):
        raise DomainError(f"unknown sector {sector!r}")
    mat = h.matrix
    scale = max(1.0, float(abs(mat).max())) if mat.nnz else 1.0
    if h.hermiticity_residual() > HERMITIAN_TOL * scale:
        raise DomainError("operator is not Hermitian")
    n = h.n_sites
    chain = ChainParams(n, strict=False)
    perm = chain_operators(chain).reflection_perm
    symmetric = _reflection_symmetric(mat, perm)
    if sector != "full" and not symmetric:
        raise DomainError("operator does not commute with the reflection")
    meta = dict(params or {})
    if sector == "full" and not symmetric:
        e, v = _eigh(mat)
        return Eigensystem(e, _fix_phases(v.astype(complex)), meta, sector)
    blocks = []
    wanted = ("symmetric", "antisymmetric") if sector == "full" else (sector,)
    for name in wanted:
        basis = symmetric_sector_basis(chain) if name == "symmetric" else antisymmetric_sector_basis(chain)
        if basis.shape[1] == 0:
            continue
        e, v = _eigh(basis.T @ mat @ basis)
        blocks.append((e, basis @ v))
    energies = np.concatenate([b[0] for b in blocks])
    vectors = np.hstack([b[1] for b in blocks]).astype(complex)
    order = np.argsort(energies, kind="stable")
    return Eigensystem(energies[order], _fix_phases(vectors[:, order]), meta, sector)


# -- cached chain eigensystems --------------------------------------------

_MEMO: dict = {}
_MEMO_LIMIT = 8


def _cache_key(params: ChainParams, omega: float, delta: float, sector: str) -> str:
    text = f"N={params.n_sites};vdd={params.v_dd!r};omega={float(omega)!r};delta={float(delta)!r};sector={sector}"
    return hashlib.sha256(text.encode()).hexdigest()[:24]


def _cache_dir(cache_dir):
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get("RYDLINE_CACHE")
    return Path(env) if env else None


def chain_eigensystem(
    params: ChainParams, omega: float, delta: float, sector: str = "full", cache_dir=None
) -> Eigensystem:
    """Eigensystem of the chain Hamiltonian at (omega, delta), phi = 0.

    Results are memoized in-process and, when ``cache_dir`` (or the
    ``RYDLINE_CACHE`` environment variable) is set, stored as ``.npz`` files
    keyed by (N, V_dd, omega, delta, sector).
    """
    key = _cache_key(params, omega, delta, sector)
    if key in _MEMO:
        return _MEMO[key]
    meta = {"n_sites": params.n_sites, "v_dd": params.v_dd, "omega": float(omega), "delta": float(delta)}
    directory = _cache_dir(cache_dir)
    eig = None
    if directory is not None:
        path = directory / f"eig_{key}.npz"
        if path.exists():
            with np.load(path) as data:
                eig = Eigensystem(data["energies"], data["vectors"], meta, sector)
    if eig is None:
        eig = diagonalize(build_hamiltonian(params, omega, delta), sector, meta)
        if directory is not None:
            directory.mkdir(parents=True, exist_ok=True)
            tmp = directory / f"eig_{key}.tmp.npz"
            np.savez(tmp, energies=eig.energies, vectors=eig.vectors)
            os.replace(tmp, directory / f"eig_{key}.npz")
    if len(_MEMO) >= _MEMO_LIMIT:
        _MEMO.pop(next(iter(_MEMO)))
    _MEMO[key] = eig
    return eig


def ground_space(params: ChainParams, omega: float, delta: float, sector: str = "full"):
    """(E0, columns spanning the degenerate ground manifold) at phi = 0."""
    eig = chain_eigensystem(params, omega, delta, sector)
    block = eig.degenerate_blocks()[0]
    return float(eig.energies[0]), eig.vectors[:, block]


def ground_gap(omega: float, delta: float, params: ChainParams) -> tuple[float, bool]:
    """E1 - E0 over the full spectrum; returns (gap, degenerate).

    A gap below the degeneracy threshold is reported as 0 with the flag set.
    """
    eig = chain_eigensystem(params, omega, delta, "full")
    gap = float(eig.energies[1] - eig.energies[0])
    if gap <= DEGENERACY_RTOL * max(eig.norm, 1.0):
        return 0.0, True
    return gap, False


def phase_diagram(omega_grid, delta_grid, params: ChainParams) -> np.ndarray:
    """Rydberg fraction <n>/N of the ground state, shape (len(omega), len(delta)).

    Degenerate ground manifolds are averaged uniformly.
    """
    ops = chain_operators(params)
    out = np.empty((len(omega_grid), len(delta_grid)))
    for i, om in enumerate(omega_grid):
        for j, de in enumerate(delta_grid):
            _, g = ground_space(params, om, de)
            occ = np.einsum("ij,i,ij->", g.conj(), ops.number, g).real / g.shape[1]
            out[i, j] = occ / params.n_sites
    return out


@dataclass(frozen=True, eq=False)
class MatrixElementTable:
    """|<E_j|A|E_i>|^2 for source states ``rows`` against every target j."""

    rows: np.ndarray
    energies: np.ndarray  # ground-relative target energies
    elements: np.ndarray  # shape (len(rows), n_states)

    def dominant(self, row_pos: int = 0) -> tuple[int, float, float]:
        """(target index, ground-relative energy, |element|^2) of the largest off-diagonal entry."""
        vals = self.elements[row_pos].copy()
        vals[self.rows[row_pos]] = -np.inf
        j = int(np.argmax(vals))
        return j, float(self.energies[j]), float(vals[j])


def operator_matrix_elements(op: OperatorMatrix, eig: Eigensystem, rows) -> MatrixElementTable:
    rows = np.atleast_1d(np.asarray(rows, dtype=int))
    if np.any(rows < 0) or np.any(rows >= len(eig)):
        raise DomainError("state index out of range")
    mat = op.matrix
    sources = eig.vectors[:, rows]
    elements = np.abs(eig.vectors.conj().T @ (mat @ sources)).T ** 2
    return MatrixElementTable(rows, eig.energies - eig.energies[0], elements)


def _classical_levels(params: ChainParams, delta: float, sector_basis) -> np.ndarray:
    ops = chain_operators(params)
    diag = ops.interaction - delta * ops.number
    reps = np.asarray(abs(sector_basis).argmax(axis=0)).ravel()
    return np.sort(diag[reps])


def cluster_metric(energies: np.ndarray, classical: np.ndarray, rtol: float = 1e-9) -> float:
    """Max intra-cluster spread over min inter-cluster gap.

    Clusters are rank blocks of the sorted spectrum whose sizes match the
    multiplicities of the Omega = 0 (classical) levels.  Returns inf once
    neighbouring clusters overlap.
    """
    classical = np.sort(classical)
    tol = rtol * max(1.0, np.max(np.abs(classical)))
    breaks = np.nonzero(np.diff(classical) > tol)[0] + 1
    edges = np.concatenate([[0], breaks, [classical.size]])
    e = np.sort(energies)
    spread = 0.0
    gap = np.inf
    for a, b, c in zip(edges[:-2], edges[1:-1], edges[2:]):
        gap = min(gap, e[b] - e[b - 1])
    for a, b in zip(edges[:-1], edges[1:]):
        spread = max(spread, e[b - 1] - e[a])
    if gap <= 0:
        return np.inf
    return float(spread / gap)


@dataclass(frozen=True, eq=False)
class SectorSweep:
    omegas: np.ndarray
    delta: float
    energies: np.ndarray  # (len(omegas), sector dim)
    cluster: np.ndarray

    @property
    def span(self) -> np.ndarray:
        return self.energies[:, -1] - self.energies[:, 0]

    @property
    def ground_gaps(self) -> np.ndarray:
        return self.energies[:, 1] - self.energies[:, 0]


def sector_spectrum_sweep(omega_grid, params: ChainParams, delta: float = 1.1) -> SectorSweep:
    """Reflection-symmetric spectra as a function of Omega at fixed delta."""
    omegas = np.asarray(omega_grid, dtype=float)
    basis = symmetric_sector_basis(params)
    classical = _classical_levels(params, delta, basis)
    spectra = []
    metrics = []
    for om in omegas:
        h = basis.T @ build_hamiltonian(params, om, delta).matrix @ basis
        e = sla.eigh((h.toarray()).real, eigvals_only=True, driver="evd")
        spectra.append(e)
        metrics.append(cluster_metric(e, classical))
    return SectorSweep(omegas, float(delta), np.array(spectra), np.array(metrics))
