"""Diagonal and canonical ensembles and the long-time vs thermal comparison.

All weights live on the eigenstates of a complete :class:`Eigensystem`.
Degenerate energy levels are handled blockwise: the diagonal ensemble
keeps the projection of the state onto each degenerate block, so the
long-time average sum_b <psi|P_b A P_b|psi> is independent of how the
eigensolver happened to rotate vectors inside the block.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .analysis import Eigensystem
from .errors import DomainError, GroundStateEnergyError, NegativeTemperatureError
from .model import OperatorMatrix

__all__ = [
    "EnsembleWeights",
    "ETHResult",
    "diagonal_ensemble",
    "long_time_expectation",
    "canonical_weights",
    "canonical_energy",
    "solve_beta",
    "thermal_expectation",
    "eth_comparison",
    "BETA_MAX",
    "ENERGY_TOL",
]

BETA_MAX = 1e6
ENERGY_TOL = 1e-8
SIMPLEX_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class EnsembleWeights:
    """Probability vector over eigenstates.

    For a diagonal ensemble, each degenerate block's total weight sits on
    its first index (the block basis is rotated so that its first vector is
    parallel to the state's projection); ``projections`` keeps those
    projected vectors for observables that are not diagonal in the block.
    """

    weights: np.ndarray
    kind: str
    provenance: dict = field(default_factory=dict)
    projections: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < -SIMPLEX_TOL) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise DomainError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", np.clip(w, 0.0, None))

    def __len__(self):
        return self.weights.size

    def mean_energy(self, eig: Eigensystem) -> float:
        return float(self.weights @ eig.energies)

    def histogram(self, eig: Eigensystem, bin_width: float = 0.1, e_max: float | None = None):
        """(bin centres, summed weight) on a ground-relative energy axis."""
        rel = eig.energies - eig.energies[0]
        top = rel[-1] if e_max is None else e_max
        nbins = int(np.floor(top / bin_width + 0.5)) + 1
        idx = np.floor(rel / bin_width + 0.5).astype(int)
        keep = idx < nbins
        hist = np.bincount(idx[keep], weights=self.weights[keep], minlength=nbins)
        return bin_width * np.arange(nbins), hist


def _matrix(op):
    return op.matrix if isinstance(op, OperatorMatrix) else op


def diagonal_ensemble(psi: np.ndarray, eig: Eigensystem) -> EnsembleWeights:
    """|<E_i|psi>|^2, summed within degenerate blocks."""
    if not eig.complete:
        raise DomainError("diagonal ensemble needs a complete eigensystem")
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (eig.vectors.shape[0],):
        raise DomainError("state dimension does not match the eigensystem")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-8:
        raise DomainError(f"state must be normalized (norm {norm})")
    coeffs = eig.vectors.conj().T @ psi
    weights = np.abs(coeffs) ** 2
    projections = {}
    for block in eig.degenerate_blocks():
        if block.stop - block.start > 1:
            total = weights[block].sum()
            weights[block] = 0.0
            weights[block.start] = total
            projections[block.start] = (block, eig.vectors[:, block] @ coeffs[block])
    weights /= weights.sum()
    return EnsembleWeights(weights, "diagonal", dict(eig.params), projections)


def long_time_expectation(w: EnsembleWeights, op, eig: Eigensystem) -> float:
    """sum_i w_i <E_i|A|E_i>, with degenerate blocks treated exactly."""
    if w.kind == "canonical":
        return thermal_expectation(w.provenance["beta"], op, eig)
    mat = _matrix(op)
    diag = eig.diagonal_elements(mat)
    vals = w.weights * diag
    for start, (block, proj) in w.projections.items():
        vals[block] = 0.0
        vals[start] = np.vdot(proj, mat @ proj).real
    return float(vals.sum())


def canonical_weights(beta: float, eig: Eigensystem) -> EnsembleWeights:
    """Boltzmann weights exp(-beta E_i)/Z, shifted by the largest exponent."""
    if not np.isfinite(beta):
        raise DomainError("beta must be finite")
    expo = -beta * eig.energies
    expo -= expo.max()
    w = np.exp(expo)
    w /= w.sum()
    return EnsembleWeights(w, "canonical", {**eig.params, "beta": float(beta)})


def canonical_energy(beta: float, eig: Eigensystem) -> float:
    return canonical_weights(beta, eig).mean_energy(eig)


def solve_beta(target_energy: float, eig: Eigensystem, beta_max: float = BETA_MAX,
               tol: float = ENERGY_TOL) -> float:
    """Inverse temperature with canonical energy equal to ``target_energy``.

    Only the beta >= 0 branch is solved.  A target within ``tol`` of the
    spectral mean returns 0; a target above it raises
    NegativeTemperatureError, one at or below E0 GroundStateEnergyError.
    """
    e0 = float(eig.energies[0])
    mean = float(np.mean(eig.energies))
    if not np.isfinite(target_energy):
        raise DomainError("target energy must be finite")
    if target_energy <= e0:
        raise GroundStateEnergyError(f"target {target_energy} <= ground energy {e0}")
    if abs(target_energy - mean) <= tol:
        return 0.0
    if target_energy > mean:
        raise NegativeTemperatureError(f"target {target_energy} above the spectral mean {mean}")

    def f(beta):
        return canonical_energy(beta, eig) - target_energy

    if f(beta_max) > 0:
        if f(beta_max) <= tol:
            return beta_max
        raise GroundStateEnergyError(
            f"target {target_energy} needs beta beyond {beta_max} (E0 = {e0})"
        )
    beta = brentq(f, 0.0, beta_max, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(f(beta)) > tol:
        # brentq stops on the bracket width; finish by plain bisection
        lo, hi = (beta, beta_max) if f(beta) > 0 else (0.0, beta)
        for _ in range(400):
            mid = 0.5 * (lo + hi)
            val = f(mid)
            if abs(val) <= tol:
                return mid
            lo, hi = (mid, hi) if val > 0 else (lo, mid)
        beta = 0.5 * (lo + hi)
    return float(beta)


def thermal_expectation(beta: float, op, eig: Eigensystem) -> float:
    w = canonical_weights(beta, eig)
    return float(w.weights @ eig.diagonal_elements(_matrix(op)))


@dataclass(frozen=True)
class ETHResult:
    long_time: float
    thermal: float
    beta: float
    energy: float  # ground-relative state energy

    @property
    def gap(self) -> float:
        return abs(self.long_time - self.thermal)


def eth_comparison(psi: np.ndarray, observables: dict, eig: Eigensystem, beta: float | None = None) -> dict:
    """Long-time (diagonal ensemble) vs canonical values per observable.

    ``observables`` maps names to operators.  The state's energy is the
    diagonal-ensemble mean, which equals <psi|H|psi> exactly; beta is solved
    from it unless given.
    """
    w = diagonal_ensemble(psi, eig)
    energy = w.mean_energy(eig)
    if beta is None:
        beta = solve_beta(energy, eig)
    out = {}
    for name, op in observables.items():
        out[name] = ETHResult(
            long_time_expectation(w, op, eig),
            thermal_expectation(beta, op, eig),
            float(beta),
            energy - eig.ground_energy,
        )
    return out
