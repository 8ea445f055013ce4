"""Noise power spectral densities on uniform positive-frequency grids.

Frequencies are ordinary MHz.  A frequency-noise density S_nu (MHz^2/MHz)
converts to a phase-noise density S_phi (rad^2/MHz) through
S_nu = nu^2 S_phi.  Power integrals are left Riemann sums with the grid
spacing, the same discretization the synthesis step uses.
"""
from __future__ import annotations

import io
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError, GridError

__all__ = [
    "FrequencySpectrum",
    "PhaseSpectrum",
    "load_spectrum",
    "read_spectrum",
    "format_spectrum",
    "frequency_to_phase",
    "phase_to_frequency",
    "rescale_frequency_grid",
    "total_power",
    "synthesize_default_spectrum",
    "DEFAULT_BUMP_CENTER",
]

GRID_RTOL = 1e-9
# 3 V_dd with V_dd = 1 rad/us, in ordinary MHz
DEFAULT_BUMP_CENTER = 3.0 / (2 * np.pi)


def _validate_grid(freqs: np.ndarray) -> float:
    if freqs.ndim != 1 or freqs.size < 2:
        raise FormatError("a spectrum needs at least 2 frequency bins")
    if not np.all(np.isfinite(freqs)):
        raise DomainError("frequencies must be finite")
    if np.any(freqs <= 0):
        raise DomainError("frequencies must be strictly positive")
    steps = np.diff(freqs)
    if np.any(steps <= 0):
        raise GridError("frequencies must be strictly increasing")
    if steps.max() / steps.min() - 1.0 > GRID_RTOL:
        raise GridError(
            f"non-uniform frequency grid (spacing ratio {steps.max() / steps.min():.12g})"
        )
    return float((freqs[-1] - freqs[0]) / (freqs.size - 1))


@dataclass(frozen=True, eq=False)
class _Spectrum:
    freqs: np.ndarray
    values: np.ndarray
    grid_spacing: float = field(init=False)

    def __post_init__(self):
        freqs = np.array(self.freqs, dtype=float)
        values = np.array(self.values, dtype=float)
        if values.shape != freqs.shape:
            raise FormatError("freqs and values must have the same length")
        spacing = _validate_grid(freqs)
        if not np.all(np.isfinite(values)):
            raise DomainError("spectral density must be finite")
        if np.any(values < 0):
            raise DomainError("spectral density must be non-negative")
        freqs.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "grid_spacing", spacing)

    @property
    def nyquist(self) -> float:
        return float(self.freqs[-1])

    def __len__(self):
        return self.freqs.size


class FrequencySpectrum(_Spectrum):
    """Frequency-noise density S_nu in MHz^2/MHz."""


class PhaseSpectrum(_Spectrum):
    """Phase-noise density S_phi in rad^2/MHz."""


_KINDS = {"frequency": FrequencySpectrum, "phase": PhaseSpectrum}


def load_spectrum(text: str, kind: str = "phase"):
    """Parse a two-column table (MHz, density) into a spectrum.

    Columns may be separated by whitespace or commas; lines starting with
    ``#`` and blank lines are skipped.
    """
    if kind not in _KINDS:
        raise DomainError(f"kind must be 'frequency' or 'phase', got {kind!r}")
    rows = []
    for lineno, line in enumerate(io.StringIO(text), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p for p in re.split(r"[,\s]+", line) if p]
        if len(parts) != 2:
            raise FormatError(f"line {lineno}: expected 2 columns, got {len(parts)}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    if len(rows) < 2:
        raise FormatError("a spectrum needs at least 2 rows")
    data = np.array(rows)
    return _KINDS[kind](data[:, 0], data[:, 1])


def read_spectrum(path, kind: str = "phase"):
    with open(path) as fh:
        return load_spectrum(fh.read(), kind)


def format_spectrum(spec, header: str | None = None) -> str:
    lines = [] if header is None else [f"# {h}" for h in header.splitlines()]
    lines += [f"{f:.12g} {v:.17g}" for f, v in zip(spec.freqs, spec.values)]
    return "\n".join(lines) + "\n"


def frequency_to_phase(s_nu: FrequencySpectrum) -> PhaseSpectrum:
    if np.any(s_nu.freqs == 0):
        raise DomainError("zero-frequency bin cannot be converted to phase noise")
    return PhaseSpectrum(s_nu.freqs, s_nu.values / s_nu.freqs**2)


def phase_to_frequency(s_phi: PhaseSpectrum) -> FrequencySpectrum:
    return FrequencySpectrum(s_phi.freqs, s_phi.values * s_phi.freqs**2)


def total_power(spec) -> float:
    """Integrated power, sum(values) * grid spacing."""
    return float(np.sum(spec.values) * spec.grid_spacing)


def rescale_frequency_grid(s_phi: PhaseSpectrum, kappa: float) -> PhaseSpectrum:
    """Stretch the frequency axis by ``kappa`` keeping the integrated power.

    The spectral shape moves to kappa * nu; densities are multiplied by one
    global constant so ``total_power`` is unchanged.
    """
    if not np.isfinite(kappa) or kappa <= 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    if kappa == 1:
        return PhaseSpectrum(s_phi.freqs, s_phi.values)
    freqs = kappa * s_phi.freqs
    values = s_phi.values.copy()
    scaled = PhaseSpectrum(freqs, values)
    before = total_power(s_phi)
    after = total_power(scaled)
    if after > 0:
        values = values * (before / after)
    return PhaseSpectrum(freqs, values)


def synthesize_default_spectrum(
    floor: float = 1e-9,
    center: float = DEFAULT_BUMP_CENTER,
    width: float = 0.1,
    height: float = 1e-2,
    spacing: float = 0.0025,
    f_max: float = 4.0,
):
    """Surrogate diode-laser phase-noise density.

    White frequency noise ``floor`` (MHz^2/MHz, so S_phi = floor / nu^2)
    plus a Gaussian servo bump of peak ``height`` (rad^2/MHz), standard
    deviation ``width`` (MHz), centred on ``center``.  The bump is shaped
    in phase-noise space so S_phi peaks exactly at ``center`` when the
    floor is small.  The grid runs over spacing, 2*spacing, ..., f_max.
    """
    for name, val in (("floor", floor), ("center", center), ("width", width),
                      ("height", height), ("spacing", spacing), ("f_max", f_max)):
        if not np.isfinite(val) or val <= 0:
            raise DomainError(f"{name} must be positive, got {val}")
    if spacing > 0.01 or f_max < 2.0:
        raise DomainError("default grid must cover at least [0.01, 2] MHz")
    n = int(round(f_max / spacing))
    freqs = spacing * np.arange(1, n + 1)
    if not freqs[0] <= center <= freqs[-1]:
        raise DomainError(f"bump center {center} MHz outside grid [{freqs[0]}, {freqs[-1]}]")
    bump = height * np.exp(-0.5 * ((freqs - center) / width) ** 2)
    s_nu = FrequencySpectrum(freqs, floor + bump * freqs**2)
    return frequency_to_phase(s_nu)
