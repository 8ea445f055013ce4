"""Phase-noise time series from a one-sided phase-noise density.

Each realization draws complex Gaussian amplitudes on the positive
frequency bins, mirrors them into a conjugate-symmetric double-sided
spectrum and inverse transforms to a real signal phi(t_j), j = 0..N-1,
with sample interval dt = 1 / (N * spacing).

Normalization: phi_j = sqrt(2 dnu) / (2 pi) * sum_k S_k exp(2 pi i k j / N).
With E|S_k|^2 = S_phi(nu_k) the ensemble variance of phi is
(2 dnu / (2 pi)^2) * (2 sum_{k<K} S_phi + S_phi(nu_K)), i.e.
(4 / (2 pi)^2) * total_power(S_phi) up to the single-counted Nyquist bin K.
``analytic_autocorrelation`` uses the same prefactor so its unnormalized
value at zero lag is that variance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSignalError, DomainError, GridError, SymmetryError
from .spectrum import PhaseSpectrum

__all__ = [
    "SampledSpectrum",
    "PhaseSignal",
    "derive_seed",
    "make_rng",
    "sample_spectrum",
    "synthesize_signal",
    "generate_signal",
    "analytic_autocorrelation",
    "empirical_autocorrelation",
    "scale_signal",
    "signal_derivative",
    "signal_duration_for",
]

ALIGN_RTOL = 1e-6
REALNESS_TOL = 1e-10


def derive_seed(master_seed: int, *indices: int) -> int:
    """64-bit child seed for (master_seed, i, j, ...), independent of scheduling."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(i) for i in indices))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


@dataclass(frozen=True, eq=False)
class SampledSpectrum:
    """Double-sided complex amplitudes in numpy FFT order.

    Index 0 is DC, 1..N/2 the positive bins up to Nyquist, N/2+1..N-1
    the negative bins (conjugates of the positive ones).
    """

    bins: np.ndarray
    delta_nu: float
    seed: int | None = None

    @property
    def n_bins(self) -> int:
        return self.bins.size

    def scaled(self, alpha: float) -> "SampledSpectrum":
        return SampledSpectrum(self.bins * alpha, self.delta_nu, self.seed)


@dataclass(frozen=True, eq=False)
class PhaseSignal:
    """Uniformly sampled laser phase phi(t_j) in radians; dt in microseconds."""

    samples: np.ndarray
    dt: float
    seed: int | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise DomainError("signal must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise DomainError("signal samples must be finite")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.size)

    def at(self, t):
        """Zero-order-hold value phi(t) (sample j covers [j dt, (j+1) dt))."""
        j = np.floor(np.asarray(t) / self.dt + 1e-9).astype(int)
        j = np.clip(j, 0, self.samples.size - 1)
        return self.samples[j]


def _bin_layout(s_phi: PhaseSpectrum) -> tuple[int, np.ndarray]:
    """Nyquist index K and the integer bin index of each grid frequency."""
    ratio = s_phi.freqs / s_phi.grid_spacing
    k = np.rint(ratio).astype(np.int64)
    if np.any(np.abs(ratio - k) > ALIGN_RTOL * np.maximum(ratio, 1.0)):
        raise GridError("grid frequencies must be integer multiples of the spacing")
    return int(k[-1]), k


def sample_spectrum(s_phi: PhaseSpectrum, seed: int) -> SampledSpectrum:
    """Draw one complex Gaussian realization of the phase spectrum.

    Positive bins get N(0) sqrt(S/2) + i N(0) sqrt(S/2); the Nyquist bin is
    kept real with variance S so every bin satisfies E|S_k|^2 = S_phi.  DC
    is zero (a global phase offset does not affect the dynamics).
    """
    nyq, kidx = _bin_layout(s_phi)
    density = np.zeros(nyq + 1)
    density[kidx] = s_phi.values
    rng = make_rng(seed)
    re = rng.standard_normal(nyq + 1)
    im = rng.standard_normal(nyq + 1)
    n = 2 * nyq
    bins = np.zeros(n, dtype=complex)
    amp = np.sqrt(density[1:nyq] / 2.0)
    bins[1:nyq] = amp * re[1:nyq] + 1j * amp * im[1:nyq]
    bins[nyq] = np.sqrt(density[nyq]) * re[nyq]
    bins[nyq + 1:] = np.conj(bins[1:nyq][::-1])
    return SampledSpectrum(bins, s_phi.grid_spacing, seed)


def _prefactor(delta_nu: float) -> float:
    return np.sqrt(2.0 * delta_nu) / (2.0 * np.pi)


def synthesize_signal(sampled: SampledSpectrum) -> PhaseSignal:
    """Inverse transform a conjugate-symmetric sample into a real phase signal."""
    bins = sampled.bins
    n = bins.size
    if n < 2 or n % 2:
        raise SymmetryError("double-sided spectrum must have an even number of bins")
    nyq = n // 2
    if bins[0].imag != 0 or bins[nyq].imag != 0:
        raise SymmetryError("DC and Nyquist bins must be real")
    if not np.array_equal(bins[nyq + 1:], np.conj(bins[1:nyq][::-1])):
        raise SymmetryError("negative-frequency bins are not conjugates of positive ones")
    raw = np.fft.ifft(bins) * n
    scale = np.sqrt(np.mean(raw.real**2))
    if scale > 0 and np.sqrt(np.mean(raw.imag**2)) > REALNESS_TOL * scale:
        raise SymmetryError("inverse transform has a non-negligible imaginary part")
    dt = 1.0 / (n * sampled.delta_nu)
    return PhaseSignal(_prefactor(sampled.delta_nu) * raw.real, dt, sampled.seed)


def generate_signal(s_phi: PhaseSpectrum, seed: int) -> PhaseSignal:
    return synthesize_signal(sample_spectrum(s_phi, seed))


def signal_duration_for(s_phi: PhaseSpectrum) -> float:
    """Duration N * dt = 1 / spacing of any signal synthesized from s_phi."""
    return 1.0 / s_phi.grid_spacing


def analytic_autocorrelation(s_phi: PhaseSpectrum, taus, normalize: bool = True) -> np.ndarray:
    """Autocorrelation implied by the density, as a Riemann sum over its bins.

    Unnormalized, this is the ensemble covariance E[phi(t) phi(t + tau)] of
    signals from :func:`synthesize_signal`; with ``normalize`` it is divided
    by its zero-lag value.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    duration = signal_duration_for(s_phi)
    if np.any(taus < 0) or np.any(taus > duration):
        raise DomainError(f"lags must lie in [0, {duration}]")
    nyq, kidx = _bin_layout(s_phi)
    weights = np.where(kidx == nyq, 1.0, 2.0) * s_phi.values
    nu = kidx * s_phi.grid_spacing
    pref = _prefactor(s_phi.grid_spacing) ** 2
    acf = pref * (np.cos(2 * np.pi * np.outer(taus, nu)) @ weights)
    if normalize:
        zero = pref * weights.sum()
        if zero == 0:
            raise DegenerateSignalError("zero spectrum has no normalized autocorrelation")
        acf = acf / zero
        acf[taus == 0] = 1.0
    return acf


def empirical_autocorrelation(signal: PhaseSignal, taus):
    """Pearson correlation between phi(t) and phi(t + tau) over their overlap.

    ``taus`` is in microseconds and is rounded to whole samples.  Returns a
    scalar for scalar input.
    """
    scalar = np.ndim(taus) == 0
    lags = np.rint(np.atleast_1d(np.asarray(taus, dtype=float)) / signal.dt).astype(int)
    x = signal.samples
    n = x.size
    if np.any(lags < 0) or np.any(lags >= n):
        raise DomainError(f"lags must lie in [0, {signal.duration})")
    out = np.empty(lags.size)
    for i, m in enumerate(lags):
        a = x[: n - m]
        b = x[m:]
        da = a - a.mean()
        db = b - b.mean()
        sa = np.sqrt(np.mean(da**2))
        sb = np.sqrt(np.mean(db**2))
        if sa == 0 or sb == 0:
            raise DegenerateSignalError("zero-variance signal")
        out[i] = 1.0 if m == 0 else np.mean(da * db) / (sa * sb)
    return float(out[0]) if scalar else out


def scale_signal(signal: PhaseSignal, m: float) -> PhaseSignal:
    if not np.isfinite(m):
        raise DomainError("scale factor must be finite")
    return PhaseSignal(signal.samples * m, signal.dt, signal.seed)


def signal_derivative(signal: PhaseSignal) -> PhaseSignal:
    """d(phi)/dt in rad/us: central differences inside, one-sided at the ends."""
    if signal.samples.size < 3:
        raise DomainError("derivative needs at least 3 samples")
    return PhaseSignal(np.gradient(signal.samples, signal.dt), signal.dt, signal.seed)
