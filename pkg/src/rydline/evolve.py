"""Noisy time evolution along piecewise-linear (Omega, delta) ramps.

Each step applies the exact exponential of the Hamiltonian evaluated at
the step midpoint.  Step boundaries always include the schedule's segment
joins and the noise sample times, so the zero-order-held phase never
changes inside a step.

The laser phase enters H only through the diagonal rotation
U = exp(i phi n):  H(phi) = U H(0) U^dagger.  In the lab frame the state is
carried as chi = U^dagger psi, which turns every phase jump into a diagonal
kick exp(-i dphi n) and lets a whole batch of noise realizations share one
real propagator.  The rotating frame instead evolves with H(0) + phidot n,
i.e. an effective detuning delta - phidot built from finite differences of
phi (with this Hamiltonian's sign convention the kick is -phidot).

Only phase changes are physical, so phi is referenced to its initial
value: the initial state is taken in the gauge where phi(0) = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import chain_eigensystem, ground_space
from .errors import CoverageError, DomainError, IntegrationError
from .model import ChainParams, chain_operators, symmetric_sector_basis
from .noisegen import PhaseSignal, signal_derivative
from .propagate import DriveSystem

__all__ = [
    "Segment",
    "RampSchedule",
    "three_step_schedule",
    "final_ramp_schedule",
    "constant_schedule",
    "EvolutionConfig",
    "Trajectory",
    "evolve",
    "evolve_batch",
    "instantaneous_ground_fidelity",
    "adiabaticity_diagnostic",
    "AdiabaticityTable",
    "INITIAL_OMEGA",
    "INITIAL_DELTA",
    "PEAK_OMEGA",
    "TARGET_OMEGA",
    "TARGET_DELTA",
]

# ramp endpoints in units of V_dd
INITIAL_OMEGA = 0.1
INITIAL_DELTA = -3.0
PEAK_OMEGA = 1.0
TARGET_OMEGA = 0.1
TARGET_DELTA = 1.1

JOIN_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    duration: float
    omega_start: float
    omega_end: float
    delta_start: float
    delta_end: float

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise DomainError(f"segment duration must be positive, got {self.duration}")
        vals = (self.omega_start, self.omega_end, self.delta_start, self.delta_end)
        if not all(np.isfinite(v) for v in vals):
            raise DomainError("segment endpoints must be finite")

    @property
    def omega_rate(self) -> float:
        return (self.omega_end - self.omega_start) / self.duration

    @property
    def delta_rate(self) -> float:
        return (self.delta_end - self.delta_start) / self.duration


@dataclass(frozen=True)
class RampSchedule:
    """Continuous piecewise-linear Omega(t), delta(t); times in 1/V_dd."""

    segments: tuple

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise DomainError("schedule needs at least one segment")
        for a, b in zip(segs[:-1], segs[1:]):
            if abs(a.omega_end - b.omega_start) > JOIN_TOL or abs(a.delta_end - b.delta_start) > JOIN_TOL:
                raise DomainError("schedule parameters must be continuous across segment joins")
        object.__setattr__(self, "segments", segs)

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def _locate(self, t: float) -> tuple[Segment, float]:
        bounds = self.boundaries
        if t < -JOIN_TOL or t > bounds[-1] + JOIN_TOL:
            raise DomainError(f"time {t} outside schedule [0, {bounds[-1]}]")
        i = int(np.searchsorted(bounds, t, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return self.segments[i], t - bounds[i]

    def at(self, t: float) -> tuple[float, float]:
        """(Omega, delta) at time t."""
        seg, local = self._locate(t)
        f = local / seg.duration
        return (seg.omega_start + f * (seg.omega_end - seg.omega_start),
                seg.delta_start + f * (seg.delta_end - seg.delta_start))

    def rates(self, t: float) -> tuple[float, float]:
        """(dOmega/dt, ddelta/dt) at time t (right-continuous at joins)."""
        seg, _ = self._locate(t)
        return seg.omega_rate, seg.delta_rate

    @property
    def start(self) -> tuple[float, float]:
        s = self.segments[0]
        return s.omega_start, s.delta_start

    @property
    def end(self) -> tuple[float, float]:
        s = self.segments[-1]
        return s.omega_end, s.delta_end


def three_step_schedule(t1: float, t2: float, t3: float) -> RampSchedule:
    """Omega up at delta=-3, delta sweep -3 -> 1.1 at Omega=1, Omega down at delta=1.1."""
    for t in (t1, t2, t3):
        if not (np.isfinite(t) and t > 0):
            raise DomainError(f"ramp durations must be positive, got {t}")
    return RampSchedule((
        Segment(t1, INITIAL_OMEGA, PEAK_OMEGA, INITIAL_DELTA, INITIAL_DELTA),
        Segment(t2, PEAK_OMEGA, PEAK_OMEGA, INITIAL_DELTA, TARGET_DELTA),
        Segment(t3, PEAK_OMEGA, TARGET_OMEGA, TARGET_DELTA, TARGET_DELTA),
    ))


def final_ramp_schedule(t3: float) -> RampSchedule:
    """Only the last step: Omega 1.0 -> 0.1 at delta = 1.1."""
    if not (np.isfinite(t3) and t3 > 0):
        raise DomainError(f"ramp duration must be positive, got {t3}")
    return RampSchedule((Segment(t3, PEAK_OMEGA, TARGET_OMEGA, TARGET_DELTA, TARGET_DELTA),))


def constant_schedule(omega: float, delta: float, duration: float) -> RampSchedule:
    return RampSchedule((Segment(duration, omega, omega, delta, delta),))


@dataclass(frozen=True)
class EvolutionConfig:
    """Propagation settings.

    dt: largest allowed step (1/V_dd); None means min(0.01, noise dt).
    frame: 'lab' (phase on the drive) or 'rotating' (effective detuning).
    record_stride: record observables every this many steps; 0 records
        only the initial and final states.
    sector: 'full', or 'symmetric' to propagate inside the reflection-even
        subspace (the initial state must lie in it).
    """

    dt: float | None = None
    frame: str = "lab"
    record_stride: int = 0
    sector: str = "full"
    norm_tol: float = 1e-8
    record_fidelity: bool = True

    def __post_init__(self):
        if self.dt is not None and not (np.isfinite(self.dt) and self.dt > 0):
            raise DomainError("dt must be positive")
        if self.frame not in ("lab", "rotating"):
            raise DomainError(f"frame must be 'lab' or 'rotating', got {self.frame!r}")
        if self.sector not in ("full", "symmetric"):
            raise DomainError(f"sector must be 'full' or 'symmetric', got {self.sector!r}")
        if self.record_stride < 0:
            raise DomainError("record_stride must be >= 0")


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    fidelity: np.ndarray
    energy: np.ndarray
    interaction: np.ndarray
    z2: np.ndarray
    norm: np.ndarray
    final_state: np.ndarray
    seed: int | None = None
    frame: str = "lab"
    final_phase: float = 0.0
    meta: dict = field(default_factory=dict)
    # state in the frame where the laser phase at time T is zero; diagonal
    # ensembles of H(Omega, delta, phi=0) must use this one
    drive_frame_state: np.ndarray | None = None

    @property
    def final_fidelity(self) -> float:
        return float(self.fidelity[-1])

    @property
    def final_energy(self) -> float:
        return float(self.energy[-1])

    def rows(self):
        return zip(self.times, self.fidelity, self.energy, self.interaction, self.z2, self.norm)


def _step_grid(schedule: RampSchedule, dt: float, noise_dt: float | None):
    """Step intervals (start, length) covering [0, T], aligned to all breakpoints."""
    total = schedule.duration
    points = list(schedule.boundaries)
    if noise_dt is not None:
        n = int(math.floor(total / noise_dt + 1e-9))
        points.extend(noise_dt * np.arange(1, n + 1))
    pts = np.unique(np.round(np.asarray(points, dtype=float), 12))
    pts = pts[(pts >= 0) & (pts <= total)]
    # merge points closer than a rounding error
    keep = np.concatenate([[True], np.diff(pts) > 1e-9])
    pts = pts[keep]
    pts[-1] = total
    starts, lengths = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        nsub = max(1, int(math.ceil((b - a) / dt - 1e-9)))
        h = (b - a) / nsub
        starts.extend(a + h * np.arange(nsub))
        lengths.extend([h] * nsub)
    return np.asarray(starts), np.asarray(lengths)


class _Workspace:
    """Operators restricted to the propagation space (full or symmetric)."""

    def __init__(self, params: ChainParams, sector: str):
        ops = chain_operators(params)
        self.params = params
        self.sector = sector
        if sector == "symmetric":
            basis = symmetric_sector_basis(params)
            self.basis = basis
            reps = np.asarray(abs(basis).argmax(axis=0)).ravel()
            drive = basis.T @ ops.drive_x @ basis
            self.number = ops.number[reps]
            self.interaction = ops.interaction[reps]
            self.z2 = ops.z2[reps]
        else:
            self.basis = None
            drive = ops.drive_x
            self.number = ops.number
            self.interaction = ops.interaction
            self.z2 = ops.z2
        self.system = DriveSystem(drive, params.n_sites)

    def to_local(self, psi: np.ndarray) -> np.ndarray:
        if self.basis is None:
            return psi.astype(complex)
        local = self.basis.T @ psi
        leak = np.linalg.norm(psi - self.basis @ local)
        if leak > 1e-10:
            raise DomainError(f"initial state leaves the symmetric sector (residual {leak:.2e})")
        return local.astype(complex)

    def to_full(self, local: np.ndarray) -> np.ndarray:
        return local if self.basis is None else self.basis @ local

    def ground(self, omega: float, delta: float) -> tuple[float, np.ndarray]:
        sector = "symmetric" if self.sector == "symmetric" else "full"
        e0, g = ground_space(self.params, omega, delta, sector)
        if self.basis is not None:
            g = self.basis.T @ g
        return e0, g


_WORKSPACES: dict = {}


def _workspace(params: ChainParams, sector: str) -> _Workspace:
    key = (params, sector)
    if key not in _WORKSPACES:
        _WORKSPACES[key] = _Workspace(params, sector)
    return _WORKSPACES[key]


def evolve_batch(params: ChainParams, psi0: np.ndarray, schedule: RampSchedule, phis, cfg: EvolutionConfig | None = None):
    """Propagate one initial state under several phase signals at once.

    ``phis`` is a sequence whose entries are PhaseSignal or None (noiseless);
    all signals must share the same sample interval.  Returns one Trajectory
    per entry, each identical to what :func:`evolve` gives on its own.  The
    step grid is aligned to the shared noise samples, so a None entry in a
    noisy batch matches :func:`evolve` with an all-zero signal.
    """
    cfg = cfg or EvolutionConfig()
    phis = list(phis)
    if not phis:
        return []
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (params.dim,):
        raise DomainError(f"state must have length {params.dim}")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise DomainError("initial state must be normalized")
    signals = [p for p in phis if p is not None]
    noise_dt = None
    if signals:
        dts = {p.dt for p in signals}
        if len(dts) != 1:
            raise DomainError("all signals in a batch must share one sample interval")
        noise_dt = dts.pop()
        for p in signals:
            if p.duration < schedule.duration - 1e-9:
                raise CoverageError(
                    f"noise duration {p.duration} shorter than schedule {schedule.duration}"
                )
    dt = cfg.dt if cfg.dt is not None else min(1e-2, noise_dt if noise_dt else 1e-2)
    starts, lengths = _step_grid(schedule, dt, noise_dt)

    ws = _workspace(params, cfg.sector)
    m = len(phis)
    phase_tab = np.zeros((max(len(p) for p in signals), m)) if signals else None
    rate_tab = None
    if signals:
        for j, p in enumerate(phis):
            if p is not None:
                # a constant phase offset is a gauge choice: measure phi from phi(0)
                phase_tab[: len(p), j] = p.samples - p.samples[0]
        if cfg.frame == "rotating":
            rate_tab = np.zeros_like(phase_tab)
            for j, p in enumerate(phis):
                if p is not None:
                    rate_tab[: len(p), j] = signal_derivative(p).samples

    state = np.repeat(ws.to_local(psi0)[:, None], m, axis=1)
    current_phase = np.zeros(m)
    number = ws.number[:, None]

    records = {k: [] for k in ("t", "fid", "energy", "hint", "z2", "norm")}

    def record(t, chi, phase):
        omega, delta = schedule.at(t)
        norms = np.linalg.norm(chi, axis=0)
        if np.any(np.abs(norms - 1.0) > cfg.norm_tol):
            raise IntegrationError(f"norm drift {np.max(np.abs(norms - 1.0)):.3e} at t={t}")
        probs = np.abs(chi) ** 2
        diag = ws.interaction - delta * ws.number
        hchi = ws.system.apply(omega, diag, chi)
        energy = np.einsum("ij,ij->j", chi.conj(), hchi).real
        if cfg.record_fidelity:
            _, g = ws.ground(omega, delta)
            fid = np.sum(np.abs(g.conj().T @ chi) ** 2, axis=0)
        else:
            fid = np.full(m, np.nan)
        records["t"].append(t)
        records["fid"].append(fid)
        records["energy"].append(energy)
        records["hint"].append(ws.interaction @ probs)
        records["z2"].append(ws.z2 @ probs)
        records["norm"].append(norms)

    record(0.0, state, current_phase)
    nsteps = starts.size
    for step in range(nsteps):
        t0 = starts[step]
        h = lengths[step]
        tmid = t0 + 0.5 * h
        omega, delta = schedule.at(tmid)
        diag = ws.interaction - delta * ws.number
        if signals:
            j = min(int(math.floor(t0 / noise_dt + 1e-9)), phase_tab.shape[0] - 1)
            if cfg.frame == "lab":
                target = phase_tab[j]
                kick = target - current_phase
                if np.any(kick):
                    state = np.exp(-1j * number * kick[None, :]) * state
                    current_phase = target.copy()
            else:
                diag = diag[:, None] + number * rate_tab[j][None, :]
        state = ws.system.propagate(omega, diag, state, h)
        if cfg.record_stride and (step + 1) % cfg.record_stride == 0 and step + 1 < nsteps:
            record(t0 + h, state, current_phase)
    record(schedule.duration, state, current_phase)

    out = []
    for j, p in enumerate(phis):
        chi = ws.to_full(state[:, j])
        phase = current_phase[j] if cfg.frame == "lab" else 0.0
        if cfg.frame == "lab" and phase:
            final = np.exp(1j * phase * chain_operators(params).number) * chi
        else:
            final = chi
        out.append(Trajectory(
            times=np.asarray(records["t"]),
            fidelity=np.asarray([r[j] for r in records["fid"]]),
            energy=np.asarray([r[j] for r in records["energy"]]),
            interaction=np.asarray([r[j] for r in records["hint"]]),
            z2=np.asarray([r[j] for r in records["z2"]]),
            norm=np.asarray([r[j] for r in records["norm"]]),
            final_state=final,
            seed=None if p is None else p.seed,
            frame=cfg.frame,
            final_phase=float(phase),
            drive_frame_state=chi,
            meta={"dt": dt, "steps": int(nsteps), "sector": cfg.sector},
        ))
    return out


def evolve(params: ChainParams, psi0: np.ndarray, schedule: RampSchedule, phi: PhaseSignal | None = None,
           cfg: EvolutionConfig | None = None) -> Trajectory:
    """Propagate psi0 along ``schedule`` with optional laser phase noise ``phi``.

    In the lab frame the returned final state is the lab-frame wavefunction;
    in the rotating frame it is the rotating-frame one (they differ by the
    diagonal phase exp(i phi(T) n)).  Energies are <H(Omega, delta, phi=0)>
    of the frame-rotated state, fidelities the weight on the instantaneous
    ground manifold, both frame independent.
    """
    return evolve_batch(params, psi0, schedule, [phi], cfg)[0]


def instantaneous_ground_fidelity(psi: np.ndarray, omega: float, delta: float, params: ChainParams,
                                  phi: float = 0.0) -> float:
    """|<psi_gr|psi>|^2 summed over the (possibly degenerate) ground manifold of H(omega, delta, phi)."""
    psi = np.asarray(psi, dtype=complex)
    _, g = ground_space(params, omega, delta)
    if phi:
        g = np.exp(1j * phi * chain_operators(params).number)[:, None] * g
    return float(np.sum(np.abs(g.conj().T @ psi) ** 2))


@dataclass(frozen=True, eq=False)
class AdiabaticityTable:
    """ratio[m, n] = |<E_m|dH/dt|E_n>| / |E_m - E_n| over the lowest levels.

    Degenerate pairs (and the diagonal) are NaN and flagged in ``excluded``.
    """

    energies: np.ndarray
    ratio: np.ndarray
    excluded: np.ndarray

    def pair(self, m: int, n: int) -> float:
        return float(self.ratio[m, n])


def adiabaticity_diagnostic(omega: float, delta: float, omega_rate: float, delta_rate: float,
                            n_levels: int, params: ChainParams, sector: str = "symmetric") -> AdiabaticityTable:
    """Adiabatic-condition ratios for the lowest ``n_levels`` eigenstates.

    dH/dt = (dOmega/dt / 2) X - (ddelta/dt) n at phi = 0.  The default
    restricts to the reflection-even sector, where the ramp dynamics live.
    """
    eig = chain_eigensystem(params, omega, delta, sector)
    k = min(n_levels, len(eig))
    ops = chain_operators(params)
    vecs = eig.vectors[:, :k]
    hdot = 0.5 * omega_rate * (ops.drive_x @ vecs) - delta_rate * (ops.number[:, None] * vecs)
    elems = np.abs(vecs.conj().T @ hdot)
    e = eig.energies[:k]
    gaps = np.abs(e[:, None] - e[None, :])
    tol = 1e-9 * max(eig.norm, 1.0)
    excluded = gaps <= tol
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(excluded, np.nan, elems / gaps)
    return AdiabaticityTable(e, ratio, excluded)
