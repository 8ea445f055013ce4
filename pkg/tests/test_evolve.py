import numpy as np
import pytest
from scipy.linalg import expm

from rydline.analysis import ground_gap, ground_space
from rydline.errors import CoverageError, DomainError, IntegrationError
from rydline.evolve import (
    EvolutionConfig,
    RampSchedule,
    Segment,
    adiabaticity_diagnostic,
    constant_schedule,
    evolve,
    evolve_batch,
    final_ramp_schedule,
    instantaneous_ground_fidelity,
    three_step_schedule,
)
from rydline.model import (
    ChainParams,
    antisymmetric_sector_basis,
    basis_state,
    build_hamiltonian,
    total_number_operator,
)
from rydline.noisegen import PhaseSignal, generate_signal
from rydline.spectrum import synthesize_default_spectrum


def _ramp_start(params, t3):
    sched = final_ramp_schedule(t3)
    _, g = ground_space(params, *sched.start)
    return sched, g[:, 0]


# -- schedules ----------------------------------------------------------------


def test_three_step_schedule_values():
    s = three_step_schedule(10, 20, 30)
    assert s.duration == 60
    assert s.start == (0.1, -3.0) and s.end == (0.1, 1.1)
    assert s.at(5.0) == pytest.approx((0.55, -3.0))
    assert s.at(20.0) == pytest.approx((1.0, -0.95))
    assert s.at(45.0) == pytest.approx((0.55, 1.1))
    assert s.rates(45.0) == pytest.approx((-0.9 / 30, 0.0))
    np.testing.assert_allclose(s.boundaries, [0, 10, 30, 60])


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
def test_schedule_rejects_bad_durations(bad):
    with pytest.raises(DomainError):
        three_step_schedule(1.0, bad, 1.0)
    with pytest.raises(DomainError):
        final_ramp_schedule(bad)


def test_schedule_continuity_and_range():
    with pytest.raises(DomainError):
        RampSchedule((Segment(1, 0, 1, 0, 0), Segment(1, 0.5, 1, 0, 0)))
    with pytest.raises(DomainError):
        final_ramp_schedule(10).at(11.0)


# -- exact limits -------------------------------------------------------------


def test_single_site_rabi():
    p = ChainParams(1, strict=False)
    omega = 0.8
    t = np.pi / omega * 0.7
    traj = evolve(p, basis_state([0]), constant_schedule(omega, 0.0, t),
                  cfg=EvolutionConfig(dt=1e-3 / omega))
    excited = abs(traj.final_state[1]) ** 2
    assert excited == pytest.approx(np.sin(omega * t / 2) ** 2, abs=1e-10)


def test_zero_drive_keeps_populations():
    p = ChainParams(5)
    rng = np.random.default_rng(1)
    psi = rng.normal(size=p.dim) + 1j * rng.normal(size=p.dim)
    psi /= np.linalg.norm(psi)
    traj = evolve(p, psi, constant_schedule(0.0, 0.7, 13.0), cfg=EvolutionConfig(dt=0.5))
    np.testing.assert_allclose(abs(traj.final_state) ** 2, abs(psi) ** 2, atol=1e-12)


def test_noiseless_matches_dense_product():
    p = ChainParams(5)
    sched, psi0 = _ramp_start(p, 6.0)
    traj = evolve(p, psi0, sched, cfg=EvolutionConfig(dt=0.25))
    psi = psi0.astype(complex)
    for k in range(24):
        om, de = sched.at(0.25 * k + 0.125)
        psi = expm(-0.25j * build_hamiltonian(p, om, de).toarray()) @ psi
    np.testing.assert_allclose(traj.final_state, psi, atol=1e-11)


def test_lab_frame_matches_piecewise_phase_oracle():
    p = ChainParams(3)
    rng = np.random.default_rng(5)
    sig = PhaseSignal(rng.normal(scale=0.8, size=12), dt=0.5)
    sched = constant_schedule(0.9, 0.4, 5.0)
    psi0 = basis_state([0, 0, 0])
    traj = evolve(p, psi0, sched, sig, EvolutionConfig(dt=0.5))
    psi = psi0.astype(complex)
    for j in range(10):
        phi = sig.samples[j] - sig.samples[0]
        psi = expm(-0.5j * build_hamiltonian(p, 0.9, 0.4, phi).toarray()) @ psi
    np.testing.assert_allclose(traj.final_state, psi, atol=1e-11)


def test_constant_phase_is_gauge():
    p = ChainParams(5)
    sched, psi0 = _ramp_start(p, 8.0)
    flat = PhaseSignal(np.full(200, 1.3), dt=0.05)
    a = evolve(p, psi0, sched, flat, EvolutionConfig(dt=0.05))
    b = evolve(p, psi0, sched, None, EvolutionConfig(dt=0.05))
    np.testing.assert_allclose(a.final_state, b.final_state, atol=1e-12)


# -- errors -------------------------------------------------------------------


def test_noise_too_short():
    p = ChainParams(3)
    sig = PhaseSignal(np.zeros(10), dt=0.1)
    with pytest.raises(CoverageError):
        evolve(p, basis_state([0, 0, 0]), constant_schedule(1, 0, 2.0), sig)


def test_norm_check_raises():
    p = ChainParams(3)
    with pytest.raises(IntegrationError):
        evolve(p, basis_state([0, 0, 0]), constant_schedule(1, 0, 50.0),
               cfg=EvolutionConfig(dt=0.01, norm_tol=0.0, record_stride=1))


def test_bad_inputs():
    p = ChainParams(3)
    with pytest.raises(DomainError):
        evolve(p, np.ones(8), constant_schedule(1, 0, 1))
    with pytest.raises(DomainError):
        evolve(p, basis_state([1, 0, 0]), constant_schedule(1, 0, 1), cfg=EvolutionConfig(sector="symmetric"))
    with pytest.raises(DomainError):
        EvolutionConfig(frame="moving")
    with pytest.raises(DomainError):
        evolve_batch(p, basis_state([0, 0, 0]), constant_schedule(1, 0, 1),
                     [PhaseSignal(np.zeros(40), 0.1), PhaseSignal(np.zeros(40), 0.05)])


# -- structure ----------------------------------------------------------------


def test_noisy_evolution_stays_symmetric():
    p = ChainParams(7)
    sched, psi0 = _ramp_start(p, 20.0)
    sig = generate_signal(synthesize_default_spectrum(height=0.1), seed=11)
    traj = evolve(p, psi0, sched, sig, EvolutionConfig(dt=0.1))
    anti = antisymmetric_sector_basis(p)
    assert np.linalg.norm(anti.T @ traj.final_state) ** 2 < 1e-8


def test_sector_propagation_equals_full():
    p = ChainParams(7)
    sched, psi0 = _ramp_start(p, 15.0)
    sig = generate_signal(synthesize_default_spectrum(), seed=2)
    full = evolve(p, psi0, sched, sig, EvolutionConfig(dt=0.1))
    sym = evolve(p, psi0, sched, sig, EvolutionConfig(dt=0.1, sector="symmetric"))
    np.testing.assert_allclose(sym.final_state, full.final_state, atol=1e-10)
    assert sym.final_fidelity == pytest.approx(full.final_fidelity, abs=1e-10)


def test_batch_equals_single_and_is_deterministic():
    p = ChainParams(5)
    sched, psi0 = _ramp_start(p, 12.0)
    spec = synthesize_default_spectrum(height=0.05)
    sigs = [generate_signal(spec, s) for s in (1, 2)]
    cfg = EvolutionConfig(dt=0.1, record_stride=10)
    batch = evolve_batch(p, psi0, sched, sigs + [None], cfg)
    # a None entry shares the batch's noise-aligned step grid, like a zero signal
    zero = PhaseSignal(np.zeros(len(sigs[0])), sigs[0].dt)
    for sig, tb in zip(sigs + [zero], batch):
        single = evolve(p, psi0, sched, sig, cfg)
        np.testing.assert_allclose(tb.final_state, single.final_state, atol=1e-13)
        np.testing.assert_allclose(tb.fidelity, single.fidelity, atol=1e-13)
    again = evolve_batch(p, psi0, sched, sigs + [None], cfg)
    np.testing.assert_array_equal(again[0].final_state, batch[0].final_state)


def test_frames_agree_for_smooth_phase():
    p = ChainParams(5)
    sched, psi0 = _ramp_start(p, 10.0)
    t = 0.002 * np.arange(6000)
    sig = PhaseSignal(0.4 * np.sin(2 * np.pi * 0.3 * t), 0.002)
    lab = evolve(p, psi0, sched, sig, EvolutionConfig(dt=0.002, frame="lab"))
    rot = evolve(p, psi0, sched, sig, EvolutionConfig(dt=0.002, frame="rotating"))
    assert abs(lab.final_fidelity - rot.final_fidelity) < 1e-3
    assert abs(lab.interaction[-1] - rot.interaction[-1]) < 1e-3
    # states differ by the diagonal rotation exp(i phi(T) n)
    phase = np.exp(1j * lab.final_phase * total_number_operator(p).diagonal().real)
    assert abs(np.vdot(phase * rot.final_state, lab.final_state)) ** 2 > 1 - 1e-3


def test_second_order_convergence():
    p = ChainParams(5)
    sched, psi0 = _ramp_start(p, 10.0)
    states = {dt: evolve(p, psi0, sched, cfg=EvolutionConfig(dt=dt)).final_state for dt in (0.5, 0.25, 0.01)}
    e1 = np.linalg.norm(states[0.5] - states[0.01])
    e2 = np.linalg.norm(states[0.25] - states[0.01])
    assert 3.2 < e1 / e2 < 4.8


def test_recording_and_norm():
    p = ChainParams(5)
    sched, psi0 = _ramp_start(p, 5.0)
    traj = evolve(p, psi0, sched, cfg=EvolutionConfig(dt=0.1, record_stride=5))
    assert traj.times[0] == 0 and traj.times[-1] == pytest.approx(5.0)
    assert traj.times.size == 11
    assert np.max(np.abs(traj.norm - 1)) < 1e-10
    assert traj.fidelity[0] == pytest.approx(1.0, abs=1e-12)
    e0, _ = ground_space(p, *sched.start)
    assert traj.energy[0] == pytest.approx(e0, abs=1e-12)
    assert traj.final_fidelity == pytest.approx(
        instantaneous_ground_fidelity(traj.final_state, *sched.end, p), abs=1e-12)


def test_slower_noiseless_ramp_is_better():
    p = ChainParams(7)
    fids = []
    for t3 in (45.0, 90.0):
        sched, psi0 = _ramp_start(p, t3)
        fids.append(evolve(p, psi0, sched, cfg=EvolutionConfig(dt=0.1, sector="symmetric")).final_fidelity)
    assert fids[1] > fids[0]


# -- adiabaticity -------------------------------------------------------------


def test_adiabaticity_static_is_zero():
    p = ChainParams(5)
    tab = adiabaticity_diagnostic(0.5, 1.1, 0.0, 0.0, 4, p)
    finite = tab.ratio[~tab.excluded]
    assert finite.size == 12 and np.all(finite == 0)
    assert np.all(np.isnan(np.diag(tab.ratio)))


def test_adiabaticity_scales_with_rate():
    p = ChainParams(7)
    a = adiabaticity_diagnostic(0.5, 1.1, -0.02, 0.01, 5, p)
    b = adiabaticity_diagnostic(0.5, 1.1, -0.01, 0.005, 5, p)
    np.testing.assert_allclose(b.ratio[~b.excluded], 0.5 * a.ratio[~a.excluded], rtol=1e-12)
    assert a.pair(0, 1) == pytest.approx(a.pair(1, 0))


def test_adiabaticity_peaks_near_gap_minimum():
    p = ChainParams(9)
    omegas = np.round(np.arange(0.1, 1.0001, 0.05), 3)
    ratios = [adiabaticity_diagnostic(o, 1.1, -0.01, 0.0, 2, p).pair(0, 1) for o in omegas]
    gaps = [ground_gap(o, 1.1, p)[0] for o in omegas]
    assert abs(omegas[np.argmax(ratios)] - omegas[np.argmin(gaps)]) <= 0.1


def test_drive_frame_state_carries_the_fidelity():
    p = ChainParams(5)
    sched = constant_schedule(0.6, 1.1, 30.0)
    _, g = ground_space(p, 0.6, 1.1)
    sig = generate_signal(synthesize_default_spectrum(height=0.5), seed=9)
    traj = evolve(p, g[:, 0], sched, sig, EvolutionConfig(dt=0.125))
    assert abs(traj.final_phase) > 1e-3
    f_drive = instantaneous_ground_fidelity(traj.drive_frame_state, 0.6, 1.1, p)
    f_lab = instantaneous_ground_fidelity(traj.final_state, 0.6, 1.1, p, phi=traj.final_phase)
    assert f_drive == pytest.approx(traj.final_fidelity, abs=1e-12)
    assert f_lab == pytest.approx(traj.final_fidelity, abs=1e-12)
