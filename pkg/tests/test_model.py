from functools import reduce

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rydline.errors import DomainError, FormatError
from rydline.model import (
    ChainParams,
    OperatorMatrix,
    antisymmetric_sector_basis,
    basis_index,
    basis_state,
    build_hamiltonian,
    interaction_observable,
    load_operator,
    load_state,
    reflection_operator,
    save_operator,
    save_state,
    symmetric_sector_basis,
    total_number_operator,
    z2_order_parameter,
)

# independent Kronecker-product oracle, site 1 = leftmost factor (most significant bit)
I2 = np.eye(2)
P1 = np.diag([0.0, 1.0])
LOWER = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|


def site_op(op, k, n):
    return reduce(np.kron, [op if j == k else I2 for j in range(n)])


def kron_hamiltonian(n, omega, delta, phi, vdd=1.0):
    h = np.zeros((2**n, 2**n), dtype=complex)
    flip = np.exp(-1j * phi) * LOWER
    flip = flip + flip.conj().T
    for k in range(n):
        h += 0.5 * omega * site_op(flip, k, n) - delta * site_op(P1, k, n)
        for l in range(k + 1, n):
            h += vdd * site_op(P1, k, n) @ site_op(P1, l, n) / (l - k) ** 3
    return h


finite = st.floats(-5, 5, allow_nan=False)


def test_params_validation():
    with pytest.raises(DomainError):
        ChainParams(4)
    with pytest.raises(DomainError):
        ChainParams(1)
    with pytest.raises(DomainError):
        ChainParams(15)
    with pytest.raises(DomainError):
        ChainParams(5, v_dd=0.0)
    with pytest.raises(DomainError):
        ChainParams(5, interaction_exponent=6)
    assert ChainParams(4, strict=False).dim == 16


@pytest.mark.parametrize("n", [1, 2, 3, 5])
@pytest.mark.parametrize("omega,delta,phi", [(0.0, 0.0, 0.0), (1.3, -0.4, 0.0), (0.7, 1.1, 0.9), (2.0, 3.0, -2.5)])
def test_hamiltonian_matches_kron_oracle(n, omega, delta, phi):
    h = build_hamiltonian(ChainParams(n, strict=False), omega, delta, phi).toarray()
    np.testing.assert_allclose(h, kron_hamiltonian(n, omega, delta, phi), atol=1e-14)


def test_three_site_diagonal_entry():
    h = build_hamiltonian(ChainParams(3), 0.0, 0.0, 0.0)
    assert h.is_diagonal()
    assert h.diagonal()[basis_index("101")] == pytest.approx(1 / 8)


def test_two_site_enumeration():
    delta = 0.37
    h = build_hamiltonian(ChainParams(2, strict=False), 0.0, delta)
    np.testing.assert_allclose(h.diagonal().real, [0, -delta, -delta, -2 * delta + 1.0])


@given(finite, finite, finite)
def test_hermitian(omega, delta, phi):
    h = build_hamiltonian(ChainParams(5), omega, delta, phi)
    assert h.hermiticity_residual() < 1e-12


def test_nonfinite_parameters_rejected():
    with pytest.raises(DomainError):
        build_hamiltonian(ChainParams(3), np.nan, 0.0)


def test_linearity_in_parameters():
    p = ChainParams(5)
    rng = np.random.default_rng(0)
    for _ in range(5):
        o1, o2, d1, d2, phi, lam = rng.uniform(-2, 2, 6)
        hint = interaction_observable(p).toarray()
        a = build_hamiltonian(p, o1, d1, phi).toarray() - hint
        b = build_hamiltonian(p, o2, d2, phi).toarray() - hint
        mix = build_hamiltonian(p, lam * o1 + (1 - lam) * o2, lam * d1 + (1 - lam) * d2, phi).toarray() - hint
        np.testing.assert_allclose(mix, lam * a + (1 - lam) * b, atol=1e-13)
    p2 = ChainParams(5, v_dd=2.5)
    np.testing.assert_allclose(interaction_observable(p2).toarray(), 2.5 * interaction_observable(p).toarray())


def test_interaction_observable_examples():
    p = ChainParams(5)
    hint = interaction_observable(p)
    assert hint.expectation(basis_state("00000")) == 0.0
    # explicit pair sum: (1,3), (3,5) at distance 2 and (1,5) at distance 4
    assert hint.expectation(basis_state("10101")) == pytest.approx(2 / 8 + 1 / 64, abs=1e-12)
    assert hint.expectation(basis_state("10101")) == pytest.approx(0.265625, abs=1e-12)
    assert interaction_observable(ChainParams(2, strict=False)).expectation(basis_state("11")) == 1.0
    assert np.all(hint.diagonal().real >= 0)
    np.testing.assert_allclose(hint.toarray(), build_hamiltonian(p, 0, 0, 0).toarray())


def z2_oracle(bits):
    n = len(bits)
    s = [2 * b - 1 for b in bits]
    tot = sum((-1) ** (k + l) * s[k] * s[l] for k in range(n) for l in range(n) if k != l)
    return tot / (n * (n - 1))


def test_z2_examples():
    z2 = z2_order_parameter(ChainParams(5))
    assert z2.expectation(basis_state("10101")) == 1.0
    assert z2.expectation(basis_state("01010")) == 1.0
    assert z2.expectation(basis_state("00000")) == -0.2


def test_z2_against_double_sum_oracle():
    p = ChainParams(7)
    diag = z2_order_parameter(p).diagonal().real
    rng = np.random.default_rng(1)
    for idx in rng.integers(0, p.dim, 40):
        bits = [int(c) for c in format(idx, "07b")]
        assert diag[idx] == pytest.approx(z2_oracle(bits), abs=1e-15)
    assert np.all(np.abs(diag) <= 1 + 1e-15)


def test_number_operator():
    p = ChainParams(5)
    nop = total_number_operator(p)
    assert nop.expectation(basis_state("00000")) == 0
    assert nop.expectation(basis_state("10101")) == 3
    assert nop.diagonal().real.sum() == 5 * 2**4
    assert set(np.unique(nop.diagonal().real)) == set(range(6))


def test_diagonal_operators_commute():
    p = ChainParams(5)
    ops = [interaction_observable(p).matrix, total_number_operator(p).matrix, z2_order_parameter(p).matrix]
    for a in ops:
        for b in ops:
            assert abs(a @ b - b @ a).max() == 0 if (a @ b - b @ a).nnz else True


def test_reflection_operator():
    p = ChainParams(3)
    r = reflection_operator(p)
    np.testing.assert_array_equal(r @ basis_state("100"), basis_state("001"))
    np.testing.assert_array_equal(r @ basis_state("101"), basis_state("101"))
    rr = (r @ r).toarray()
    np.testing.assert_array_equal(rr, np.eye(8))
    assert r.hermiticity_residual() == 0


def test_reflection_commutes_with_hamiltonian():
    p = ChainParams(7)
    r = reflection_operator(p).matrix
    rng = np.random.default_rng(2)
    for omega, delta, phi in rng.uniform(-3, 3, (20, 3)):
        h = build_hamiltonian(p, omega, delta, phi).matrix
        comm = h @ r - r @ h
        assert (abs(comm).max() if comm.nnz else 0.0) < 1e-12


def test_spectrum_phase_independent():
    p = ChainParams(5)
    ref = np.linalg.eigvalsh(build_hamiltonian(p, 0.8, 0.6, 0.0).toarray())
    for phi in (0.7, np.pi):
        e = np.linalg.eigvalsh(build_hamiltonian(p, 0.8, 0.6, phi).toarray())
        np.testing.assert_allclose(e, ref, atol=1e-10)


@pytest.mark.parametrize("n", [3, 5, 7, 9, 11])
def test_sector_dimensions_and_orthonormality(n):
    p = ChainParams(n)
    b = symmetric_sector_basis(p)
    a = antisymmetric_sector_basis(p)
    assert b.shape[1] == (2**n + 2 ** ((n + 1) // 2)) // 2
    assert a.shape[1] + b.shape[1] == 2**n
    np.testing.assert_allclose((b.T @ b).toarray(), np.eye(b.shape[1]), atol=1e-14)
    assert abs(a.T @ b).max() < 1e-14 if (a.T @ b).nnz else True
    r = reflection_operator(p).matrix
    assert abs(r @ b - b).max() < 1e-14
    assert abs(r @ a + a).max() < 1e-14


def test_three_site_symmetric_sector():
    b = symmetric_sector_basis(ChainParams(3)).toarray()
    assert b.shape == (8, 6)
    proj = b @ b.T
    np.testing.assert_allclose(proj @ proj, proj, atol=1e-12)


def test_ground_state_is_reflection_even():
    p = ChainParams(7)
    e, v = np.linalg.eigh(build_hamiltonian(p, 0.1, 1.1).toarray())
    a = antisymmetric_sector_basis(p)
    assert np.linalg.norm(a.T @ v[:, 0]) < 1e-10


def test_basis_helpers():
    assert basis_index("101") == 5
    assert basis_index([1, 1, 0]) == 6
    with pytest.raises(DomainError):
        basis_index([2])


def test_binary_roundtrip(tmp_path):
    p = ChainParams(3)
    h = build_hamiltonian(p, 0.5, 0.2, 0.3)
    save_operator(tmp_path / "h.bin", h)
    back = load_operator(tmp_path / "h.bin")
    np.testing.assert_allclose(back.toarray(), h.toarray(), atol=1e-7)
    raw = (tmp_path / "h.bin").read_bytes()
    assert len(raw) == 16 + 64 * 8
    assert int.from_bytes(raw[:8], "little") == 8
    psi = basis_state("010") * np.exp(0.3j)
    save_state(tmp_path / "s.bin", psi)
    np.testing.assert_allclose(load_state(tmp_path / "s.bin"), psi, atol=1e-7)
    with pytest.raises(FormatError):
        load_state(tmp_path / "h.bin")
    (tmp_path / "bad.bin").write_bytes(raw[:20])
    with pytest.raises(FormatError):
        load_operator(tmp_path / "bad.bin")


def test_operator_matrix_validation():
    with pytest.raises(DomainError):
        OperatorMatrix(np.zeros((3, 3)))
    with pytest.raises(DomainError):
        OperatorMatrix(np.zeros((2, 4)))
