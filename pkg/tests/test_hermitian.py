import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isaclab.errors import NotPositiveDefinite, NotPSD
from isaclab.hermitian import HermitianMatrix, eigh_desc, inv_pd, is_psd, sqrt_psd


def random_hermitian(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a + a.conj().T) / 2


def random_pd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a @ a.conj().T + 0.1 * np.eye(n))


class TestHermitianMatrix:
    def test_symmetrizes_and_zeroes_diag_imag(self):
        m = HermitianMatrix(np.array([[1.0 + 1e-9j, 2 + 1j], [2 - 1j, 3.0]]))
        assert np.array_equal(m.mat, m.mat.conj().T)
        assert np.all(m.mat.diagonal().imag == 0.0)

    def test_rejects_grossly_non_hermitian(self):
        with pytest.raises(ValueError):
            HermitianMatrix(np.array([[0.0, 1.0], [5.0, 0.0]]))

    def test_immutable(self):
        m = HermitianMatrix(np.eye(2))
        with pytest.raises(ValueError):
            m.mat[0, 0] = 7.0


class TestEighDesc:
    def test_identity(self):
        ed = eigh_desc(np.eye(3))
        assert np.allclose(ed.eigenvalues, [1, 1, 1])

    def test_diagonal_permutation(self):
        ed = eigh_desc(np.diag([1.0, 4.0, 2.0]))
        assert np.allclose(ed.eigenvalues, [4, 2, 1])
        # eigenvectors are permuted identity columns
        expected = np.eye(3)[:, [1, 2, 0]]
        assert np.allclose(ed.eigenvectors, expected)

    def test_hand_characteristic_polynomial(self):
        # det([[2-x, 1], [1, 2-x]]) = (2-x)^2 - 1 -> x = 3, 1
        ed = eigh_desc(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(ed.eigenvalues, [3.0, 1.0], atol=1e-14)

    def test_reconstruction(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = random_hermitian(rng, 6)
            ed = eigh_desc(m)
            rel = np.linalg.norm(ed.reconstruct() - m) / np.linalg.norm(m)
            assert rel < 1e-10

    def test_unitary(self):
        rng = np.random.default_rng(1)
        m = random_hermitian(rng, 8)
        u = eigh_desc(m).eigenvectors
        assert np.linalg.norm(u.conj().T @ u - np.eye(8)) < 1e-10

    def test_deterministic_bits(self):
        rng = np.random.default_rng(2)
        m = random_hermitian(rng, 7)
        e1, e2 = eigh_desc(m.copy()), eigh_desc(m.copy())
        assert np.array_equal(e1.eigenvalues, e2.eigenvalues)
        assert np.array_equal(e1.eigenvectors, e2.eigenvectors)

    def test_phase_convention(self):
        rng = np.random.default_rng(3)
        ed = eigh_desc(random_hermitian(rng, 5))
        for j in range(5):
            col = ed.eigenvectors[:, j]
            first = col[np.abs(col) > 1e-12 * np.abs(col).max()][0]
            assert abs(first.imag) < 1e-12 and first.real > 0

    def test_degenerate_reproducible(self):
        # eigenvalue 1 with multiplicity 2: ordering must still be stable
        rng = np.random.default_rng(4)
        q = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))[0]
        m = q @ np.diag([2.0, 1.0, 1.0]) @ q.conj().T
        e1, e2 = eigh_desc(m), eigh_desc(m)
        assert np.array_equal(e1.eigenvectors, e2.eigenvectors)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_reconstruction_property(self, seed):
        rng = np.random.default_rng(seed)
        m = random_hermitian(rng, int(rng.integers(2, 9)))
        ed = eigh_desc(m)
        assert np.linalg.norm(ed.reconstruct() - m) <= 1e-10 * max(np.linalg.norm(m), 1)


class TestInvPd:
    def test_identity(self):
        assert np.allclose(inv_pd(np.eye(3)).mat, np.eye(3))

    def test_diagonal(self):
        assert np.allclose(inv_pd(np.diag([2.0, 4.0])).mat, np.diag([0.5, 0.25]))

    def test_multiply_back(self):
        rng = np.random.default_rng(5)
        m = random_pd(rng, 4)
        prod = m @ inv_pd(m).mat
        assert np.linalg.norm(prod - np.eye(4)) / np.linalg.norm(np.eye(4)) < 1e-9

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            inv_pd(np.diag([1.0, -1.0]))

    def test_tolerance_scales_with_trace(self):
        # matrix with huge trace: a proportional floor eigenvalue must pass
        m = np.diag([1e13, 1e13, 1e4])
        inv_pd(m)  # 1e4 > 1e-12 * trace/dim ~ 6.7
        with pytest.raises(NotPositiveDefinite):
            inv_pd(np.diag([1e13, 1e13, 1e-3]))

    def test_trace_identity(self):
        rng = np.random.default_rng(6)
        m = random_pd(rng, 5)
        tr = float(np.trace(inv_pd(m).mat).real)
        expected = np.sum(1.0 / eigh_desc(m).eigenvalues)
        assert abs(tr - expected) / expected < 1e-9


class TestSqrtPsd:
    def test_diagonal(self):
        assert np.allclose(sqrt_psd(np.diag([4.0, 9.0])).mat, np.diag([2.0, 3.0]))

    def test_zero(self):
        assert np.allclose(sqrt_psd(np.zeros((3, 3))).mat, 0.0)

    def test_rank_one(self):
        # sqrt of v v^H is v v^H / ||v||; here ||v|| = 2
        v = np.array([2.0, 0.0, 0.0], dtype=complex)
        s = sqrt_psd(np.outer(v, v.conj()))
        assert np.allclose(s.mat, np.outer(v, v.conj()) / 2.0)

    def test_square_back(self):
        rng = np.random.default_rng(7)
        m = random_pd(rng, 5)
        s = sqrt_psd(m).mat
        assert np.linalg.norm(s @ s - m) / np.linalg.norm(m) < 1e-9

    def test_rejects_negative(self):
        with pytest.raises(NotPSD):
            sqrt_psd(np.diag([1.0, -0.5]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_idempotent_under_squaring(self, seed):
        rng = np.random.default_rng(seed)
        m = random_pd(rng, int(rng.integers(2, 7)))
        s = sqrt_psd(m).mat
        assert np.linalg.norm(s @ s - m) <= 1e-9 * np.linalg.norm(m)


class TestIsPsd:
    def test_identity(self):
        assert is_psd(np.eye(4), 1e-10)

    def test_indefinite(self):
        assert not is_psd(np.diag([1.0, -1.0]), 1e-10)

    def test_tolerance(self):
        assert is_psd(np.diag([1.0, -1e-12]), 1e-10)
