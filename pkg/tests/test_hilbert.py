import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluxband.hilbert import (
    DensityMatrix,
    HilbertError,
    Operator,
    StateVector,
    basis_index,
    basis_labels,
    basis_state,
    embed,
    embed_diagonal,
    identity,
    kron,
    ladder,
    partial_trace,
    projector,
)


def random_matrix(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


class TestLadder:
    @pytest.mark.parametrize("dim", [2, 3, 5, 9])
    def test_commutator_is_identity_below_truncation(self, dim):
        a = ladder(dim).data
        comm = a @ a.conj().T - a.conj().T @ a
        expected = np.eye(dim)
        expected[-1, -1] = 1 - dim
        np.testing.assert_allclose(comm, expected, atol=1e-14)

    def test_number_operator_spectrum(self):
        a = ladder(6).data
        np.testing.assert_allclose(np.diag(a.conj().T @ a).real, np.arange(6))

    def test_too_small(self):
        with pytest.raises(HilbertError):
            ladder(1)


class TestOperator:
    def test_shape_mismatch(self):
        with pytest.raises(HilbertError):
            Operator(np.eye(3), (2,))

    def test_dims_mismatch_in_algebra(self):
        with pytest.raises(HilbertError):
            identity((2, 3)) + identity((3, 2))

    def test_read_only(self):
        op = identity((2,))
        with pytest.raises(ValueError):
            op.data[0, 0] = 5

    def test_hermiticity(self):
        rng = np.random.default_rng(1)
        m = random_matrix(rng, 4)
        assert Operator(m + m.conj().T, (2, 2)).is_hermitian()
        assert not Operator(m, (2, 2)).is_hermitian()

    def test_algebra(self):
        rng = np.random.default_rng(2)
        a, b = random_matrix(rng, 3), random_matrix(rng, 3)
        A, B = Operator(a, (3,)), Operator(b, (3,))
        np.testing.assert_allclose((A @ B).data, a @ b)
        np.testing.assert_allclose((2 * A - B).data, 2 * a - b)
        np.testing.assert_allclose((-A).dag().data, -a.conj().T)


class TestEmbedding:
    def test_embed_matches_explicit_kron(self):
        rng = np.random.default_rng(3)
        op = Operator(random_matrix(rng, 3), (3,))
        dims = (2, 3, 4)
        expected = np.kron(np.kron(np.eye(2), op.data), np.eye(4))
        np.testing.assert_allclose(embed(op, 1, dims).data, expected)

    def test_embed_wrong_dimension(self):
        with pytest.raises(HilbertError):
            embed(ladder(3), 0, (2, 3))

    def test_embed_bad_slot(self):
        with pytest.raises(HilbertError):
            embed(ladder(2), 3, (2, 2))

    def test_embed_diagonal_matches_embed(self):
        values = np.array([0.5, -1.0, 2.0])
        dims = (2, 3, 2)
        direct = embed(Operator(np.diag(values), (3,)), 1, dims).data
        np.testing.assert_allclose(embed_diagonal(values, 1, dims), np.diag(direct).real)

    def test_embed_diagonal_batched(self):
        values = np.arange(6.0).reshape(2, 3)
        out = embed_diagonal(values, 0, (3, 2))
        assert out.shape == (2, 6)
        np.testing.assert_allclose(out[1], np.repeat(values[1], 2))

    def test_operators_on_different_slots_commute(self):
        dims = (3, 2, 4)
        a = embed(ladder(3), 0, dims)
        b = embed(ladder(4), 2, dims)
        np.testing.assert_allclose((a @ b - b @ a).data, 0)


class TestPartialTrace:
    def test_against_explicit_loop(self):
        rng = np.random.default_rng(4)
        dims = (2, 3, 2)
        m = random_matrix(rng, 12)
        out = partial_trace(Operator(m, dims), keep=[0, 2]).data
        t = m.reshape(dims + dims)
        expected = np.zeros((2, 2, 2, 2), dtype=complex)
        for i in range(2):
            for k in range(2):
                for ip in range(2):
                    for kp in range(2):
                        expected[i, k, ip, kp] = sum(t[i, j, k, ip, j, kp] for j in range(3))
        np.testing.assert_allclose(out, expected.reshape(4, 4))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 10_000))
    def test_product_operator_factorizes(self, d1, d2, seed):
        rng = np.random.default_rng(seed)
        a, b = random_matrix(rng, d1), random_matrix(rng, d2)
        prod = kron(Operator(a, (d1,)), Operator(b, (d2,)))
        np.testing.assert_allclose(partial_trace(prod, [0]).data, a * np.trace(b), atol=1e-10)
        np.testing.assert_allclose(partial_trace(prod, [1]).data, b * np.trace(a), atol=1e-10)

    def test_keep_nothing_gives_trace(self):
        rng = np.random.default_rng(5)
        m = random_matrix(rng, 6)
        out = partial_trace(Operator(m, (2, 3)), keep=[])
        np.testing.assert_allclose(out.data[0, 0], np.trace(m))

    def test_bad_slot(self):
        with pytest.raises(HilbertError):
            partial_trace(identity((2, 2)), keep=[2])


class TestBasis:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.data())
    def test_index_roundtrip(self, dims, data):
        labels = [data.draw(st.integers(0, d - 1)) for d in dims]
        idx = basis_index(labels, dims)
        assert basis_labels(idx, dims) == tuple(labels)

    def test_last_slot_fastest(self):
        assert basis_index((1, 0, 2), (2, 4, 5)) == 1 * 20 + 2
        assert basis_index((0, 1, 0), (2, 4, 5)) == 5

    def test_out_of_range(self):
        with pytest.raises(HilbertError):
            basis_index((2, 0), (2, 2))

    def test_basis_state_and_projector(self):
        psi = basis_state((1, 2), (2, 3))
        assert psi[5] == 1 and np.count_nonzero(psi) == 1
        p = embed(projector(1, 1, 2), 0, (2, 3)).data
        np.testing.assert_allclose(p @ psi, psi)

    def test_projector_range(self):
        with pytest.raises(HilbertError):
            projector(0, 3, 3)


class TestStates:
    def test_state_normalization(self):
        with pytest.raises(HilbertError):
            StateVector(np.array([1.0, 1.0]), (2,))
        psi = StateVector(np.array([1.0, 1.0j]) / np.sqrt(2), (2,))
        rho = psi.density()
        assert abs(np.trace(rho.matrix) - 1) < 1e-12

    def test_density_validation(self):
        with pytest.raises(HilbertError):
            DensityMatrix(np.diag([1.5, -0.5]), (2,))
        with pytest.raises(HilbertError):
            DensityMatrix(np.array([[0.5, 0.3], [0.1, 0.5]]), (2,))
        with pytest.raises(HilbertError):
            DensityMatrix(np.eye(2), (2,))
