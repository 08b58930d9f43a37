import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opconc.errors import DomainError, PreconditionError, SymmetryError
from opconc.policy import policy_override
from opconc.specmat import (
    SymMatrix,
    apply_spectral_fn,
    batch_spectral,
    eigh,
    eigvals,
    intrinsic_dimension,
    is_psd,
    lambda_max,
    lambda_min,
    loewner_leq,
    op_norm,
    trace,
    trace_fn,
)


def sym_matrices(max_dim=6):
    def build(args):
        d, data = args
        a = np.array(data[: d * d]).reshape(d, d)
        return a + a.T

    return st.integers(1, max_dim).flatmap(
        lambda d: st.tuples(
            st.just(d),
            st.lists(st.floats(-10, 10, allow_nan=False), min_size=d * d, max_size=d * d),
        )
    ).map(build)


class TestSymMatrix:
    def test_small_asymmetry_is_symmetrized(self):
        m = SymMatrix([[1.0, 2.0 + 1e-14], [2.0, 3.0]])
        assert np.array_equal(m.values, m.values.T)
        assert m.values[0, 1] == pytest.approx(2.0, abs=1e-13)

    def test_large_asymmetry_rejected(self):
        with pytest.raises(SymmetryError):
            SymMatrix([[1.0, 2.0], [2.1, 3.0]])

    def test_asymmetry_tolerance_follows_policy(self):
        with policy_override(sym_tol=0.2):
            SymMatrix([[1.0, 2.0], [2.1, 3.0]])

    @pytest.mark.parametrize("bad", [[[np.nan]], [[1.0, np.inf], [np.inf, 1.0]]])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(ValueError):
            SymMatrix(bad)

    @pytest.mark.parametrize("shape", [(2, 3), (0, 0), (2, 2, 2)])
    def test_bad_shape(self, shape):
        with pytest.raises(ValueError):
            SymMatrix(np.zeros(shape))

    def test_immutable(self):
        m = SymMatrix.identity(2)
        with pytest.raises(ValueError):
            m.values[0, 0] = 5.0

    def test_arithmetic_and_json_roundtrip(self):
        a = SymMatrix([[2.0, 1.0], [1.0, 0.0]])
        b = SymMatrix.identity(2)
        assert (a + b - b) == a
        assert (2 * a / 2) == a
        assert (-a).values[0, 0] == -2.0
        assert SymMatrix.from_json(a.to_json()) == a
        assert hash(SymMatrix.from_json(a.to_json())) == hash(a)

    def test_from_json_dim_mismatch(self):
        with pytest.raises(ValueError):
            SymMatrix.from_json({"dim": 3, "rows": [[1.0, 0.0], [0.0, 1.0]]})


class TestSpectral:
    def test_identity_spectrum(self):
        decomp = eigh(SymMatrix.identity(3))
        assert np.array_equal(decomp.eigenvalues, [1.0, 1.0, 1.0])
        assert np.allclose(decomp.eigenvectors.T @ decomp.eigenvectors, np.eye(3))

    def test_descending_order(self):
        w = eigvals(SymMatrix.diag([1.0, 5.0, -2.0]))
        assert list(w) == [5.0, 1.0, -2.0]

    def test_exp_of_zero_is_identity(self):
        out = apply_spectral_fn(SymMatrix.zeros(3), np.exp)
        assert np.array_equal(out.values, np.eye(3))

    def test_scalar_function_accepted(self):
        import math

        out = apply_spectral_fn(SymMatrix.diag([0.0, 1.0]), math.exp)
        assert np.allclose(np.diag(out.values), [1.0, np.e])

    def test_log_of_singular_names_eigenvalue(self):
        with pytest.raises(DomainError, match="0.0"):
            apply_spectral_fn(SymMatrix.diag([1.0, 0.0]), np.log)

    def test_scalar_reductions(self):
        a = SymMatrix.diag([3.0, -4.0, 1.0])
        assert trace(a) == 0.0
        assert lambda_max(a) == 3.0
        assert lambda_min(a) == -4.0
        assert op_norm(a) == 4.0
        assert trace_fn(a, np.abs) == 8.0

    @given(sym_matrices())
    @settings(max_examples=60, deadline=None)
    def test_reconstruction(self, a):
        decomp = eigh(a)
        assert np.allclose(decomp.reconstruct(), a, atol=1e-9 * max(1.0, np.abs(a).max()))

    @given(sym_matrices())
    @settings(max_examples=60, deadline=None)
    def test_op_norm_dominates_entries(self, a):
        assert op_norm(a) >= np.abs(a).max() - 1e-9

    def test_batch_spectral_matches_single(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((5, 3, 3))
        x = x + np.swapaxes(x, 1, 2)
        out = batch_spectral(x, np.exp)
        for k in range(5):
            assert np.allclose(out[k], apply_spectral_fn(x[k], np.exp).values)


class TestIntrinsicDimension:
    def test_identity(self):
        assert intrinsic_dimension(SymMatrix.identity(7)) == 7.0

    def test_rank_one(self):
        v = np.array([1.0, 2.0, 2.0])
        assert intrinsic_dimension(np.outer(v, v)) == pytest.approx(1.0)

    def test_zero_matrix(self):
        with pytest.raises(PreconditionError):
            intrinsic_dimension(SymMatrix.zeros(2))

    def test_indefinite(self):
        with pytest.raises(PreconditionError):
            intrinsic_dimension(SymMatrix.diag([1.0, -1.0]))

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=20).filter(lambda w: max(w) > 1e-6))
    def test_between_one_and_rank(self, w):
        r = intrinsic_dimension(SymMatrix.diag(w))
        rank = sum(1 for x in w if x > 0)
        assert 1.0 - 1e-12 <= r <= rank + 1e-12


class TestLoewner:
    def test_basic(self):
        assert loewner_leq(SymMatrix.diag([1.0, 1.0]), SymMatrix.diag([2.0, 1.0]))
        assert not loewner_leq(SymMatrix.diag([1.0, 3.0]), SymMatrix.diag([2.0, 1.0]))

    def test_self(self):
        a = SymMatrix([[2.0, 1.0], [1.0, 2.0]])
        assert loewner_leq(a, a)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            loewner_leq(SymMatrix.identity(2), SymMatrix.identity(3))

    def test_psd(self):
        assert is_psd(SymMatrix.diag([0.0, 1.0]))
        assert not is_psd(SymMatrix.diag([-1e-3, 1.0]))
