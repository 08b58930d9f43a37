"""Reference values are 40-digit mpmath evaluations of the closed forms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opconc.bounds import (
    CSV_FIELDS,
    DegenerateRadiusWarning,
    Mode,
    VarianceProxy,
    ambient_subgaussian_bound,
    bennett_bound,
    bernstein_bound,
    bernstein_relaxed_mean_tail,
    bernstein_relaxed_radius,
    confidence_radius,
    confidence_radius_from_variance,
    hoeffding_bound,
    master_bound,
    master_bound_at,
    subexponential_bound,
    subgaussian_bound,
    trace_exp_gap,
)
from opconc.errors import PreconditionError
from opconc.psi import E_OVER_E_MINUS_1, PsiFn

E_E1 = 1.5819767068693264244


def test_prefactors():
    assert Mode.MAX_EIG.prefactor == pytest.approx(E_E1, rel=1e-15)
    assert Mode.OP_NORM.prefactor == 2.0
    assert Mode.parse("OpNorm") is Mode.OP_NORM
    with pytest.raises(ValueError):
        Mode.parse("trace")


class TestVarianceProxy:
    def test_d_prime_below_one_rejected(self):
        with pytest.raises(PreconditionError, match="d′ ≥ 1"):
            VarianceProxy(trace_V=0.5, sigma_sq=1.0)

    def test_from_matrix(self):
        vp = VarianceProxy.from_matrix(np.diag([2.0, 1.0, 1.0]))
        assert vp.sigma_sq == 2.0
        assert vp.d_prime == 2.0

    def test_sigma_below_norm_rejected(self):
        with pytest.raises(PreconditionError):
            VarianceProxy.from_matrix(np.diag([2.0, 1.0]), sigma_sq=1.5)

    def test_not_psd_rejected(self):
        with pytest.raises(PreconditionError):
            VarianceProxy.from_matrix(np.diag([2.0, -1.0]), sigma_sq=2.0)

    def test_larger_sigma_is_allowed(self):
        vp = VarianceProxy.from_matrix(np.diag([2.0, 2.0]), sigma_sq=4.0)
        assert vp.d_prime == 1.0


class TestMaster:
    def test_r_zero_gives_prefactor(self):
        res = master_bound(2.0, PsiFn.normal(), 1.0, 0.0, "opnorm")
        assert res.raw == 4.0
        assert res.clamped == 1.0

    def test_normal_opnorm(self):
        res = master_bound(2.0, PsiFn.normal(), 10.0, 8.0, Mode.OP_NORM)
        assert res.raw == pytest.approx(0.1630488159134648317, rel=1e-12)
        assert res.theta_used == pytest.approx(0.8, rel=1e-8)

    def test_normal_maxeig(self):
        res = master_bound(1.0, PsiFn.normal(), 1.0, 3.0, Mode.MAX_EIG)
        assert res.raw == pytest.approx(0.0175741737601913113, rel=1e-12)

    def test_d_prime_below_one(self):
        with pytest.raises(PreconditionError, match="d′ ≥ 1"):
            master_bound(0.9, PsiFn.normal(), 1.0, 1.0, "opnorm")

    def test_at_theta(self):
        res = master_bound_at(1.0, PsiFn.normal(), 1.0, 2.0, "opnorm", 1.0)
        assert res.raw == pytest.approx(2.0 * math.exp(0.5 - 2.0))

    def test_row(self):
        row = master_bound(1.0, PsiFn.normal(), 1.0, 1.0, "maxeig").to_row()
        assert tuple(row) == CSV_FIELDS


class TestCorollaries:
    def test_hoeffding(self):
        vp = VarianceProxy(2.0, 1.0)
        zero = hoeffding_bound(vp, 0.0, "opnorm")
        assert (zero.raw, zero.clamped) == (4.0, 1.0)
        assert hoeffding_bound(vp, 3.0, "opnorm").raw == pytest.approx(0.044435986152969225985, rel=1e-12)

    def test_hoeffding_two_rows(self):
        vp = VarianceProxy(20.0, 10.0)
        assert hoeffding_bound(vp, 8.0, "opnorm").raw == pytest.approx(0.1630488159134648317, rel=1e-12)

    def test_subgaussian(self):
        vp = VarianceProxy(3.0, 1.0)
        assert subgaussian_bound(vp, 2.0, "maxeig").raw == pytest.approx(0.64229179709365230837, rel=1e-12)

    def test_bennett(self):
        vp = VarianceProxy(1.0, 1.0)
        assert bennett_bound(vp, 1.0, 2.0, "opnorm").raw == pytest.approx(0.54733748880967779461, rel=1e-12)
        assert bennett_bound(vp, 1.0, 0.0, "opnorm").raw == 2.0

    def test_bernstein(self):
        res = bernstein_bound(VarianceProxy(1.0, 1.0), 1.0, 2.0, "opnorm")
        assert res.raw == pytest.approx(1.0268342380651840537, rel=1e-12)
        assert res.clamped == 1.0
        res = bernstein_bound(VarianceProxy(2.0, 1.0), 0.1, 4.0, "maxeig")
        assert res.raw == pytest.approx(0.010436318546740081041, rel=1e-12)

    @pytest.mark.parametrize("r, exponent", [(0.5, -0.125), (2.0, -1.0)])
    def test_subexponential_branches(self, r, exponent):
        res = subexponential_bound(VarianceProxy(1.0, 1.0), 1.0, 1.0, r, "opnorm")
        assert res.raw == pytest.approx(2.0 * math.exp(exponent), rel=1e-14)

    def test_subexponential_mixed(self):
        res = subexponential_bound(VarianceProxy(3.0, 1.0), 2.0, 0.5, 3.0, "opnorm")
        assert res.raw == pytest.approx(1.9479148041500983788, rel=1e-12)

    @pytest.mark.parametrize("fn, args", [(bennett_bound, (0.0,)), (bernstein_bound, (-1.0,)),
                                          (subexponential_bound, (1.0, 0.0))])
    def test_bad_parameters(self, fn, args):
        with pytest.raises(PreconditionError):
            fn(VarianceProxy(1.0, 1.0), *args, 1.0, "opnorm")

    def test_negative_r(self):
        with pytest.raises(PreconditionError):
            hoeffding_bound(VarianceProxy(1.0, 1.0), -1.0, "opnorm")

    @given(st.floats(1.0, 50.0), st.floats(0.1, 10.0), st.floats(0.01, 5.0), st.floats(0.0, 20.0),
           st.floats(0.0, 20.0))
    @settings(max_examples=100, deadline=None)
    def test_ordering_and_monotonicity(self, dp, s2, c, r1, r2):
        vp = VarianceProxy(dp * s2, s2)
        lo, hi = sorted((r1, r2))
        for fn in (lambda r: bennett_bound(vp, c, r, "opnorm"), lambda r: bernstein_bound(vp, c, r, "opnorm"),
                   lambda r: subgaussian_bound(vp, r, "opnorm")):
            assert fn(hi).raw <= fn(lo).raw * (1 + 1e-12)
        # the Bennett exponent dominates the Bernstein one
        assert bennett_bound(vp, c, hi, "opnorm").raw <= bernstein_bound(vp, c, hi, "opnorm").raw * (1 + 1e-12)
        assert bernstein_bound(vp, c, hi, "maxeig").raw <= bernstein_bound(vp, c, hi, "opnorm").raw


class TestAmbient:
    def test_values(self):
        assert ambient_subgaussian_bound(1, 1.0, 0.0) == 2.0
        assert ambient_subgaussian_bound(100, 1.0, 3.0) == pytest.approx(2.2217993076484612992, rel=1e-12)

    def test_bad_d(self):
        with pytest.raises(PreconditionError):
            ambient_subgaussian_bound(0, 1.0, 1.0)


class TestConfidenceRadius:
    def test_log_term_two(self):
        delta = 2.0 / math.e**2
        assert confidence_radius(100, 1.0, 1.0, 1.0, delta) == pytest.approx(0.20666666666666666667, rel=1e-12)

    def test_delta_near_one(self):
        r = confidence_radius(100, 1.0, 1.0, 1.0, 1.0 - 1e-12)
        assert r == pytest.approx(0.12005149285341395347, rel=1e-9)

    def test_degenerate_warning(self):
        with pytest.warns(DegenerateRadiusWarning):
            confidence_radius(10, 1.0, 1.0, 0.1, 0.5)

    @pytest.mark.parametrize("delta", [0.0, 1.0, -0.1])
    def test_bad_delta(self, delta):
        with pytest.raises(PreconditionError):
            confidence_radius(10, 1.0, 1.0, 1.0, delta)

    @pytest.mark.parametrize("n, s2, c, tr, delta", [(100, 2.0, 1.0, 3.0, 0.05), (10, 0.3, 2.0, 0.9, 0.2),
                                                     (1000, 50.0, 0.5, 120.0, 1e-4)])
    def test_exact_inversion(self, n, s2, c, tr, delta):
        radius = bernstein_relaxed_radius(n, s2, c, tr, delta)
        assert bernstein_relaxed_mean_tail(n, s2, c, tr, radius) == pytest.approx(delta, rel=1e-9)

    @pytest.mark.parametrize("n, s2, c, tr, delta", [(100, 2.0, 1.0, 3.0, 0.05), (10, 0.3, 2.0, 0.9, 0.2)])
    def test_display_radius_versus_exact(self, n, s2, c, tr, delta):
        # the displayed radius evaluated at the sum level: sigma sqrt(2L) + cL/3, which lies
        # just below the exact root, so the bound there slightly exceeds delta
        L = math.log(2.0 / delta * tr / s2)
        t_display = math.sqrt(2.0 * s2 * L) + c * L / 3.0
        t_exact = n * bernstein_relaxed_radius(n, s2, c, tr, delta)
        assert t_display <= t_exact * (1 + 1e-12)
        assert t_display >= t_exact - c * L / 3.0

    def test_normalizations(self):
        V = np.diag([100.0, 50.0])
        per_sum = confidence_radius_from_variance(100, 1.0, V, 0.05, "per_sum")
        per_sample = confidence_radius_from_variance(100, 1.0, V, 0.05, "per_sample")
        assert per_sample < per_sum
        L = math.log(2.0 / 0.05 * 1.5)
        assert per_sample == pytest.approx(math.sqrt(2.0 * L / 100) + L / 300, rel=1e-14)
        with pytest.raises(ValueError):
            confidence_radius_from_variance(100, 1.0, V, 0.05, "per_trial")


class TestTraceExpGap:
    def test_isotropic_equality(self):
        lhs, rhs = trace_exp_gap(2.0 * np.eye(4), 0.7)
        assert lhs == pytest.approx(rhs, rel=1e-14)

    def test_rank_one_equality(self):
        v = np.array([1.0, 1.0, 0.0])
        lhs, rhs = trace_exp_gap(np.outer(v, v), 1.3)
        assert lhs == pytest.approx(rhs, rel=1e-14)

    def test_strict_for_spread_spectrum(self):
        lhs, rhs = trace_exp_gap(np.diag([1.0, 0.1]), 2.0)
        assert lhs < rhs


def test_e_over_e_minus_1():
    assert E_OVER_E_MINUS_1 == pytest.approx(E_E1, rel=1e-15)
