"""Reference values come from 40-digit mpmath evaluations, frozen below."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opconc.errors import DomainError, PreconditionError
from opconc.psi import (
    PsiFn,
    chernoff_infimum,
    g_fn,
    h_fn,
    p_fn,
    phi,
    psi_eval,
    theta_star,
    varphi,
)

# u: (h(u), phi(u), phi(-u), cosh(u) - 1)
MP_AUX = {
    1e-8: (4.9999999833333334167e-17, 5.0000000166666667083e-17, 4.999999983333333375e-17, 5.0000000000000000417e-17),
    1e-4: (4.9998333416661667e-9, 5.0001666708334166681e-9, 4.9998333374999166681e-9, 5.0000000041666666681e-9),
    1e-3: (4.9983341661669997621e-7, 5.0016670834166805575e-7, 4.9983337499166805536e-7, 5.0000004166666805556e-7),
    0.5: (0.10819766216224657297, 0.14872127070012814685, 0.1065306597126334236, 0.12762596520638078523),
    2.0: (1.2958368660043290742, 4.3890560989306502272, 1.1353352832366126919, 2.7621956910836314596),
    50.0: (150.52310726894061435, 5.184705528587072464e21, 49.0, 2.592352764293536232e21),
}


@pytest.mark.parametrize("u", sorted(MP_AUX))
def test_auxiliary_functions_against_mpmath(u):
    h, ph, ph_neg, vph = MP_AUX[u]
    assert h_fn(u) == pytest.approx(h, rel=1e-13)
    assert phi(u) == pytest.approx(ph, rel=1e-13)
    assert phi(-u) == pytest.approx(ph_neg, rel=1e-13)
    assert varphi(u) == pytest.approx(vph, rel=1e-13)


def test_aux_at_zero():
    assert phi(0.0) == 0.0
    assert varphi(0.0) == 0.0
    assert h_fn(0.0) == 0.0
    assert g_fn(0.0) == 0.0


def test_aux_vectorized():
    u = np.array([-2.0, 0.0, 2.0])
    assert phi(u).shape == (3,)
    assert np.allclose(p_fn(u), [1.0, 0.0, -2.0])


def test_g_branches():
    assert g_fn(-2.0) == pytest.approx(math.exp(-2.0))
    assert g_fn(-0.5) == pytest.approx(phi(-0.5))
    assert g_fn(3.0) == pytest.approx(phi(3.0))


def test_h_rejects_negative():
    with pytest.raises(DomainError):
        h_fn(-0.1)


class TestPsiFamilies:
    def test_normal(self):
        assert psi_eval(PsiFn.normal(), 2.0) == 2.0

    def test_poisson(self):
        assert psi_eval(PsiFn.poisson(1.0), 1.0) == pytest.approx(math.e - 2.0)

    def test_poisson_small_theta_is_quadratic(self):
        assert psi_eval(PsiFn.poisson(2.0), 1e-7) == pytest.approx(0.5e-14, rel=1e-6)

    def test_gamma_pole(self):
        g = PsiFn.gamma(1.0)
        assert psi_eval(g, 0.5) == pytest.approx(0.25)
        with pytest.raises(DomainError):
            psi_eval(g, 1.0)

    def test_exponential_domain(self):
        e = PsiFn.exponential(nu=1.0, alpha=0.5, sigma_sq=1.0)
        assert e.theta_max == 2.0
        with pytest.raises(DomainError):
            psi_eval(e, 2.0)

    def test_negative_theta(self):
        with pytest.raises(DomainError):
            psi_eval(PsiFn.normal(), -0.1)

    @pytest.mark.parametrize("kwargs", [{"kind": "poisson"}, {"kind": "gamma", "c": 0.0}, {"kind": "laplace"},
                                        {"kind": "exponential", "nu": 1.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            PsiFn(**kwargs)

    def test_json_roundtrip(self):
        p = PsiFn.exponential(1.0, 2.0, 3.0)
        assert PsiFn.from_json(p.to_json()) == p

    @pytest.mark.parametrize("psi", [PsiFn.normal(), PsiFn.poisson(0.7), PsiFn.gamma(0.7)])
    def test_cgf_like(self, psi):
        # psi(0) = psi'(0) = 0, convex on the domain
        assert psi(0.0) == 0.0
        h = 1e-6
        assert psi(h) / h < 1e-5
        t = np.linspace(0.0, 0.9 * min(psi.theta_max, 3.0), 50)
        v = np.array([psi(x) for x in t])
        assert np.all(np.diff(v, 2) >= -1e-12)


class TestThetaStar:
    def test_subgaussian(self):
        assert theta_star("subgaussian", r=2.0, sigma_sq=4.0) == 0.5

    def test_bennett(self):
        assert theta_star("bennett", r=2.0, sigma_sq=1.0, c=1.0) == pytest.approx(math.log(3.0))

    def test_bernstein(self):
        assert theta_star("bernstein", r=2.0, sigma_sq=1.0, c=1.0) == pytest.approx(2.0 / 3.0)

    def test_subexponential_branches(self):
        assert theta_star("subexponential", r=0.5, nu=1.0, alpha=1.0) == 0.5
        assert theta_star("subexponential", r=3.0, nu=1.0, alpha=1.0) == pytest.approx(1.0 - 1e-9)

    def test_missing_parameter(self):
        with pytest.raises(PreconditionError):
            theta_star("bennett", r=1.0, sigma_sq=1.0)

    def test_unknown(self):
        with pytest.raises(PreconditionError):
            theta_star("chebyshev", r=1.0, sigma_sq=1.0)


class TestChernoffInfimum:
    def test_r_zero(self):
        assert chernoff_infimum(PsiFn.normal(), 1.0, 0.0) == (0.0, 1.0)

    def test_normal(self):
        theta, val = chernoff_infimum(PsiFn.normal(), 1.0, 2.0)
        assert theta == pytest.approx(2.0, rel=1e-8)
        assert val == pytest.approx(math.exp(-2.0), rel=1e-12)

    def test_poisson_is_bennett(self):
        # exp(-h(2)), mpmath
        theta, val = chernoff_infimum(PsiFn.poisson(1.0), 1.0, 2.0)
        assert theta == pytest.approx(math.log(3.0), rel=1e-8)
        assert val == pytest.approx(0.2736687444048388973, rel=1e-12)

    def test_gamma_interior(self):
        # minimizer of t^2/(2(1-t)) - 2t, mpmath root of the derivative
        theta, val = chernoff_infimum(PsiFn.gamma(1.0), 1.0, 2.0)
        assert theta == pytest.approx(0.55278640450004206072, rel=1e-8)
        assert val == pytest.approx(0.46583116261132203701, rel=1e-12)

    def test_exponential_boundary(self):
        # minimum sits at the pole theta = 1/alpha: exp(1/2 - 3)
        theta, val = chernoff_infimum(PsiFn.exponential(1.0, 1.0, 1.0), 1.0, 3.0)
        assert theta == pytest.approx(1.0, rel=1e-8)
        assert val == pytest.approx(0.08208499862389879517, rel=1e-8)

    def test_bad_inputs(self):
        with pytest.raises(PreconditionError):
            chernoff_infimum(PsiFn.normal(), 0.0, 1.0)
        with pytest.raises(PreconditionError):
            chernoff_infimum(PsiFn.normal(), 1.0, -1.0)

    @given(st.floats(0.05, 20.0), st.floats(0.01, 30.0), st.sampled_from(["normal", "poisson", "gamma"]),
           st.floats(0.1, 3.0))
    @settings(max_examples=80, deadline=None)
    def test_optimum_beats_grid(self, s2, r, kind, c):
        psi = PsiFn("normal") if kind == "normal" else PsiFn(kind, c=c)
        theta, val = chernoff_infimum(psi, s2, r)
        assert 0.0 <= val <= 1.0
        grid = np.linspace(0.0, min(psi.theta_cap, 10 * r / s2 + 1), 400)
        best = min(math.exp(min(psi(t) * s2 - t * r, 0.0)) for t in grid)
        assert val <= best * (1 + 1e-9)
