import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opconc.compare import (
    PRIOR_CONSTANTS,
    constants_table,
    intrinsic_ratio,
    intrinsic_vs_ambient,
    martingale_sharpening_report,
)
from opconc.errors import PreconditionError
from opconc.martingale import minsker_threshold
from opconc.specmat import SymMatrix

E_E1 = 1.5819767068693264244


def test_prior_values():
    assert {(p.source, p.mode): p.value for p in PRIOR_CONSTANTS} == {
        ("minsker", "opnorm"): 14.0, ("tropp", "opnorm"): 8.0, ("minsker", "maxeig"): 7.0,
        ("tropp", "maxeig"): 4.0, ("minsker", "martingale"): 25.0}


def test_constants_table():
    rows = {(r["mode"], r["source"]): r for r in constants_table()}
    assert rows["opnorm", "minsker"]["ratio"] == 2.0 / 14.0
    assert rows["opnorm", "tropp"]["ratio"] == 0.25
    assert rows["maxeig", "minsker"]["ratio"] == pytest.approx(E_E1 / 7.0, rel=1e-15)
    assert rows["maxeig", "minsker"]["ratio"] == pytest.approx(0.2260, abs=5e-5)
    assert rows["maxeig", "tropp"]["ours"] == pytest.approx(E_E1, rel=1e-15)
    assert rows["martingale", "minsker"]["note"]


class TestIntrinsic:
    def test_isotropic(self):
        rows = intrinsic_vs_ambient(3.0 * np.eye(4), 4, None, [0.0, 1.0, 5.0])
        for row in rows:
            assert row["ratio"] == 1.0
            assert row["intrinsic_bound"] == pytest.approx(row["ambient_bound"], rel=1e-15)

    def test_spiked(self):
        V = np.diag([1.0] + [1e-3] * 99)
        rows = intrinsic_vs_ambient(V, 100, None, [2.0])
        assert rows[0]["ratio"] == pytest.approx((1 + 0.099) / 100, rel=1e-12)
        assert rows[0]["intrinsic_bound"] / rows[0]["ambient_bound"] == pytest.approx(rows[0]["ratio"], rel=1e-12)
        assert intrinsic_ratio(V) == pytest.approx(0.01099, rel=1e-12)

    def test_dimension_check(self):
        with pytest.raises(PreconditionError):
            intrinsic_vs_ambient(np.eye(3), 4, None, [1.0])

    @given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=30).filter(lambda w: max(w) > 1e-3))
    def test_ratio_at_most_one(self, w):
        rows = intrinsic_vs_ambient(SymMatrix.diag(w), len(w), None, [1.0])
        assert rows[0]["ratio"] <= 1.0 + 1e-12


class TestSharpening:
    def test_single_eigenvalue(self):
        # both bounds share the exponential factor; prefactor ratio is (e/(e-1)) (1 + 1) / 25
        rows = martingale_sharpening_report([1.0], 1.0, 1.0, [2.0])
        assert rows[0]["ratio"] == pytest.approx(2 * E_E1 / 25, rel=1e-14)
        assert rows[0]["ratio"] == pytest.approx(0.12655813654954611395, rel=1e-13)

    def test_below_threshold_flagged(self):
        thr = minsker_threshold(1.0, 1.0)
        rows = martingale_sharpening_report([1.0], 1.0, 1.0, [0.5 * thr, 2.0])
        assert [r["valid"] for r in rows] == [False, True]

    def test_empty_valid_grid(self):
        with pytest.raises(PreconditionError):
            martingale_sharpening_report([1.0], 1.0, 1.0, [0.01])

    @given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=20).filter(lambda w: max(w) > 1e-6),
           st.floats(0.05, 5.0))
    @settings(max_examples=100, deadline=None)
    def test_strict_improvement(self, spectrum, c):
        s2 = max(spectrum)
        thr = minsker_threshold(c, s2)
        rows = martingale_sharpening_report(spectrum, s2, c, np.linspace(thr, thr + 20 * math.sqrt(s2) + 10 * c, 40))
        assert all(r["ratio"] < 1.0 for r in rows)
