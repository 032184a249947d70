import math

import numpy as np
import pytest

from gridmpv.control import (
    CosPhiCurve,
    FixedCosPhi,
    InvalidRating,
    NoControl,
    QofP,
    QofV,
    QvCurve,
    Ratings,
    apply_mode,
    capability_bound_kvar,
    capability_limit,
    cosphi_of_p,
    mode_q_kvar,
    q_from_cosphi,
    q_of_v,
)

CURVE = QvCurve(v1=0.93, v2=0.97, v3=1.03, v4=1.07)


class TestQofV:
    def test_full_injection_below_v1(self):
        assert q_of_v(CURVE, 0.90, 0.3) == pytest.approx(0.3)

    def test_deadband_zero(self):
        for v in (0.97, 1.0, 1.03):
            assert q_of_v(CURVE, v, 0.3) == 0.0

    def test_ramp_hand_value(self):
        # halfway down the upper ramp
        assert q_of_v(CURVE, 1.05, 0.3) == pytest.approx(-0.15)

    def test_full_absorption_above_v4(self):
        assert q_of_v(CURVE, 1.08, 0.3) == pytest.approx(-0.3)

    def test_continuity_at_breakpoints(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            v1, v2 = sorted(rng.uniform(0.88, 0.99, 2))
            v3, v4 = sorted(rng.uniform(1.01, 1.12, 2))
            if v2 - v1 < 1e-3 or v4 - v3 < 1e-3:
                continue
            curve = QvCurve(v1=float(v1), v2=float(v2), v3=float(v3), v4=float(v4))
            q_max = float(rng.uniform(0.1, 5.0))
            slope = q_max / min(v2 - v1, v4 - v3)
            for bp in (v1, v2, v3, v4):
                left = q_of_v(curve, bp - 1e-13, q_max)
                right = q_of_v(curve, bp + 1e-13, q_max)
                # the probe span itself moves the ramp by 2e-13 * slope
                assert abs(left - right) <= 1e-12 * q_max + 3e-13 * slope

    def test_monotone_non_increasing(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            v1, v2 = sorted(rng.uniform(0.88, 0.99, 2))
            v3, v4 = sorted(rng.uniform(1.01, 1.12, 2))
            if v2 - v1 < 1e-3 or v4 - v3 < 1e-3:
                continue
            curve = QvCurve(v1=float(v1), v2=float(v2), v3=float(v3), v4=float(v4))
            grid = np.linspace(0.85, 1.15, 301)
            vals = [q_of_v(curve, float(v), 1.0) for v in grid]
            assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_curve_validation(self):
        assert QvCurve().check() == []
        bad = QvCurve(v2=1.04, v3=1.03)
        assert any("qv.breakpoints" in m for m in bad.check())


class TestCosPhiOfP:
    CURVE = CosPhiCurve(p1_kw=2.0, p2_kw=4.0, c1=1.0, c2=0.9)

    def test_below_threshold(self):
        assert cosphi_of_p(self.CURVE, 1.0) == 1.0

    def test_midpoint(self):
        assert cosphi_of_p(self.CURVE, 3.0) == pytest.approx(0.95)

    def test_above_threshold(self):
        assert cosphi_of_p(self.CURVE, 5.0) == 0.9

    def test_validation(self):
        assert self.CURVE.check() == []
        assert CosPhiCurve(p1_kw=4.0, p2_kw=2.0).check()


class TestQFromCosPhi:
    def test_unity_factor(self):
        assert q_from_cosphi(1.0, 1.0) == 0.0

    def test_under_excited_hand_value(self):
        assert q_from_cosphi(0.5, 0.9, "under") == pytest.approx(-0.2422, abs=5e-5)

    def test_zero_power(self):
        assert q_from_cosphi(0.0, 0.9) == 0.0

    def test_over_excited_sign(self):
        assert q_from_cosphi(0.5, 0.9, "over") > 0.0


class TestCapability:
    def test_pythagorean(self):
        assert capability_bound_kvar(1.0, 0.8) == pytest.approx(0.6)

    def test_full_output_leaves_nothing(self):
        assert capability_bound_kvar(1.0, 1.0) == 0.0

    def test_pv_plus_bes(self):
        assert capability_bound_kvar(1.0, 0.8, 0.5, 0.3) == pytest.approx(1.0)

    def test_overdriven_inverter_rejected(self):
        with pytest.raises(InvalidRating):
            capability_bound_kvar(1.0, 1.2)

    def test_limit_clamps_both_signs(self):
        assert capability_limit(2.0, 1.0, 0.8) == pytest.approx(0.6)
        assert capability_limit(-2.0, 1.0, 0.8) == pytest.approx(-0.6)
        assert capability_limit(0.1, 1.0, 0.8) == pytest.approx(0.1)


class TestModes:
    RATINGS = Ratings(s_pv_kva=2.0, p_pv_kw=1.0)

    def test_no_control(self):
        assert apply_mode(NoControl(), 1.08, 1.0, self.RATINGS) == 0.0

    def test_qv_deadband(self):
        assert apply_mode(QofV(curve=CURVE), 1.0, 1.0, self.RATINGS) == 0.0

    def test_fixed_cosphi_hand_value(self):
        mode = FixedCosPhi(setpoint=0.95, excitation="under")
        q = apply_mode(mode, 1.0, 1.0, Ratings(s_pv_kva=2.0, p_pv_kw=1.0))
        assert q == pytest.approx(-0.3287, abs=5e-5)

    def test_fixed_cosphi_threshold_gate(self):
        mode = FixedCosPhi(setpoint=0.95, p_threshold_kw=0.5)
        assert apply_mode(mode, 1.0, 0.4, self.RATINGS) == 0.0
        assert apply_mode(mode, 1.0, 0.6, self.RATINGS) != 0.0

    def test_qv_uses_capability_when_unbounded(self):
        # q_max None: the instantaneous group capability is the ceiling
        mode = QofV(curve=QvCurve(v1=0.93, v2=0.97, v3=1.03, v4=1.07, q_max_kvar=None))
        q = apply_mode(mode, 1.10, 1.0, Ratings(s_pv_kva=2.0, p_pv_kw=1.0))
        assert q == pytest.approx(-capability_bound_kvar(2.0, 1.0))

    def test_qp_ramp(self):
        mode = QofP(curve=CosPhiCurve(p1_kw=2.0, p2_kw=4.0, c1=1.0, c2=0.9))
        assert apply_mode(mode, 1.0, 1.0, Ratings(s_pv_kva=6.0, p_pv_kw=1.0)) == 0.0
        q = apply_mode(mode, 1.0, 5.0, Ratings(s_pv_kva=6.0, p_pv_kw=5.0))
        assert q == pytest.approx(q_from_cosphi(5.0, 0.9, "under"))

    def test_unknown_mode_rejected(self):
        with pytest.raises(TypeError):
            mode_q_kvar(object(), 1.0, 1.0, 1.0)

    def test_random_calls_respect_capability(self):
        rng = np.random.default_rng(12)
        modes = [
            NoControl(),
            QofV(curve=CURVE),
            QofP(curve=CosPhiCurve(p1_kw=1.0, p2_kw=3.0, c1=1.0, c2=0.85)),
            FixedCosPhi(setpoint=0.9),
        ]
        for _ in range(10_000):
            mode = modes[int(rng.integers(len(modes)))]
            s_pv = float(rng.uniform(0.5, 10.0))
            p_pv = float(rng.uniform(0.0, s_pv))
            s_bes = float(rng.uniform(0.0, 5.0))
            p_bes = float(rng.uniform(-s_bes, s_bes)) if s_bes > 0 else 0.0
            ratings = Ratings(s_pv_kva=s_pv, p_pv_kw=p_pv, s_bes_kva=s_bes, p_bes_kw=p_bes)
            v = float(rng.uniform(0.85, 1.15))
            q = apply_mode(mode, v, p_pv + max(p_bes, 0.0), ratings)
            bound = capability_bound_kvar(s_pv, p_pv, s_bes, p_bes)
            assert abs(q) <= bound + 1e-12
