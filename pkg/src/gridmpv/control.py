"""Local reactive-power control modes for grid-feeding inverters.

Generator-oriented sign convention throughout: q > 0 injects reactive power
(over-excited, voltage raising), q < 0 absorbs (under-excited, voltage
lowering). Plug-in mini-PV units never run a control mode; their reactive
power is identically zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class InvalidRating(Exception):
    """Active power claims to exceed the inverter's apparent rating."""


@dataclass(frozen=True)
class QvCurve:
    """Voltage-droop curve: +q_max below v1, deadband [v2, v3], -q_max above v4.

    q_max None means "use the instantaneous capability of the inverter group"
    (the default, so the curve stays feasible at full active output).
    """

    v1: float = 0.93
    v2: float = 0.97
    v3: float = 1.03
    v4: float = 1.07
    q_max_kvar: float | None = None
    v_ref: float = 1.0

    def check(self) -> list:
        """Violation messages, empty when the curve is well formed."""
        out = []
        if not (self.v1 < self.v2 <= self.v3 < self.v4):
            out.append(
                "qv.breakpoints: need v1 < v2 <= v3 < v4, got (%g, %g, %g, %g)"
                % (self.v1, self.v2, self.v3, self.v4)
            )
        if not (self.v2 <= self.v_ref <= self.v3):
            out.append("qv.breakpoints: deadband [v2, v3] must contain v_ref %g" % self.v_ref)
        if self.q_max_kvar is not None and self.q_max_kvar < 0:
            out.append("qv.q_max: must be >= 0")
        return out


@dataclass(frozen=True)
class CosPhiCurve:
    """Power-factor-vs-output curve: c1 below p1, linear to c2 on [p1, p2]."""

    p1_kw: float
    p2_kw: float
    c1: float = 1.0
    c2: float = 0.9
    excitation: str = "under"  # "under" absorbs at high output, "over" injects

    def check(self) -> list:
        out = []
        if not self.p1_kw < self.p2_kw:
            out.append("cosphi_p.thresholds: need p1 < p2, got (%g, %g)" % (self.p1_kw, self.p2_kw))
        for c in (self.c1, self.c2):
            if not 0.0 < c <= 1.0:
                out.append("cosphi_p.factors: power factors must be in (0, 1], got %g" % c)
        return out


@dataclass(frozen=True)
class NoControl:
    pass


@dataclass(frozen=True)
class QofV:
    curve: QvCurve = QvCurve()


@dataclass(frozen=True)
class QofP:
    curve: CosPhiCurve


@dataclass(frozen=True)
class FixedCosPhi:
    setpoint: float = 0.95
    excitation: str = "under"
    p_threshold_kw: float = 0.0

    def check(self) -> list:
        if not 0.0 < self.setpoint <= 1.0:
            return ["fixed_cosphi.setpoint: must be in (0, 1], got %g" % self.setpoint]
        return []


@dataclass(frozen=True)
class Ratings:
    """Apparent ratings and current active output of the inverters at one bus."""

    s_pv_kva: float = 0.0
    p_pv_kw: float = 0.0
    s_bes_kva: float = 0.0
    p_bes_kw: float = 0.0


def q_of_v(curve: QvCurve, v_pu: float, q_max_kvar: float) -> float:
    """Piecewise droop value for one voltage reading."""
    if v_pu <= curve.v1:
        return q_max_kvar
    if v_pu < curve.v2:
        return q_max_kvar * (1.0 - (v_pu - curve.v1) / (curve.v2 - curve.v1))
    if v_pu <= curve.v3:
        return 0.0
    if v_pu < curve.v4:
        return -q_max_kvar * (v_pu - curve.v3) / (curve.v4 - curve.v3)
    return -q_max_kvar


def cosphi_of_p(curve: CosPhiCurve, p_kw: float) -> float:
    """Power factor for the present active output."""
    if p_kw <= curve.p1_kw:
        return curve.c1
    if p_kw >= curve.p2_kw:
        return curve.c2
    frac = (p_kw - curve.p1_kw) / (curve.p2_kw - curve.p1_kw)
    return curve.c1 + frac * (curve.c2 - curve.c1)


def q_from_cosphi(p_kw: float, cosphi: float, excitation: str = "under") -> float:
    """Reactive power implied by a power factor at active output p."""
    if p_kw == 0.0 or cosphi >= 1.0:
        return 0.0
    sign = -1.0 if excitation == "under" else 1.0
    return sign * p_kw * math.tan(math.acos(cosphi))


def capability_bound_kvar(s_pv: float, p_pv: float, s_bes: float = 0.0, p_bes: float = 0.0) -> float:
    """Reactive headroom of the PV + BES inverter group at one bus."""
    bound = 0.0
    for s, p in ((s_pv, p_pv), (s_bes, p_bes)):
        if s <= 0.0:
            continue
        if abs(p) > s + 1e-9:
            raise InvalidRating("active power %.3f kW exceeds apparent rating %.3f kVA" % (p, s))
        gap = s * s - p * p
        if gap > 0.0:
            bound += math.sqrt(gap)
    return bound


def capability_limit(q_request_kvar: float, s_pv: float, p_pv: float, s_bes: float = 0.0, p_bes: float = 0.0) -> float:
    """Clamp a reactive request to the inverter-group capability."""
    bound = capability_bound_kvar(s_pv, p_pv, s_bes, p_bes)
    if q_request_kvar > bound:
        return bound
    if q_request_kvar < -bound:
        return -bound
    return q_request_kvar


def mode_q_kvar(mode, v_pcc_pu: float, p_der_kw: float, q_bound_kvar: float) -> float:
    """Reactive setpoint under the given mode, clamped to an explicit bound.

    The bound is the bus group's momentary reactive headroom; for several
    inverters at one bus it is the sum of their individual headrooms.
    """
    if isinstance(mode, NoControl) or q_bound_kvar <= 0.0:
        return 0.0
    if isinstance(mode, QofV):
        q_max = q_bound_kvar if mode.curve.q_max_kvar is None else mode.curve.q_max_kvar
        q = q_of_v(mode.curve, v_pcc_pu, q_max)
    elif isinstance(mode, QofP):
        c = cosphi_of_p(mode.curve, p_der_kw)
        q = q_from_cosphi(p_der_kw, c, mode.curve.excitation)
    elif isinstance(mode, FixedCosPhi):
        if p_der_kw <= mode.p_threshold_kw:
            return 0.0
        q = q_from_cosphi(p_der_kw, mode.setpoint, mode.excitation)
    else:
        raise TypeError("unknown control mode %r" % (mode,))
    if q > q_bound_kvar:
        return q_bound_kvar
    if q < -q_bound_kvar:
        return -q_bound_kvar
    return q


def apply_mode(mode, v_pcc_pu: float, p_der_kw: float, ratings: Ratings) -> float:
    """Reactive setpoint of one bus's inverter group under the given mode.

    p_der_kw is the group's momentary grid feed-in (>= 0). The result is
    always clamped to the instantaneous capability.
    """
    bound = capability_bound_kvar(ratings.s_pv_kva, ratings.p_pv_kw, ratings.s_bes_kva, ratings.p_bes_kw)
    return mode_q_kvar(mode, v_pcc_pu, p_der_kw, bound)
