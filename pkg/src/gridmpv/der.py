"""Distributed energy resources: loads, PV, plug-in mini-PV and batteries.

Sign conventions, used everywhere downstream:
  * generation is positive, consumption negative at the grid boundary,
  * battery charge power p_cha <= 0, discharge power p_dis >= 0,
  * at most one of p_cha / p_dis is nonzero in any step.

Battery energy follows

    E_t = E_{t-1} - (eta_cha * p_cha + p_dis / eta_dis) * dt - eta_self * e_max

with per-step efficiency samples drawn from truncated normal distributions.
The SoC window [soc_min, soc_max] is an operating band for commanded power:
requests are shaped so charging never exceeds soc_max and discharging never
dips below soc_min. A state that starts below the floor (e.g. a factory-fresh
cell at 0 energy) can only charge until the band is entered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


class MutualExclusionViolation(Exception):
    """Simultaneous nonzero charge and discharge requested."""


class LimitViolation(Exception):
    """A power request exceeds the unit's rated limit."""


@dataclass(frozen=True)
class LoadUnit:
    bus: int
    profile: str  # profile column holding kW draw
    scale: float = 1.0
    cosphi: float = 0.95  # q_load = p * tan(arccos cosphi), inductive
    name: str = ""


@dataclass(frozen=True)
class PvUnit:
    bus: int
    s_rated_kva: float
    scale_kwp: float
    profile: str  # normalized [0, 1] column
    name: str = ""


@dataclass(frozen=True)
class MpvUnit:
    bus: int
    gamma1_w: float  # microinverter apparent peak power
    gamma2_w: float  # solar cell power
    profile: str  # normalized [0, 1] column
    name: str = ""


def mpv_output_kw(unit: MpvUnit, irradiance_frac: float) -> float:
    """AC output: DC production gamma2 * frac clipped by the inverter peak."""
    if irradiance_frac <= 0.0:
        return 0.0
    return min(unit.gamma2_w * irradiance_frac, unit.gamma1_w) / 1000.0


def pv_output_kw(unit: PvUnit, irradiance_frac: float) -> float:
    """AC output: kWp scale times the normalized profile, inverter-capped."""
    if irradiance_frac <= 0.0:
        return 0.0
    return min(unit.scale_kwp * irradiance_frac, unit.s_rated_kva)


@dataclass(frozen=True)
class BesUnit:
    bus: int
    e_max_kwh: float
    p_cha_max_kw: float  # positive magnitude
    p_dis_max_kw: float
    s_rated_kva: float
    soc_min: float = 0.20
    soc_max: float = 0.90
    mu_cha: float = 0.95
    mu_dis: float = 0.95
    mu_self: float = 0.0  # per-step self-discharge fraction of e_max
    sigma_cha: float | None = None  # None -> 0.01 * mu
    sigma_dis: float | None = None
    sigma_self: float | None = None
    name: str = ""

    def sigma(self, which: str) -> float:
        explicit = getattr(self, "sigma_" + which)
        if explicit is not None:
            return explicit
        return 0.01 * getattr(self, "mu_" + which)


@dataclass
class BesState:
    """Mutable per-run battery state; efficiencies are the current step's samples."""

    e_kwh: float
    e_max_kwh: float
    eta_cha: float
    eta_dis: float
    eta_self: float

    @property
    def soc(self) -> float:
        return self.e_kwh / self.e_max_kwh


def initial_state(unit: BesUnit, soc: float | None = None) -> BesState:
    soc0 = unit.soc_min if soc is None else soc
    return BesState(
        e_kwh=soc0 * unit.e_max_kwh,
        e_max_kwh=unit.e_max_kwh,
        eta_cha=unit.mu_cha,
        eta_dis=unit.mu_dis,
        eta_self=unit.mu_self,
    )


def sample_efficiencies(unit: BesUnit, rng):
    """One (eta_cha, eta_dis, eta_self) draw, truncated to physical ranges."""
    eta_cha = unit.mu_cha + unit.sigma("cha") * float(rng.standard_normal())
    eta_dis = unit.mu_dis + unit.sigma("dis") * float(rng.standard_normal())
    eta_self = unit.mu_self + unit.sigma("self") * float(rng.standard_normal())
    eta_cha = min(max(eta_cha, 1e-6), 1.0)
    eta_dis = min(max(eta_dis, 1e-6), 1.0)
    eta_self = min(max(eta_self, 0.0), 1.0 - 1e-9)
    return eta_cha, eta_dis, eta_self


def feasible_power(unit: BesUnit, state: BesState, requested_kw: float, dt_hours: float) -> float:
    """Shrink a signed power request to what the battery can actually do.

    Negative request = charge, positive = discharge. Honors rated power,
    the SoC operating band and the energy available in this step, including
    the step's self-discharge. Idempotent: shaping an already-shaped value
    returns it unchanged.
    """
    if requested_kw == 0.0:
        return 0.0
    e = state.e_kwh
    e_max = state.e_max_kwh
    self_loss = state.eta_self * e_max
    if requested_kw < 0.0:
        headroom_kwh = unit.soc_max * e_max - e + self_loss
        if headroom_kwh <= 0.0:
            return 0.0
        cap = headroom_kwh / (state.eta_cha * dt_hours)
        return -min(-requested_kw, unit.p_cha_max_kw, cap)
    available_kwh = e - unit.soc_min * e_max - self_loss
    if available_kwh <= 0.0:
        return 0.0
    cap = available_kwh * state.eta_dis / dt_hours
    return min(requested_kw, unit.p_dis_max_kw, cap)


def bes_step(unit: BesUnit, state: BesState, p_cha_kw: float, p_dis_kw: float, dt_hours: float):
    """Advance battery energy one step; returns (new_state, p_cha, p_dis) realized.

    Raises on simultaneous charge/discharge or rating violations; energy
    feasibility is shaped, not rejected.
    """
    if p_cha_kw > 0.0 or p_dis_kw < 0.0:
        raise ValueError("charge must be <= 0 and discharge >= 0 (got %.3f, %.3f)" % (p_cha_kw, p_dis_kw))
    if p_cha_kw != 0.0 and p_dis_kw != 0.0:
        raise MutualExclusionViolation("simultaneous charge %.3f kW and discharge %.3f kW" % (p_cha_kw, p_dis_kw))
    if -p_cha_kw > unit.p_cha_max_kw + 1e-9:
        raise LimitViolation("charge %.3f kW exceeds p_cha_max %.3f kW" % (-p_cha_kw, unit.p_cha_max_kw))
    if p_dis_kw > unit.p_dis_max_kw + 1e-9:
        raise LimitViolation("discharge %.3f kW exceeds p_dis_max %.3f kW" % (p_dis_kw, unit.p_dis_max_kw))

    realized = feasible_power(unit, state, p_cha_kw if p_cha_kw != 0.0 else p_dis_kw, dt_hours)
    p_cha = realized if realized < 0.0 else 0.0
    p_dis = realized if realized > 0.0 else 0.0

    e = state.e_kwh
    e = e - (state.eta_cha * p_cha + p_dis / state.eta_dis) * dt_hours - state.eta_self * state.e_max_kwh
    if e < 0.0:
        e = 0.0  # self-discharge cannot take stored energy negative
    new_state = replace(state, e_kwh=e)
    return new_state, p_cha, p_dis


def replay_energy(unit: BesUnit, e0_kwh: float, log, dt_hours: float) -> float:
    """Re-run the energy recurrence over a (p_cha, p_dis, eta_c, eta_d, eta_s) log."""
    e = e0_kwh
    for p_cha, p_dis, eta_c, eta_d, eta_s in log:
        e = e - (eta_c * p_cha + p_dis / eta_d) * dt_hours - eta_s * unit.e_max_kwh
        if e < 0.0:
            e = 0.0
    return e
