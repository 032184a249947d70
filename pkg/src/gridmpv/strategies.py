"""Active-power dispatch strategies for PV and battery fleets.

Five selectable strategies: PV-only self-consumption, a pure day-night
battery cycle, local (per-bus) PV-battery self-consumption, zone-coordinated
self-consumption, and zone-coordinated self-consumption gated by day-night
windows. Residuals are PV generation minus load; plug-in mini-PV feeds the
grid directly and takes no part in dispatch decisions.

Every battery power returned here has already passed feasible_power, so
executing it through bes_step changes nothing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .der import BesState, BesUnit, feasible_power


class StrategyKind(str, enum.Enum):
    PV_SC = "pv_sc"
    BES_DNC = "bes_dnc"
    PVBES_DECENTRALIZED_SC = "pvbes_decentralized_sc"
    PVBES_DISTRIBUTED_SC = "pvbes_distributed_sc"
    PVBES_DISTRIBUTED_SC_DNC = "pvbes_distributed_sc_dnc"


def _parse_tod(text: str) -> int:
    hh, mm = text.split(":")
    minutes = int(hh) * 60 + int(mm)
    if not 0 <= minutes < 24 * 60:
        raise ValueError("time of day %r outside 00:00..23:59" % text)
    return minutes


@dataclass(frozen=True)
class DncWindows:
    """Complementary charge/discharge windows over the day."""

    charge_start: str = "06:00"
    charge_end: str = "18:00"
    discharge_start: str = "18:00"
    discharge_end: str = "06:00"

    def check(self) -> list:
        """Violation messages, empty when the windows are well formed."""
        try:
            cs, ce = _parse_tod(self.charge_start), _parse_tod(self.charge_end)
            ds, de = _parse_tod(self.discharge_start), _parse_tod(self.discharge_end)
        except ValueError as exc:
            return [str(exc)]
        if ce != ds or de != cs:
            return ["charge and discharge windows must tile the day"]
        return []

    def in_charge_window(self, minutes_of_day: int) -> bool:
        start, end = _parse_tod(self.charge_start), _parse_tod(self.charge_end)
        if start <= end:
            return start <= minutes_of_day < end
        return minutes_of_day >= start or minutes_of_day < end

    def in_discharge_window(self, minutes_of_day: int) -> bool:
        start, end = _parse_tod(self.discharge_start), _parse_tod(self.discharge_end)
        if start <= end:
            return start <= minutes_of_day < end
        return minutes_of_day >= start or minutes_of_day < end


@dataclass
class DispatchResult:
    """Realized battery powers plus per-bus grid residuals for one step.

    p_cha/p_dis are keyed by battery index in the scenario's unit list;
    residual_kw by bus (positive = fed to the grid). Mutual exclusion holds
    per unit by construction.
    """

    p_cha: dict = field(default_factory=dict)
    p_dis: dict = field(default_factory=dict)
    residual_kw: dict = field(default_factory=dict)


def dispatch_pv_sc(pv_gen_kw: float, load_kw: float) -> float:
    """Serve the local load first; the signed residual meets the grid."""
    return pv_gen_kw - load_kw


def dispatch_bes_dnc(windows: DncWindows, minutes_of_day: int, unit: BesUnit, state: BesState, dt_hours: float):
    """Time-of-day cycling: full-rate charge by day, full-rate discharge by night."""
    if windows.in_charge_window(minutes_of_day):
        return feasible_power(unit, state, -unit.p_cha_max_kw, dt_hours), 0.0
    if windows.in_discharge_window(minutes_of_day):
        return 0.0, feasible_power(unit, state, unit.p_dis_max_kw, dt_hours)
    return 0.0, 0.0


def dispatch_pvbes_decentralized(unit: BesUnit, state: BesState, pv_gen_kw: float, load_kw: float, dt_hours: float):
    """Local self-consumption: battery absorbs surplus, covers deficit.

    Returns (p_cha, p_dis, residual_after) where residual_after is what still
    crosses the bus boundary once the battery has acted.
    """
    residual = pv_gen_kw - load_kw
    if residual > 0.0:
        p_cha = feasible_power(unit, state, -residual, dt_hours)
        return p_cha, 0.0, residual + p_cha
    if residual < 0.0:
        p_dis = feasible_power(unit, state, -residual, dt_hours)
        return 0.0, p_dis, residual + p_dis
    return 0.0, 0.0, 0.0


def allocate_proportional(amount_kw: float, feasible_kw: list) -> list:
    """Split a nonnegative amount across units proportionally to feasibility.

    Shares never exceed the per-unit feasible value; when the fleet cannot
    absorb the full amount everyone runs at its feasible maximum.
    """
    total = sum(feasible_kw)
    if total <= 0.0:
        return [0.0] * len(feasible_kw)
    if amount_kw >= total:
        return list(feasible_kw)
    # amount * (f / total) so a lone unit receives exactly amount (f/total == 1.0)
    return [amount_kw * (f / total) for f in feasible_kw]


def dispatch_pvbes_distributed(
    units: list,
    states: list,
    zone_pv_kw: float,
    zone_load_kw: float,
    dt_hours: float,
    windows: DncWindows | None = None,
    minutes_of_day: int | None = None,
):
    """Zone-coordinated self-consumption over the zone's battery fleet.

    The joint residual (zone PV minus zone load) charges or discharges the
    fleet proportionally to each unit's feasible power. With windows given,
    charging is permitted only inside the charge window and discharging only
    inside the discharge window. Returns (list of (p_cha, p_dis), zone export).
    """
    residual = zone_pv_kw - zone_load_kw
    n = len(units)
    powers = [(0.0, 0.0)] * n

    charge_ok = residual > 0.0 and (windows is None or windows.in_charge_window(minutes_of_day))
    discharge_ok = residual < 0.0 and (windows is None or windows.in_discharge_window(minutes_of_day))

    if charge_ok:
        feas = [-feasible_power(u, s, -u.p_cha_max_kw, dt_hours) for u, s in zip(units, states)]
        shares = allocate_proportional(residual, feas)
        powers = [(-share, 0.0) for share in shares]
    elif discharge_ok:
        feas = [feasible_power(u, s, u.p_dis_max_kw, dt_hours) for u, s in zip(units, states)]
        shares = allocate_proportional(-residual, feas)
        powers = [(0.0, share) for share in shares]

    export = residual + sum(pc + pd for pc, pd in powers)
    return powers, export
