"""Scenario assembly: config files, mini-PV placement, penetration, noise.

A scenario bundles a grid, device fleets, profiles, a dispatch strategy,
a reactive-power control mode, and the sensitivity knobs (beta, gamma1,
gamma2). Config files are TOML or JSON; `load_config` resolves file paths
relative to the config file itself.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:
    import tomli as _toml

from .control import CosPhiCurve, FixedCosPhi, NoControl, QofP, QofV, QvCurve
from .der import BesUnit, LoadUnit, MpvUnit, PvUnit
from .grid_model import GridTopology, load_topology, partition_zones
from .power_flow import VoltageLimits
from .profiles import ProfileError, ProfileSet, load_profiles
from .strategies import DncWindows, StrategyKind

PLACEMENT_STREAM = 101
LOAD_NOISE_STREAM = 102
PV_NOISE_STREAM = 103
MPV_NOISE_STREAM = 104
BES_EFF_STREAM = 105

DEFAULT_SEED = 42

# Fleet-evolution multipliers: pv scale, storage energy, storage power, load scale.
VARIANT_MULTIPLIERS = {
    "base": {"pv": 1.0, "bes_energy": 1.0, "bes_power": 1.0, "load": 1.0},
    "y2024": {"pv": 1.25, "bes_energy": 1.25, "bes_power": 1.0, "load": 1.0},
    "y2034": {"pv": 1.60, "bes_energy": 1.60, "bes_power": 1.25, "load": 1.10},
}


class ConfigError(Exception):
    """Invalid scenario config; `violations` holds 'key.path: message' lines."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class NoiseConfig:
    load_std: float = 0.01
    pv_std: float = 0.10
    mpv_std: float = 0.10
    truncation: float = 3.0
    enabled: bool = True


@dataclass(frozen=True)
class SensitivityParams:
    beta: float = 0.0
    gamma1_w: float = 800.0
    gamma2_w: float = 1200.0
    mpv_profiles: tuple = ()


@dataclass(frozen=True)
class ControlSpec:
    """Control-mode recipe. Power thresholds are fractions of the bus group
    inverter rating so one spec serves differently sized buses."""

    kind: str = "none"  # none | q_of_v | cosphi_p | fixed_cosphi
    qv: QvCurve = field(default_factory=QvCurve)
    cosphi_p1_frac: float = 0.5
    cosphi_p2_frac: float = 1.0
    cosphi_c1: float = 1.0
    cosphi_c2: float = 0.9
    cosphi_excitation: str = "under"
    fixed_setpoint: float = 0.95
    fixed_excitation: str = "under"
    fixed_threshold_frac: float = 0.0

    def mode_for(self, s_group_kva: float):
        """Concrete mode object for a bus whose inverters total s_group_kva."""
        if self.kind == "none":
            return NoControl()
        if self.kind == "q_of_v":
            return QofV(curve=self.qv)
        if self.kind == "cosphi_p":
            curve = CosPhiCurve(
                p1_kw=self.cosphi_p1_frac * s_group_kva,
                p2_kw=self.cosphi_p2_frac * s_group_kva,
                c1=self.cosphi_c1,
                c2=self.cosphi_c2,
                excitation=self.cosphi_excitation,
            )
            return QofP(curve=curve)
        if self.kind == "fixed_cosphi":
            return FixedCosPhi(
                setpoint=self.fixed_setpoint,
                excitation=self.fixed_excitation,
                p_threshold_kw=self.fixed_threshold_frac * s_group_kva,
            )
        raise ConfigError(["control.kind: unknown mode %r" % self.kind])


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    topology: GridTopology
    profiles: ProfileSet
    loads: tuple
    pvs: tuple
    bes: tuple
    mpvs: tuple  # fixed units from the config; beta placement adds more
    strategy: StrategyKind = StrategyKind.PV_SC
    windows: DncWindows = field(default_factory=DncWindows)
    bes_reactive: bool = False
    control: ControlSpec = field(default_factory=ControlSpec)
    sensitivity: SensitivityParams = field(default_factory=SensitivityParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    horizon: int = 96
    dt_hours: float = 0.25
    seed: int = DEFAULT_SEED
    placement_seed: int | None = None  # sweep keeps placement on the master seed
    variant: str = "base"
    qv_inner_iterations: int = 1
    include_slack_vm: bool = False
    skip_initial_step: bool = True
    initial_soc: float | None = None
    limits: VoltageLimits = field(default_factory=VoltageLimits)
    sweep_betas: tuple | None = None
    sweep_gamma1_w: tuple | None = None
    sweep_gamma2_w: tuple | None = None
    source_path: str | None = None


def _read_raw(path: str) -> dict:
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    with open(path, "rb") as fh:
        return _toml.load(fh)


def _get(raw: dict, dotted: str, default=None):
    node = raw
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _check_number(violations, raw, key, lo=None, hi=None, default=None, integer=False):
    value = _get(raw, key, default)
    if value is None:
        return default
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        violations.append("%s: expected a number, got %r" % (key, value))
        return default
    if integer and int(value) != value:
        violations.append("%s: expected an integer, got %r" % (key, value))
        return default
    if lo is not None and value < lo:
        violations.append("%s: %s is below the minimum %s" % (key, value, lo))
        return default
    if hi is not None and value > hi:
        violations.append("%s: %s is above the maximum %s" % (key, value, hi))
        return default
    return int(value) if integer else float(value)


def _resolve(base_dir: str, rel: str) -> str:
    if os.path.isabs(rel):
        return rel
    return os.path.normpath(os.path.join(base_dir, rel))


def _build(path: str) -> ScenarioConfig:
    violations = []
    try:
        raw = _read_raw(path)
    except FileNotFoundError:
        raise ConfigError(["config: file not found: %s" % path]) from None
    except (json.JSONDecodeError, _toml.TOMLDecodeError) as exc:
        raise ConfigError(["config: parse error: %s" % exc]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config: top level must be a table"])

    base_dir = os.path.dirname(os.path.abspath(path))
    name = _get(raw, "name", os.path.splitext(os.path.basename(path))[0])

    # --- grid ---
    topology = None
    topo_rel = _get(raw, "grid.topology")
    if not topo_rel:
        violations.append("grid.topology: missing path to the grid JSON file")
    else:
        topo_path = _resolve(base_dir, str(topo_rel))
        try:
            topology = load_topology(topo_path)
        except FileNotFoundError:
            violations.append("grid.topology: file not found: %s" % topo_path)
        except Exception as exc:
            violations.append("grid.topology: %s" % exc)

    # --- profiles ---
    profiles = None
    prof_rel = _get(raw, "profiles.file")
    if not prof_rel:
        violations.append("profiles.file: missing path to the profile CSV")
    else:
        prof_path = _resolve(base_dir, str(prof_rel))
        try:
            profiles = load_profiles(prof_path)
        except (ProfileError, FileNotFoundError) as exc:
            violations.append("profiles.file: %s" % exc)

    # --- run ---
    horizon = _check_number(violations, raw, "run.horizon", lo=1, default=96, integer=True)
    dt_hours = _check_number(violations, raw, "run.dt_hours", lo=1e-9, default=0.25)
    seed = _check_number(violations, raw, "run.seed", default=DEFAULT_SEED, integer=True)
    qv_inner = _check_number(violations, raw, "run.qv_inner_iterations", lo=1, hi=10, default=1, integer=True)
    include_slack = bool(_get(raw, "run.include_slack_vm", False))
    skip_initial = bool(_get(raw, "run.skip_initial_step", True))
    initial_soc = _check_number(violations, raw, "run.initial_soc", lo=0.0, hi=1.0, default=None)
    variant = str(_get(raw, "run.variant", "base"))
    if variant not in VARIANT_MULTIPLIERS and not isinstance(_get(raw, "variant"), dict):
        violations.append("run.variant: unknown variant %r (known: %s)" % (variant, ", ".join(sorted(VARIANT_MULTIPLIERS))))
    if profiles is not None and horizon is not None and horizon > profiles.n_rows:
        violations.append("run.horizon: %d steps requested but the profile file has %d rows" % (horizon, profiles.n_rows))
    if profiles is not None and dt_hours is not None and abs(dt_hours * 60.0 - profiles.dt_minutes) > 1e-6:
        violations.append("run.dt_hours: %s h does not match the profile spacing of %d min" % (dt_hours, profiles.dt_minutes))

    mult = dict(VARIANT_MULTIPLIERS.get(variant, VARIANT_MULTIPLIERS["base"]))
    user_mult = _get(raw, "variant")
    if isinstance(user_mult, dict):
        for key in ("pv", "bes_energy", "bes_power", "load"):
            value = _check_number(violations, {"variant": user_mult}, "variant.%s" % key, lo=0.0, default=None)
            if value is not None:
                mult[key] = value

    # --- voltage band ---
    v_ref = _check_number(violations, raw, "limits.v_ref", lo=0.9, hi=1.1, default=1.0)
    epsilon = _check_number(violations, raw, "limits.epsilon", lo=0.0, hi=0.2, default=0.05)
    limits = VoltageLimits(v_ref=v_ref, epsilon=epsilon)

    # --- strategy ---
    strat_name = str(_get(raw, "strategy.kind", "pv_sc"))
    strategy = None
    try:
        strategy = StrategyKind(strat_name)
    except ValueError:
        violations.append("strategy.kind: unknown strategy %r (known: %s)" % (strat_name, ", ".join(k.value for k in StrategyKind)))
    windows = DncWindows(
        charge_start=str(_get(raw, "strategy.charge_start", "06:00")),
        charge_end=str(_get(raw, "strategy.charge_end", "18:00")),
        discharge_start=str(_get(raw, "strategy.discharge_start", "18:00")),
        discharge_end=str(_get(raw, "strategy.discharge_end", "06:00")),
    )
    for msg in windows.check():
        violations.append("strategy.windows: %s" % msg)
    bes_reactive = bool(_get(raw, "strategy.bes_reactive", False))

    # --- control ---
    control_kind = str(_get(raw, "control.kind", "none"))
    if control_kind not in ("none", "q_of_v", "cosphi_p", "fixed_cosphi"):
        violations.append("control.kind: unknown mode %r" % control_kind)
        control_kind = "none"
    qv_kwargs = {}
    for fieldname, key in (("v1", "control.qv.v1"), ("v2", "control.qv.v2"), ("v3", "control.qv.v3"), ("v4", "control.qv.v4")):
        value = _check_number(violations, raw, key, lo=0.8, hi=1.2, default=None)
        if value is not None:
            qv_kwargs[fieldname] = value
    qv_ref = _check_number(violations, raw, "control.qv.v_ref", lo=0.9, hi=1.1, default=None)
    if qv_ref is not None:
        qv_kwargs["v_ref"] = qv_ref
    qv_qmax = _check_number(violations, raw, "control.qv.q_max_kvar", lo=0.0, default=None)
    if qv_qmax is not None:
        qv_kwargs["q_max_kvar"] = qv_qmax
    qv = QvCurve(**qv_kwargs)
    for msg in qv.check():
        violations.append("control.%s" % msg)

    control = ControlSpec(
        kind=control_kind,
        qv=qv,
        cosphi_p1_frac=_check_number(violations, raw, "control.cosphi.p1_frac", lo=0.0, hi=1.0, default=0.5),
        cosphi_p2_frac=_check_number(violations, raw, "control.cosphi.p2_frac", lo=0.0, hi=1.0, default=1.0),
        cosphi_c1=_check_number(violations, raw, "control.cosphi.c1", lo=0.0, hi=1.0, default=1.0),
        cosphi_c2=_check_number(violations, raw, "control.cosphi.c2", lo=0.0, hi=1.0, default=0.9),
        cosphi_excitation=str(_get(raw, "control.cosphi.excitation", "under")),
        fixed_setpoint=_check_number(violations, raw, "control.fixed.setpoint", lo=0.0, hi=1.0, default=0.95),
        fixed_excitation=str(_get(raw, "control.fixed.excitation", "under")),
        fixed_threshold_frac=_check_number(violations, raw, "control.fixed.threshold_frac", lo=0.0, hi=1.0, default=0.0),
    )
    if control.cosphi_p2_frac <= control.cosphi_p1_frac:
        violations.append("control.cosphi.p2_frac: must exceed p1_frac")
    for mode_key in ("cosphi_excitation", "fixed_excitation"):
        if getattr(control, mode_key) not in ("under", "over"):
            violations.append("control.%s: must be 'under' or 'over'" % mode_key.replace("_", "."))
    if control.kind == "fixed_cosphi" and control.fixed_setpoint <= 0.0:
        violations.append("control.fixed.setpoint: must be positive")

    # --- sensitivity ---
    beta = _check_number(violations, raw, "sensitivity.beta", lo=0.0, hi=1.0, default=0.0)
    gamma1 = _check_number(violations, raw, "sensitivity.gamma1_w", lo=1.0, default=800.0)
    gamma2 = _check_number(violations, raw, "sensitivity.gamma2_w", lo=1.0, default=1200.0)
    mpv_profiles = _get(raw, "sensitivity.mpv_profiles", [])
    if not isinstance(mpv_profiles, list):
        violations.append("sensitivity.mpv_profiles: expected a list of profile column names")
        mpv_profiles = []
    sensitivity = SensitivityParams(beta=beta, gamma1_w=gamma1, gamma2_w=gamma2, mpv_profiles=tuple(str(p) for p in mpv_profiles))
    if beta and beta > 0 and not sensitivity.mpv_profiles:
        violations.append("sensitivity.mpv_profiles: required when beta > 0")
    if profiles is not None:
        for col in sensitivity.mpv_profiles:
            if not profiles.has_column(col):
                violations.append("sensitivity.mpv_profiles: profile column %r missing" % col)

    # --- noise ---
    noise = NoiseConfig(
        load_std=_check_number(violations, raw, "noise.load_std", lo=0.0, default=0.01),
        pv_std=_check_number(violations, raw, "noise.pv_std", lo=0.0, default=0.10),
        mpv_std=_check_number(violations, raw, "noise.mpv_std", lo=0.0, default=0.10),
        truncation=_check_number(violations, raw, "noise.truncation", lo=0.1, default=3.0),
        enabled=bool(_get(raw, "noise.enabled", True)),
    )

    # --- devices ---
    n_buses = topology.n_buses if topology is not None else 0
    load_kinds = {b.index for b in topology.buses if b.kind == "load"} if topology is not None else set()

    def check_bus(key, bus):
        if topology is None:
            return
        if not isinstance(bus, int) or bus < 0 or bus >= n_buses:
            violations.append("%s.bus: %r is not a bus of the grid" % (key, bus))
        elif bus not in load_kinds:
            violations.append("%s.bus: bus %d is not a connection bus (kind 'load')" % (key, bus))

    def check_profile(key, column):
        if profiles is None:
            return
        if not profiles.has_column(column):
            violations.append("%s.profile: profile column %r missing" % (key, column))

    loads = []
    for i, entry in enumerate(_get(raw, "devices.load", []) or []):
        key = "devices.load[%d]" % i
        bus = entry.get("bus")
        check_bus(key, bus)
        column = str(entry.get("profile", ""))
        if not column:
            violations.append("%s.profile: missing profile column name" % key)
        check_profile(key, column)
        scale = _check_number(violations, {"s": entry}, "s.scale", lo=0.0, default=1.0)
        cosphi = _check_number(violations, {"s": entry}, "s.cosphi", lo=0.05, hi=1.0, default=0.95)
        loads.append(LoadUnit(bus=bus if isinstance(bus, int) else 0, profile=column,
                              scale=(scale if scale is not None else 1.0) * mult["load"],
                              cosphi=cosphi, name=str(entry.get("name", "load%d" % i))))

    pvs = []
    for i, entry in enumerate(_get(raw, "devices.pv", []) or []):
        key = "devices.pv[%d]" % i
        bus = entry.get("bus")
        check_bus(key, bus)
        column = str(entry.get("profile", ""))
        if not column:
            violations.append("%s.profile: missing profile column name" % key)
        check_profile(key, column)
        kwp = _check_number(violations, {"s": entry}, "s.scale_kwp", lo=0.0, default=None)
        if kwp is None:
            violations.append("%s.scale_kwp: missing peak power" % key)
            kwp = 0.0
        s_rated = _check_number(violations, {"s": entry}, "s.s_rated_kva", lo=0.0, default=None)
        if s_rated is None:
            s_rated = 1.25 * kwp
        pvs.append(PvUnit(bus=bus if isinstance(bus, int) else 0, s_rated_kva=s_rated * mult["pv"],
                          scale_kwp=kwp * mult["pv"], profile=column, name=str(entry.get("name", "pv%d" % i))))

    bes_units = []
    for i, entry in enumerate(_get(raw, "devices.bes", []) or []):
        key = "devices.bes[%d]" % i
        bus = entry.get("bus")
        check_bus(key, bus)
        e_max = _check_number(violations, {"s": entry}, "s.e_max_kwh", lo=1e-9, default=None)
        p_cha = _check_number(violations, {"s": entry}, "s.p_cha_max_kw", lo=1e-9, default=None)
        p_dis = _check_number(violations, {"s": entry}, "s.p_dis_max_kw", lo=1e-9, default=None)
        for field_name, value in (("e_max_kwh", e_max), ("p_cha_max_kw", p_cha), ("p_dis_max_kw", p_dis)):
            if value is None:
                violations.append("%s.%s: missing" % (key, field_name))
        s_rated = _check_number(violations, {"s": entry}, "s.s_rated_kva", lo=0.0, default=None)
        soc_min = _check_number(violations, {"s": entry}, "s.soc_min", lo=0.0, hi=1.0, default=0.20)
        soc_max = _check_number(violations, {"s": entry}, "s.soc_max", lo=0.0, hi=1.0, default=0.90)
        if soc_min is not None and soc_max is not None and soc_max <= soc_min:
            violations.append("%s.soc_max: must exceed soc_min" % key)
        mu_cha = _check_number(violations, {"s": entry}, "s.mu_cha", lo=0.05, hi=1.0, default=0.95)
        mu_dis = _check_number(violations, {"s": entry}, "s.mu_dis", lo=0.05, hi=1.0, default=0.95)
        mu_self = _check_number(violations, {"s": entry}, "s.mu_self", lo=0.0, hi=0.1, default=0.0)
        if None in (e_max, p_cha, p_dis):
            continue
        p_cha_v = p_cha * mult["bes_power"]
        p_dis_v = p_dis * mult["bes_power"]
        bes_units.append(BesUnit(bus=bus if isinstance(bus, int) else 0,
                                 e_max_kwh=e_max * mult["bes_energy"],
                                 p_cha_max_kw=p_cha_v, p_dis_max_kw=p_dis_v,
                                 s_rated_kva=(s_rated * mult["bes_power"] if s_rated is not None else max(p_cha_v, p_dis_v)),
                                 soc_min=soc_min, soc_max=soc_max,
                                 mu_cha=mu_cha, mu_dis=mu_dis, mu_self=mu_self,
                                 name=str(entry.get("name", "bes%d" % i))))

    mpvs = []
    for i, entry in enumerate(_get(raw, "devices.mpv", []) or []):
        key = "devices.mpv[%d]" % i
        bus = entry.get("bus")
        check_bus(key, bus)
        column = str(entry.get("profile", ""))
        if not column:
            violations.append("%s.profile: missing profile column name" % key)
        check_profile(key, column)
        g1 = _check_number(violations, {"s": entry}, "s.gamma1_w", lo=1.0, default=gamma1)
        g2 = _check_number(violations, {"s": entry}, "s.gamma2_w", lo=1.0, default=gamma2)
        mpvs.append(MpvUnit(bus=bus if isinstance(bus, int) else 0, gamma1_w=g1, gamma2_w=g2,
                            profile=column, name=str(entry.get("name", "mpv%d" % i))))

    # PV and mini-PV profile fractions must stay in [0, 1]
    if profiles is not None:
        frac_cols = {u.profile for u in pvs} | {u.profile for u in mpvs} | set(sensitivity.mpv_profiles)
        for col in sorted(frac_cols):
            if profiles.has_column(col):
                arr = profiles.column(col)
                if arr.min() < 0.0 or arr.max() > 1.0 + 1e-12:
                    violations.append("profiles.file: column %r has values outside [0, 1]" % col)

    if strategy in (StrategyKind.BES_DNC, StrategyKind.PVBES_DECENTRALIZED_SC,
                    StrategyKind.PVBES_DISTRIBUTED_SC, StrategyKind.PVBES_DISTRIBUTED_SC_DNC) and not bes_units:
        violations.append("strategy.kind: %r needs at least one storage unit" % strat_name)

    # --- optional sweep axes ---
    def axis(key, lo, hi=None):
        values = _get(raw, key)
        if values is None:
            return None
        if not isinstance(values, list) or not values:
            violations.append("%s: expected a non-empty list of numbers" % key)
            return None
        out = []
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                violations.append("%s: expected numbers, got %r" % (key, v))
                return None
            if v < lo or (hi is not None and v > hi):
                violations.append("%s: %s outside [%s, %s]" % (key, v, lo, hi if hi is not None else "inf"))
                return None
            out.append(float(v))
        return tuple(out)

    sweep_betas = axis("sweep.betas", 0.0, 1.0)
    sweep_gamma1 = axis("sweep.gamma1_w", 1.0)
    sweep_gamma2 = axis("sweep.gamma2_w", 1.0)

    if violations:
        raise ConfigError(sorted(set(violations)))

    return ScenarioConfig(
        name=str(name),
        topology=topology,
        profiles=profiles,
        loads=tuple(loads),
        pvs=tuple(pvs),
        bes=tuple(bes_units),
        mpvs=tuple(mpvs),
        strategy=strategy,
        windows=windows,
        bes_reactive=bes_reactive,
        control=control,
        sensitivity=sensitivity,
        noise=noise,
        horizon=horizon,
        dt_hours=dt_hours,
        seed=int(seed),
        variant=variant,
        qv_inner_iterations=qv_inner,
        include_slack_vm=include_slack,
        skip_initial_step=skip_initial,
        initial_soc=initial_soc,
        limits=limits,
        sweep_betas=sweep_betas,
        sweep_gamma1_w=sweep_gamma1,
        sweep_gamma2_w=sweep_gamma2,
        source_path=os.path.abspath(path),
    )


def load_config(path: str, seed_override=None) -> ScenarioConfig:
    """Parse, validate, and resolve a scenario config file.

    Raises ConfigError listing every violation as 'key.path: message'.
    CLI seed beats config seed beats the default of 42.
    """
    cfg = _build(path)
    if seed_override is not None:
        cfg = replace(cfg, seed=int(seed_override))
    return cfg


def collect_violations(path: str) -> list:
    """All config violations for a file, empty when it is valid."""
    try:
        _build(path)
    except ConfigError as exc:
        return list(exc.violations)
    except (OSError, ProfileError, ValueError) as exc:
        return [str(exc)]
    return []


def with_sensitivity(cfg: ScenarioConfig, beta=None, gamma1_w=None, gamma2_w=None) -> ScenarioConfig:
    params = cfg.sensitivity
    params = SensitivityParams(
        beta=params.beta if beta is None else beta,
        gamma1_w=params.gamma1_w if gamma1_w is None else gamma1_w,
        gamma2_w=params.gamma2_w if gamma2_w is None else gamma2_w,
        mpv_profiles=params.mpv_profiles,
    )
    return replace(cfg, sensitivity=params)


def place_mpv(topology: GridTopology, load_buses, params: SensitivityParams, rng) -> list:
    """Install mini-PV on round(beta * n) of the load buses.

    The bus order comes from one shuffled permutation, so a smaller beta
    always selects a subset of a larger beta's buses (same rng state).
    Buses in the same zone share one profile column; the column is drawn
    per zone from the eligible list.
    """
    buses = sorted(load_buses)
    if not buses or params.beta <= 0.0:
        return []
    count = int(params.beta * len(buses) + 0.5)  # round half up
    if count == 0:
        return []
    order = list(buses)
    rng.shuffle(order)
    chosen = order[:count]

    zone_of = topology.zone_of or partition_zones(topology)
    profile_of_zone = {}
    units = []
    for bus in sorted(chosen):
        zone = zone_of.get(bus, -1)
        if zone not in profile_of_zone:
            pick = int(rng.integers(0, len(params.mpv_profiles)))
            profile_of_zone[zone] = params.mpv_profiles[pick]
        units.append(MpvUnit(bus=bus, gamma1_w=params.gamma1_w, gamma2_w=params.gamma2_w,
                             profile=profile_of_zone[zone], name="mpv_b%d" % bus))
    return units


def placement_rng(cfg: ScenarioConfig):
    seed = cfg.placement_seed if cfg.placement_seed is not None else cfg.seed
    return np.random.default_rng(np.random.SeedSequence([int(seed), PLACEMENT_STREAM]))


def resolved_mpv_units(cfg: ScenarioConfig) -> list:
    """Fixed mini-PV units plus the beta-placed fleet."""
    units = list(cfg.mpvs)
    load_buses = sorted({u.bus for u in cfg.loads})
    units.extend(place_mpv(cfg.topology, load_buses, cfg.sensitivity, placement_rng(cfg)))
    return units


def mpv_energy_kwh(mpv_units, profiles: ProfileSet, horizon: int, dt_hours: float) -> float:
    total = 0.0
    for unit in mpv_units:
        frac = profiles.column(unit.profile)[:horizon]
        cap = np.minimum(frac * unit.gamma2_w, unit.gamma1_w) / 1000.0
        total += float(cap.sum()) * dt_hours
    return total


def load_energy_kwh(loads, profiles: ProfileSet, horizon: int, dt_hours: float) -> float:
    total = 0.0
    for unit in loads:
        total += float(profiles.column(unit.profile)[:horizon].sum()) * unit.scale * dt_hours
    return total


def penetration_alpha(mpv_units, profiles: ProfileSet, load_energy: float, horizon: int, dt_hours: float = 0.25) -> float:
    """Mini-PV energy over the horizon divided by consumed load energy."""
    if load_energy <= 0.0:
        return 0.0
    return mpv_energy_kwh(mpv_units, profiles, horizon, dt_hours) / load_energy


def alpha_transformer(mpv_units, profiles: ProfileSet, s_rated_kva: float, horizon: int, dt_hours: float = 0.25) -> float:
    """Diagnostic twin of the penetration ratio, normalized by what the
    transformer could carry over the same horizon."""
    denom = s_rated_kva * horizon * dt_hours
    if denom <= 0.0:
        return 0.0
    return mpv_energy_kwh(mpv_units, profiles, horizon, dt_hours) / denom


def truncated_factors(shape, std: float, truncation: float, rng) -> np.ndarray:
    """Multiplicative factors 1 + N(0, std^2) with draws clipped to +-truncation sigma."""
    if std <= 0.0:
        return np.ones(shape)
    draws = rng.standard_normal(shape) * std
    lim = truncation * std
    # no out= so scalar (shape ()) draws clip cleanly too
    return 1.0 + np.clip(draws, -lim, lim)


def apply_noise(value: float, std: float, truncation: float, rng, floor_zero: bool = False) -> float:
    factor = float(truncated_factors((), std, truncation, rng))
    out = value * factor
    if floor_zero and out < 0.0:
        return 0.0
    return out
