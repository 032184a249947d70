"""Quasi-static time-series engine: profile-driven runs, sweeps, comparisons.

Each step performs, in order: efficiency sampling, profile reads with
measurement noise, device output evaluation, storage dispatch, reactive
control, one radial power-flow solve, storage state update, metrics.
Voltage-droop control reads the previous step's bus voltage; an optional
inner loop re-solves until the droop and the grid agree.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from . import metrics
from .control import mode_q_kvar
from .der import bes_step, initial_state
from .grid_model import partition_zones
from .power_flow import (
    InfeasibleVoltage,
    NodalInjection,
    NonConvergence,
    TreeIndex,
    solve,
)
from .scenario import (
    BES_EFF_STREAM,
    LOAD_NOISE_STREAM,
    MPV_NOISE_STREAM,
    PV_NOISE_STREAM,
    ScenarioConfig,
    alpha_transformer,
    load_energy_kwh,
    penetration_alpha,
    resolved_mpv_units,
    truncated_factors,
    with_sensitivity,
)
from .strategies import (
    StrategyKind,
    dispatch_bes_dnc,
    dispatch_pvbes_decentralized,
    dispatch_pvbes_distributed,
)
from .units import S_BASE_KVA

QV_INNER_TOL_PU = 1e-6

COMPARE_MODE_KINDS = ("none", "q_of_v", "cosphi_p", "fixed_cosphi")


@dataclass
class StepRecord:
    t: int
    timestamp: str
    minutes: int
    vm: float
    gl_mw: float
    tl_pct: float
    ll_mean_pct: float
    ll_max_pct: float
    v_min: float
    v_max: float
    band_violations: int
    load_kw: float
    pv_kw: float
    mpv_kw: float
    bes_kw: float
    q_der_kvar: float
    slack_p_kw: float
    slack_q_kvar: float
    iterations: int
    v_pu: list = field(default_factory=list)
    bes: list = field(default_factory=list)  # (name, bus, p_cha, p_dis, soc, eta_c, eta_d, eta_s)
    injections: NodalInjection | None = None


@dataclass
class RunSummary:
    name: str
    steps: int
    dt_hours: float
    seed: int
    strategy: str
    control: str
    variant: str
    beta: float
    gamma1_w: float
    gamma2_w: float
    n_mpv: int
    alpha: float
    alpha_transformer: float
    vm_mean_pu: float
    vm_min_pu: float
    vm_max_pu: float
    v_min_pu: float
    v_max_pu: float
    gl_total_mwh: float
    gl_mean_mw: float
    tl_mean_pct: float
    tl_max_pct: float
    ll_mean_pct: float
    ll_max_pct: float
    band_violations: int
    hard_violations: int
    import_kwh: float
    export_kwh: float
    q_der_kvarh: float
    bes_throughput_kwh: float
    bes_final_soc: list
    bes_min_soc: float
    bes_max_soc: float
    iterations_mean: float

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class RunResult:
    config: ScenarioConfig
    summary: RunSummary
    records: list
    mpv_units: list


class _Runtime:
    """Per-run precomputation: noisy series, groupings, control modes."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        topo = cfg.topology
        self.index = TreeIndex(topo)
        self.n = topo.n_buses
        self.zone_of = topo.zone_of if topo.zone_of else partition_zones(topo)
        self.mpv_units = resolved_mpv_units(cfg)

        T = cfg.horizon
        prof = cfg.profiles
        self.minutes = prof.minutes_of_day[:T]
        self.timestamps = prof.timestamps[:T]

        noise = cfg.noise
        trunc = noise.truncation

        # loads: per-bus kW / kvar matrices
        load_rng = _stream_rng(cfg.seed, LOAD_NOISE_STREAM)
        self.load_p = np.zeros((T, self.n))
        self.load_q = np.zeros((T, self.n))
        for u in cfg.loads:
            base = prof.column(u.profile)[:T] * u.scale
            if noise.enabled:
                base = base * truncated_factors(T, noise.load_std, trunc, load_rng)
            np.maximum(base, 0.0, out=base)
            tanphi = math.tan(math.acos(min(max(u.cosphi, 0.0), 1.0)))
            self.load_p[:, u.bus] += base
            self.load_q[:, u.bus] += base * tanphi

        # pv: per-unit output matrix, then per-bus totals
        pv_rng = _stream_rng(cfg.seed, PV_NOISE_STREAM)
        self.n_pv = len(cfg.pvs)
        self.pv_out = np.zeros((T, self.n_pv))
        for i, u in enumerate(cfg.pvs):
            frac = prof.column(u.profile)[:T].copy()
            if noise.enabled:
                frac *= truncated_factors(T, noise.pv_std, trunc, pv_rng)
            np.maximum(frac, 0.0, out=frac)
            self.pv_out[:, i] = np.minimum(frac * u.scale_kwp, u.s_rated_kva)
        self.pv_bus = np.zeros((T, self.n))
        for i, u in enumerate(cfg.pvs):
            self.pv_bus[:, u.bus] += self.pv_out[:, i]

        # mini-PV: noise factors are keyed by bus so that growing the fleet
        # never perturbs the series of already-placed units
        mpv_rng = _stream_rng(cfg.seed, MPV_NOISE_STREAM)
        mpv_factors = truncated_factors((T, self.n), noise.mpv_std, trunc, mpv_rng) if noise.enabled else None
        self.mpv_bus = np.zeros((T, self.n))
        for u in self.mpv_units:
            frac = prof.column(u.profile)[:T].copy()
            if mpv_factors is not None:
                frac = frac * mpv_factors[:, u.bus]
            np.maximum(frac, 0.0, out=frac)
            self.mpv_bus[:, u.bus] += np.minimum(frac * u.gamma2_w, u.gamma1_w) / 1000.0

        # storage efficiency draws, one triple per unit per step
        self.n_bes = len(cfg.bes)
        bes_rng = _stream_rng(cfg.seed, BES_EFF_STREAM)
        self.eta = np.zeros((T, self.n_bes, 3))
        for j, u in enumerate(cfg.bes):
            z = bes_rng.standard_normal((T, 3))
            self.eta[:, j, 0] = np.clip(u.mu_cha + u.sigma("cha") * z[:, 0], 1e-6, 1.0)
            self.eta[:, j, 1] = np.clip(u.mu_dis + u.sigma("dis") * z[:, 1], 1e-6, 1.0)
            self.eta[:, j, 2] = np.clip(u.mu_self + u.sigma("self") * z[:, 2], 0.0, 1.0 - 1e-9)

        # groupings
        self.bes_by_bus = {}
        for j, u in enumerate(cfg.bes):
            self.bes_by_bus.setdefault(u.bus, []).append(j)

        if cfg.strategy in (StrategyKind.PVBES_DISTRIBUTED_SC, StrategyKind.PVBES_DISTRIBUTED_SC_DNC):
            for u in cfg.bes:
                if u.bus not in self.zone_of:
                    raise ValueError("storage %r at bus %d sits outside every feeder zone" % (u.name, u.bus))
        zone_ids = sorted({self.zone_of[u.bus] for u in cfg.bes if u.bus in self.zone_of})
        self.zones = zone_ids
        self.zone_bes = {z: [] for z in zone_ids}
        for j, u in enumerate(cfg.bes):
            z = self.zone_of.get(u.bus)
            if z in self.zone_bes:
                self.zone_bes[z].append(j)
        # zone coordination sees the same (noisy) series the grid does
        self.zone_pv = np.zeros((T, len(zone_ids)))
        self.zone_load = np.zeros((T, len(zone_ids)))
        for zi, z in enumerate(zone_ids):
            for i, u in enumerate(cfg.pvs):
                if self.zone_of.get(u.bus) == z:
                    self.zone_pv[:, zi] += self.pv_out[:, i]
            for b, zz in self.zone_of.items():
                if zz == z:
                    self.zone_load[:, zi] += self.load_p[:, b]

        # reactive control groups: one mode instance per bus with inverters
        control_buses = sorted({u.bus for u in cfg.pvs} | ({u.bus for u in cfg.bes} if cfg.bes_reactive else set()))
        self.control_buses = control_buses
        self.pv_idx_at = {b: [i for i, u in enumerate(cfg.pvs) if u.bus == b] for b in control_buses}
        self.bes_idx_at = {b: (self.bes_by_bus.get(b, []) if cfg.bes_reactive else []) for b in control_buses}
        self.mode_at = {}
        for b in control_buses:
            s_group = sum(cfg.pvs[i].s_rated_kva for i in self.pv_idx_at[b])
            s_group += sum(cfg.bes[j].s_rated_kva for j in self.bes_idx_at[b])
            self.mode_at[b] = cfg.control.mode_for(s_group)


def _stream_rng(seed: int, stream: int):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def _dispatch(rt: _Runtime, t: int, states: list):
    """Storage setpoints for one step, per unit, before the grid solve."""
    cfg = rt.cfg
    kind = cfg.strategy
    n_bes = rt.n_bes
    powers = [(0.0, 0.0)] * n_bes
    if n_bes == 0 or kind == StrategyKind.PV_SC:
        return powers
    dt = cfg.dt_hours
    if kind == StrategyKind.BES_DNC:
        minutes = rt.minutes[t]
        for j, u in enumerate(cfg.bes):
            powers[j] = dispatch_bes_dnc(cfg.windows, minutes, u, states[j], dt)
        return powers
    if kind == StrategyKind.PVBES_DECENTRALIZED_SC:
        for bus, idxs in rt.bes_by_bus.items():
            rem = rt.pv_bus[t, bus] - rt.load_p[t, bus]
            for j in idxs:
                p_cha, p_dis, rem = dispatch_pvbes_decentralized(cfg.bes[j], states[j], rem, 0.0, dt)
                powers[j] = (p_cha, p_dis)
        return powers
    windows = cfg.windows if kind == StrategyKind.PVBES_DISTRIBUTED_SC_DNC else None
    minutes = rt.minutes[t] if windows is not None else None
    for zi, z in enumerate(rt.zones):
        idxs = rt.zone_bes[z]
        zone_powers, _ = dispatch_pvbes_distributed(
            [cfg.bes[j] for j in idxs],
            [states[j] for j in idxs],
            rt.zone_pv[t, zi],
            rt.zone_load[t, zi],
            dt,
            windows=windows,
            minutes_of_day=minutes,
        )
        for j, pw in zip(idxs, zone_powers):
            powers[j] = pw
    return powers


def _reactive_setpoints(rt: _Runtime, t: int, v_guess: list, bes_powers: list):
    """Per-bus reactive dispatch (q_pv, q_bes) given a voltage estimate."""
    cfg = rt.cfg
    q_pv = {}
    q_bes = {}
    for b in rt.control_buses:
        bound_pv = 0.0
        p_pv = 0.0
        for i in rt.pv_idx_at[b]:
            p = rt.pv_out[t, i]
            s = cfg.pvs[i].s_rated_kva
            p_pv += p
            gap = s * s - p * p
            if gap > 0.0:
                bound_pv += math.sqrt(gap)
        bound_bes = 0.0
        p_bes = 0.0
        for j in rt.bes_idx_at[b]:
            p = bes_powers[j][0] + bes_powers[j][1]
            s = cfg.bes[j].s_rated_kva
            p_bes += p
            gap = s * s - p * p
            if gap > 0.0:
                bound_bes += math.sqrt(gap)
        bound = bound_pv + bound_bes
        p_feed = p_pv + p_bes
        if p_feed < 0.0:
            p_feed = 0.0
        q = mode_q_kvar(rt.mode_at[b], v_guess[b], p_feed, bound)
        if q == 0.0:
            continue
        if bound_bes > 0.0:
            q_pv[b] = q * (bound_pv / bound)
            q_bes[b] = q * (bound_bes / bound)
        else:
            q_pv[b] = q
    return q_pv, q_bes


def run(cfg: ScenarioConfig, keep_records: bool = True) -> RunResult:
    """Simulate the scenario over its horizon.

    Solver failures abort the run and carry the offending step index.
    """
    rt = _Runtime(cfg)
    n = rt.n
    T = cfg.horizon
    dt = cfg.dt_hours

    states = [initial_state(u, cfg.initial_soc) for u in cfg.bes]
    inj = NodalInjection.zeros(n)
    v_prev = [1.0] * n
    v2_prev = None

    records = []
    agg_start = 1 if (cfg.skip_initial_step and T > 1) else 0
    vm_sum = 0.0
    vm_min = math.inf
    vm_max = -math.inf
    v_min = math.inf
    v_max = -math.inf
    gl_sum_mw = 0.0
    tl_sum = 0.0
    tl_max = 0.0
    ll_sum = 0.0
    ll_max = 0.0
    band_violations = 0
    hard_violations = 0
    import_kwh = 0.0
    export_kwh = 0.0
    q_kvarh = 0.0
    throughput_kwh = 0.0
    iter_sum = 0
    bes_min_soc = math.inf if rt.n_bes else 0.0
    bes_max_soc = -math.inf if rt.n_bes else 0.0
    n_agg = 0

    limits = cfg.limits
    hard = (limits.hard_low, limits.hard_high)
    is_qv = cfg.control.kind == "q_of_v" and rt.control_buses
    inner_iters = cfg.qv_inner_iterations if is_qv else 1

    for t in range(T):
        for j in range(rt.n_bes):
            states[j].eta_cha = rt.eta[t, j, 0]
            states[j].eta_dis = rt.eta[t, j, 1]
            states[j].eta_self = rt.eta[t, j, 2]

        bes_powers = _dispatch(rt, t, states)

        p_load = inj.p_load_kw
        q_load = inj.q_load_kvar
        p_pv = inj.p_pv_kw
        p_mpv = inj.p_mpv_kw
        p_bes = inj.p_bes_kw
        for b in range(n):
            p_load[b] = rt.load_p[t, b]
            q_load[b] = rt.load_q[t, b]
            p_pv[b] = rt.pv_bus[t, b]
            p_mpv[b] = rt.mpv_bus[t, b]
            p_bes[b] = 0.0
        for j in range(rt.n_bes):
            p_bes[cfg.bes[j].bus] += bes_powers[j][0] + bes_powers[j][1]

        v_guess = v_prev
        solution = None
        for _ in range(inner_iters):
            q_pv_by_bus, q_bes_by_bus = _reactive_setpoints(rt, t, v_guess, bes_powers)
            for b in range(n):
                inj.q_pv_kvar[b] = 0.0
                inj.q_bes_kvar[b] = 0.0
            for b, q in q_pv_by_bus.items():
                inj.q_pv_kvar[b] = q
            for b, q in q_bes_by_bus.items():
                inj.q_bes_kvar[b] = q
            try:
                solution = solve(rt.index, inj, v2_start=v2_prev)
            except (NonConvergence, InfeasibleVoltage) as exc:
                raise type(exc)("step %d: %s" % (t, exc)) from exc
            if not is_qv or inner_iters == 1:
                break
            dv = max(abs(a - b) for a, b in zip(solution.v_pu, v_guess))
            v_guess = solution.v_pu
            if dv <= QV_INNER_TOL_PU:
                break

        bes_rows = []
        for j, u in enumerate(cfg.bes):
            new_state, p_cha, p_dis = bes_step(u, states[j], bes_powers[j][0], bes_powers[j][1], dt)
            states[j] = new_state
            bes_rows.append((u.name, u.bus, p_cha, p_dis, new_state.soc,
                             new_state.eta_cha, new_state.eta_dis, new_state.eta_self))

        snap = metrics.snapshot(solution, include_slack=cfg.include_slack_vm)
        step_v_min = min(solution.v_pu[b] for b in range(n) if b != rt.index.root) if n > 1 else solution.v_pu[0]
        step_v_max = max(solution.v_pu[b] for b in range(n) if b != rt.index.root) if n > 1 else solution.v_pu[0]
        violations = limits.count_violations(solution.v_pu, skip=rt.index.root)
        ll_line_max = max(snap.ll_line_pct) if snap.ll_line_pct else 0.0

        if t >= agg_start:
            n_agg += 1
            vm_sum += snap.vm_mean
            vm_min = min(vm_min, snap.vm_mean)
            vm_max = max(vm_max, snap.vm_mean)
            v_min = min(v_min, step_v_min)
            v_max = max(v_max, step_v_max)
            gl_sum_mw += snap.gl_mw
            tl_sum += snap.tl_pct
            tl_max = max(tl_max, snap.tl_pct)
            ll_sum += snap.ll_mean_pct
            ll_max = max(ll_max, ll_line_max)
            band_violations += violations
            hard_violations += sum(
                1 for b in range(n) if b != rt.index.root and not hard[0] <= solution.v_pu[b] <= hard[1]
            )
            slack_kw = solution.slack_p_pu * S_BASE_KVA
            if slack_kw >= 0.0:
                import_kwh += slack_kw * dt
            else:
                export_kwh += -slack_kw * dt
            q_kvarh += sum(abs(q) for q in inj.q_pv_kvar) * dt + sum(abs(q) for q in inj.q_bes_kvar) * dt
            for row in bes_rows:
                throughput_kwh += (-row[2] + row[3]) * dt
                bes_min_soc = min(bes_min_soc, row[4])
                bes_max_soc = max(bes_max_soc, row[4])
            iter_sum += solution.iterations

        if keep_records:
            records.append(StepRecord(
                t=t,
                timestamp=rt.timestamps[t],
                minutes=rt.minutes[t],
                vm=snap.vm_mean,
                gl_mw=snap.gl_mw,
                tl_pct=snap.tl_pct,
                ll_mean_pct=snap.ll_mean_pct,
                ll_max_pct=ll_line_max,
                v_min=step_v_min,
                v_max=step_v_max,
                band_violations=violations,
                load_kw=sum(p_load),
                pv_kw=sum(p_pv),
                mpv_kw=sum(p_mpv),
                bes_kw=sum(p_bes),
                q_der_kvar=sum(inj.q_pv_kvar) + sum(inj.q_bes_kvar),
                slack_p_kw=solution.slack_p_pu * S_BASE_KVA,
                slack_q_kvar=solution.slack_q_pu * S_BASE_KVA,
                iterations=solution.iterations,
                v_pu=list(solution.v_pu),
                bes=bes_rows,
                injections=NodalInjection(*[list(getattr(inj, f)) for f in (
                    "p_load_kw", "q_load_kvar", "p_pv_kw", "q_pv_kvar", "p_mpv_kw", "p_bes_kw", "q_bes_kvar")]),
            ))

        v_prev = solution.v_pu
        v2_prev = solution.v2()

    load_energy = load_energy_kwh(cfg.loads, cfg.profiles, T, dt)
    alpha = penetration_alpha(rt.mpv_units, cfg.profiles, load_energy, T, dt)
    trafo = cfg.topology.transformer
    alpha_tr = alpha_transformer(rt.mpv_units, cfg.profiles, trafo.s_rated_kva, T, dt) if trafo else 0.0

    if rt.n_bes and bes_min_soc is math.inf:
        bes_min_soc = min(s.soc for s in states)
        bes_max_soc = max(s.soc for s in states)

    denom = max(n_agg, 1)
    summary = RunSummary(
        name=cfg.name,
        steps=T,
        dt_hours=dt,
        seed=cfg.seed,
        strategy=cfg.strategy.value,
        control=cfg.control.kind,
        variant=cfg.variant,
        beta=cfg.sensitivity.beta,
        gamma1_w=cfg.sensitivity.gamma1_w,
        gamma2_w=cfg.sensitivity.gamma2_w,
        n_mpv=len(rt.mpv_units),
        alpha=alpha,
        alpha_transformer=alpha_tr,
        vm_mean_pu=vm_sum / denom,
        vm_min_pu=vm_min if n_agg else 0.0,
        vm_max_pu=vm_max if n_agg else 0.0,
        v_min_pu=v_min if n_agg else 0.0,
        v_max_pu=v_max if n_agg else 0.0,
        gl_total_mwh=gl_sum_mw * dt,
        gl_mean_mw=gl_sum_mw / denom,
        tl_mean_pct=tl_sum / denom,
        tl_max_pct=tl_max,
        ll_mean_pct=ll_sum / denom,
        ll_max_pct=ll_max,
        band_violations=band_violations,
        hard_violations=hard_violations,
        import_kwh=import_kwh,
        export_kwh=export_kwh,
        q_der_kvarh=q_kvarh,
        bes_throughput_kwh=throughput_kwh,
        bes_final_soc=[s.soc for s in states],
        bes_min_soc=bes_min_soc if rt.n_bes else 0.0,
        bes_max_soc=bes_max_soc if rt.n_bes else 0.0,
        iterations_mean=iter_sum / denom,
    )
    return RunResult(config=cfg, summary=summary, records=records, mpv_units=rt.mpv_units)


@dataclass
class SweepPoint:
    index: int
    beta: float
    gamma1_w: float
    gamma2_w: float
    seed: int
    summary: RunSummary | None = None
    error: str = ""


def _point_seed(master: int, point_index: int) -> int:
    # independent yet reproducible: each grid point hashes (master, index)
    return int(np.random.SeedSequence([int(master), point_index]).generate_state(1)[0])


def _sweep_points(cfg: ScenarioConfig, betas, gamma1s, gamma2s):
    points = []
    index = 0
    for g1, g2 in product(gamma1s, gamma2s):
        for beta in betas:
            points.append(SweepPoint(index=index, beta=beta, gamma1_w=g1, gamma2_w=g2,
                                     seed=_point_seed(cfg.seed, index)))
            index += 1
    return points


def _point_config(cfg: ScenarioConfig, point: SweepPoint) -> ScenarioConfig:
    pcfg = with_sensitivity(cfg, beta=point.beta, gamma1_w=point.gamma1_w, gamma2_w=point.gamma2_w)
    # placement stays on the master seed so beta prefixes nest across points
    return replace(pcfg, seed=point.seed, placement_seed=cfg.seed)


def _run_point(args):
    cfg, point = args
    try:
        result = run(_point_config(cfg, point), keep_records=False)
        point.summary = result.summary
    except (NonConvergence, InfeasibleVoltage, ValueError) as exc:
        point.error = "%s: %s" % (type(exc).__name__, exc)
    return point


def sweep(cfg: ScenarioConfig, betas, gamma1s, gamma2s, jobs: int | None = None):
    """Run the beta x gamma grid; failed points carry an error message.

    Rows are ordered one gamma pair at a time, beta ascending within it.
    """
    points = _sweep_points(cfg, betas, gamma1s, gamma2s)
    if jobs is None or jobs <= 0:
        jobs = os.cpu_count() or 1
    if jobs == 1 or len(points) <= 1:
        return [_run_point((cfg, p)) for p in points]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        done = list(pool.map(_run_point, [(cfg, p) for p in points], chunksize=4))
    done.sort(key=lambda p: p.index)
    return done


def compare_modes(cfg: ScenarioConfig, kinds=None, keep_records: bool = False):
    """Rerun one scenario under several reactive control modes.

    Everything else, the seed included, stays fixed; returns
    [(kind, RunResult)] in the requested order.
    """
    kinds = list(kinds) if kinds else list(COMPARE_MODE_KINDS)
    if len(kinds) < 2:
        raise ValueError("mode comparison needs at least two modes")
    out = []
    for kind in kinds:
        mode_cfg = replace(cfg, control=replace(cfg.control, kind=kind))
        out.append((kind, run(mode_cfg, keep_records=keep_records)))
    return out
