"""Command-line front end: validate, simulate, sweep, compare, pf.

Exit codes: 0 success, 1 runtime/solver failure, 2 invalid config or
arguments. Set GRIDMPV_LOG=DEBUG|INFO|WARNING|ERROR for log verbosity.
All CSV output is deterministic for a fixed config and seed.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import sys

import click

from . import engine
from .grid_model import TopologyError, load_topology
from .power_flow import InfeasibleVoltage, NodalInjection, NonConvergence, solve
from .scenario import ConfigError, collect_violations, load_config
from .units import S_BASE_KVA

log = logging.getLogger("gridmpv")

STEPS_HEADER = [
    "t", "timestamp", "vm_pu", "gl_mw", "tl_pct", "ll_mean_pct", "ll_max_pct",
    "v_min_pu", "v_max_pu", "band_violations", "load_kw", "pv_kw", "mpv_kw",
    "bes_kw", "q_der_kvar", "slack_p_kw", "slack_q_kvar", "iterations",
]
BES_STEPS_HEADER = ["t", "name", "bus", "p_cha_kw", "p_dis_kw", "soc", "eta_cha", "eta_dis", "eta_self"]
SWEEP_HEADER = [
    "index", "beta", "gamma1_w", "gamma2_w", "seed", "n_mpv", "alpha", "alpha_transformer",
    "vm_mean_pu", "vm_max_pu", "v_max_pu", "gl_total_mwh", "tl_mean_pct", "tl_max_pct",
    "ll_mean_pct", "ll_max_pct", "band_violations", "import_kwh", "export_kwh", "error",
]
COMPARE_HEADER = [
    "mode", "vm_mean_pu", "vm_max_pu", "v_min_pu", "v_max_pu", "gl_total_mwh",
    "tl_mean_pct", "tl_max_pct", "ll_mean_pct", "ll_max_pct", "band_violations", "q_der_kvarh",
]
PF_HEADER = ["bus", "v_pu", "p_branch_pu", "q_branch_pu", "l_pu"]

SNAPSHOT_FIELDS = ("p_load_kw", "q_load_kvar", "p_pv_kw", "q_pv_kvar", "p_mpv_kw", "p_bes_kw", "q_bes_kvar")


def _fmt(value) -> str:
    if isinstance(value, float):
        if value == 0.0:
            value = 0.0  # normalize -0.0
        return format(value, ".10g")
    return str(value)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _write_summary(summary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _steps_rows(records):
    for rec in records:
        yield [rec.t, rec.timestamp, rec.vm, rec.gl_mw, rec.tl_pct, rec.ll_mean_pct,
               rec.ll_max_pct, rec.v_min, rec.v_max, rec.band_violations, rec.load_kw,
               rec.pv_kw, rec.mpv_kw, rec.bes_kw, rec.q_der_kvar, rec.slack_p_kw,
               rec.slack_q_kvar, rec.iterations]


def _bes_rows(records):
    for rec in records:
        for name, bus, p_cha, p_dis, soc, eta_c, eta_d, eta_s in rec.bes:
            yield [rec.t, name, bus, p_cha, p_dis, soc, eta_c, eta_d, eta_s]


def _digest(summary) -> str:
    return "VM %.4f pu | GL %.6f MWh | LL max %.1f%% | band violations %d" % (
        summary.vm_mean_pu, summary.gl_total_mwh, summary.ll_max_pct, summary.band_violations)


def _emit_step_plots(records, out_dir: str) -> None:
    rows = []
    for rec in records:
        for metric, value in (("vm_pu", rec.vm), ("gl_mw", rec.gl_mw), ("tl_pct", rec.tl_pct),
                              ("ll_mean_pct", rec.ll_mean_pct), ("ll_max_pct", rec.ll_max_pct)):
            rows.append([metric, rec.t, rec.timestamp, value])
    _write_csv(os.path.join(out_dir, "plot_steps_long.csv"), ["metric", "t", "timestamp", "value"], rows)


def _load_scenario(config_path: str, seed):
    try:
        return load_config(config_path, seed_override=seed)
    except ConfigError as exc:
        for line in exc.violations:
            click.echo("invalid: %s" % line, err=True)
        sys.exit(2)


def _run_or_die(cfg, keep_records=True):
    try:
        return engine.run(cfg, keep_records=keep_records)
    except (NonConvergence, InfeasibleVoltage) as exc:
        click.echo("solver failure: %s" % exc, err=True)
        sys.exit(1)
    except ValueError as exc:
        click.echo("runtime failure: %s" % exc, err=True)
        sys.exit(1)


def _parse_axis(text: str, name: str):
    """Either 'start:end:step' or a comma list; returns floats."""
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError("expected start:end:step")
            start, end, step = (float(p) for p in parts)
            if step <= 0:
                raise ValueError("step must be positive")
            values = []
            k = 0
            while True:
                v = round(start + k * step, 10)
                if v > end + 1e-9:
                    break
                values.append(v)
                k += 1
            if not values:
                raise ValueError("empty range")
            return values
        return [float(p) for p in text.split(",") if p.strip() != ""]
    except ValueError as exc:
        click.echo("invalid --%s %r: %s" % (name, text, exc), err=True)
        sys.exit(2)


@click.group()
def main():
    """Mini-PV grid impact simulator for radial low-voltage networks."""
    level = os.environ.get("GRIDMPV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path(), help="Scenario config (TOML or JSON).")
def validate(config_path):
    """Check a scenario config; exit 0 iff clean."""
    violations = collect_violations(config_path)
    if violations:
        for line in violations:
            click.echo("invalid: %s" % line, err=True)
        sys.exit(2)
    click.echo("OK: %s" % config_path)


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path())
@click.option("-o", "--out", "out_dir", default="out", type=click.Path(), show_default=True)
@click.option("--seed", type=int, default=None, help="Overrides the config seed (default 42).")
@click.option("--emit-plots", is_flag=True, help="Also write long-format plot CSVs.")
def simulate(config_path, out_dir, seed, emit_plots):
    """Run one scenario; write steps.csv, bes_steps.csv, summary.json."""
    cfg = _load_scenario(config_path, seed)
    result = _run_or_die(cfg)
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "steps.csv"), STEPS_HEADER, _steps_rows(result.records))
    if cfg.bes:
        _write_csv(os.path.join(out_dir, "bes_steps.csv"), BES_STEPS_HEADER, _bes_rows(result.records))
    _write_summary(result.summary, os.path.join(out_dir, "summary.json"))
    if emit_plots:
        _emit_step_plots(result.records, out_dir)
    click.echo(_digest(result.summary))


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path())
@click.option("-o", "--out", "out_dir", default="out", type=click.Path(), show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=None, help="Worker processes; default = available cores.")
@click.option("--beta", "beta_axis", default=None, help="Concentration axis, start:end:step or comma list.")
@click.option("--gamma1", "gamma1_axis", default=None, help="Inverter peak power axis [W], comma list.")
@click.option("--gamma2", "gamma2_axis", default=None, help="Solar cell power axis [W], comma list.")
@click.option("--emit-plots", is_flag=True)
def sweep(config_path, out_dir, seed, jobs, beta_axis, gamma1_axis, gamma2_axis, emit_plots):
    """Run a beta x gamma sensitivity grid; write sweep.csv."""
    cfg = _load_scenario(config_path, seed)
    betas = _parse_axis(beta_axis, "beta") if beta_axis else list(cfg.sweep_betas or [cfg.sensitivity.beta])
    gamma1s = _parse_axis(gamma1_axis, "gamma1") if gamma1_axis else list(cfg.sweep_gamma1_w or [cfg.sensitivity.gamma1_w])
    gamma2s = _parse_axis(gamma2_axis, "gamma2") if gamma2_axis else list(cfg.sweep_gamma2_w or [cfg.sensitivity.gamma2_w])
    for name, axis in (("beta", betas), ("gamma1", gamma1s), ("gamma2", gamma2s)):
        for v in axis:
            if v < 0 or (name == "beta" and v > 1):
                click.echo("invalid --%s value %s" % (name, v), err=True)
                sys.exit(2)

    points = engine.sweep(cfg, betas, gamma1s, gamma2s, jobs=jobs)
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for p in points:
        s = p.summary
        if s is None:
            rows.append([p.index, p.beta, p.gamma1_w, p.gamma2_w, p.seed] + [""] * 14 + [p.error])
        else:
            rows.append([p.index, p.beta, p.gamma1_w, p.gamma2_w, p.seed, s.n_mpv, s.alpha,
                         s.alpha_transformer, s.vm_mean_pu, s.vm_max_pu, s.v_max_pu, s.gl_total_mwh,
                         s.tl_mean_pct, s.tl_max_pct, s.ll_mean_pct, s.ll_max_pct,
                         s.band_violations, s.import_kwh, s.export_kwh, ""])
    _write_csv(os.path.join(out_dir, "sweep.csv"), SWEEP_HEADER, rows)
    if emit_plots:
        plot_rows = []
        for p in points:
            if p.summary is None:
                continue
            s = p.summary
            for metric, value in (("alpha", s.alpha), ("vm_mean_pu", s.vm_mean_pu),
                                  ("gl_total_mwh", s.gl_total_mwh), ("tl_mean_pct", s.tl_mean_pct),
                                  ("ll_mean_pct", s.ll_mean_pct)):
                plot_rows.append([p.beta, p.gamma1_w, p.gamma2_w, metric, value])
        _write_csv(os.path.join(out_dir, "plot_sweep_long.csv"),
                   ["beta", "gamma1_w", "gamma2_w", "metric", "value"], plot_rows)

    failed = sum(1 for p in points if p.summary is None)
    ok = [p.summary for p in points if p.summary is not None]
    if ok:
        click.echo("points %d | failures %d | VM %.4f..%.4f pu | alpha %.3f..%.3f" % (
            len(points), failed, min(s.vm_mean_pu for s in ok), max(s.vm_mean_pu for s in ok),
            min(s.alpha for s in ok), max(s.alpha for s in ok)))
    else:
        click.echo("points %d | failures %d" % (len(points), failed), err=True)
        sys.exit(1)


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path())
@click.option("-o", "--out", "out_dir", default="out", type=click.Path(), show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--modes", "modes_csv", default=None,
              help="Comma list from: none,q_of_v,cosphi_p,fixed_cosphi (default: all).")
@click.option("--emit-plots", is_flag=True)
def compare(config_path, out_dir, seed, modes_csv, emit_plots):
    """Rerun one scenario under several reactive control modes."""
    cfg = _load_scenario(config_path, seed)
    kinds = None
    if modes_csv:
        kinds = [m.strip() for m in modes_csv.split(",") if m.strip()]
        bad = [m for m in kinds if m not in engine.COMPARE_MODE_KINDS]
        if bad:
            click.echo("unknown mode(s): %s" % ", ".join(bad), err=True)
            sys.exit(2)
    try:
        results = engine.compare_modes(cfg, kinds=kinds)
    except (NonConvergence, InfeasibleVoltage) as exc:
        click.echo("solver failure: %s" % exc, err=True)
        sys.exit(1)
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for kind, result in results:
        s = result.summary
        rows.append([kind, s.vm_mean_pu, s.vm_max_pu, s.v_min_pu, s.v_max_pu, s.gl_total_mwh,
                     s.tl_mean_pct, s.tl_max_pct, s.ll_mean_pct, s.ll_max_pct,
                     s.band_violations, s.q_der_kvarh])
    _write_csv(os.path.join(out_dir, "compare.csv"), COMPARE_HEADER, rows)
    if emit_plots:
        plot_rows = []
        for kind, result in results:
            s = result.summary
            for metric, value in (("vm_mean_pu", s.vm_mean_pu), ("vm_max_pu", s.vm_max_pu),
                                  ("gl_total_mwh", s.gl_total_mwh), ("tl_mean_pct", s.tl_mean_pct),
                                  ("ll_mean_pct", s.ll_mean_pct)):
                plot_rows.append([kind, metric, value])
        _write_csv(os.path.join(out_dir, "plot_compare_long.csv"), ["mode", "metric", "value"], plot_rows)
    for kind, result in results:
        click.echo("%s: %s" % (kind, _digest(result.summary)))


@main.command()
@click.argument("grid_json", type=click.Path())
@click.argument("snapshot_csv", type=click.Path())
@click.option("--slack-v", type=float, default=1.0, show_default=True)
@click.option("-o", "--out", "out_file", default=None, type=click.Path(), help="Also write the table as CSV.")
def pf(grid_json, snapshot_csv, slack_v, out_file):
    """Solve a single power-flow snapshot and print bus voltages.

    SNAPSHOT_CSV needs a 'bus' column plus any of: p_load_kw, q_load_kvar,
    p_pv_kw, q_pv_kvar, p_mpv_kw, p_bes_kw, q_bes_kvar. Missing buses and
    columns default to zero.
    """
    try:
        topology = load_topology(grid_json)
    except (TopologyError, FileNotFoundError, ValueError) as exc:
        click.echo("invalid grid: %s" % exc, err=True)
        sys.exit(2)

    inj = NodalInjection.zeros(topology.n_buses)
    try:
        with open(snapshot_csv, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            if "bus" not in header:
                raise ValueError("snapshot needs a 'bus' column")
            unknown = [h for h in header if h != "bus" and h not in SNAPSHOT_FIELDS]
            if unknown:
                raise ValueError("unknown snapshot column(s): %s" % ", ".join(unknown))
            for row in reader:
                bus = int(row["bus"])
                if not 0 <= bus < topology.n_buses:
                    raise ValueError("bus %d not in the grid" % bus)
                for fieldname in SNAPSHOT_FIELDS:
                    cell = row.get(fieldname)
                    if cell not in (None, ""):
                        getattr(inj, fieldname)[bus] += float(cell)
    except (OSError, ValueError) as exc:
        click.echo("invalid snapshot: %s" % exc, err=True)
        sys.exit(2)

    try:
        solution = solve(topology, inj, slack_v=slack_v)
    except (NonConvergence, InfeasibleVoltage) as exc:
        click.echo("solver failure: %s" % exc, err=True)
        sys.exit(1)

    rows = [[b, solution.v_pu[b], solution.p_branch_pu[b], solution.q_branch_pu[b], solution.l_pu[b]]
            for b in range(topology.n_buses)]
    click.echo("  ".join(PF_HEADER))
    for row in rows:
        click.echo("  ".join(_fmt(cell) for cell in row))
    click.echo("slack_p_kw %s | slack_q_kvar %s | loss_kw %s | iterations %d" % (
        _fmt(solution.slack_p_pu * S_BASE_KVA), _fmt(solution.slack_q_pu * S_BASE_KVA),
        _fmt(sum(solution.index.r[j] * solution.l_pu[j] for j in solution.index.down_order) * S_BASE_KVA),
        solution.iterations))
    if out_file:
        _write_csv(out_file, PF_HEADER, rows)


if __name__ == "__main__":
    main()
