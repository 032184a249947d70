"""Grid impact metrics evaluated on a solved operating point.

All four work on a BranchFlowSolution:
  vm  mean bus voltage magnitude [pu]
  gl  total series losses [MW]
  tl  transformer loading [% of rated apparent power]
  ll  line loading [% of rated current], mean plus per-line values
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .power_flow import BranchFlowSolution
from .units import I_BASE_A, S_BASE_KVA


def vm(solution: BranchFlowSolution, include_slack: bool = False) -> float:
    v = solution.v_pu
    if include_slack:
        return sum(v) / len(v)
    if len(v) < 2:
        return v[0]
    return sum(v[1:]) / (len(v) - 1)


def gl(solution: BranchFlowSolution) -> float:
    """Sum of r*l over every branch, transformer included, in MW."""
    index = solution.index
    total_pu = 0.0
    for child in index.down_order:
        total_pu += index.r[child] * solution.l_pu[child]
    return total_pu * S_BASE_KVA / 1000.0


def tl(solution: BranchFlowSolution) -> float:
    """Apparent power through the transformer over its rating, percent."""
    transformer = solution.index.topology.transformer
    if transformer is None:
        return 0.0
    parent = solution.index.parent
    child = transformer.to_bus if parent[transformer.to_bus] == transformer.from_bus else transformer.from_bus
    p = solution.p_branch_pu[child]
    q = solution.q_branch_pu[child]
    s_kva = math.hypot(p, q) * S_BASE_KVA
    return 100.0 * s_kva / transformer.s_rated_kva


def ll(solution: BranchFlowSolution) -> tuple:
    """Per-line current loading, percent of each line's rated current.

    Returns (mean over rated lines, per-line list ordered as
    topology.lines). The transformer is excluded; a line without a
    current rating reports 0.
    """
    index = solution.index
    topology = index.topology
    per_line = []
    rated = []
    for line in topology.lines:
        child = line.to_bus if index.parent[line.to_bus] == line.from_bus else line.from_bus
        amps = math.sqrt(max(solution.l_pu[child], 0.0)) * I_BASE_A
        if math.isfinite(line.i_max_a) and line.i_max_a > 0:
            pct = 100.0 * amps / line.i_max_a
            per_line.append(pct)
            rated.append(pct)
        else:
            per_line.append(0.0)
    mean = sum(rated) / len(rated) if rated else 0.0
    return mean, per_line


@dataclass(frozen=True)
class MetricsSnapshot:
    vm_mean: float
    gl_mw: float
    tl_pct: float
    ll_mean_pct: float
    ll_line_pct: tuple
    v_pu: tuple


def snapshot(solution: BranchFlowSolution, include_slack: bool = False) -> MetricsSnapshot:
    ll_mean, ll_lines = ll(solution)
    return MetricsSnapshot(
        vm_mean=vm(solution, include_slack),
        gl_mw=gl(solution),
        tl_pct=tl(solution),
        ll_mean_pct=ll_mean,
        ll_line_pct=tuple(ll_lines),
        v_pu=tuple(solution.v_pu),
    )
