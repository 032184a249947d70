"""Branch-flow power flow for radial grids via backward/forward sweeps.

The solver iterates the recursive branch-flow equations of a radial network:
branch powers are accumulated from the leaves toward the slack (adding series
losses r*l and x*l, where l is the squared current magnitude), squared bus
voltages are then propagated from the slack outward. Loads and generators are
constant-power. At the fixed point the solution satisfies, per branch i->j,

    l_ij * V_i^2 = P_ij^2 + Q_ij^2

with sending-end flows, which is reported as the convergence residual.
Sign convention is generator-oriented: injections are positive, loads enter
negatively; q > 0 is over-excited (voltage raising).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .grid_model import GridTopology, parent_child_maps, _branch_by_child
from .units import I_BASE_A, S_BASE_KVA


class NonConvergence(Exception):
    """Sweep iteration did not reach the voltage tolerance."""


class InfeasibleVoltage(Exception):
    """A squared bus voltage dropped to zero or below (voltage collapse)."""


@dataclass
class VoltageLimits:
    """Operating band v_ref +/- epsilon plus an outer hard band."""

    v_ref: float = 1.0
    epsilon: float = 0.05
    hard_low: float = 0.85
    hard_high: float = 1.10

    @property
    def low(self) -> float:
        return self.v_ref - self.epsilon

    @property
    def high(self) -> float:
        return self.v_ref + self.epsilon

    def count_violations(self, v_pu, skip: int = -1) -> int:
        lo, hi = self.low, self.high
        return sum(1 for i, v in enumerate(v_pu) if i != skip and not lo <= v <= hi)


@dataclass
class NodalInjection:
    """Per-bus device powers in kW / kvar, consumption and generation separate.

    Mini-PV contributes active power only, so it has no reactive field.
    """

    p_load_kw: list
    q_load_kvar: list
    p_pv_kw: list
    q_pv_kvar: list
    p_mpv_kw: list
    p_bes_kw: list
    q_bes_kvar: list

    @classmethod
    def zeros(cls, n_buses: int) -> "NodalInjection":
        return cls(*[[0.0] * n_buses for _ in range(7)])

    def net_kw(self, bus: int) -> float:
        return self.p_mpv_kw[bus] + self.p_pv_kw[bus] + self.p_bes_kw[bus] - self.p_load_kw[bus]

    def net_kvar(self, bus: int) -> float:
        return self.q_pv_kvar[bus] + self.q_bes_kvar[bus] - self.q_load_kvar[bus]

    def net_pu(self):
        """Net nodal injections (p, q) in per unit, generation positive."""
        n = len(self.p_load_kw)
        p = [0.0] * n
        q = [0.0] * n
        for j in range(n):
            p[j] = (self.p_mpv_kw[j] + self.p_pv_kw[j] + self.p_bes_kw[j] - self.p_load_kw[j]) / S_BASE_KVA
            q[j] = (self.q_pv_kvar[j] + self.q_bes_kvar[j] - self.q_load_kvar[j]) / S_BASE_KVA
        return p, q


class TreeIndex:
    """Sweep-ready view of a radial topology.

    Branches are keyed by their child bus: r[j], x[j] describe the branch
    feeding bus j from parent[j]. order lists buses root-first so that
    reversing it visits every child before its parent.
    """

    def __init__(self, topology: GridTopology):
        report_parent, children = parent_child_maps(topology)
        n = topology.n_buses
        if len(report_parent) != n - 1:
            raise ValueError("topology is not a spanning tree; run validate_radial first")
        self.topology = topology
        self.n = n
        self.root = topology.slack_bus
        self.parent = [0] * n
        self.parent[self.root] = -1
        for child, par in report_parent.items():
            self.parent[child] = par
        self.children = children

        order = [self.root]
        for node in order:
            order.extend(children[node])
        self.order = order
        self.down_order = [b for b in order if b != self.root]  # root's children first
        self.up_order = list(reversed(self.down_order))  # leaves first

        by_child = _branch_by_child(topology, report_parent)
        self.branch_by_child = by_child
        self.r = [0.0] * n
        self.x = [0.0] * n
        self.z2 = [0.0] * n
        for j, br in by_child.items():
            self.r[j] = br.r_pu
            self.x[j] = br.x_pu
            self.z2[j] = br.r_pu * br.r_pu + br.x_pu * br.x_pu


@dataclass
class BranchFlowSolution:
    """Converged sweep result. Branch quantities are keyed by child bus."""

    v_pu: list
    p_branch_pu: list  # sending-end active flow into the branch toward bus j
    q_branch_pu: list
    l_pu: list  # squared current magnitude
    slack_p_pu: float
    slack_q_pu: float
    iterations: int
    residual: float
    index: TreeIndex = field(repr=False)

    def branch_current_a(self, child_bus: int) -> float:
        return math.sqrt(self.l_pu[child_bus]) * I_BASE_A

    def v2(self) -> list:
        return [v * v for v in self.v_pu]


def solve(
    topology,
    injections: NodalInjection,
    slack_v: float = 1.0,
    *,
    index: TreeIndex | None = None,
    v2_start: list | None = None,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> BranchFlowSolution:
    """Solve the radial power flow for one snapshot.

    topology may be a GridTopology or a prebuilt TreeIndex (cheaper when
    solving many snapshots on one grid). v2_start warm-starts the squared
    voltages, e.g. from the previous time step.
    """
    if not 0.9 <= slack_v <= 1.1:
        raise ValueError("slack_v %.4f outside the supported 0.9..1.1 pu range" % slack_v)
    idx = topology if isinstance(topology, TreeIndex) else (index or TreeIndex(topology))

    n = idx.n
    root = idx.root
    parent = idx.parent
    r = idx.r
    x = idx.x
    z2 = idx.z2
    up = idx.up_order
    down = idx.down_order

    p_net, q_net = injections.net_pu()

    v2 = [slack_v * slack_v] * n if v2_start is None else list(v2_start)
    v2[root] = slack_v * slack_v
    p_br = [0.0] * n
    q_br = [0.0] * n
    l = [0.0] * n
    acc_p = [0.0] * n
    acc_q = [0.0] * n

    iterations = 0
    dv = math.inf
    for iterations in range(1, max_iter + 1):
        for j in range(n):
            acc_p[j] = -p_net[j]
            acc_q[j] = -q_net[j]
        for j in up:
            ap = acc_p[j]
            aq = acc_q[j]
            lj = (ap * ap + aq * aq) / v2[j]  # same current at both branch ends
            l[j] = lj
            pj = ap + r[j] * lj
            qj = aq + x[j] * lj
            p_br[j] = pj
            q_br[j] = qj
            pa = parent[j]
            acc_p[pa] += pj
            acc_q[pa] += qj

        dv = 0.0
        for j in down:
            nv2 = v2[parent[j]] - 2.0 * (r[j] * p_br[j] + x[j] * q_br[j]) + z2[j] * l[j]
            if nv2 <= 0.0:
                raise InfeasibleVoltage("squared voltage %.3e at bus %d" % (nv2, j))
            d = abs(math.sqrt(nv2) - math.sqrt(v2[j]))
            if d > dv:
                dv = d
            v2[j] = nv2
        if dv <= tol:
            break
    else:
        raise NonConvergence("no convergence after %d iterations (dv=%.3e pu)" % (max_iter, dv))

    residual = 0.0
    for j in idx.down_order:
        res = abs(l[j] * v2[parent[j]] - (p_br[j] * p_br[j] + q_br[j] * q_br[j]))
        if res > residual:
            residual = res

    v = [math.sqrt(val) for val in v2]
    slack_p = sum(p_br[j] for j in idx.children[root])
    slack_q = sum(q_br[j] for j in idx.children[root])
    return BranchFlowSolution(
        v_pu=v,
        p_branch_pu=p_br,
        q_branch_pu=q_br,
        l_pu=l,
        slack_p_pu=slack_p,
        slack_q_pu=slack_q,
        iterations=iterations,
        residual=residual,
        index=idx,
    )


def total_loss_pu(solution: BranchFlowSolution) -> float:
    """Series loss sum(r * l) over all branches, transformer included."""
    idx = solution.index
    return sum(idx.r[j] * solution.l_pu[j] for j in idx.down_order)


def voltage_drop_approx(r_pu, x_pu, p_load_pu, q_load_pu, p_der_pu=0.0, q_der_pu=0.0, v_pu=1.0):
    """First-order voltage drop across one branch feeding net load minus DER."""
    return (r_pu * (p_load_pu - p_der_pu) + x_pu * (q_load_pu - q_der_pu)) / v_pu


def line_loss_approx(r_pu, p_load_pu, q_load_pu, p_der_pu=0.0, q_der_pu=0.0, v_pu=1.0):
    """First-order series loss of one branch carrying net load minus DER."""
    dp = p_load_pu - p_der_pu
    dq = q_load_pu - q_der_pu
    return (dp * dp + dq * dq) / (v_pu * v_pu) * r_pu
