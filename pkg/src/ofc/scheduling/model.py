"""Linear-program formulations for service-chain placement.

Three formulations share one objective ``z`` = the maximum utilization
over (box, resource) pairs after placement:

* the *edge model* — per-flow unit flows over a layered graph whose
  nodes are (chain position, implementation, box) choices, with a
  virtual source and sink per flow and conservation at every interior
  node; faithful but sized in the product of consecutive option counts;
* the *kind model* — traffic aggregated per SDM kind into totals
  ``T_k`` split across (implementation, box); exact for the relaxation
  because consecutive positions are completely connected, so any set of
  per-position marginals is realizable as a path flow;
* the *flow model* — a single flow placed against fixed background
  utilization, used for marginal re-solves and online admission.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import Infeasible
from .problem import Flow, SchedulingProblem
from .simplex import SimplexResult, solve

INTEGRALITY_TOL = 1e-6

# An edge key is (flow_id, src_pos, src_opt, dst_pos, dst_opt); the
# virtual source is position -1 / option -1 and the sink is position
# len(chain) / option -1.
EdgeKey = tuple[str, int, int, int, int]


def flow_options(problem: SchedulingProblem, flow: Flow,
                 exclude_boxes: set[str] | None = None
                 ) -> list[list[tuple[int, int]]]:
    """Per-position (impl index, box index) choices, lexicographic."""
    return [problem.options(sdm_id, exclude_boxes) for sdm_id in flow.chain]


def flow_edges(flow: Flow,
               options: list[list[tuple[int, int]]]) -> list[EdgeKey]:
    """All layered-graph edges of one flow in deterministic order."""
    chain_len = len(flow.chain)
    edges: list[EdgeKey] = []
    if chain_len == 0:
        return edges
    for j in range(len(options[0])):
        edges.append((flow.id, -1, -1, 0, j))
    for p in range(chain_len - 1):
        for sj in range(len(options[p])):
            for dj in range(len(options[p + 1])):
                edges.append((flow.id, p, sj, p + 1, dj))
    for sj in range(len(options[chain_len - 1])):
        edges.append((flow.id, chain_len - 1, sj, chain_len, -1))
    return edges


@dataclass
class EdgeModel:
    problem: SchedulingProblem
    options: dict[str, list[list[tuple[int, int]]]]
    var_keys: list[EdgeKey]           # variable 0 is z; edges follow
    edge_index: dict[EdgeKey, int]
    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray

    def solve(self) -> tuple[float, dict[EdgeKey, float], SimplexResult]:
        res = solve(self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq)
        values = {key: float(res.x[idx])
                  for key, idx in self.edge_index.items()}
        return float(res.x[0]), values, res


def build_edge_model(problem: SchedulingProblem,
                     forbidden: frozenset[EdgeKey] = frozenset()
                     ) -> EdgeModel:
    n_boxes, n_res = problem.n_boxes, problem.n_resources
    options: dict[str, list[list[tuple[int, int]]]] = {}
    var_keys: list[EdgeKey] = []
    edge_index: dict[EdgeKey, int] = {}
    for flow in problem.flows:
        opts = flow_options(problem, flow)
        options[flow.id] = opts
        for key in flow_edges(flow, opts):
            if key in forbidden:
                continue
            edge_index[key] = 1 + len(var_keys)
            var_keys.append(key)

    n_vars = 1 + len(var_keys)
    c = np.zeros(n_vars)
    c[0] = 1.0

    eq_rows: list[np.ndarray] = []
    eq_rhs: list[float] = []
    util = np.zeros((n_boxes * n_res, n_vars))
    util[:, 0] = -1.0
    b_ub = -problem.gamma.reshape(-1).copy()

    for flow in problem.flows:
        opts = options[flow.id]
        chain_len = len(flow.chain)
        if chain_len == 0:
            continue
        # Unit flow out of the virtual source.
        row = np.zeros(n_vars)
        for j in range(len(opts[0])):
            idx = edge_index.get((flow.id, -1, -1, 0, j))
            if idx is not None:
                row[idx] = 1.0
        eq_rows.append(row)
        eq_rhs.append(1.0)
        # Conservation at interior nodes (sink row is dependent).
        for p in range(chain_len):
            for j in range(len(opts[p])):
                row = np.zeros(n_vars)
                src_pos = p - 1
                if p == 0:
                    idx = edge_index.get((flow.id, -1, -1, 0, j))
                    if idx is not None:
                        row[idx] = 1.0
                else:
                    for sj in range(len(opts[src_pos])):
                        idx = edge_index.get((flow.id, src_pos, sj, p, j))
                        if idx is not None:
                            row[idx] = 1.0
                if p == chain_len - 1:
                    idx = edge_index.get((flow.id, p, j, chain_len, -1))
                    if idx is not None:
                        row[idx] -= 1.0
                else:
                    for dj in range(len(opts[p + 1])):
                        idx = edge_index.get((flow.id, p, j, p + 1, dj))
                        if idx is not None:
                            row[idx] -= 1.0
                eq_rows.append(row)
                eq_rhs.append(0.0)
        # Utilization: traffic into node (p, j) runs impl i on box n.
        for key, idx in edge_index.items():
            fid, _, _, dst_pos, dj = key
            if fid != flow.id or dst_pos >= chain_len:
                continue
            i, n = opts[dst_pos][dj]
            k = problem.sdm_index[flow.chain[dst_pos]]
            delta = flow.amount * problem.demand[k][i] / problem.omega[n]
            util[n * n_res:(n + 1) * n_res, idx] += delta

    A_eq = (np.vstack(eq_rows) if eq_rows
            else np.zeros((0, n_vars)))
    return EdgeModel(problem, options, var_keys, edge_index, c,
                     util, b_ub, A_eq, np.array(eq_rhs))


def fractional_edges(values: dict[EdgeKey, float],
                     tol: float = INTEGRALITY_TOL) -> dict[EdgeKey, float]:
    return {k: v for k, v in values.items() if tol < v < 1.0 - tol}


def flow_connected(flow: Flow, options: list[list[tuple[int, int]]],
                   forbidden: frozenset[EdgeKey]) -> bool:
    """Does a source-to-sink path of allowed edges survive?"""
    chain_len = len(flow.chain)
    if chain_len == 0:
        return True
    reach = {j for j in range(len(options[0]))
             if (flow.id, -1, -1, 0, j) not in forbidden}
    for p in range(chain_len - 1):
        reach = {dj for dj in range(len(options[p + 1]))
                 for sj in reach
                 if (flow.id, p, sj, p + 1, dj) not in forbidden}
        if not reach:
            return False
    return any((flow.id, chain_len - 1, sj, chain_len, -1) not in forbidden
               for sj in reach)


def walk_paths(problem: SchedulingProblem,
               options: dict[str, list[list[tuple[int, int]]]],
               values: dict[EdgeKey, float]
               ) -> dict[str, list[tuple[int, str, str]]]:
    """Turn an (integral) edge solution into per-flow placements."""
    placements: dict[str, list[tuple[int, str, str]]] = {}
    for flow in problem.flows:
        opts = options[flow.id]
        chain_len = len(flow.chain)
        hops: list[tuple[int, str, str]] = []
        if chain_len:
            at = max(range(len(opts[0])),
                     key=lambda j: values.get((flow.id, -1, -1, 0, j), 0.0))
            for p in range(chain_len):
                i, n = opts[p][at]
                sdm = problem.sdms[problem.sdm_index[flow.chain[p]]]
                hops.append((p, sdm.impls[i].id, problem.boxes[n].id))
                if p < chain_len - 1:
                    at = max(
                        range(len(opts[p + 1])),
                        key=lambda dj: values.get(
                            (flow.id, p, at, p + 1, dj), 0.0))
        placements[flow.id] = hops
    return placements


# ---------------------------------------------------------------- kinds


@dataclass
class KindModel:
    problem: SchedulingProblem
    var_keys: list[tuple[int, int, int]]   # (kind, impl, box); z first
    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray

    def solve(self) -> tuple[float, dict[tuple[int, int, int], float]]:
        res = solve(self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq)
        w = {key: float(res.x[1 + idx])
             for idx, key in enumerate(self.var_keys)}
        return float(res.x[0]), w


def kind_totals(problem: SchedulingProblem) -> dict[int, float]:
    """Total traffic T_k entering each SDM kind across all chains."""
    totals: dict[int, float] = {}
    for flow in problem.flows:
        for sdm_id in flow.chain:
            k = problem.sdm_index[sdm_id]
            totals[k] = totals.get(k, 0.0) + flow.amount
    return totals


def build_kind_model(problem: SchedulingProblem,
                     forbidden: frozenset[tuple[int, int, int]] = frozenset()
                     ) -> KindModel:
    n_boxes, n_res = problem.n_boxes, problem.n_resources
    totals = kind_totals(problem)
    kinds = sorted(k for k, t in totals.items() if t > 0.0)
    var_keys = [(k, i, n)
                for k in kinds
                for i in range(len(problem.sdms[k].impls))
                for n in range(n_boxes)
                if (k, i, n) not in forbidden and problem.eligible(k, i, n)]
    covered = {k for (k, _, _) in var_keys}
    for k in kinds:
        if k not in covered:
            raise Infeasible(
                f"sdm {problem.sdms[k].id}: no eligible placement")
    n_vars = 1 + len(var_keys)
    c = np.zeros(n_vars)
    c[0] = 1.0

    A_eq = np.zeros((len(kinds), n_vars))
    b_eq = np.zeros(len(kinds))
    for row, k in enumerate(kinds):
        b_eq[row] = totals[k]
        for idx, (kk, _, _) in enumerate(var_keys):
            if kk == k:
                A_eq[row, 1 + idx] = 1.0

    util = np.zeros((n_boxes * n_res, n_vars))
    util[:, 0] = -1.0
    for idx, (k, i, n) in enumerate(var_keys):
        util[n * n_res:(n + 1) * n_res, 1 + idx] = (
            problem.demand[k][i] / problem.omega[n])
    b_ub = -problem.gamma.reshape(-1).copy()
    return KindModel(problem, var_keys, c, util, b_ub, A_eq, b_eq)


def lp_lower_bound(problem: SchedulingProblem) -> float:
    """Optimum of the fractional relaxation (splittable traffic)."""
    z, _ = build_kind_model(problem).solve()
    return z


def solve_kind_spread(problem: SchedulingProblem,
                      forbidden: frozenset[tuple[int, int, int]] = frozenset()
                      ) -> tuple[float, dict[tuple[int, int, int], float]]:
    """Most even efficient optimal split of each kind's traffic.

    A simplex vertex of the kind model is an arbitrary corner of the
    optimal face: it may concentrate a kind's traffic on few options
    even when spreading it is equally optimal, or park traffic on
    wasteful options that merely fit under the peak. Two refinement
    programs pin the solution down deterministically: the first
    minimizes the summed utilization over all (box, resource) pairs
    with the peak held at the phase-one optimum (discarding solutions
    that burn slack capacity for nothing), the second minimizes the sum
    over kinds of the largest single option share with both the peak
    and the total held (the most even split among the efficient
    optima). The result is what thresholding is read against.
    """
    model = build_kind_model(problem, forbidden)
    z_star, w_vertex = model.solve()
    keys = model.var_keys
    if not keys:
        return z_star, w_vertex
    totals = kind_totals(problem)
    kinds = sorted({k for (k, _, _) in keys})
    kind_row = {k: row for row, k in enumerate(kinds)}
    n_w = len(keys)
    n_boxes, n_res = problem.n_boxes, problem.n_resources

    # Per-variable utilization columns and each variable's summed
    # utilization footprint (its cost in the efficiency phase).
    util_w = np.zeros((n_boxes * n_res, n_w))
    for idx, (k, i, n) in enumerate(keys):
        util_w[n * n_res:(n + 1) * n_res, idx] = (
            problem.demand[k][i] / problem.omega[n])
    footprint = util_w.sum(axis=0)
    util_rhs = (z_star + 1e-7) - problem.gamma.reshape(-1)

    eq_w = np.zeros((len(kinds), n_w))
    for idx, (k, _, _) in enumerate(keys):
        eq_w[kind_row[k], idx] = 1.0
    b_eq = np.array([totals[k] for k in kinds])

    # Phase two: cheapest total load among peak-optimal solutions.
    res = solve(footprint, util_w, util_rhs, eq_w, b_eq)
    total_star = float(footprint @ res.x)

    # Phase three: most even kind shares among efficient optima.
    n_vars = n_w + len(kinds)            # w variables then one s per kind
    c = np.zeros(n_vars)
    c[n_w:] = 1.0
    share = np.zeros((n_w, n_vars))
    for idx, (k, _, _) in enumerate(keys):
        share[idx, idx] = 1.0
        share[idx, n_w + kind_row[k]] = -totals[k]
    A_ub = np.vstack([
        np.hstack([util_w, np.zeros((util_w.shape[0], len(kinds)))]),
        np.concatenate([footprint, np.zeros(len(kinds))])[None, :],
        share,
    ])
    b_ub = np.concatenate([util_rhs, [total_star + 1e-7], np.zeros(n_w)])
    A_eq = np.hstack([eq_w, np.zeros((len(kinds), len(kinds)))])

    res = solve(c, A_ub, b_ub, A_eq, b_eq)
    w = {key: float(res.x[idx]) for idx, key in enumerate(keys)}
    return z_star, w


# ----------------------------------------------------------- one flow


def solve_flow_marginals(problem: SchedulingProblem, flow: Flow,
                         allowed: list[list[int]],
                         background: np.ndarray
                         ) -> tuple[float, list[dict[int, float]]]:
    """Best fractional split of one flow over per-position options.

    ``allowed[p]`` lists indices into ``problem.options(chain[p])`` that
    remain available; ``background`` is the absolute (box, resource)
    utilization everything else already causes. Returns the resulting
    peak utilization and one marginal map per position.
    """
    n_res = problem.n_resources
    opts = flow_options(problem, flow)
    var_keys = [(p, j) for p in range(len(flow.chain)) for j in allowed[p]]
    n_vars = 1 + len(var_keys)
    c = np.zeros(n_vars)
    c[0] = 1.0

    A_eq = np.zeros((len(flow.chain), n_vars))
    b_eq = np.ones(len(flow.chain))
    for idx, (p, _) in enumerate(var_keys):
        A_eq[p, 1 + idx] = 1.0

    util = np.zeros((background.size, n_vars))
    util[:, 0] = -1.0
    for idx, (p, j) in enumerate(var_keys):
        i, n = opts[p][j]
        k = problem.sdm_index[flow.chain[p]]
        delta = flow.amount * problem.demand[k][i] / problem.omega[n]
        util[n * n_res:(n + 1) * n_res, 1 + idx] = delta
    b_ub = -background.reshape(-1)

    res = solve(c, util, b_ub, A_eq, b_eq)
    marginals: list[dict[int, float]] = [dict() for _ in flow.chain]
    for idx, (p, j) in enumerate(var_keys):
        marginals[p][j] = float(res.x[1 + idx])
    return float(res.x[0]), marginals
