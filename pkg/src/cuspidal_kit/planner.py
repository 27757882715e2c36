"""Joint path planning over complete IK solution sets.

A discretized task-space path becomes a layered weighted DAG: one vertex
per IK solution per sample, plus start/finish pseudo-vertices. Edges join
solutions of consecutive samples when the squared wrap-aware joint step
divided by the sample spacing stays under a velocity-derived threshold;
extra passes add skip edges over layers whose solutions went missing. The
optimal joint path is the shortest S-to-F path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ik import IKConfig, IKSolutionSet, solve_ik_along_path
from .kinematics import Pose, RobotModel, pose_difference, wrap_to_pi

# soft-penalty plumbing: approximate IK solutions cost their residual times
# this factor, so exact routes win whenever one exists
_APPROX_PENALTY = 1e3
_MU_FLOOR = 1e-9
_BARRIER_MARGIN = 1e-6
# per-joint default speed bound (rad per unit path parameter) behind eps0
_DEFAULT_QDOT_MAX = 4.0 * np.pi


@dataclass
class TaskPath:
    """Evenly sampled task-space path; sample k sits at lambda = k*dlambda."""
    poses: list[Pose]
    dlambda: float
    closed: bool = False

    def __post_init__(self):
        if len(self.poses) < 2:
            raise ValueError("a path needs at least two samples")
        if self.dlambda <= 0:
            raise ValueError("dlambda must be positive")
        if self.closed:
            gap = pose_difference(self.poses[0], self.poses[-1])
            if gap > 1e-9:
                raise ValueError(f"closed path endpoints differ by {gap:.2e} > 1e-9")

    @property
    def K(self) -> int:
        return len(self.poses) - 1

    @property
    def length(self) -> float:
        return self.K * self.dlambda

    @property
    def lambdas(self) -> np.ndarray:
        return np.arange(len(self.poses)) * self.dlambda


@dataclass
class PlannerConfig:
    """Graph construction knobs.

    eps0 is the edge admission threshold per unit lambda; when None it
    defaults to ||qdot_max||^2 for a per-joint bound of 4*pi rad per unit
    lambda. Tuning it matters: too small disconnects genuinely continuous
    solutions, too large bridges distinct branches.
    """
    eps0: float | None = None
    skip_depth: int = 2
    nonsingular_only: bool = False
    manipulability_weight: float = 0.0
    manipulability_W: np.ndarray | None = None
    joint_limit_barrier: float = 0.0
    enforce_joint_limits: bool = False
    admit_approximate: bool = True

    def __post_init__(self):
        if self.eps0 is not None and self.eps0 <= 0:
            raise ValueError("eps0 must be positive")
        if self.skip_depth < 1:
            raise ValueError("skip_depth must be >= 1")

    def resolve_eps0(self, dof: int) -> float:
        if self.eps0 is not None:
            return self.eps0
        return dof * _DEFAULT_QDOT_MAX ** 2


@dataclass
class Layer:
    k: int
    solutions: IKSolutionSet


def edge_cost(q1, q2, dlambda: float) -> float:
    """Squared wrap-aware joint step per unit lambda."""
    if dlambda <= 0:
        raise ValueError("dlambda must be positive")
    d = wrap_to_pi(np.asarray(q2, dtype=float) - np.asarray(q1, dtype=float))
    return float(d @ d) / dlambda


def path_cost(qs, lambdas) -> float:
    """Movement metric of a discrete joint path sampled at the given lambdas."""
    qs = np.asarray(qs, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    steps = wrap_to_pi(np.diff(qs, axis=0))
    gaps = np.diff(lambdas)
    return float(np.sum(np.sum(steps * steps, axis=1) / gaps))


def build_layers(robot: RobotModel, path: TaskPath, ik_cfg: IKConfig | None = None,
                 threads: int = 1) -> list[Layer]:
    """All IK solutions for every sample; approximate ones retained, flagged."""
    sets = solve_ik_along_path(robot, path.poses, ik_cfg, threads=threads)
    return [Layer(k, s) for k, s in enumerate(sets)]


@dataclass
class PlanGraph:
    """Layered DAG over IK solutions with start/finish pseudo-vertices."""
    dlambda: float
    eps: float
    Q: list[np.ndarray]                 # (M_k, n) wrapped joint vectors
    det_j: list[np.ndarray]
    approximate: list[np.ndarray]
    orig_index: list[np.ndarray]        # vertex -> index in the layer's IKSolutionSet
    penalties: list[np.ndarray]
    unwrapped: list[np.ndarray]         # per-vertex turn-tracked representative
    edges: dict                         # (k, d) -> dict(weight=..., metric=...), inf = absent
    s_edges: dict                       # (k, m) -> weight
    f_edges: dict                       # (k, m) -> weight
    config: PlannerConfig = None

    @property
    def n_layers(self) -> int:
        return len(self.Q)

    @property
    def layer_counts(self) -> list[int]:
        return [q.shape[0] for q in self.Q]

    @property
    def edge_count(self) -> int:
        interior = sum(int(np.isfinite(e["weight"]).sum()) for e in self.edges.values())
        return interior + len(self.s_edges) + len(self.f_edges)

    def stats(self) -> dict:
        return {
            "layers": self.n_layers,
            "layer_counts": self.layer_counts,
            "edges": self.edge_count,
            "eps": self.eps,
        }


def _pairwise_cost(Qa: np.ndarray, Qb: np.ndarray, gap_lambda: float) -> np.ndarray:
    """Matrix of wrap-aware squared joint steps per unit lambda, (Ma, Mb)."""
    if Qa.shape[0] == 0 or Qb.shape[0] == 0:
        return np.full((Qa.shape[0], Qb.shape[0]), np.inf)
    d = wrap_to_pi(Qb[None, :, :] - Qa[:, None, :])
    return np.einsum("abj,abj->ab", d, d) / gap_lambda


def _window_reachability(edges, by_head, counts, k_from: int, k_to: int) -> np.ndarray:
    """Boolean (M_from, M_to): connectivity inside layers [k_from, k_to]
    via already admitted edges."""
    reach = {k_from: np.eye(counts[k_from], dtype=bool)}
    for j in range(k_from + 1, k_to + 1):
        acc = np.zeros((counts[k_from], counts[j]), dtype=bool)
        for (k, d) in by_head.get(j, ()):
            if k >= k_from:
                src = reach.get(k)
                if src is not None and src.any():
                    acc |= src @ np.isfinite(edges[(k, d)]["weight"])
        reach[j] = acc
    return reach[k_to]


def build_plan_graph(layers: list[Layer], path: TaskPath, cfg: PlannerConfig | None = None,
                     robot: RobotModel | None = None) -> PlanGraph:
    """Weighted DAG over the layers.

    Pass 1 admits edges between consecutive layers whose metric stays below
    eps = dlambda * eps0; pass d admits skip edges over d-1 layers, at metric
    threshold eps on the d*dlambda gap, only between vertices not already
    connected inside that window (multi-pass rule, which also gates the
    start/finish skip connections). Vertex penalties (manipulability,
    joint-limit barrier, approximate-solution residual) ride on incoming
    edge weights so a path pays each visited vertex exactly once.
    """
    cfg = cfg or PlannerConfig()
    K = path.K
    if len(layers) != K + 1:
        raise ValueError("layer count must match path samples")
    dof = None
    Q, det_j, approx, orig = [], [], [], []
    for layer in layers:
        sols = layer.solutions.solutions
        keep = [i for i, s in enumerate(sols) if cfg.admit_approximate or not s.approximate]
        if keep and dof is None:
            dof = sols[keep[0]].q.shape[0]
        Q.append(np.stack([sols[i].q for i in keep]) if keep else np.empty((0, 0)))
        det_j.append(np.array([sols[i].det_j for i in keep]))
        approx.append(np.array([sols[i].approximate for i in keep], dtype=bool))
        orig.append(np.array(keep, dtype=int))
    if dof is None:
        dof = robot.dof if robot is not None else 3
    eps = path.dlambda * cfg.resolve_eps0(dof)

    # fix empty layers to consistent shapes
    Q = [q if q.size else np.empty((0, dof)) for q in Q]

    # vertex penalties
    penalties = []
    residuals = [np.array([layer.solutions.solutions[i].residual for i in o])
                 for layer, o in zip(layers, orig)]
    for k in range(K + 1):
        pen = _APPROX_PENALTY * np.where(approx[k], residuals[k], 0.0)
        if cfg.manipulability_weight > 0.0:
            if cfg.manipulability_W is None:
                mu = np.abs(det_j[k])
            else:
                if robot is None:
                    raise ValueError("a weighted manipulability penalty needs the robot model")
                from .kinematics import manipulability
                mu = np.array([manipulability(robot, q, cfg.manipulability_W) for q in Q[k]])
            pen = pen + cfg.manipulability_weight * path.dlambda / np.maximum(mu, _MU_FLOOR)
        penalties.append(pen)

    sign = [np.sign(d) for d in det_j]
    edges: dict = {}
    by_head: dict[int, list] = {}
    counts = [q.shape[0] for q in Q]

    def admit(k: int, d: int):
        gap = d * path.dlambda
        cost = _pairwise_cost(Q[k], Q[k + d], gap)
        ok = cost < eps
        if cfg.nonsingular_only:
            ok &= (sign[k][:, None] * sign[k + d][None, :]) > 0
        if d > 1 and ok.any():
            ok &= ~_window_reachability(edges, by_head, counts, k, k + d)
        if not ok.any():
            return
        weight = np.where(ok, cost + penalties[k + d][None, :], np.inf)
        metric = np.where(ok, cost, np.inf)
        edges[(k, d)] = {"weight": weight, "metric": metric}
        by_head.setdefault(k + d, []).append((k, d))

    for k in range(K):
        admit(k, 1)
    s_edges = {(0, m): float(penalties[0][m]) for m in range(Q[0].shape[0])}
    f_edges = {(K, m): 0.0 for m in range(Q[K].shape[0])}

    for d in range(2, cfg.skip_depth + 1):
        for k in range(0, K - d + 1):
            admit(k, d)
        # start/finish skips mirror the interior pass: S reaches layer d-1,
        # F is reached from layer K-d+1, only for vertices not already wired
        j = d - 1
        if 1 <= j <= K - 1:
            from_s = _reachable_from_start(edges, by_head, s_edges, counts, j)
            for m in range(counts[j]):
                if not from_s[m]:
                    s_edges[(j, m)] = float(penalties[j][m])
            jf = K - j
            to_f = _reachable_to_finish(edges, f_edges, counts, jf, K)
            for m in range(counts[jf]):
                if not to_f[m]:
                    f_edges[(jf, m)] = 0.0

    unwrapped = _assign_unwrapped(Q, edges, s_edges)
    if robot is not None and robot.joint_limits is not None:
        if cfg.joint_limit_barrier > 0.0:
            lo, hi = robot.joint_limits[:, 0], robot.joint_limits[:, 1]
            for k in range(K + 1):
                if counts[k] == 0:
                    continue
                margin_lo = np.maximum(unwrapped[k] - lo[None, :], _BARRIER_MARGIN)
                margin_hi = np.maximum(hi[None, :] - unwrapped[k], _BARRIER_MARGIN)
                bar = cfg.joint_limit_barrier * path.dlambda * np.sum(
                    1.0 / margin_lo + 1.0 / margin_hi, axis=1)
                _add_head_penalty(edges, s_edges, k, bar)
        if cfg.enforce_joint_limits:
            _drop_limit_violations(Q, unwrapped, edges, s_edges, f_edges, robot.joint_limits)

    return PlanGraph(dlambda=path.dlambda, eps=eps, Q=Q, det_j=det_j, approximate=approx,
                     orig_index=orig, penalties=penalties, unwrapped=unwrapped,
                     edges=edges, s_edges=s_edges, f_edges=f_edges, config=cfg)


def _reachable_from_start(edges, by_head, s_edges, counts, k_to: int) -> np.ndarray:
    reach = {k: np.zeros(counts[k], dtype=bool) for k in range(k_to + 1)}
    for (k, m) in s_edges:
        if k <= k_to:
            reach[k][m] = True
    for j in range(1, k_to + 1):
        for (k, d) in by_head.get(j, ()):
            if reach[k].any():
                reach[j] |= reach[k] @ np.isfinite(edges[(k, d)]["weight"])
    return reach[k_to]


def _reachable_to_finish(edges, f_edges, counts, k_from: int, K: int) -> np.ndarray:
    reach = {k: np.zeros(counts[k], dtype=bool) for k in range(k_from, K + 1)}
    for (k, m) in f_edges:
        if k >= k_from:
            reach[k][m] = True
    for j in range(K - 1, k_from - 1, -1):
        for (k, d), e in edges.items():
            if k == j and k + d <= K:
                if reach[k + d].any():
                    reach[j] |= np.isfinite(e["weight"]) @ reach[k + d]
    return reach[k_from]


def _add_head_penalty(edges, s_edges, k: int, pen: np.ndarray):
    for (kk, d), e in edges.items():
        if kk + d == k:
            e["weight"] = np.where(np.isfinite(e["weight"]), e["weight"] + pen[None, :], np.inf)
    for (kk, m) in list(s_edges):
        if kk == k:
            s_edges[(kk, m)] += float(pen[m])


def _assign_unwrapped(Q, edges, s_edges):
    """Greedy turn tracking: each vertex gets the unwrapped representative
    nearest its first admitted predecessor (nearest layer first, then lowest
    vertex index); exact +/- pi steps take the positive branch."""
    n_layers = len(Q)
    unwrapped = [q.copy() for q in Q]
    assigned = [np.zeros(q.shape[0], dtype=bool) for q in Q]
    for (k, m) in s_edges:
        assigned[k][m] = True
    incoming: dict[int, list] = {}
    for (k, d) in edges:
        incoming.setdefault(k + d, []).append((k, d))
    for j in range(n_layers):
        for (k, d) in sorted(incoming.get(j, []), key=lambda kd: kd[1]):
            ok = np.isfinite(edges[(k, d)]["weight"])
            for m in range(Q[k].shape[0]):
                if not assigned[k][m]:
                    continue
                for l in np.flatnonzero(ok[m]):
                    if not assigned[j][l]:
                        unwrapped[j][l] = unwrapped[k][m] + wrap_to_pi(Q[j][l] - Q[k][m])
                        assigned[j][l] = True
    return unwrapped


def _drop_limit_violations(Q, unwrapped, edges, s_edges, f_edges, limits):
    """Remove edges whose head would sit outside the joint limits under the
    turn-tracked representative, or whose implied unwrap disagrees with it."""
    lo, hi = limits[:, 0], limits[:, 1]
    inside = [np.all((u >= lo[None, :]) & (u <= hi[None, :]), axis=1) if u.shape[0] else
              np.zeros(0, dtype=bool) for u in unwrapped]
    for (k, d), e in edges.items():
        ok = np.isfinite(e["weight"])
        for m in range(Q[k].shape[0]):
            for l in np.flatnonzero(ok[m]):
                implied = unwrapped[k][m] + wrap_to_pi(Q[k + d][l] - Q[k][m])
                if not inside[k + d][l] or not inside[k][m] or \
                        np.max(np.abs(implied - unwrapped[k + d][l])) > 1e-9:
                    e["weight"][m, l] = np.inf
                    e["metric"][m, l] = np.inf
    for (k, m) in list(s_edges):
        if not inside[k][m]:
            del s_edges[(k, m)]
    for (k, m) in list(f_edges):
        if not inside[k][m]:
            del f_edges[(k, m)]


@dataclass
class JointPath:
    """Shortest continuous joint path through the graph.

    cost is the pure movement metric; weight additionally carries the soft
    penalties the search minimized. Entries sit at the layers the path
    visits (skip edges leave gaps).
    """
    lambdas: np.ndarray
    layer_indices: list[int]
    vertex_indices: list[int]
    q: np.ndarray
    cost: float
    weight: float
    dlambda: float
    total_length: float

    @property
    def rms(self) -> float:
        return float(np.sqrt(self.cost / self.total_length))


@dataclass
class PlanResult:
    path: JointPath | None
    layer_counts: list[int]
    graph: PlanGraph
    infeasible_span: tuple[int, int] | None = None

    @property
    def feasible(self) -> bool:
        return self.path is not None


class _Search:
    """Single-source DAG relaxation with lexicographic tie-breaking."""

    def __init__(self, graph: PlanGraph):
        self.g = graph
        self.incoming: dict[int, list] = {}
        for (k, d) in sorted(graph.edges):
            self.incoming.setdefault(k + d, []).append((k, d))

    def run(self, sources: dict):
        g = self.g
        K = g.n_layers - 1
        dist = [np.full(q.shape[0], np.inf) for q in g.Q]
        parent = [[None] * q.shape[0] for q in g.Q]
        self._parent = parent
        self._tuples: dict = {}
        for (k, m), w in sources.items():
            if w < dist[k][m]:
                dist[k][m] = w
                parent[k][m] = "S"
        for j in range(K + 1):
            for (k, d) in self.incoming.get(j, []):
                W = g.edges[(k, d)]["weight"]
                for m in range(W.shape[0]):
                    dkm = dist[k][m]
                    if not np.isfinite(dkm):
                        continue
                    for l in np.flatnonzero(np.isfinite(W[m])):
                        cand = dkm + W[m, l]
                        if cand < dist[j][l] or (
                                cand == dist[j][l]
                                and self.seq((k, m)) + ((j, l),) < self.seq((j, l))):
                            dist[j][l] = cand
                            parent[j][l] = (k, m)
                            # later layers are untouched, so only this
                            # vertex's cached sequence can be stale
                            self._tuples.pop((j, l), None)
        return dist, parent

    def seq(self, v):
        """Vertex index sequence of the current best path to v."""
        if v == "S":
            return ()
        if v not in self._tuples:
            k, m = v
            self._tuples[v] = self.seq(self._parent[k][m]) + ((k, m),)
        return self._tuples[v]


def shortest_joint_path(graph: PlanGraph):
    """Minimum-weight S-to-F path, or None when F is unreachable.

    Exact-cost ties resolve toward the smallest (layer, vertex) sequence.
    """
    search = _Search(graph)
    dist, parent = search.run(graph.s_edges)
    K = graph.n_layers - 1
    best, best_v = np.inf, None
    for (k, m), w in sorted(graph.f_edges.items()):
        if not np.isfinite(dist[k][m]):
            continue
        cand = dist[k][m] + w
        if cand < best or (cand == best and search.seq((k, m)) < search.seq(best_v)):
            best, best_v = cand, (k, m)
    if best_v is None:
        return None
    chain = []
    v = best_v
    while v != "S":
        chain.append(v)
        k, m = v
        v = parent[k][m]
    chain.reverse()
    return _extract_path(graph, chain, float(best))


def _extract_path(graph: PlanGraph, chain, weight: float) -> JointPath:
    layer_idx = [k for k, _ in chain]
    vert_idx = [m for _, m in chain]
    # continuous unwrapped output: accumulate the wrap-minimal steps
    qs = [graph.unwrapped[chain[0][0]][chain[0][1]].copy()]
    cost = 0.0
    for (ka, ma), (kb, mb) in zip(chain[:-1], chain[1:]):
        step = wrap_to_pi(graph.Q[kb][mb] - graph.Q[ka][ma])
        qs.append(qs[-1] + step)
        cost += float(step @ step) / ((kb - ka) * graph.dlambda)
    K = graph.n_layers - 1
    return JointPath(
        lambdas=np.array(layer_idx, dtype=float) * graph.dlambda,
        layer_indices=layer_idx,
        vertex_indices=vert_idx,
        q=np.stack(qs),
        cost=cost,
        weight=weight,
        dlambda=graph.dlambda,
        total_length=K * graph.dlambda,
    )


def _first_disconnected_span(graph: PlanGraph):
    """Layers [a, b] where forward reachability from S first dies."""
    counts = graph.layer_counts
    K = graph.n_layers - 1
    per_layer = []
    reach_map = {k: np.zeros(counts[k], dtype=bool) for k in range(K + 1)}
    for (k, m) in graph.s_edges:
        reach_map[k][m] = True
    incoming: dict[int, list] = {}
    for (k, d) in graph.edges:
        incoming.setdefault(k + d, []).append((k, d))
    for j in range(K + 1):
        for (k, d) in incoming.get(j, []):
            e = graph.edges[(k, d)]
            if reach_map[k].any():
                reach_map[j] |= reach_map[k] @ np.isfinite(e["weight"])
        per_layer.append(bool(reach_map[j].any()))
    if all(per_layer):
        return (K, K)
    a = per_layer.index(False)
    b = a
    while b + 1 <= K and not per_layer[b + 1]:
        b += 1
    return (a, b)


def plan_path(robot: RobotModel, path: TaskPath, cfg: PlannerConfig | None = None,
              ik_cfg: IKConfig | None = None, threads: int = 1) -> PlanResult:
    """IK layers, graph, and shortest path in one call."""
    layers = build_layers(robot, path, ik_cfg, threads=threads)
    graph = build_plan_graph(layers, path, cfg, robot=robot)
    jp = shortest_joint_path(graph)
    span = None if jp is not None else _first_disconnected_span(graph)
    return PlanResult(path=jp, layer_counts=graph.layer_counts, graph=graph,
                      infeasible_span=span)


@dataclass
class RepeatabilityReport:
    """How the IK solutions of a closed path map to each other after one cycle."""
    connectivity: np.ndarray            # (M, M) bool, start m -> end l
    costs: np.ndarray                   # (M, M) optimal weights, inf if unreachable
    regular_solutions: list[int]        # fixed points m -> m
    cycles: list[list[int]]             # index cycles of period >= 2
    end_matching: list[int]             # layer-K vertex for each layer-0 vertex


def _match_end_layers(Q0: np.ndarray, QK: np.ndarray, tol: float = 1e-3) -> list[int]:
    if Q0.shape[0] != QK.shape[0]:
        raise ValueError(
            f"closed path endpoint layers differ in solution count "
            f"({Q0.shape[0]} vs {QK.shape[0]})")
    matching = []
    used = set()
    for m in range(Q0.shape[0]):
        d = np.max(np.abs(wrap_to_pi(QK - Q0[m][None, :])), axis=1)
        l = int(np.argmin(d))
        if d[l] > tol or l in used:
            raise ValueError("endpoint solution sets do not match one-to-one")
        used.add(l)
        matching.append(l)
    return matching


def _simple_cycles(adj: np.ndarray, cap: int = 10_000) -> list[list[int]]:
    """All simple cycles of length >= 2 in a small boolean digraph."""
    M = adj.shape[0]
    cycles = []
    for s in range(M):
        stack = [(s, (s,))]
        while stack and len(cycles) < cap:
            u, trail = stack.pop()
            for v in range(s, M):
                if not adj[u, v]:
                    continue
                if v == s:
                    if len(trail) >= 2:
                        cycles.append(list(trail))
                elif v not in trail:
                    stack.append((v, trail + (v,)))
    return cycles


def analyze_repeatability(robot: RobotModel, path: TaskPath,
                          cfg: PlannerConfig | None = None,
                          ik_cfg: IKConfig | None = None,
                          threads: int = 1) -> RepeatabilityReport:
    """Start-to-end connectivity of a closed path's IK solutions.

    Fixed points of the connectivity map are regular solutions; longer
    cycles are repeatable but non-regular; solutions on no cycle cannot be
    repeated indefinitely.
    """
    if not path.closed:
        raise ValueError("repeatability analysis requires a closed path")
    layers = build_layers(robot, path, ik_cfg, threads=threads)
    graph = build_plan_graph(layers, path, cfg, robot=robot)
    K = graph.n_layers - 1
    matching = _match_end_layers(graph.Q[0], graph.Q[K])
    M = graph.Q[0].shape[0]
    search = _Search(graph)
    costs = np.full((M, M), np.inf)
    for m in range(M):
        dist, _ = search.run({(0, m): 0.0})
        for l0 in range(M):
            costs[m, l0] = dist[K][matching[l0]]
    connectivity = np.isfinite(costs)
    regular = [m for m in range(M) if connectivity[m, m]]
    cycles = _simple_cycles(connectivity & ~np.eye(M, dtype=bool))
    return RepeatabilityReport(connectivity=connectivity, costs=costs,
                               regular_solutions=regular, cycles=cycles,
                               end_matching=matching)
