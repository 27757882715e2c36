"""Enumeration of all isolated IK solutions by multi-start refinement.

Every pose is attacked from a regular grid of joint-space seeds; each seed
runs damped least squares until it converges, stalls at a boundary local
minimum (a continuous approximate solution), or gives up. Survivors are
deduplicated wrap-aware, exact solutions ahead of approximate ones.

The engine iterates one flat population of (target, seed) rows, so a whole
task-space path can be refined in a handful of large numpy batches; a
single-target solve is just a population with one target. Rows are fully
independent, which keeps the result identical however the population is
chunked or threaded.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .kinematics import (
    Pose,
    RobotModel,
    det_j_batch,
    fk_jacobian_batch,
    wrap_to_pi,
)

# iterates of the same target closer than this (per joint, after wrapping)
# are assumed to share a basin and are merged onto the lowest seed index;
# completeness under this shortcut is covered by the brute-force grid oracle
_COALESCE_CELL = 0.3
_COALESCE_START_ITER = 2
# rows this close to a root (meters+radians of residual) are exempt from
# coalescing: distinct near-fold roots can sit closer than the cell size
_COALESCE_RESID_GUARD = 1e-2
_STALL_LIMIT = 4
_STALL_REL_IMPROVEMENT = 1e-3
_CHUNK_ROWS = 150_000
# boundary local minima are valley-shaped; stalled points this close (rad)
# describe the same continuous approximate solution
_APPROX_DEDUP = 0.05
_LAM_GROW = 10.0
_LAM_SHRINK = 0.3
_LAM_MAX = 1e8


@dataclass
class IKConfig:
    """Knobs for the multi-start solver.

    seeds_per_joint defaults to 24 for 3-DOF arms and 8 for 6-DOF arms when
    left as None.
    """
    seeds_per_joint: int | None = None
    exact_tol: float = 1e-8
    approx_tol: float = 1e-3
    dedup_tol: float = 1e-4
    max_refine_iters: int = 100
    damping: float = 1e-4
    include_approximate: bool = True

    def __post_init__(self):
        if self.exact_tol >= self.approx_tol:
            raise ValueError("exact_tol must be smaller than approx_tol")
        for name in ("exact_tol", "approx_tol", "dedup_tol", "damping"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_refine_iters < 1:
            raise ValueError("max_refine_iters must be >= 1")

    def resolve_seeds(self, dof: int) -> int:
        if self.seeds_per_joint is not None:
            return self.seeds_per_joint
        return 24 if dof == 3 else 8


@dataclass
class IKSolution:
    """One isolated joint-space preimage of a pose.

    residual sums position error (m) and orientation geodesic error (rad);
    approximate marks boundary local minima where exact IK ceases to exist.
    """
    q: np.ndarray
    residual: float
    det_j: float
    approximate: bool


@dataclass
class IKSolutionSet:
    pose: Pose
    solutions: list[IKSolution]

    @property
    def count(self) -> int:
        return len(self.solutions)

    def joint_matrix(self) -> np.ndarray:
        if not self.solutions:
            return np.empty((0, 0))
        return np.stack([s.q for s in self.solutions])


def seed_grid(dof: int, seeds_per_joint: int) -> np.ndarray:
    """Regular grid of bin-center seeds over (-pi, pi]^dof, row-major order."""
    centers = -np.pi + (np.arange(seeds_per_joint) + 0.5) * (2.0 * np.pi / seeds_per_joint)
    grids = np.meshgrid(*([centers] * dof), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _rotvec_batch(R: np.ndarray) -> np.ndarray:
    """Rotation vectors for a batch of rotation matrices."""
    vee = 0.5 * np.stack(
        [R[:, 2, 1] - R[:, 1, 2], R[:, 0, 2] - R[:, 2, 0], R[:, 1, 0] - R[:, 0, 1]],
        axis=1,
    )
    s = np.linalg.norm(vee, axis=1)
    c = (np.trace(R, axis1=1, axis2=2) - 1.0) / 2.0
    theta = np.arctan2(s, c)
    small = s <= 1e-7
    factor = np.where(small, 1.0 + theta * theta / 6.0, theta / np.where(small, 1.0, s))
    out = vee * factor[:, None]
    # antipodal rows: vee vanishes but theta ~ pi, recover the axis from R + I
    flipped = np.flatnonzero(small & (c < 0.0))
    for i in flipped:
        A = R[i] + np.eye(3)
        k = int(np.argmax(np.diag(A)))
        axis = A[:, k] / np.linalg.norm(A[:, k])
        if vee[i] @ axis < 0.0:
            axis = -axis
        out[i] = axis * theta[i]
    return out


def _solve3_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cramer solve for batches of 3x3 systems (cheaper than LAPACK here)."""
    a, d, g = A[:, 0, 0], A[:, 0, 1], A[:, 0, 2]
    e, f, i = A[:, 1, 1], A[:, 1, 2], A[:, 2, 2]
    b_, c_, h = A[:, 1, 0], A[:, 2, 0], A[:, 2, 1]
    co00 = e * i - f * h
    co01 = f * c_ - b_ * i
    co02 = b_ * h - e * c_
    det = a * co00 + d * co01 + g * co02
    co10 = g * h - d * i
    co11 = a * i - g * c_
    co12 = d * c_ - a * h
    co20 = d * f - g * e
    co21 = g * b_ - a * f
    co22 = a * e - d * b_
    x = np.empty_like(b)
    inv_det = 1.0 / det
    x[:, 0] = (co00 * b[:, 0] + co10 * b[:, 1] + co20 * b[:, 2]) * inv_det
    x[:, 1] = (co01 * b[:, 0] + co11 * b[:, 1] + co21 * b[:, 2]) * inv_det
    x[:, 2] = (co02 * b[:, 0] + co12 * b[:, 1] + co22 * b[:, 2]) * inv_det
    return x


@dataclass
class _Candidate:
    q: np.ndarray
    residual: float
    seed: int
    approximate: bool


_MIX = np.uint64(0x9E3779B97F4A7C15)


def _cell_key(Q, sample_of, cell: float) -> np.ndarray:
    """Mixed hash key per row from (sample id, quantized joint cell)."""
    cells = np.round(Q * (1.0 / cell)).astype(np.int64).astype(np.uint64)
    key = sample_of.astype(np.uint64)
    with np.errstate(over="ignore"):
        for j in range(Q.shape[1]):
            key = key * _MIX + cells[:, j]
    return key


def _first_of_each_key(sorted_like_keys: np.ndarray) -> np.ndarray:
    """Indices of the first occurrence of each distinct key, preserving the
    given order (input must be in the desired priority order)."""
    order = np.argsort(sorted_like_keys, kind="stable")
    uniq = np.ones(order.shape[0], dtype=bool)
    k = sorted_like_keys[order]
    uniq[1:] = k[1:] != k[:-1]
    return order[uniq]


def _refine_population(robot: RobotModel, Tpos, Trot, Q0, sample_of, seeds,
                       cfg: IKConfig, coalesce: bool = True):
    """Levenberg-Marquardt over rows of (target, seed) pairs.

    Tpos/Trot hold the target per row; sample_of tags each row with its
    target index so rows of different targets never interact. Each row
    carries its own damping: steps that raise the residual are rejected and
    retried stiffer, which keeps boundary rows from being flung away by a
    near-singular Jacobian. Returns candidate arrays
    (q, residual, seed, approximate, sample).
    """
    n = robot.dof
    Q = wrap_to_pi(np.asarray(Q0, dtype=float))
    sample_of = np.asarray(sample_of)
    seeds = np.asarray(seeds)
    N = Q.shape[0]
    lam = np.full(N, cfg.damping)
    best = np.full(N, np.inf)
    stall = np.zeros(N, dtype=np.int8)
    below_prev = np.zeros(N, dtype=bool)
    prev_Q = prev_e = prev_J = None
    prev_resid = np.full(N, np.inf)
    done: list[tuple] = []
    diag = np.arange(3 if n == 3 else 6)
    m6 = n != 3

    def finalize(sel, resid):
        if np.any(sel):
            r = resid[sel]
            done.append((Q[sel], r, seeds[sel], r > cfg.exact_tol, sample_of[sel]))

    for it in range(cfg.max_refine_iters):
        if Q.shape[0] == 0:
            break
        R, p, J = fk_jacobian_batch(robot, Q)
        dp = Tpos - p
        if m6:
            Rrel = Trot @ np.swapaxes(R, 1, 2)
            w = _rotvec_batch(Rrel)
            e = np.concatenate([dp, w], axis=1)
            resid = np.linalg.norm(dp, axis=1) + np.linalg.norm(w, axis=1)
        else:
            e = dp
            resid = np.sqrt(dp[:, 0] ** 2 + dp[:, 1] ** 2 + dp[:, 2] ** 2)
        bad = ~np.isfinite(resid)
        if prev_Q is not None:
            worse = (resid > prev_resid) | bad
            if np.any(worse):
                # reject the step: revert to the stored state, retry stiffer
                Q[worse] = prev_Q[worse]
                e[worse] = prev_e[worse]
                J[worse] = prev_J[worse]
                resid[worse] = prev_resid[worse]
                bad &= ~worse
            lam = np.where(worse, np.minimum(lam * _LAM_GROW, _LAM_MAX),
                           np.maximum(lam * _LAM_SHRINK, cfg.damping))
        below = resid <= cfg.exact_tol
        # bank a root only after a second sub-tolerance pass: the extra
        # Newton step polishes it to machine accuracy, which downstream
        # cost comparisons rely on
        converged = below & below_prev
        stalled = (best - resid) < _STALL_REL_IMPROVEMENT * np.maximum(resid, 1e-12)
        stall = np.where(stalled, stall + 1, 0).astype(np.int8)
        np.minimum(best, resid, out=best)
        gave_up = (stall >= _STALL_LIMIT) & ~below & ~bad
        if it == cfg.max_refine_iters - 1:
            # out of budget: bank whatever is close enough
            finalize(~bad & (resid <= cfg.approx_tol), resid)
            break
        finalize((converged | gave_up) & (resid <= cfg.approx_tol), resid)
        keep = ~(converged | gave_up | bad)
        if not np.all(keep):
            Q, seeds, best, stall, lam = Q[keep], seeds[keep], best[keep], stall[keep], lam[keep]
            sample_of, e, J, resid = sample_of[keep], e[keep], J[keep], resid[keep]
            below = below[keep]
            Tpos = Tpos[keep]
            if m6:
                Trot = Trot[keep]
        if Q.shape[0] == 0:
            break
        if coalesce and it >= _COALESCE_START_ITER and Q.shape[0] > 64:
            # rows already homing in on a root are exempt: distinct
            # near-fold twin roots can sit closer than the cell size
            free = np.flatnonzero(resid >= _COALESCE_RESID_GUARD)
            if free.size:
                key = _cell_key(Q[free], sample_of[free], _COALESCE_CELL)
                rank = np.argsort(seeds[free], kind="stable")
                kept_free = free[rank[_first_of_each_key(key[rank])]]
                if kept_free.size < free.size:
                    first = np.sort(np.concatenate(
                        [kept_free, np.flatnonzero(resid < _COALESCE_RESID_GUARD)]))
                    Q, seeds, best, stall, lam = Q[first], seeds[first], best[first], stall[first], lam[first]
                    sample_of, e, J, resid = sample_of[first], e[first], J[first], resid[first]
                    below = below[first]
                    Tpos = Tpos[first]
                    if m6:
                        Trot = Trot[first]
        below_prev = below
        prev_Q, prev_e, prev_J, prev_resid = Q.copy(), e, J, resid
        JT = np.swapaxes(J, 1, 2)
        A = J @ JT
        A[:, diag, diag] += lam[:, None] * lam[:, None]
        if m6:
            y = np.linalg.solve(A, e[..., None])[..., 0]
        else:
            y = _solve3_spd(A, e)
        Q = wrap_to_pi(Q + (JT @ y[..., None])[..., 0])
    if not done:
        return (np.empty((0, n)), np.empty(0), np.empty(0, dtype=int),
                np.empty(0, dtype=bool), np.empty(0, dtype=int))
    return tuple(np.concatenate(parts) for parts in zip(*done))


def _dedup_sample(Q, resid, seed, approx, dedup_tol: float) -> list[_Candidate]:
    """Wrap-aware dedup for one target; exact beats approximate, then lowest
    seed index wins. Result ordered exact-first by seed index.

    Approximate candidates are thinned at a coarser radius: stalls along one
    boundary valley all describe the same continuous approximate solution.
    """
    order = np.lexsort((seed, approx.astype(int)))
    accepted: list[_Candidate] = []
    for i in order:
        radius = _APPROX_DEDUP if approx[i] else dedup_tol
        if all(np.max(np.abs(wrap_to_pi(Q[i] - a.q))) > radius for a in accepted):
            accepted.append(_Candidate(Q[i].copy(), float(resid[i]), int(seed[i]), bool(approx[i])))
    return accepted


def _candidates_to_set(robot, pose, cands, cfg) -> IKSolutionSet:
    if not cfg.include_approximate:
        cands = [c for c in cands if not c.approximate]
    sols = []
    if cands:
        dets = det_j_batch(robot, np.stack([c.q for c in cands]))
        sols = [IKSolution(q=c.q, residual=c.residual, det_j=float(d), approximate=c.approximate)
                for c, d in zip(cands, dets)]
    return IKSolutionSet(pose=pose, solutions=sols)


def _coarse_thin(Q, resid, seed, approx, sample, dedup_tol):
    """Pre-collapse candidate floods before the exact pairwise dedup.

    Candidates of the same target landing in the same half-dedup cell are
    certainly duplicates; keep the best-ranked (exact first, lowest seed)."""
    rank = np.lexsort((seed, approx.astype(int), sample))
    key = _cell_key(Q, sample, 2.0 * dedup_tol)
    keep = rank[_first_of_each_key(key[rank])]
    keep.sort()
    return Q[keep], resid[keep], seed[keep], approx[keep], sample[keep]


def refine_solution(robot: RobotModel, target: Pose, q0, cfg: IKConfig | None = None):
    """Polish a single start; returns an IKSolution or None on no convergence."""
    cfg = cfg or IKConfig()
    q0 = robot._check_q(np.asarray(q0, dtype=float))
    Tpos = target.position[None, :]
    Trot = target.rotation[None, :, :]
    Q, resid, seed, approx, _ = _refine_population(
        robot, Tpos, Trot, q0[None, :], np.zeros(1, dtype=int), np.zeros(1, dtype=int),
        cfg, coalesce=False)
    if Q.shape[0] == 0:
        return None
    if approx[0] and not cfg.include_approximate:
        return None
    det = float(det_j_batch(robot, Q[:1])[0])
    return IKSolution(q=Q[0], residual=float(resid[0]), det_j=det, approximate=bool(approx[0]))


def solve_all_ik(robot: RobotModel, target: Pose, cfg: IKConfig | None = None) -> IKSolutionSet:
    """All isolated IK solutions of a pose (6R) or position (3R).

    Deterministic for a fixed config: solutions are ordered by the first
    seed that reached them, exact solutions ahead of approximate ones. An
    empty set is a valid result for unreachable targets.
    """
    return solve_ik_along_path(robot, [target], cfg)[0]


def solve_ik_along_path(robot: RobotModel, targets, cfg: IKConfig | None = None,
                        threads: int = 1) -> list[IKSolutionSet]:
    """solve_all_ik for every pose in targets, batched into one population.

    Rows of different targets never interact, so each returned set is
    identical to a standalone solve_all_ik call on that pose.
    """
    cfg = cfg or IKConfig()
    if robot.dof not in (3, 6):
        raise ValueError("all-solutions IK supports 3- and 6-DOF arms")
    targets = list(targets)
    if not targets:
        return []
    grid = seed_grid(robot.dof, cfg.resolve_seeds(robot.dof))
    n_seeds = grid.shape[0]
    per_chunk = max(1, _CHUNK_ROWS // n_seeds)
    chunks = [(lo, min(lo + per_chunk, len(targets)))
              for lo in range(0, len(targets), per_chunk)]

    def run_chunk(bounds):
        lo, hi = bounds
        k = hi - lo
        Tpos = np.repeat(np.stack([t.position for t in targets[lo:hi]]), n_seeds, axis=0)
        Trot = None
        if robot.dof != 3:
            Trot = np.repeat(np.stack([t.rotation for t in targets[lo:hi]]), n_seeds, axis=0)
        Q0 = np.tile(grid, (k, 1))
        sample = np.repeat(np.arange(lo, hi), n_seeds)
        seeds = np.tile(np.arange(n_seeds), k)
        out = _refine_population(robot, Tpos, Trot, Q0, sample, seeds, cfg)
        if out[0].shape[0] > 32:
            out = _coarse_thin(*out, cfg.dedup_tol)
        return out

    if threads > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(b) for b in chunks]

    sets = []
    for (lo, hi), (Q, resid, seed, approx, sample) in zip(chunks, results):
        for idx in range(lo, hi):
            sel = sample == idx
            cands = _dedup_sample(Q[sel], resid[sel], seed[sel], approx[sel], cfg.dedup_tol)
            sets.append(_candidates_to_set(robot, targets[idx], cands, cfg))
    return sets


def solution_count_map(robot: RobotModel, rho_range, z_range, grid, cfg: IKConfig | None = None) -> np.ndarray:
    """Exact-solution counts over the phi = 0 half-plane, 3-DOF arms only.

    Returns an integer array of shape (n_rho, n_z); entry [i, j] counts the
    isolated exact IK solutions of target position (rho_i, 0, z_j).
    Unreachable cells are 0.
    """
    if robot.dof != 3:
        raise ValueError("solution count maps are defined for 3-DOF robots only")
    cfg = replace(cfg or IKConfig(), include_approximate=False)
    n_rho, n_z = grid
    rhos = np.linspace(rho_range[0], rho_range[1], n_rho)
    zs = np.linspace(z_range[0], z_range[1], n_z)
    eye = np.eye(3)
    targets = [Pose(eye, np.array([rho, 0.0, z])) for rho in rhos for z in zs]
    sets = solve_ik_along_path(robot, targets, cfg)
    counts = np.array([s.count for s in sets], dtype=int).reshape(n_rho, n_z)
    return counts
