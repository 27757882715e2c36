"""Workpiece placement optimization.

The toolpath lives in a workpiece frame; a rigid transform places it in the
robot base frame and the graph planner prices the placement. Rotating any
placement about the robot's first joint axis changes nothing (when that
axis is vertical and unconstrained), so the pose is reduced to five
parameters: a tilt whose rotation axis lies in the xy plane, encoded by the
quaternion vector components (v_x, v_y), plus a pre-rotation translation.
Nelder-Mead descends on the planner cost from random feasible starts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .ik import IKConfig
from .kinematics import (
    Pose,
    RobotModel,
    fk_batch,
    quat_to_rotation,
    rot_z,
    rotation_to_quat,
)
from .planner import PlannerConfig, TaskPath, plan_path

logger = logging.getLogger(__name__)

INFEASIBLE_SENTINEL = 1e9


@dataclass
class Toolpath:
    """Evenly sampled path in the workpiece frame."""
    poses: list[Pose]
    dlambda: float
    closed: bool = False

    def __post_init__(self):
        if len(self.poses) < 2:
            raise ValueError("a toolpath needs at least two samples")
        if self.dlambda <= 0:
            raise ValueError("dlambda must be positive")

    @property
    def K(self) -> int:
        return len(self.poses) - 1

    @property
    def length(self) -> float:
        return self.K * self.dlambda


@dataclass
class WorkpiecePose:
    """Rigid placement as quaternion (w, x, y, z) plus translation.

    The quaternion is normalized before every use, so scaling it does not
    change the transform; optimization only has to keep its norm in a sane
    range.
    """
    quat: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.quat = np.asarray(self.quat, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.quat.shape != (4,) or self.p.shape != (3,):
            raise ValueError("quat must be a 4-vector and p a 3-vector")

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_rotation(self.quat)

    @staticmethod
    def identity() -> "WorkpiecePose":
        return WorkpiecePose(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))


@dataclass
class ReducedParams:
    """Five-parameter placement: xy-plane tilt (v_x, v_y) and translation.

    v = k*sin(theta/2) for a rotation axis k with k_z = 0; the implied
    scalar part is sqrt(1 - v_x^2 - v_y^2). The translation applies before
    the tilt.
    """
    v: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.v.shape != (2,) or self.p.shape != (3,):
            raise ValueError("v must be a 2-vector and p a 3-vector")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.v, self.p])

    @staticmethod
    def from_array(x) -> "ReducedParams":
        x = np.asarray(x, dtype=float)
        return ReducedParams(x[:2], x[2:])


def reduced_to_pose(x: ReducedParams) -> WorkpiecePose:
    """Expand the 5-parameter form; tilts outside the unit v-disk clamp to it."""
    v = x.v
    s = float(v @ v)
    if s > 1.0:
        logger.warning("tilt parameters left the unit disk (|v|^2 = %.6f); clamping", s)
        v = v / np.sqrt(s)
        s = 1.0
    w = np.sqrt(max(0.0, 1.0 - s))
    quat = np.array([w, v[0], v[1], 0.0])
    R = quat_to_rotation(quat)
    return WorkpiecePose(quat=quat, p=R @ x.p)


def transform_toolpath(wp: WorkpiecePose, tp: Toolpath) -> TaskPath:
    """Place the toolpath in the base frame; sample spacing is preserved."""
    R = wp.rotation
    poses = [Pose(R @ s.rotation, wp.p + R @ s.position) for s in tp.poses]
    return TaskPath(poses, dlambda=tp.dlambda, closed=tp.closed)


def decompose_rz_rxy(R) -> tuple[float, np.ndarray]:
    """Split R = Rz(theta_z) @ R_xy with R_xy a rotation about an xy-plane axis.

    Always succeeds: any rotation decomposes this way (z-x-z Euler argument);
    a pure z-rotation returns (its angle, identity). A correction pass damps
    the matrix-to-quaternion roundoff so the residual axis z-component stays
    at machine precision.
    """
    R = np.asarray(R, dtype=float)
    theta_z = 0.0
    R_xy = R
    for _ in range(3):
        q = rotation_to_quat(R_xy)
        delta = 2.0 * np.arctan2(q[3], q[0])
        theta_z += delta
        R_xy = rot_z(-theta_z) @ R
        if abs(delta) < 1e-14:
            break
    return float(theta_z), R_xy


def workspace_radii(robot: RobotModel, n_samples: int = 4096, seed: int = 0):
    """Crude reachable-shell estimate: (min, max) tool distance from base."""
    rng = np.random.default_rng(seed)
    Q = rng.uniform(-np.pi, np.pi, size=(n_samples, robot.dof))
    _, P = fk_batch(robot, Q)
    r = np.linalg.norm(P, axis=1)
    return float(r.min()), float(r.max())


def _unreachable_penalty(task: TaskPath, radii) -> float:
    r_min, r_max = radii
    dist = 0.0
    for pose in task.poses:
        r = float(np.linalg.norm(pose.position))
        dist += max(0.0, r - r_max) + max(0.0, r_min - r)
    return dist


def objective_from_pose(robot: RobotModel, tp: Toolpath, wp: WorkpiecePose,
                        planner_cfg: PlannerConfig | None = None,
                        ik_cfg: IKConfig | None = None,
                        task_penalty=None, radii=None, threads: int = 1) -> float:
    """Planner weight of a full placement; infeasible placements price at
    the sentinel plus how far the path sticks out of the reachable shell."""
    task = transform_toolpath(wp, tp)
    if task_penalty is not None:
        extra = float(task_penalty(task))
    else:
        extra = 0.0
    res = plan_path(robot, task, planner_cfg, ik_cfg, threads=threads)
    if res.feasible:
        return res.path.weight + extra
    if radii is None:
        radii = workspace_radii(robot)
    return INFEASIBLE_SENTINEL + _unreachable_penalty(task, radii) + extra


def objective(robot: RobotModel, tp: Toolpath, x: ReducedParams,
              planner_cfg: PlannerConfig | None = None,
              ik_cfg: IKConfig | None = None,
              task_penalty=None, radii=None, threads: int = 1) -> float:
    """Planner weight of a reduced placement (total function, never raises)."""
    return objective_from_pose(robot, tp, reduced_to_pose(x), planner_cfg,
                               ik_cfg, task_penalty, radii, threads)


@dataclass
class NelderMeadOptions:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    tol_x: float = 1e-6
    tol_f: float = 1e-9
    max_evals: int = 5000
    initial_step: float = 0.1


def nelder_mead(f, x0, opts: NelderMeadOptions | None = None):
    """Plain simplex descent; returns (x_best, f_best, best-so-far history).

    History gets one entry per function evaluation, so it is non-increasing
    by construction. Terminates on simplex diameter, f-spread, or budget.
    """
    opts = opts or NelderMeadOptions()
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    history: list[float] = []
    best_so_far = [np.inf]

    def ev(x):
        val = float(f(x))
        best_so_far[0] = min(best_so_far[0], val)
        history.append(best_so_far[0])
        return val

    simplex = [x0.copy()]
    fvals = [ev(x0)]
    for i in range(n):
        x = x0.copy()
        x[i] += opts.initial_step
        simplex.append(x)
        fvals.append(ev(x))
    simplex = np.stack(simplex)
    fvals = np.array(fvals)

    while len(history) < opts.max_evals:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        diameter = np.max(np.linalg.norm(simplex[1:] - simplex[0], axis=1))
        # fminsearch-style joint test: both the simplex and the f-spread
        # must collapse, otherwise quadratic bowls stop an order short
        if diameter < opts.tol_x and (fvals[-1] - fvals[0]) < opts.tol_f:
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + opts.reflection * (centroid - worst)
        fr = ev(xr)
        if fr < fvals[0]:
            xe = centroid + opts.expansion * (xr - centroid)
            fe = ev(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            xc = centroid + opts.contraction * (worst - centroid)
            fc = ev(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + opts.shrink * (simplex[i] - simplex[0])
                    fvals[i] = ev(simplex[i])
    order = np.argsort(fvals, kind="stable")
    return simplex[order[0]].copy(), float(fvals[order[0]]), history


class StartExhaustionError(RuntimeError):
    def __init__(self, attempts: int):
        super().__init__(f"no feasible workpiece placement found in {attempts} attempts")
        self.attempts = attempts


def random_feasible_start(robot: RobotModel, tp: Toolpath, rng,
                          bounds=None, max_attempts: int = 100,
                          planner_cfg: PlannerConfig | None = None,
                          ik_cfg: IKConfig | None = None,
                          radii=None, threads: int = 1) -> ReducedParams:
    """Uniform tilt over the v-disk and translation inside bounds until the
    planner finds a feasible path. bounds defaults to the reachable-shell box."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if radii is None:
        radii = workspace_radii(robot)
    if bounds is None:
        r = radii[1]
        bounds = (np.full(3, -r), np.full(3, r))
    lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    for _ in range(max_attempts):
        r = np.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2.0 * np.pi)
        v = np.array([r * np.cos(ang), r * np.sin(ang)])
        p = rng.uniform(lo, hi)
        x = ReducedParams(v, p)
        val = objective(robot, tp, x, planner_cfg, ik_cfg, radii=radii, threads=threads)
        if val < INFEASIBLE_SENTINEL:
            return x
    raise StartExhaustionError(max_attempts)


@dataclass
class OptResult:
    """One optimization start, with its descent history."""
    start_index: int
    x: ReducedParams
    pose: WorkpiecePose
    history: list[float]
    initial_cost: float
    final_cost: float
    initial_rms: float
    final_rms: float
    feasible: bool
    n_evals: int
    is_best: bool = False


def _strict_rms(robot, tp, x, planner_cfg, ik_cfg, threads):
    res = plan_path(robot, transform_toolpath(reduced_to_pose(x), tp),
                    planner_cfg, ik_cfg, threads=threads)
    if not res.feasible:
        return None
    return res.path.rms


def optimize_workpiece_pose(robot: RobotModel, tp: Toolpath, n_starts: int = 2,
                            seed: int = 0, nm_opts: NelderMeadOptions | None = None,
                            planner_cfg: PlannerConfig | None = None,
                            ik_cfg: IKConfig | None = None,
                            strict_planner_cfg: PlannerConfig | None = None,
                            strict_ik_cfg: IKConfig | None = None,
                            bounds=None, max_attempts: int = 100,
                            task_penalty=None, threads: int = 1) -> list[OptResult]:
    """Multi-start placement optimization.

    Each start draws a feasible random placement and runs Nelder-Mead on the
    planner cost. The in-loop planner config may trade strictness for speed;
    initial and final rms are re-priced with the strict configs. Results come
    back sorted by final cost, best first (marked), deterministic for a
    fixed seed via independently spawned per-start generators.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    nm_opts = nm_opts or NelderMeadOptions()
    strict_planner_cfg = strict_planner_cfg or planner_cfg
    strict_ik_cfg = strict_ik_cfg or ik_cfg
    radii = workspace_radii(robot)
    streams = np.random.SeedSequence(seed).spawn(n_starts)
    results = []
    failures = 0
    for idx, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        try:
            x0 = random_feasible_start(robot, tp, rng, bounds, max_attempts,
                                       planner_cfg, ik_cfg, radii, threads)
        except StartExhaustionError:
            failures += 1
            continue

        def fun(arr):
            return objective(robot, tp, ReducedParams.from_array(arr),
                             planner_cfg, ik_cfg, task_penalty, radii, threads)

        x_best, f_best, history = nelder_mead(fun, x0.as_array(), nm_opts)
        xr = ReducedParams.from_array(x_best)
        initial_rms = _strict_rms(robot, tp, x0, strict_planner_cfg, strict_ik_cfg, threads)
        final_rms = _strict_rms(robot, tp, xr, strict_planner_cfg, strict_ik_cfg, threads)
        results.append(OptResult(
            start_index=idx, x=xr, pose=reduced_to_pose(xr), history=history,
            initial_cost=history[0], final_cost=f_best,
            initial_rms=initial_rms if initial_rms is not None else float("nan"),
            final_rms=final_rms if final_rms is not None else float("nan"),
            feasible=f_best < INFEASIBLE_SENTINEL, n_evals=len(history)))
    if not results:
        raise StartExhaustionError(failures * max_attempts)
    results.sort(key=lambda r: (r.final_cost, r.start_index))
    results[0].is_best = True
    return results
