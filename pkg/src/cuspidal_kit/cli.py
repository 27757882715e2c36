"""Command-line interface.

Subcommands: identify (cuspidality verdict), plan (joint path for a
base-frame path), optimize (workpiece placement), map (solution-count
grid), helix (toolpath generator). Results go to stdout as JSON; files via
--out; diagnostics to stderr. Exit codes: 0 ok, 2 input error,
3 undetermined, 4 infeasible, 5 no feasible start.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import fileio, scenarios
from .cuspidality import identify_cuspidal
from .ik import IKConfig, solution_count_map
from .kinematics import RobotModel
from .optimizer import (
    NelderMeadOptions,
    StartExhaustionError,
    optimize_workpiece_pose,
)
from .planner import PlannerConfig, analyze_repeatability, plan_path

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNDETERMINED = 3
EXIT_INFEASIBLE = 4
EXIT_NO_START = 5

_PATH_FIXTURES = {
    "3r-infeasible-line": scenarios.infeasible_line_path,
    "3r-infeasible-line-control": scenarios.infeasible_line_control_path,
    "3r-cusp-loop": scenarios.cusp_loop_path,
    "3r-control-loop": scenarios.control_loop_path,
}


class InputError(Exception):
    pass


def _load_robot(source: str) -> RobotModel:
    if source in scenarios.ROBOTS:
        return scenarios.get_robot(source)
    if not os.path.exists(source):
        raise InputError(f"robot {source!r}: not a built-in name and no such file")
    try:
        return fileio.robot_from_doc(fileio.load_json(source))
    except (ValueError, KeyError, OSError, TypeError) as e:
        raise InputError(f"robot file {source!r}: {e}") from e


def _load_task_path(source: str):
    if source in _PATH_FIXTURES:
        return _PATH_FIXTURES[source]()
    if not os.path.exists(source):
        raise InputError(f"path {source!r}: not a built-in fixture and no such file")
    try:
        return fileio.task_path_from_doc(fileio.load_json(source))
    except (ValueError, KeyError, OSError, TypeError) as e:
        raise InputError(f"path file {source!r}: {e}") from e


def _load_toolpath(source: str):
    if source == "3r-helix":
        return fileio.toolpath_from_doc(fileio.generate_helix())
    if not os.path.exists(source):
        raise InputError(f"toolpath {source!r}: not a built-in fixture and no such file")
    try:
        return fileio.toolpath_from_doc(fileio.load_json(source))
    except (ValueError, KeyError, OSError, TypeError) as e:
        raise InputError(f"toolpath file {source!r}: {e}") from e


def _threads(args) -> int:
    env = os.environ.get("CUSPIDAL_KIT_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"CUSPIDAL_KIT_THREADS={env!r} is not an integer")
    return max(1, args.threads)


def _emit(doc, out_path):
    text = fileio.dump_json(doc)
    print(text)
    if out_path:
        with open(out_path, "w") as fp:
            fp.write(text + "\n")


def _ik_cfg(args) -> IKConfig:
    return IKConfig(seeds_per_joint=args.ik_seeds)


def cmd_identify(args) -> int:
    robot = _load_robot(args.robot)
    verdict = identify_cuspidal(robot, rng_seed=args.seed, max_poses=args.max_poses,
                                samples=args.samples, cfg=_ik_cfg(args))
    doc = {
        "robot": robot.name,
        "status": verdict.status,
        "poses_tried": verdict.poses_tried,
        "pairs_tested": verdict.pairs_tested,
    }
    if verdict.witness is not None:
        w = verdict.witness
        doc["witness"] = {
            "q_a": w.q_a,
            "q_b": w.q_b,
            "pose_position": w.pose.position,
            "pose_rotation_wxyz": fileio.rotation_to_quat(w.pose.rotation),
            "min_abs_det_j": w.min_abs_det_j,
            "interp_samples": w.interp_samples,
        }
    _emit(doc, args.out)
    return EXIT_OK if verdict.proven else EXIT_UNDETERMINED


def _joint_path_doc(graph, jp) -> dict:
    dets = [float(graph.det_j[k][m]) for k, m in zip(jp.layer_indices, jp.vertex_indices)]
    return {
        "lambdas": jp.lambdas,
        "layers": jp.layer_indices,
        "q": jp.q,
        "det_j": dets,
        "cost": jp.cost,
        "weight": jp.weight,
        "rms": jp.rms,
    }


def cmd_plan(args) -> int:
    robot = _load_robot(args.robot)
    path = _load_task_path(args.path)
    cfg = PlannerConfig(eps0=args.eps0, skip_depth=args.skip_depth,
                        nonsingular_only=args.nonsingular)
    threads = _threads(args)
    result = plan_path(robot, path, cfg, _ik_cfg(args), threads=threads)
    doc = {
        "robot": robot.name,
        "samples": len(path.poses),
        "closed": path.closed,
        "eps": result.graph.eps,
        "layer_counts": result.layer_counts,
        "edges": result.graph.edge_count,
        "feasible": result.feasible,
    }
    if result.feasible:
        doc["joint_path"] = _joint_path_doc(result.graph, result.path)
    else:
        doc["infeasible_span"] = list(result.infeasible_span)
        print(f"infeasible: forward connectivity dies over layers "
              f"{result.infeasible_span}; per-layer solution counts "
              f"{sorted(set(result.layer_counts))}", file=sys.stderr)
    if path.closed:
        rep = analyze_repeatability(robot, path, cfg, _ik_cfg(args), threads=threads)
        doc["repeatability"] = {
            "connectivity": rep.connectivity,
            "costs": [[(c if np.isfinite(c) else None) for c in row] for row in rep.costs],
            "regular_solutions": rep.regular_solutions,
            "cycles": rep.cycles,
        }
    _emit(doc, args.out)
    if args.csv and result.feasible:
        jp = result.path
        header = ["lambda"] + [f"q{i+1}" for i in range(robot.dof)] + ["det_j"]
        dets = doc["joint_path"]["det_j"]
        rows = [[lam] + list(q) + [d] for lam, q, d in zip(jp.lambdas, jp.q, dets)]
        fileio.write_csv(args.csv, header, rows)
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def cmd_optimize(args) -> int:
    robot = _load_robot(args.robot)
    tp = _load_toolpath(args.toolpath)
    nm = NelderMeadOptions(max_evals=args.max_evals)
    try:
        results = optimize_workpiece_pose(
            robot, tp, n_starts=args.starts, seed=args.seed, nm_opts=nm,
            planner_cfg=PlannerConfig(eps0=args.eps0, skip_depth=args.skip_depth),
            ik_cfg=_ik_cfg(args), threads=_threads(args))
    except StartExhaustionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NO_START
    doc = {
        "robot": robot.name,
        "toolpath_samples": len(tp.poses),
        "starts": [
            {
                "start_index": r.start_index,
                "is_best": r.is_best,
                "pose_quat_wxyz": r.pose.quat,
                "pose_p": r.pose.p,
                "reduced": r.x.as_array(),
                "initial_cost": r.initial_cost,
                "final_cost": r.final_cost,
                "initial_rms": r.initial_rms,
                "final_rms": r.final_rms,
                "n_evals": r.n_evals,
                "history": r.history,
            }
            for r in results
        ],
    }
    _emit(doc, args.out)
    if args.csv:
        best = results[0]
        fileio.write_csv(args.csv, ["evaluation", "best_cost"],
                         [[i, v] for i, v in enumerate(best.history)])
    return EXIT_OK


def cmd_map(args) -> int:
    robot = _load_robot(args.robot)
    if robot.dof != 3:
        raise InputError("solution-count maps need a 3-DOF robot")
    counts = solution_count_map(robot, tuple(args.rho_range), tuple(args.z_range),
                                (args.grid[0], args.grid[1]), _ik_cfg(args))
    rhos = np.linspace(args.rho_range[0], args.rho_range[1], args.grid[0])
    header = ["z\\rho"] + [fileio.format_sig(r) for r in rhos]
    zs = np.linspace(args.z_range[0], args.z_range[1], args.grid[1])
    rows = [[fileio.format_sig(z)] + [int(c) for c in counts[:, j]]
            for j, z in enumerate(zs)]
    if args.out:
        fileio.write_csv(args.out, header, rows)
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(str(v) for v in row))
    return EXIT_OK


def cmd_helix(args) -> int:
    doc = fileio.generate_helix(radius=args.radius, pitch=args.pitch,
                                turns=args.turns, samples=args.samples,
                                orientation_mode=args.orientation)
    _emit(doc, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cuspidal-kit",
                                description="Cuspidal robot identification, path planning, and workpiece optimization")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--ik-seeds", type=int, default=None,
                        help="seed grid density per joint (default 24 for 3R, 8 for 6R)")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", default=None, help="also write the JSON result here")

    sp = sub.add_parser("identify", help="decide whether a robot is cuspidal")
    sp.add_argument("--robot", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-poses", type=int, default=100)
    sp.add_argument("--samples", type=int, default=200)
    common(sp)
    sp.set_defaults(func=cmd_identify)

    sp = sub.add_parser("plan", help="plan a joint path for a base-frame path")
    sp.add_argument("--robot", required=True)
    sp.add_argument("--path", required=True)
    sp.add_argument("--eps0", type=float, default=None)
    sp.add_argument("--skip-depth", type=int, default=2)
    sp.add_argument("--nonsingular", action="store_true")
    sp.add_argument("--csv", default=None, help="write the joint path as CSV here")
    common(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("optimize", help="optimize the workpiece placement of a toolpath")
    sp.add_argument("--robot", required=True)
    sp.add_argument("--toolpath", required=True)
    sp.add_argument("--starts", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--eps0", type=float, default=None)
    sp.add_argument("--skip-depth", type=int, default=2)
    sp.add_argument("--max-evals", type=int, default=5000)
    sp.add_argument("--csv", default=None, help="write the best start's history as CSV here")
    common(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("map", help="solution-count grid over the rho-z half-plane")
    sp.add_argument("--robot", required=True)
    sp.add_argument("--rho-range", type=float, nargs=2, required=True)
    sp.add_argument("--z-range", type=float, nargs=2, required=True)
    sp.add_argument("--grid", type=int, nargs=2, required=True)
    common(sp)
    sp.set_defaults(func=cmd_map)

    sp = sub.add_parser("helix", help="generate a helical workpiece toolpath")
    sp.add_argument("--radius", type=float, default=0.3)
    sp.add_argument("--pitch", type=float, default=0.2)
    sp.add_argument("--turns", type=float, default=2.0)
    sp.add_argument("--samples", type=int, default=500)
    sp.add_argument("--orientation", choices=["fixed", "tangent-following"], default="fixed")
    common(sp)
    sp.set_defaults(func=cmd_helix)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
