"""Toolkit for cuspidal serial manipulators: identification, graph-based
joint path planning over complete IK solution sets, and workpiece pose
optimization."""

from .cuspidality import (
    Verdict,
    Witness,
    identify_cuspidal,
    nonsingular_pair_check,
    validate_witness,
)
from .ik import (
    IKConfig,
    IKSolution,
    IKSolutionSet,
    refine_solution,
    solution_count_map,
    solve_all_ik,
    solve_ik_along_path,
)
from .kinematics import (
    CylindricalPoint,
    Pose,
    RobotModel,
    forward_kinematics,
    jacobian,
    jacobian_determinant,
    manipulability,
    to_cylindrical,
    wrap_to_pi,
)
from .optimizer import (
    NelderMeadOptions,
    OptResult,
    ReducedParams,
    Toolpath,
    WorkpiecePose,
    decompose_rz_rxy,
    nelder_mead,
    objective,
    objective_from_pose,
    optimize_workpiece_pose,
    random_feasible_start,
    reduced_to_pose,
    transform_toolpath,
)
from .planner import (
    JointPath,
    Layer,
    PlanGraph,
    PlanResult,
    PlannerConfig,
    RepeatabilityReport,
    TaskPath,
    analyze_repeatability,
    build_layers,
    build_plan_graph,
    edge_cost,
    path_cost,
    plan_path,
    shortest_joint_path,
)

__version__ = "0.1.0"
