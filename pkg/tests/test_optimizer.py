import numpy as np
import numpy.testing as nt
import pytest

from cuspidal_kit import fileio
from cuspidal_kit.ik import IKConfig
from cuspidal_kit.kinematics import (
    Pose,
    forward_kinematics,
    quat_to_rotation,
    rot_z,
    rotation_to_quat,
)
from cuspidal_kit.optimizer import (
    INFEASIBLE_SENTINEL,
    NelderMeadOptions,
    ReducedParams,
    StartExhaustionError,
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
from cuspidal_kit.planner import PlannerConfig, plan_path


def _random_rotation(rng):
    q = rng.normal(size=4)
    return quat_to_rotation(q / np.linalg.norm(q))


def _toolpath(points, dlambda=0.05):
    return Toolpath([Pose(np.eye(3), np.asarray(p, float)) for p in points], dlambda=dlambda)


@pytest.fixture(scope="module")
def helix_tp():
    return fileio.toolpath_from_doc(fileio.generate_helix(samples=120))


class TestTransformToolpath:
    def test_identity(self):
        tp = _toolpath([[0.1, 0, 0], [0.2, 0, 0]])
        out = transform_toolpath(WorkpiecePose.identity(), tp)
        for a, b in zip(tp.poses, out.poses):
            nt.assert_array_equal(a.position, b.position)
            nt.assert_array_equal(a.rotation, b.rotation)

    def test_pure_translation(self):
        tp = _toolpath([[0.1, 0, 0], [0.2, 0, 0]])
        d = np.array([1.0, -2.0, 0.5])
        out = transform_toolpath(WorkpiecePose(np.array([1.0, 0, 0, 0]), d), tp)
        for a, b in zip(tp.poses, out.poses):
            nt.assert_allclose(b.position, a.position + d)
            nt.assert_array_equal(a.rotation, b.rotation)

    def test_matches_homogeneous_matrix_oracle(self):
        rng = np.random.default_rng(20)
        tp = Toolpath([Pose(_random_rotation(rng), rng.normal(size=3)) for _ in range(5)],
                      dlambda=0.1)
        q = rng.normal(size=4)
        wp = WorkpiecePose(q, rng.normal(size=3))
        T = np.eye(4)
        T[:3, :3] = wp.rotation
        T[:3, 3] = wp.p
        out = transform_toolpath(wp, tp)
        for a, b in zip(tp.poses, out.poses):
            Ta = np.eye(4)
            Ta[:3, :3], Ta[:3, 3] = a.rotation, a.position
            Tb = T @ Ta
            nt.assert_allclose(b.rotation, Tb[:3, :3], atol=1e-12)
            nt.assert_allclose(b.position, Tb[:3, 3], atol=1e-12)

    def test_equivariance_under_composition(self):
        rng = np.random.default_rng(21)
        tp = Toolpath([Pose(_random_rotation(rng), rng.normal(size=3)) for _ in range(4)],
                      dlambda=0.1)
        Ra, Rb = _random_rotation(rng), _random_rotation(rng)
        pa, pb = rng.normal(size=3), rng.normal(size=3)
        ab = WorkpiecePose(rotation_to_quat(Ra @ Rb), pa + Ra @ pb)
        once = transform_toolpath(ab, tp)
        twice = transform_toolpath(WorkpiecePose(rotation_to_quat(Ra), pa),
                                   transform_toolpath(WorkpiecePose(rotation_to_quat(Rb), pb), tp))
        for a, b in zip(once.poses, twice.poses):
            nt.assert_allclose(a.rotation, b.rotation, atol=1e-12)
            nt.assert_allclose(a.position, b.position, atol=1e-12)


class TestReducedParams:
    def test_identity(self):
        wp = reduced_to_pose(ReducedParams(np.zeros(2), np.zeros(3)))
        nt.assert_array_equal(wp.quat, [1.0, 0, 0, 0])
        nt.assert_array_equal(wp.p, np.zeros(3))

    def test_quarter_turn_about_x(self):
        wp = reduced_to_pose(ReducedParams(np.array([np.sin(np.pi / 4), 0.0]), np.zeros(3)))
        from cuspidal_kit.kinematics import rot_about_axis
        nt.assert_allclose(wp.rotation, rot_about_axis([1, 0, 0], np.pi / 2), atol=1e-12)

    def test_translation_pre_rotates(self):
        x = ReducedParams(np.array([np.sin(np.pi / 4), 0.0]), np.array([0.0, 1.0, 0.0]))
        wp = reduced_to_pose(x)
        nt.assert_allclose(wp.p, wp.rotation @ x.p, atol=1e-15)

    def test_clamp_outside_disk(self, caplog):
        wp = reduced_to_pose(ReducedParams(np.array([1.2, 0.9]), np.zeros(3)))
        assert np.linalg.norm(wp.quat) == pytest.approx(1.0)
        assert wp.quat[0] == pytest.approx(0.0, abs=1e-12)

    def test_roundtrip_array(self):
        x = ReducedParams(np.array([0.1, -0.2]), np.array([1.0, 2.0, 3.0]))
        y = ReducedParams.from_array(x.as_array())
        nt.assert_array_equal(x.v, y.v)
        nt.assert_array_equal(x.p, y.p)


class TestDecompose:
    def test_identity(self):
        theta, R_xy = decompose_rz_rxy(np.eye(3))
        assert theta == 0.0
        nt.assert_array_equal(R_xy, np.eye(3))

    def test_pure_z_rotation(self):
        theta, R_xy = decompose_rz_rxy(rot_z(0.7))
        assert theta == pytest.approx(0.7)
        nt.assert_allclose(R_xy, np.eye(3), atol=1e-12)

    def test_random_round_trips(self):
        rng = np.random.default_rng(22)
        for _ in range(1000):
            R = _random_rotation(rng)
            theta, R_xy = decompose_rz_rxy(R)
            nt.assert_allclose(rot_z(theta) @ R_xy, R, atol=1e-12)
            q = rotation_to_quat(R_xy)
            assert abs(q[3]) < 1e-12


class TestNelderMead:
    def test_convex_bowl(self):
        a = np.array([1.0, -2.0, 0.5])
        x, fx, hist = nelder_mead(lambda x: float(np.sum((x - a) ** 2)), np.zeros(3))
        nt.assert_allclose(x, a, atol=1e-6)

    def test_rosenbrock(self):
        def rosen(x):
            return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)
        x, fx, hist = nelder_mead(rosen, np.array([-1.2, 1.0]),
                                  NelderMeadOptions(max_evals=2000, tol_x=1e-10, tol_f=1e-14))
        nt.assert_allclose(x, [1.0, 1.0], atol=1e-4)
        assert len(hist) <= 2000

    def test_history_non_increasing_on_plateau(self):
        def f(x):
            v = float(np.sum(x ** 2))
            return 1e9 if v > 1.0 else v
        _, _, hist = nelder_mead(f, np.array([2.0, 2.0]), NelderMeadOptions(max_evals=200))
        assert np.all(np.diff(hist) <= 0)


class TestObjective:
    def test_constant_toolpath_costs_zero(self, r3):
        tp = _toolpath([[0.5, 0.1, 0.2]] * 4)
        x = ReducedParams(np.zeros(2), np.array([1.5, 0.0, 0.3]))
        val = objective(r3, tp, x, ik_cfg=IKConfig(seeds_per_joint=10))
        assert val == 0.0

    def test_matches_plan_cost(self, r3):
        tp = _toolpath([[0.4, 0.0, 0.0], [0.45, 0.0, 0.02], [0.5, 0.0, 0.04]])
        x = ReducedParams(np.array([0.05, -0.1]), np.array([2.0, 0.2, 0.1]))
        ik = IKConfig(seeds_per_joint=10)
        val = objective(r3, tp, x, ik_cfg=ik)
        res = plan_path(r3, transform_toolpath(reduced_to_pose(x), tp), ik_cfg=ik)
        assert res.feasible
        assert val == res.path.weight

    def test_unreachable_hits_sentinel(self, r3):
        tp = _toolpath([[0.0, 0, 0], [0.1, 0, 0]])
        x = ReducedParams(np.zeros(2), np.array([50.0, 0.0, 0.0]))
        val = objective(r3, tp, x, ik_cfg=IKConfig(seeds_per_joint=6))
        assert val >= INFEASIBLE_SENTINEL

    def test_quaternion_scale_invariance(self, r3):
        tp = _toolpath([[0.4, 0, 0], [0.5, 0, 0.05]])
        rng = np.random.default_rng(23)
        wp = WorkpiecePose(rng.normal(size=4), np.array([1.8, 0.3, 0.2]))
        ik = IKConfig(seeds_per_joint=10)
        base = objective_from_pose(r3, tp, wp, ik_cfg=ik)
        for lam in (0.5, 2.0, 1.31):
            scaled = WorkpiecePose(lam * wp.quat, wp.p.copy())
            assert abs(objective_from_pose(r3, tp, scaled, ik_cfg=ik) - base) <= 1e-12

    def test_z_rotation_null_space(self, r3):
        # valid because the canonical arm has h1 = e_z and p_01 along z
        tp = _toolpath([[0.4, 0, 0], [0.45, 0.05, 0.03], [0.5, 0.1, 0.06]])
        rng = np.random.default_rng(24)
        ik = IKConfig(seeds_per_joint=12)
        wp = WorkpiecePose(rng.normal(size=4), np.array([1.8, 0.4, 0.1]))
        base = objective_from_pose(r3, tp, wp, ik_cfg=ik)
        assert base < INFEASIBLE_SENTINEL
        for alpha in (0.9, -2.2):
            Rz = rot_z(alpha)
            rotated = WorkpiecePose(rotation_to_quat(Rz @ wp.rotation), Rz @ wp.p)
            assert abs(objective_from_pose(r3, tp, rotated, ik_cfg=ik) - base) < 1e-9


class TestRandomStart:
    def test_constant_reachable_toolpath(self, r3):
        tp = _toolpath([[0.3, 0.0, 0.1]] * 3)
        rng = np.random.default_rng(25)
        x = random_feasible_start(r3, tp, rng, ik_cfg=IKConfig(seeds_per_joint=8))
        assert objective(r3, tp, x, ik_cfg=IKConfig(seeds_per_joint=8)) < INFEASIBLE_SENTINEL

    def test_oversized_toolpath_exhausts(self, r3):
        tp = _toolpath([[0.0, 0, 0], [20.0, 0, 0]], dlambda=10.0)
        rng = np.random.default_rng(26)
        with pytest.raises(StartExhaustionError) as info:
            random_feasible_start(r3, tp, rng, max_attempts=5,
                                  ik_cfg=IKConfig(seeds_per_joint=6))
        assert info.value.attempts == 5


class TestOptimize:
    def test_two_starts_on_helix(self, r3, helix_tp):
        ik = IKConfig(seeds_per_joint=8)
        results = optimize_workpiece_pose(
            r3, helix_tp, n_starts=2, seed=0,
            nm_opts=NelderMeadOptions(max_evals=30),
            planner_cfg=PlannerConfig(), ik_cfg=ik)
        assert len(results) == 2
        assert results[0].is_best and not results[1].is_best
        assert results[0].final_cost <= results[1].final_cost
        for r in results:
            hist = np.asarray(r.history)
            assert np.all(np.diff(hist) <= 0)
            assert r.final_cost <= r.initial_cost
            assert r.final_rms < r.initial_rms
        # two basins: distinct optimized placements
        assert np.linalg.norm(results[0].pose.p - results[1].pose.p) > 0.05

    def test_deterministic_for_fixed_seed(self, r3):
        tp = fileio.toolpath_from_doc(fileio.generate_helix(samples=60))
        ik = IKConfig(seeds_per_joint=8)
        kw = dict(n_starts=1, seed=3, nm_opts=NelderMeadOptions(max_evals=12),
                  planner_cfg=PlannerConfig(), ik_cfg=ik)
        a = optimize_workpiece_pose(r3, tp, **kw)[0]
        b = optimize_workpiece_pose(r3, tp, **kw)[0]
        assert a.final_cost == b.final_cost
        nt.assert_array_equal(a.x.as_array(), b.x.as_array())
        assert a.history == b.history
