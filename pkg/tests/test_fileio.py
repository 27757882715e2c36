import json

import numpy as np
import numpy.testing as nt
import pytest

from cuspidal_kit import fileio
from cuspidal_kit.kinematics import Pose, RobotModel
from cuspidal_kit.scenarios import canonical_3r, three_parallel_6r


class TestRobotDocs:
    def test_round_trip(self, tmp_path):
        for robot in (canonical_3r(), three_parallel_6r()):
            doc = fileio.robot_to_doc(robot)
            path = tmp_path / "robot.json"
            fileio.save_json(doc, path)
            loaded = fileio.robot_from_doc(fileio.load_json(path))
            assert loaded.dof == robot.dof
            nt.assert_array_equal(loaded.axes, robot.axes)
            nt.assert_array_equal(loaded.offsets, robot.offsets)
            nt.assert_array_equal(loaded.tool_offset, robot.tool_offset)
            assert loaded.name == robot.name

    def test_limits_round_trip(self, tmp_path):
        robot = RobotModel(axes=np.eye(3), offsets=np.eye(3), tool_offset=[0.1, 0, 0],
                           joint_limits=[[-1, 1], [-2, 2], [-3, 3]], name="lim")
        doc = fileio.robot_to_doc(robot)
        loaded = fileio.robot_from_doc(doc)
        nt.assert_array_equal(loaded.joint_limits, robot.joint_limits)

    def test_normalizes_axes_with_warning(self):
        doc = {"name": "x", "dof": 1, "axes": [[0.0, 0.0, 1.0 + 5e-5]],
               "offsets": [[0, 0, 0]], "tool_offset": [1, 0, 0]}
        warnings = []
        robot = fileio.robot_from_doc(doc, warn=warnings.append)
        assert warnings
        nt.assert_allclose(np.linalg.norm(robot.axes[0]), 1.0)

    def test_missing_key_rejected(self):
        with pytest.raises(ValueError):
            fileio.robot_from_doc({"dof": 3})


class TestPathDocs:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        poses = []
        for _ in range(4):
            q = rng.normal(size=4)
            from cuspidal_kit.kinematics import quat_to_rotation
            poses.append(Pose(quat_to_rotation(q), rng.normal(size=3)))
        doc = fileio.path_to_doc(poses, 0.05, "base", False)
        path = tmp_path / "path.json"
        fileio.save_json(doc, path)
        again = fileio.load_json(path)
        assert again == json.loads(fileio.dump_json(doc))
        loaded, dl, frame, closed = fileio.poses_from_doc(again)
        assert (dl, frame, closed) == (0.05, "base", False)
        for a, b in zip(poses, loaded):
            nt.assert_allclose(a.position, b.position, atol=1e-16)
            nt.assert_allclose(a.rotation, b.rotation, atol=1e-12)

    def test_frame_mismatch(self):
        doc = fileio.path_to_doc([Pose.identity(), Pose.identity()], 0.1, "workpiece", False)
        with pytest.raises(ValueError):
            fileio.task_path_from_doc(doc)
        with pytest.raises(ValueError):
            doc_base = dict(doc, frame="base")
            fileio.toolpath_from_doc(doc_base)

    def test_orientation_optional(self):
        doc = {"frame": "base", "closed": False, "dlambda": 0.1,
               "samples": [{"p": [1, 0, 0]}, {"p": [1.1, 0, 0]}]}
        task = fileio.task_path_from_doc(doc)
        nt.assert_array_equal(task.poses[0].rotation, np.eye(3))


class TestHelix:
    def test_default_fixture(self):
        doc = fileio.generate_helix()
        assert len(doc["samples"]) == 500
        assert doc["frame"] == "workpiece"
        tp = fileio.toolpath_from_doc(doc)
        # equally spaced in arc length
        P = np.stack([p.position for p in tp.poses])
        steps = np.linalg.norm(np.diff(P, axis=0), axis=1)
        nt.assert_allclose(steps, steps[0], rtol=1e-6)

    def test_flat_circle_closes(self):
        doc = fileio.generate_helix(radius=0.4, pitch=0.0, turns=1.0, samples=100)
        assert doc["closed"] is True
        p0 = np.asarray(doc["samples"][0]["p"])
        pK = np.asarray(doc["samples"][-1]["p"])
        nt.assert_array_equal(p0, pK)

    def test_zero_radius_is_vertical_segment(self):
        doc = fileio.generate_helix(radius=0.0, pitch=0.5, turns=1.0, samples=10)
        P = np.stack([np.asarray(s["p"]) for s in doc["samples"]])
        nt.assert_allclose(P[:, :2], 0.0, atol=1e-15)
        assert P[-1, 2] > P[0, 2]

    def test_tangent_mode_needs_radius(self):
        with pytest.raises(ValueError):
            fileio.generate_helix(radius=0.0, orientation_mode="tangent-following")

    def test_tangent_mode_orientations_are_rotations(self):
        doc = fileio.generate_helix(samples=12, orientation_mode="tangent-following")
        tp = fileio.toolpath_from_doc(doc)
        from cuspidal_kit.kinematics import is_rotation
        assert all(is_rotation(p.rotation, tol=1e-9) for p in tp.poses)

    def test_sample_validation(self):
        with pytest.raises(ValueError):
            fileio.generate_helix(samples=1)


class TestCsv:
    def test_seventeen_digit_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        values = rng.normal(size=20).tolist()
        path = tmp_path / "x.csv"
        fileio.write_csv(path, ["a"], [[v] for v in values])
        lines = path.read_text().strip().split("\n")[1:]
        for txt, v in zip(lines, values):
            assert float(txt) == v

    def test_json_dump_deterministic(self):
        doc = {"b": np.float64(1.0 / 3.0), "a": np.arange(3), "c": {"y": True, "x": None}}
        assert fileio.dump_json(doc) == fileio.dump_json(doc)
        assert '"a"' in fileio.dump_json(doc)
