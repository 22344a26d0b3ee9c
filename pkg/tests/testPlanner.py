import os
import tempfile
import unittest

import numpy as np
from scipy.spatial.transform import Rotation

from modsynth.dynamics import DynState, inverseDynamics
from modsynth.errors import EmptyPath, InvalidEndpoint
from modsynth.geometry import Scene, inCollision
from modsynth.kinematics import IkOptions, Pose, fk, withinTolerance
from modsynth.modlib import assemble, libraryFromJson, loadLibrary
from modsynth.planner import JointMetric, Path, PlanOptions, loadTrajectory, planPath, saveTrajectory, solveTask, \
    timeParameterize, verifyTrajectory
from modsynth.primitives import CollisionPrimitive
from modsynth.tasks import POCKET_DIR, Goal, Task, tolerancePreset
from modsynth.utils import translation


IDENTITY = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
FLIPPED = [[1, 0, 0, 0], [0, -1, 0, 0], [0, 0, -1, 0], [0, 0, 0, 1]]


def singleJoint(vMax: float, aMax: float):
    ''' a massless revolute joint with symmetric velocity and acceleration limits '''
    library = libraryFromJson({
        'connector_types': ['A', 'tcp'],
        'modules': [
            {'id': 1, 'name': 'base', 'kind': 'base', 'bodies': [{}],
             'proximal': {'type': 'A', 'frame': IDENTITY}, 'distal': {'type': 'A', 'frame': IDENTITY}},
            {'id': 2, 'name': 'joint', 'kind': 'regular', 'bodies': [{}, {}],
             'joints': [{'kind': 'revolute', 'axis': [0, 0, 1], 'parent_frame': IDENTITY, 'child_frame': IDENTITY,
                         'q_limits': [-3, 3], 'qd_limits': [-vMax, vMax], 'qdd_limits': [-aMax, aMax],
                         'tau_max': 10}],
             'proximal': {'type': 'A', 'frame': FLIPPED}, 'distal': {'type': 'A', 'frame': IDENTITY}},
            {'id': 3, 'name': 'tool', 'kind': 'end_effector', 'bodies': [{}],
             'proximal': {'type': 'A', 'frame': FLIPPED}, 'distal': {'type': 'tcp', 'frame': IDENTITY}},
        ],
    })
    return assemble(library, [1, 2, 3])


def lift(z):
    return [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, z], [0, 0, 0, 1]]


def pitchSlide(pinRadius: float = 0.001):
    ''' a pitch joint over a full turn, then a 5cm telescopic joint carrying a small pin at the TCP '''
    joint = {'parent_frame': lift(0.05), 'child_frame': IDENTITY, 'qd_limits': [-1, 1], 'qdd_limits': [-2, 2],
             'tau_max': 50}
    library = libraryFromJson({
        'connector_types': ['A', 'tcp'],
        'modules': [
            {'id': 1, 'name': 'base', 'kind': 'base', 'bodies': [{}],
             'proximal': {'type': 'A', 'frame': IDENTITY}, 'distal': {'type': 'A', 'frame': lift(0.1)}},
            {'id': 2, 'name': 'pitch', 'kind': 'regular', 'bodies': [{}, {}],
             'joints': [dict(joint, kind='revolute', axis=[0, 1, 0], q_limits=[-np.pi, np.pi])],
             'proximal': {'type': 'A', 'frame': FLIPPED}, 'distal': {'type': 'A', 'frame': lift(0.05)}},
            {'id': 3, 'name': 'slide', 'kind': 'regular', 'bodies': [{}, {}],
             'joints': [dict(joint, kind='prismatic', axis=[0, 0, 1], q_limits=[0, 0.05])],
             'proximal': {'type': 'A', 'frame': FLIPPED}, 'distal': {'type': 'A', 'frame': lift(0.1)}},
            {'id': 4, 'name': 'pin', 'kind': 'end_effector',
             'bodies': [{'geometry': [{'kind': 'sphere', 'pose': lift(0.05), 'dims': [pinRadius]}]}],
             'proximal': {'type': 'A', 'frame': FLIPPED}, 'distal': {'type': 'tcp', 'frame': lift(0.05)}},
        ],
    })
    return assemble(library, [1, 2, 3, 4])


def checkSolution(test: unittest.TestCase, assembly, traj, task, dt: float = 0.005):
    ''' recomputes every constraint of a solved task from the trajectory samples '''
    slack = 1e-9
    test.assertEqual(len(traj.goalTimes), len(task.goals))
    test.assertTrue(np.all(np.diff(traj.goalTimes) > 0.0))
    test.assertAlmostEqual(traj.goalTimes[-1], traj.tMax)

    for t in np.append(np.arange(0.0, traj.tMax, dt), traj.tMax):
        q, qd, qdd = traj.sample(t)
        test.assertTrue(np.all(q >= assembly.qLower - slack) and np.all(q <= assembly.qUpper + slack))
        test.assertTrue(np.all(qd >= assembly.qdLower - slack) and np.all(qd <= assembly.qdUpper + slack))
        test.assertTrue(np.all(qdd >= assembly.qddLower - slack) and np.all(qdd <= assembly.qddUpper + slack))
        tau = inverseDynamics(assembly, DynState(q, qd, qdd), task.basePose)
        test.assertTrue(np.all(np.abs(tau) <= assembly.tauMax))
        test.assertFalse(inCollision(assembly, q, task.scene, True, task.basePose), t)

    for goal, t in zip(task.goals, traj.goalTimes):
        q, _, _ = traj.sample(t)
        test.assertTrue(withinTolerance(fk(assembly, q, task.basePose), goal.pose, task.tolFor(goal)), goal.id)


def unitMove():
    return Path([np.array([0.0]), np.array([1.0])])


class Test(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        library = loadLibrary(os.path.join(POCKET_DIR, 'fixture.json'))
        cls.small = assemble(library, [1, 3, 4, 5, 8])
        cls.arm = assemble(library, [1, 3, 4, 5, 4, 5, 3, 4, 3, 8])

    def testTriangularProfile(self):
        traj = timeParameterize(singleJoint(1.0, 1.0), unitMove())
        self.assertAlmostEqual(traj.tMax, 2.0)
        self.assertAlmostEqual(traj.q[-1][0], 1.0)
        self.assertAlmostEqual(traj.qd[-1][0], 0.0)

        q, qd, qdd = traj.sample(0.505)
        self.assertAlmostEqual(q[0], 0.1275125, places=9)
        self.assertAlmostEqual(qd[0], 0.505, places=9)
        self.assertAlmostEqual(qdd[0], 1.0)

        q, qd, qdd = traj.sample(1.505)
        self.assertAlmostEqual(q[0], 0.8774875, places=9)
        self.assertAlmostEqual(qd[0], 0.495, places=9)
        self.assertAlmostEqual(qdd[0], -1.0)

    def testLimitScaling(self):
        # twice the velocity and four times the acceleration halves the duration
        fast = timeParameterize(singleJoint(2.0, 4.0), unitMove())
        self.assertAlmostEqual(fast.tMax, 1.0)

        # the velocity limit is hit: 0.5s to accelerate, 1.5s cruising, 0.5s to stop
        cruise = timeParameterize(singleJoint(0.5, 1.0), unitMove())
        self.assertAlmostEqual(cruise.tMax, 2.5)
        self.assertAlmostEqual(float(np.max(cruise.qd)), 0.5)

    def testLimitsOnRandomPaths(self):
        rng = np.random.default_rng(7)
        arm = self.arm
        slack = 1e-9
        for _ in range(3):
            waypoints = [rng.uniform(arm.qLower, arm.qUpper) for _ in range(4)]
            traj = timeParameterize(arm, Path(waypoints), 0.05)

            self.assertTrue(np.all(np.diff(traj.t) > 0.0))
            self.assertTrue(np.all(traj.qd <= arm.qdUpper + slack))
            self.assertTrue(np.all(traj.qd >= arm.qdLower - slack))
            self.assertTrue(np.all(traj.qdd <= arm.qddUpper + slack))
            self.assertTrue(np.all(traj.qdd >= arm.qddLower - slack))
            np.testing.assert_allclose(traj.qd[0], 0.0, atol=1e-12)
            np.testing.assert_allclose(traj.qd[-1], 0.0, atol=1e-12)

            # waypoints are visited at rest
            for w, t in zip(waypoints, traj.waypointTimes):
                i = int(np.argmin(np.abs(traj.t - t)))
                self.assertAlmostEqual(traj.t[i], t, delta=1e-9)
                np.testing.assert_allclose(traj.q[i], w, atol=1e-9)
                np.testing.assert_allclose(traj.qd[i], 0.0, atol=1e-9)

    def testDegeneratePaths(self):
        with self.assertRaises(EmptyPath):
            timeParameterize(self.small, Path([]))

        traj = timeParameterize(self.small, Path([np.array([0.2, 0.3])]))
        self.assertEqual(len(traj), 1)
        self.assertEqual(traj.tMax, 0.0)

    def testPlanPathEndpoints(self):
        blocked = Scene([CollisionPrimitive('sphere', translation(0.0, 0.0, 0.5), [0.05])])
        with self.assertRaises(InvalidEndpoint):
            planPath(self.small, [0.0, 0.0], [1.0, 1.0], blocked)
        with self.assertRaises(InvalidEndpoint):
            planPath(self.small, [1.0, 1.0], [0.0, 5.0], Scene())

        same = planPath(self.small, [0.3, 0.3], [0.3, 0.3], Scene())
        self.assertEqual(len(same), 1)

        direct = planPath(self.small, [0.0, 0.0], [1.0, 1.0], Scene())
        self.assertEqual(len(direct), 2)

    def testJointMetric(self):
        arm = pitchSlide()
        metric = JointMetric(arm)
        # a full turn of the pitch joint and the full 5cm stroke of the slide are the same distance
        self.assertAlmostEqual(metric.distance(np.array([-np.pi, 0.0]), np.array([np.pi, 0.0])), 2.0 * np.pi)
        self.assertAlmostEqual(metric.distance(np.array([0.0, 0.0]), np.array([0.0, 0.05])), 2.0 * np.pi)
        self.assertAlmostEqual(metric.distance(np.array([0.0, 0.0]), np.array([0.1, 0.0])), 0.1)

        q, reached = metric.steer(np.array([0.0, 0.0]), np.array([0.0, 0.05]), 0.1)
        self.assertFalse(reached)
        np.testing.assert_allclose(q, [0.0, 0.05 * 0.1 / (2.0 * np.pi)], atol=1e-15)

        target = np.array([0.05, 0.0001])
        q, reached = metric.steer(np.array([0.0, 0.0]), target, 0.1)
        self.assertTrue(reached)
        np.testing.assert_array_equal(q, target)

    def testPlanMixedJoints(self):
        arm = pitchSlide()
        # pin centers at z=0.40 and z=0.45, the obstacle sits between two centimeter steps of the stroke
        scene = Scene([CollisionPrimitive('sphere', translation(0.0, 0.0, 0.415), [0.001])])
        start = np.array([0.0, 0.0])
        goal = np.array([0.0, 0.05])
        self.assertFalse(inCollision(arm, start, scene))
        self.assertFalse(inCollision(arm, goal, scene))
        self.assertTrue(inCollision(arm, np.array([0.0, 0.015]), scene))

        path = planPath(arm, start, goal, scene, 60.0, 3, PlanOptions(maxIterations=2000))
        self.assertIsNotNone(path)
        # the straight stroke is blocked, the pin has to tilt around the obstacle
        self.assertGreater(len(path), 2)
        self.assertTrue(any(abs(w[0]) > 0.0 for w in path.waypoints))

        metric = JointMetric(arm)
        for a, b in zip(path.waypoints[:-1], path.waypoints[1:]):
            n = int(np.ceil(metric.distance(a, b) / 0.01))
            for i in range(n + 1):
                self.assertFalse(inCollision(arm, a + (b - a) * (i / max(n, 1)), scene))

    def testPlanAroundObstacle(self):
        # the sphere sits on the link axis at yaw 0, pitch 1
        scene = Scene([CollisionPrimitive('sphere', translation(0.252, 0.0, 0.412), [0.05])])
        start = np.array([-1.0, 1.0])
        goal = np.array([1.0, 1.0])
        opts = PlanOptions(maxIterations=2000)

        path = planPath(self.small, start, goal, scene, 60.0, 3, opts)
        self.assertIsNotNone(path)
        self.assertGreater(len(path), 2)
        np.testing.assert_allclose(path.waypoints[0], start)
        np.testing.assert_allclose(path.waypoints[-1], goal)

        metric = JointMetric(self.small)
        for a, b in zip(path.waypoints[:-1], path.waypoints[1:]):
            n = int(np.ceil(metric.distance(a, b) / 0.01))
            for i in range(n + 1):
                q = a + (b - a) * (i / max(n, 1))
                self.assertFalse(inCollision(self.small, q, scene))

        again = planPath(self.small, start, goal, scene, 60.0, 3, opts)
        self.assertEqual(len(again), len(path))
        for a, b in zip(path.waypoints, again.waypoints):
            np.testing.assert_array_equal(a, b)

    def testSolveTask(self):
        tol = tolerancePreset('arbitrary')
        task = Task([Goal('g', fk(self.small, [0.5, 0.8]))], tol, Scene())
        traj = solveTask(self.small, task, PlanOptions(), seed=1)
        self.assertIsNotNone(traj)
        self.assertTrue(verifyTrajectory(self.small, traj, task))
        self.assertEqual(len(traj.goalTimes), 1)
        self.assertAlmostEqual(traj.goalTimes[-1], traj.tMax)
        np.testing.assert_allclose(traj.q[0], 0.0)

        unreachable = Task([Goal('far', Pose([3.0, 0.0, 0.0], Rotation.identity()))], tol, Scene())
        opts = PlanOptions(ikOptions=IkOptions(maxRestarts=2, maxIterations=30))
        self.assertIsNone(solveTask(self.small, unreachable, opts, seed=1))

    def testSolveTaskAroundObstacle(self):
        scene = Scene([CollisionPrimitive('sphere', translation(0.252, 0.0, 0.412), [0.05])])
        goals = [Goal(f'g{k}', fk(self.small, q)) for k, q in enumerate(([-1.0, 1.0], [1.0, 1.0], [0.0, 0.3]))]
        task = Task(goals, tolerancePreset('arbitrary'), scene)

        traj = solveTask(self.small, task, PlanOptions(timeout=60.0, maxIterations=2000), seed=2)
        self.assertIsNotNone(traj)
        checkSolution(self, self.small, traj, task)
        np.testing.assert_allclose(traj.q[0], 0.0)

    def testGoalInsideObstacle(self):
        goal = fk(self.small, [1.0, 1.0])
        scene = Scene([CollisionPrimitive('sphere', translation(*goal.p), [0.05])])
        task = Task([Goal('buried', goal)], tolerancePreset('arbitrary'), scene)
        opts = PlanOptions(ikOptions=IkOptions(maxRestarts=2, maxIterations=30))
        self.assertIsNone(solveTask(self.small, task, opts, seed=1))

    def testTrajectoryJson(self):
        traj = timeParameterize(singleJoint(1.0, 1.0), unitMove(), 0.1)
        traj.goalTimes = [traj.tMax]
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, 'trajectory.json')
            saveTrajectory(traj, path)
            reloaded = loadTrajectory(path)

        np.testing.assert_array_equal(reloaded.t, traj.t)
        np.testing.assert_array_equal(reloaded.q, traj.q)
        self.assertEqual(reloaded.goalTimes, [2.0])

        data = PlanOptions(timeout=1.5).toJson()
        self.assertEqual(data['timeout'], 1.5)
        self.assertEqual(data['max_iterations'], 5000)
        self.assertEqual(data['edge_resolution'], 0.01)


if __name__ == "__main__":
    unittest.main()
