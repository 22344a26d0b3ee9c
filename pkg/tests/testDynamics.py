import os
import unittest

import numpy as np

from modsynth.dynamics import DynState, gravityTorques, inverseDynamics, kineticEnergy, potentialEnergy, \
    torqueFeasible
from modsynth.errors import DimensionMismatch
from modsynth.modlib import assemble, libraryFromJson, loadLibrary
from modsynth.planner import Trajectory
from modsynth.tasks import POCKET_DIR


IDENTITY = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
FLIPPED = [[1, 0, 0, 0], [0, -1, 0, 0], [0, 0, -1, 0], [0, 0, 0, 1]]

MASS = 2.0
LENGTH = 0.5
G = 9.81


def pendulumLibrary(mass: float = MASS, tauMax: float = 50.0):
    ''' a point mass at LENGTH above a revolute joint around y '''
    return libraryFromJson({
        'connector_types': ['A', 'tcp'],
        'modules': [
            {'id': 1, 'name': 'base', 'kind': 'base', 'bodies': [{}],
             'proximal': {'type': 'A', 'frame': IDENTITY}, 'distal': {'type': 'A', 'frame': IDENTITY}},
            {'id': 2, 'name': 'pendulum', 'kind': 'regular',
             'bodies': [{}, {'mass': mass, 'com': [0, 0, LENGTH]}],
             'joints': [{'kind': 'revolute', 'axis': [0, 1, 0], 'parent_frame': IDENTITY, 'child_frame': IDENTITY,
                         'q_limits': [-3, 3], 'qd_limits': [-1, 1], 'qdd_limits': [-1, 1], 'tau_max': tauMax}],
             'proximal': {'type': 'A', 'frame': FLIPPED}, 'distal': {'type': 'A', 'frame': IDENTITY}},
            {'id': 3, 'name': 'tool', 'kind': 'end_effector', 'bodies': [{}],
             'proximal': {'type': 'A', 'frame': FLIPPED}, 'distal': {'type': 'tcp', 'frame': IDENTITY}},
        ],
    })


class Test(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.pendulum = assemble(pendulumLibrary(), [1, 2, 3])
        library = loadLibrary(os.path.join(POCKET_DIR, 'fixture.json'))
        cls.arm = assemble(library, [1, 3, 4, 5, 4, 5, 3, 4, 3, 8])

    def testPendulumStatic(self):
        for q in (0.0, 0.3, -1.2, 2.5):
            tau = gravityTorques(self.pendulum, [q])
            self.assertAlmostEqual(tau[0], -MASS * G * LENGTH * np.sin(q), delta=1e-9)

    def testMassLinearity(self):
        heavy = assemble(pendulumLibrary(2.0 * MASS), [1, 2, 3])
        for q in (0.4, -2.0):
            self.assertAlmostEqual(gravityTorques(heavy, [q])[0], 2.0 * gravityTorques(self.pendulum, [q])[0],
                                   delta=1e-9)

    def testPendulumDynamic(self):
        q, qd, qdd = 0.3, 0.7, 1.1
        tau = inverseDynamics(self.pendulum, DynState([q], [qd], [qdd]))
        expected = MASS * LENGTH * LENGTH * qdd - MASS * G * LENGTH * np.sin(q)
        self.assertAlmostEqual(tau[0], expected, delta=1e-9)

        # without gravity only the inertial part is left
        tau = inverseDynamics(self.pendulum, DynState([q], [qd], [qdd], (0.0, 0.0, 0.0)))
        self.assertAlmostEqual(tau[0], MASS * LENGTH * LENGTH * qdd, delta=1e-9)

    def testEnergyBalance(self):
        # the power of the joint torques is the time derivative of the total energy
        rng = np.random.default_rng(2)
        h = 1e-5
        for _ in range(3):
            q0 = rng.uniform(self.arm.qLower, self.arm.qUpper) * 0.8
            v = rng.uniform(-1.0, 1.0, size=self.arm.nJ)
            a = rng.uniform(-1.0, 1.0, size=self.arm.nJ)

            def energy(t):
                q = q0 + v * t + 0.5 * a * t * t
                qd = v + a * t
                return kineticEnergy(self.arm, q, qd) + potentialEnergy(self.arm, q)

            dE = (energy(h) - energy(-h)) / (2.0 * h)
            tau = inverseDynamics(self.arm, DynState(q0, v, a))
            power = float(tau @ v)
            self.assertAlmostEqual(dE, power, delta=1e-6 * max(1.0, abs(power)))

    def testDimensionMismatch(self):
        with self.assertRaises(DimensionMismatch):
            inverseDynamics(self.pendulum, DynState([0.0], [0.0, 0.0], [0.0]))
        with self.assertRaises(DimensionMismatch):
            gravityTorques(self.arm, [0.0, 0.0])

    def testTorqueFeasible(self):
        n = self.arm.nJ
        still = Trajectory([0.0, 1.0], np.zeros((2, n)), np.zeros((2, n)), np.zeros((2, n)))
        self.assertTrue(torqueFeasible(self.arm, still))

        violent = Trajectory([0.0, 1.0], np.zeros((2, n)), np.zeros((2, n)), np.full((2, n), 1e4))
        self.assertFalse(torqueFeasible(self.arm, violent))

        with self.assertRaises(ValueError):
            torqueFeasible(self.arm, still, dtCheck=0.0)

    def testTorqueLimitBoundary(self):
        q = 1.0
        still = Trajectory([0.0, 1.0], [[q], [q]], np.zeros((2, 1)), np.zeros((2, 1)))
        limit = abs(gravityTorques(self.pendulum, [q])[0])

        # holding exactly the rated torque is allowed
        atLimit = assemble(pendulumLibrary(tauMax=limit), [1, 2, 3])
        self.assertTrue(torqueFeasible(atLimit, still))

        below = assemble(pendulumLibrary(tauMax=np.nextafter(limit, 0.0)), [1, 2, 3])
        self.assertFalse(torqueFeasible(below, still))


if __name__ == "__main__":
    unittest.main()
