import os
import unittest

import numpy as np
from scipy.spatial.transform import Rotation

from modsynth.geometry import Scene, inCollision, occupiedSpace, robotSceneCollision, selfCollisionPairs
from modsynth.modlib import assemble, loadLibrary
from modsynth.primitives import CollisionPrimitive, intersects
from modsynth.tasks import POCKET_DIR
from modsynth.utils import homogeneous, rotationAbout, rotX, rotZ, translation

KINDS = ('sphere', 'box', 'capsule', 'cylinder')


def sphere(x, y, z, r):
    return CollisionPrimitive('sphere', translation(x, y, z), [r])


def randomPrimitive(rng, kind, spread=0.3):
    pose = homogeneous(Rotation.random(random_state=rng).as_matrix(), rng.uniform(-spread, spread, 3))
    if kind == 'sphere':
        dims = [rng.uniform(0.05, 0.25)]
    elif kind == 'box':
        dims = rng.uniform(0.05, 0.25, 3)
    else:
        dims = [rng.uniform(0.03, 0.15), rng.uniform(0.05, 0.25)]
    return CollisionPrimitive(kind, pose, dims)


class Test(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        library = loadLibrary(os.path.join(POCKET_DIR, 'fixture.json'))
        cls.small = assemble(library, [1, 3, 4, 5, 8])

    def testPrimitiveValidation(self):
        with self.assertRaises(ValueError):
            CollisionPrimitive('cone', np.eye(4), [1.0])
        with self.assertRaises(ValueError):
            CollisionPrimitive('box', np.eye(4), [1.0, 1.0])
        with self.assertRaises(ValueError):
            CollisionPrimitive('sphere', np.eye(4), [0.0])

    def testSpheres(self):
        self.assertTrue(intersects(sphere(0, 0, 0, 1), sphere(1.5, 0, 0, 1)))
        self.assertFalse(intersects(sphere(0, 0, 0, 1), sphere(2.5, 0, 0, 1)))
        # touching is free
        self.assertFalse(intersects(sphere(0, 0, 0, 1), sphere(2, 0, 0, 1)))

    def testCapsuleSphere(self):
        capsule = CollisionPrimitive('capsule', np.eye(4), [0.1, 0.5])
        self.assertFalse(intersects(capsule, sphere(0.25, 0, 0.55, 0.1)))
        self.assertTrue(intersects(capsule, sphere(0.15, 0, 0.3, 0.1)))

    def testBoxSphere(self):
        box = CollisionPrimitive('box', rotZ(np.pi / 4.0), [0.5, 0.5, 0.5])
        self.assertTrue(intersects(box, sphere(0.75, 0, 0, 0.1)))
        self.assertFalse(intersects(box, sphere(0.6, 0.6, 0, 0.1)))

    def testBoxBox(self):
        a = CollisionPrimitive('box', np.eye(4), [0.5, 0.5, 0.5])
        corner = CollisionPrimitive('box', translation(1.2, 0.0, 0.0) @ rotZ(np.pi / 4.0), [0.5, 0.5, 0.5])
        self.assertTrue(intersects(a, corner))
        self.assertTrue(intersects(corner, a))

        # bounding boxes overlap but the shapes are separated along the diagonal
        diagonal = CollisionPrimitive('box', translation(0.9, 0.9, 0.0) @ rotZ(np.pi / 4.0), [0.5, 0.5, 0.5])
        self.assertFalse(intersects(a, diagonal))
        self.assertFalse(intersects(diagonal, a))

    def testCylinder(self):
        box = CollisionPrimitive('box', np.eye(4), [0.5, 0.5, 0.5])
        cylinder = CollisionPrimitive('cylinder', translation(0.6, 0.0, 0.0), [0.2, 0.5])
        self.assertTrue(intersects(box, cylinder))

        lying = CollisionPrimitive('cylinder', translation(0.0, 0.0, 0.65) @ rotX(np.pi / 2.0), [0.1, 1.0])
        self.assertFalse(intersects(box, lying))
        lower = CollisionPrimitive('cylinder', translation(0.0, 0.0, 0.55) @ rotX(np.pi / 2.0), [0.1, 1.0])
        self.assertTrue(intersects(box, lower))

    def testIntersectsSymmetric(self):
        rng = np.random.default_rng(11)
        for kindA in KINDS:
            for kindB in KINDS:
                for _ in range(10):
                    a, b = randomPrimitive(rng, kindA), randomPrimitive(rng, kindB)
                    self.assertEqual(intersects(a, b), intersects(b, a), (a, b))

    def testIntersectsAgainstPointSampling(self):
        rng = np.random.default_rng(5)
        overlapping = separated = 0
        for _ in range(80):
            a = randomPrimitive(rng, KINDS[rng.integers(len(KINDS))])
            b = randomPrimitive(rng, KINDS[rng.integers(len(KINDS))])
            lo, hi = a.aabb()
            points = rng.uniform(lo, hi, (400, 3))
            hit = intersects(a, b)
            if hit:
                overlapping += 1
            else:
                separated += 1
                # no point may lie inside both shapes
                self.assertFalse(any(a.contains(p) and b.contains(p) for p in points), (a, b))

            # a point well inside both shapes proves the overlap
            if any(a.contains(p, -1e-3) and b.contains(p, -1e-3) for p in points):
                self.assertTrue(hit, (a, b))

        self.assertGreater(overlapping, 0)
        self.assertGreater(separated, 0)

    def testAabb(self):
        lying = CollisionPrimitive('cylinder', homogeneous(rotationAbout((1.0, 0.0, 0.0), np.pi / 2.0)), [0.1, 1.0])
        lo, hi = lying.aabb()
        np.testing.assert_allclose(lo, [-0.1, -1.0, -0.1], atol=1e-12)
        np.testing.assert_allclose(hi, [0.1, 1.0, 0.1], atol=1e-12)

        lo, hi = sphere(1, 2, 3, 0.5).aabb()
        np.testing.assert_allclose(lo, [0.5, 1.5, 2.5])
        np.testing.assert_allclose(hi, [1.5, 2.5, 3.5])

    def testContains(self):
        box = CollisionPrimitive('box', translation(1.0, 0.0, 0.0), [0.1, 0.2, 0.3])
        self.assertTrue(box.contains(np.array([1.05, 0.15, -0.25])))
        self.assertFalse(box.contains(np.array([1.15, 0.0, 0.0])))
        self.assertTrue(box.contains(np.array([1.15, 0.0, 0.0]), inflate=0.06))

    def testOccupiedSpace(self):
        placed = occupiedSpace(self.small, [0.0, 0.0])
        self.assertEqual(len(placed), 7)

        # link_300 cylinder between z=0.36 and z=0.64
        link = [p for p in placed if p.primitive.dims == (0.04, 0.14)][0]
        np.testing.assert_allclose(link.pose[:3, 3], [0.0, 0.0, 0.5], atol=1e-12)

        bent = occupiedSpace(self.small, [0.0, np.pi / 2.0])
        link = [p for p in bent if p.primitive.dims == (0.04, 0.14)][0]
        np.testing.assert_allclose(link.pose[:3, 3], [0.25, 0.0, 0.25], atol=1e-12)

    def testSelfCollisionPairs(self):
        pairs = selfCollisionPairs(self.small)
        for i, j in pairs:
            self.assertGreater(j, i + 1)
            self.assertNotEqual(self.small.bodies[i].link, self.small.bodies[j].link)
        self.assertIn((0, 6), pairs)

    def testSceneCollision(self):
        q = np.zeros(self.small.nJ)
        self.assertFalse(inCollision(self.small, q, Scene()))
        self.assertTrue(inCollision(self.small, q, Scene([sphere(0, 0, 0.5, 0.05)])))
        self.assertFalse(inCollision(self.small, q, Scene([sphere(2, 2, 2, 0.5)])))

        # moving the base moves the robot away from the obstacle
        self.assertFalse(inCollision(self.small, q, Scene([sphere(0, 0, 0.5, 0.05)]), True, translation(1, 0, 0)))

        placed = occupiedSpace(self.small, [0.0, np.pi / 2.0])
        self.assertTrue(robotSceneCollision(placed, Scene([sphere(0.25, 0, 0.25, 0.02)])))


if __name__ == "__main__":
    unittest.main()
