import typing as T

import numpy as np

from modsynth.utils import transformFromList, transformToList


PRIMITIVE_KINDS = ('sphere', 'box', 'cylinder', 'capsule',)

PRIMITIVE_DIMS = {
    'sphere': 1,
    'box': 3,
    'cylinder': 2,
    'capsule': 2,
}

GJK_MAX_ITERATIONS = 64
GJK_TOLERANCE = 1e-6


class CollisionPrimitive:
    ''' a convex collision primitive

        dims are: sphere [r], box [hx, hy, hz], cylinder and capsule [r, hl]. Cylinders and
        capsules are aligned with the z axis of their pose.
    '''

    def __init__(self, kind: str, pose: np.ndarray, dims: T.Sequence[float]) -> None:
        '''
            @param kind: one of sphere, box, cylinder, capsule
            @param pose: 4x4 rigid transform of the primitive
            @param dims: kind specific dimensions, all > 0
        '''
        if kind not in PRIMITIVE_KINDS:
            raise ValueError(f'unknown primitive kind {kind}')

        dims = tuple(float(d) for d in dims)
        if len(dims) != PRIMITIVE_DIMS[kind]:
            raise ValueError(f'{kind} expects {PRIMITIVE_DIMS[kind]} dimensions, got {len(dims)}')
        if any(d <= 0.0 for d in dims):
            raise ValueError(f'{kind} dimensions must be > 0')

        self.kind = kind
        self.pose = np.asarray(pose, dtype=float)
        self.dims = dims

    @property
    def center(self) -> np.ndarray:
        return self.pose[:3, 3]

    @property
    def axis(self) -> np.ndarray:
        return self.pose[:3, 2]

    def transformed(self, t: np.ndarray) -> 'CollisionPrimitive':
        ''' returns this primitive moved by the rigid transform t '''
        return CollisionPrimitive(self.kind, t @ self.pose, self.dims)

    def segment(self) -> T.Tuple[np.ndarray, np.ndarray]:
        ''' core segment of a capsule or cylinder '''
        hl = self.dims[1]
        return (self.center - hl * self.axis, self.center + hl * self.axis)

    def boundingRadius(self) -> float:
        if self.kind == 'sphere':
            return self.dims[0]
        if self.kind == 'box':
            return float(np.linalg.norm(self.dims))
        if self.kind == 'cylinder':
            return float(np.hypot(self.dims[0], self.dims[1]))
        return self.dims[0] + self.dims[1]

    def support(self, d: np.ndarray) -> np.ndarray:
        ''' farthest point of the primitive in direction d '''
        rot = self.pose[:3, :3]
        dl = rot.T @ d
        if self.kind == 'sphere':
            return self.center + self.dims[0] * _unit(d)

        if self.kind == 'box':
            local = np.where(dl >= 0.0, 1.0, -1.0) * np.asarray(self.dims)
            return self.center + rot @ local

        r, hl = self.dims
        if self.kind == 'capsule':
            z = hl if dl[2] >= 0.0 else -hl
            return self.center + rot @ np.array([0.0, 0.0, z]) + r * _unit(d)

        # cylinder
        radial = np.array([dl[0], dl[1], 0.0])
        rn = np.linalg.norm(radial)
        local = np.array([0.0, 0.0, hl if dl[2] >= 0.0 else -hl])
        if rn > 1e-12:
            local += r * radial / rn
        return self.center + rot @ local

    def aabb(self) -> T.Tuple[np.ndarray, np.ndarray]:
        ''' world axis aligned bounding box as (lower corner, upper corner) '''
        axes = np.eye(3)
        lo = np.array([self.support(-a)[i] for i, a in enumerate(axes)])
        hi = np.array([self.support(a)[i] for i, a in enumerate(axes)])
        return (lo, hi)

    def contains(self, p: np.ndarray, inflate: float = 0.0) -> bool:
        ''' tells if the point p is inside the primitive grown by inflate '''
        local = invPoint(self.pose, p)
        if self.kind == 'sphere':
            return bool(np.linalg.norm(local) <= self.dims[0] + inflate)

        if self.kind == 'box':
            return bool(np.all(np.abs(local) <= np.asarray(self.dims) + inflate))

        r, hl = self.dims
        if self.kind == 'capsule':
            z = np.clip(local[2], -hl, hl)
            return bool(np.linalg.norm(local - np.array([0.0, 0.0, z])) <= r + inflate)

        return bool(abs(local[2]) <= hl + inflate and np.hypot(local[0], local[1]) <= r + inflate)

    def toJson(self) -> T.Dict[str, T.Any]:
        return {'kind': self.kind, 'pose': transformToList(self.pose), 'dims': list(self.dims)}

    @staticmethod
    def fromJson(data: T.Dict[str, T.Any]) -> 'CollisionPrimitive':
        return CollisionPrimitive(data['kind'], transformFromList(data['pose'], 'primitive pose'), data['dims'])

    def __repr__(self) -> str:
        return f'<{self.kind} at {np.round(self.center, 4).tolist()} dims={self.dims}>'


def _unit(d: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(d)
    if n < 1e-12:
        return np.zeros(3)
    return d / n


def invPoint(pose: np.ndarray, p: np.ndarray) -> np.ndarray:
    ''' expresses the world point p in the frame pose '''
    return pose[:3, :3].T @ (np.asarray(p, dtype=float) - pose[:3, 3])


def closestPointOnSegment(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-24:
        return a
    t = np.clip(float((p - a) @ ab) / denom, 0.0, 1.0)
    return a + t * ab


def segmentSegmentDistance(p1: np.ndarray, q1: np.ndarray, p2: np.ndarray, q2: np.ndarray) -> float:
    ''' distance between segments [p1, q1] and [p2, q2] '''
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-24

    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))

    if a <= eps:
        s = 0.0
        t = np.clip(f / e, 0.0, 1.0)
    else:
        c = float(d1 @ r)
        if e <= eps:
            t = 0.0
            s = np.clip(-c / a, 0.0, 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t = 1.0
                s = np.clip((b - c) / a, 0.0, 1.0)

    c1 = p1 + d1 * s
    c2 = p2 + d2 * t
    return float(np.linalg.norm(c1 - c2))


def _coreSegment(p: CollisionPrimitive) -> T.Tuple[np.ndarray, np.ndarray, float]:
    ''' sphere and capsule as a swept sphere '''
    if p.kind == 'sphere':
        return (p.center, p.center, p.dims[0])
    a, b = p.segment()
    return (a, b, p.dims[0])


def gjkIntersect(a: CollisionPrimitive, b: CollisionPrimitive, maxIter: int = GJK_MAX_ITERATIONS) -> bool:
    ''' boolean GJK on the Minkowski difference a - b '''

    def support(d):
        return a.support(d) - b.support(-d)

    searchDir = b.center - a.center
    if np.linalg.norm(searchDir) < 1e-12:
        searchDir = np.array([1.0, 0.0, 0.0])

    pc = support(searchDir)
    searchDir = -pc
    if np.linalg.norm(searchDir) < 1e-12:
        return True

    pb = support(searchDir)
    if pb @ searchDir < GJK_TOLERANCE * np.linalg.norm(searchDir):
        return False

    bc = pc - pb
    searchDir = np.cross(np.cross(bc, -pb), bc)
    if np.linalg.norm(searchDir) < 1e-12:
        # origin on the segment or segment aligned with it
        searchDir = np.cross(bc, np.array([1.0, 0.0, 0.0]))
        if np.linalg.norm(searchDir) < 1e-12:
            searchDir = np.cross(bc, np.array([0.0, 0.0, -1.0]))

    pd = None
    dim = 2
    for _ in range(maxIter):
        pa = support(searchDir)
        if pa @ searchDir < GJK_TOLERANCE * np.linalg.norm(searchDir):
            return False

        dim += 1
        if dim == 3:
            # triangle a, b, c
            ab = pb - pa
            ac = pc - pa
            ao = -pa
            n = np.cross(ab, ac)
            dim = 2
            if np.cross(ab, n) @ ao > 0.0:
                pc = pa
                searchDir = np.cross(np.cross(ab, ao), ab)
            elif np.cross(n, ac) @ ao > 0.0:
                pb = pa
                searchDir = np.cross(np.cross(ac, ao), ac)
            else:
                dim = 3
                if n @ ao > 0.0:
                    pd, pc, pb = pc, pb, pa
                    searchDir = n
                else:
                    pd, pb = pb, pa
                    searchDir = -n
        else:
            # tetrahedron with apex a over base b, c, d
            ao = -pa
            abc = np.cross(pb - pa, pc - pa)
            acd = np.cross(pc - pa, pd - pa)
            adb = np.cross(pd - pa, pb - pa)
            dim = 3
            if abc @ ao > 0.0:
                pd, pc, pb = pc, pb, pa
                searchDir = abc
            elif acd @ ao > 0.0:
                pb = pa
                searchDir = acd
            elif adb @ ao > 0.0:
                pc, pd, pb = pd, pb, pa
                searchDir = adb
            else:
                return True

        if np.linalg.norm(searchDir) < 1e-12:
            # origin lies on the current simplex
            return True

    # no separating direction found
    return True


def intersects(a: CollisionPrimitive, b: CollisionPrimitive) -> bool:
    ''' tells if the two primitives overlap, touching counts as free '''
    gap = np.linalg.norm(a.center - b.center) - a.boundingRadius() - b.boundingRadius()
    if gap > 0.0:
        return False

    loA, hiA = a.aabb()
    loB, hiB = b.aabb()
    if np.any(hiA <= loB) or np.any(hiB <= loA):
        return False

    kinds = {a.kind, b.kind}
    if kinds <= {'sphere', 'capsule'}:
        a1, a2, ra = _coreSegment(a)
        b1, b2, rb = _coreSegment(b)
        return segmentSegmentDistance(a1, a2, b1, b2) < ra + rb

    if kinds == {'sphere', 'box'}:
        sphere, box = (a, b) if a.kind == 'sphere' else (b, a)
        local = invPoint(box.pose, sphere.center)
        closest = np.clip(local, -np.asarray(box.dims), np.asarray(box.dims))
        return bool(np.linalg.norm(local - closest) < sphere.dims[0])

    return gjkIntersect(a, b)
