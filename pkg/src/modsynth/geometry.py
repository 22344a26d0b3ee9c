import typing as T

import numpy as np

from modsynth.kinematics import bodyFrames
from modsynth.modlib import Assembly
from modsynth.primitives import CollisionPrimitive, intersects


class Scene:
    ''' the obstacles of a task, primitives in the world frame '''

    def __init__(self, obstacles: T.List[CollisionPrimitive] = None) -> None:
        self.obstacles = obstacles or []

    def __len__(self) -> int:
        return len(self.obstacles)


class PlacedPrimitive:
    ''' a robot primitive at its world pose, with the chain body it belongs to '''

    def __init__(self, primitive: CollisionPrimitive, bodyIndex: int, link: int) -> None:
        self.primitive = primitive
        self.bodyIndex = bodyIndex
        self.link = link

    @property
    def pose(self) -> np.ndarray:
        return self.primitive.pose


def occupiedSpace(assembly: Assembly, q, base: np.ndarray = None) -> T.List[PlacedPrimitive]:
    ''' the robot geometry A(R, q): every body primitive moved to the world frame '''
    ret = []
    frames = bodyFrames(assembly, q, base)
    for i, (cb, frame) in enumerate(zip(assembly.bodies, frames)):
        for g in cb.body.geometry:
            ret.append(PlacedPrimitive(g.transformed(frame), i, cb.link))
    return ret


def selfCollisionPairs(assembly: Assembly) -> T.List[T.Tuple[int, int]]:
    ''' pairs of chain bodies that are checked for self collisions

        Bodies next to each other along the chain (ignoring bodies without geometry) touch at
        their joint or connector, bodies of a same link never move relatively to each other:
        both kinds of pairs are skipped.
    '''
    solid = [i for i, cb in enumerate(assembly.bodies) if cb.body.geometry]
    ret = []
    for a in range(len(solid)):
        for b in range(a + 2, len(solid)):
            i, j = solid[a], solid[b]
            if assembly.bodies[i].link == assembly.bodies[j].link:
                continue
            ret.append((i, j))
    return ret


def robotSceneCollision(placed: T.List[PlacedPrimitive], scene: Scene) -> bool:
    for p in placed:
        for o in scene.obstacles:
            if intersects(p.primitive, o):
                return True
    return False


def robotSelfCollision(assembly: Assembly, placed: T.List[PlacedPrimitive]) -> bool:
    byBody = {}
    for p in placed:
        byBody.setdefault(p.bodyIndex, []).append(p.primitive)

    for i, j in selfCollisionPairs(assembly):
        for a in byBody.get(i, []):
            for b in byBody.get(j, []):
                if intersects(a, b):
                    return True
    return False


def inCollision(assembly: Assembly, q, scene: Scene, selfCheck: bool = True, base: np.ndarray = None) -> bool:
    ''' tells if the robot at q intersects an obstacle or, when selfCheck, itself '''
    placed = occupiedSpace(assembly, q, base)
    if robotSceneCollision(placed, scene):
        return True
    return selfCheck and robotSelfCollision(assembly, placed)
