import json
import os
import typing as T

import numpy as np
from scipy.spatial.transform import Rotation
from zenlog import log as logging

from modsynth.errors import TaskFormatError, Unsatisfiable
from modsynth.geometry import Scene
from modsynth.kinematics import Pose, fk, withinTolerance
from modsynth.modlib import Assembly
from modsynth.primitives import CollisionPrimitive
from modsynth.utils import homogeneous, transformFromList, transformToList


DEFAULT_TP = 1e-3

TOLERANCE_PRESETS = {
    'sphere_like': ((1.0, 1.0, 1.0), np.pi / 2.0),
    'partially_symmetric': ((1.0 / 360.0, 1.0 / 360.0, 1.0), np.pi),
    'arbitrary': ((1.0, 1.0, 1.0), np.pi / 360.0),
}

POCKET_DIR = os.path.join(os.path.dirname(__file__), 'pocket')

# synthetic I: 5x5x5 voxels of 0.25m, the cube centered in (0, 0, 0.625)
VOXEL_EDGE = 0.25
VOXELS_PER_SIDE = 5
VOXEL_GRID_CENTER = np.array([0.0, 0.0, 0.625])

# synthetic II: half ball of 1.2m, obstacle dimensions range
HALF_BALL_RADIUS = 1.2
OBSTACLE_DIM_RANGE = (0.05, 0.3)


class Tolerances:
    ''' position tolerance tP and orientation tolerance <tAxis, phi> '''

    def __init__(self, tP: float = DEFAULT_TP, tAxis=(1.0, 1.0, 1.0), phi: float = np.pi / 360.0) -> None:
        tAxis = np.asarray(tAxis, dtype=float)
        if tP <= 0.0:
            raise ValueError('position tolerance must be > 0')
        if tAxis.shape != (3,) or np.any(tAxis < 0.0) or np.max(tAxis) > 1.0:
            raise ValueError('axis tolerance must have 3 components in [0, 1]')
        if not 0.0 < phi <= np.pi:
            raise ValueError('phi must be in (0, pi]')

        self.tP = float(tP)
        self.tAxis = tAxis
        self.phi = float(phi)

    def toJson(self) -> T.Dict[str, T.Any]:
        return {'t_p': self.tP, 't_axis': self.tAxis.tolist(), 'phi': self.phi}

    @staticmethod
    def fromJson(data: T.Dict[str, T.Any]) -> 'Tolerances':
        return Tolerances(data.get('t_p', DEFAULT_TP), data.get('t_axis', (1.0, 1.0, 1.0)),
                          data.get('phi', np.pi / 360.0))


def tolerancePreset(name: str, tP: float = DEFAULT_TP) -> Tolerances:
    ''' the workpiece geometry presets: sphere_like, partially_symmetric, arbitrary '''
    if name not in TOLERANCE_PRESETS:
        raise ValueError(f'unknown tolerance preset {name}, expecting one of {", ".join(TOLERANCE_PRESETS)}')
    tAxis, phi = TOLERANCE_PRESETS[name]
    return Tolerances(tP, tAxis, phi)


class Goal:
    ''' a desired TCP pose, optionally with its own tolerances '''

    def __init__(self, goalId: str, pose: Pose, tol: Tolerances = None) -> None:
        self.id = goalId
        self.pose = pose
        self.tol = tol


class Task:
    ''' an ordered goal sequence, shared tolerances, obstacles and the base placement '''

    def __init__(self, goals: T.List[Goal], tol: Tolerances, scene: Scene, basePose: np.ndarray = None,
                 name: str = 'task') -> None:
        if not goals:
            raise ValueError('a task needs at least one goal')
        self.goals = goals
        self.tol = tol
        self.scene = scene
        self.basePose = np.eye(4) if basePose is None else basePose
        self.name = name

    def tolFor(self, goal: Goal) -> Tolerances:
        return goal.tol or self.tol

    def withTolerances(self, tol: Tolerances) -> 'Task':
        return Task(self.goals, tol, self.scene, self.basePose, self.name)

    def goalDistancesFromBase(self) -> np.ndarray:
        return np.array([np.linalg.norm(g.pose.p - self.basePose[:3, 3]) for g in self.goals])

    def toJson(self) -> T.Dict[str, T.Any]:
        goals = []
        for g in self.goals:
            item = {'id': g.id, 'pose': transformToList(g.pose.matrix())}
            if g.tol is not None:
                item['tolerances'] = g.tol.toJson()
            goals.append(item)

        return {
            'name': self.name,
            'goals': goals,
            'tolerances': self.tol.toJson(),
            'obstacles': [o.toJson() for o in self.scene.obstacles],
            'base_pose': transformToList(self.basePose),
        }

    @staticmethod
    def fromJson(data: T.Dict[str, T.Any]) -> 'Task':
        try:
            goals = []
            for g in data['goals']:
                tol = Tolerances.fromJson(g['tolerances']) if 'tolerances' in g else None
                goals.append(Goal(str(g['id']), Pose.fromMatrix(transformFromList(g['pose'], 'goal pose')), tol))

            return Task(goals, Tolerances.fromJson(data.get('tolerances', {})),
                        Scene([CollisionPrimitive.fromJson(o) for o in data.get('obstacles', [])]),
                        transformFromList(data['base_pose'], 'base pose') if 'base_pose' in data else None,
                        data.get('name', 'task'))
        except (KeyError, TypeError, ValueError) as e:
            raise TaskFormatError(f'invalid task definition: {e}') from e


def loadTask(path: str) -> Task:
    logging.debug(f" * reading task {path}")
    try:
        with open(path, 'rt', encoding='utf8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise TaskFormatError(f'{path} is not valid JSON: {e}') from e

    ret = Task.fromJson(data)
    if 'name' not in data:
        ret.name = os.path.splitext(os.path.basename(path))[0]
    return ret


def saveTask(task: Task, path: str) -> None:
    with open(path, 'wt', encoding='utf8') as f:
        json.dump(task.toJson(), f, indent=2)


def manufacturingTask(name: str, preset: str = 'arbitrary') -> Task:
    ''' the machine tending fixture tasks (pick, machine, place) with a tolerance preset
        @param name: manufacturing1 or manufacturing2
    '''
    ret = loadTask(os.path.join(POCKET_DIR, f'{name}.json'))
    return ret.withTolerances(tolerancePreset(preset))


def reached(assembly: Assembly, q, goal: Goal, tol: Tolerances, base: np.ndarray = None) -> bool:
    ''' tells if the robot at q reaches goal within tol '''
    return withinTolerance(fk(assembly, q, base), goal.pose, tol)


def allGoalsReached(assembly: Assembly, trajectory, task: Task) -> bool:
    ''' tells if the trajectory samples visit the goals in order, the last one at t_max '''
    samples = trajectory.q
    if len(samples) == 0:
        return False

    idx = 0
    for goal in task.goals[:-1]:
        tol = task.tolFor(goal)
        while idx < len(samples) and not reached(assembly, samples[idx], goal, tol, task.basePose):
            idx += 1
        if idx >= len(samples):
            return False

    last = task.goals[-1]
    return reached(assembly, samples[-1], last, task.tolFor(last), task.basePose)


def randomRotation(rng: np.random.Generator) -> Rotation:
    ''' uniformly distributed rotation '''
    return Rotation.random(random_state=rng)


def voxelCenter(index: int) -> np.ndarray:
    ix, rest = divmod(index, VOXELS_PER_SIDE * VOXELS_PER_SIDE)
    iy, iz = divmod(rest, VOXELS_PER_SIDE)
    offset = (np.array([ix, iy, iz]) - (VOXELS_PER_SIDE - 1) / 2.0) * VOXEL_EDGE
    return VOXEL_GRID_CENTER + offset


def generateSynthetic1(d: int, seed: int) -> Task:
    ''' d box obstacles and d goals on distinct voxels of the 5x5x5 grid '''
    if d < 1:
        raise ValueError('d must be >= 1')

    nVoxels = VOXELS_PER_SIDE ** 3
    if 2 * d > nVoxels:
        raise Unsatisfiable(f'can not place {d} obstacles and {d} goals on {nVoxels} voxels')

    rng = np.random.default_rng(seed)
    voxels = rng.choice(nVoxels, size=2 * d, replace=False)
    half = VOXEL_EDGE / 2.0
    obstacles = [CollisionPrimitive('box', homogeneous(pos=voxelCenter(int(v))), (half, half, half))
                 for v in voxels[:d]]
    goals = [Goal(f'g{i + 1}', Pose(voxelCenter(int(v)), randomRotation(rng))) for i, v in enumerate(voxels[d:])]
    return Task(goals, tolerancePreset('arbitrary'), Scene(obstacles), np.eye(4), f'synthetic1-d{d}-s{seed}')


def _halfBallPoint(rng: np.random.Generator) -> np.ndarray:
    while True:
        p = rng.uniform(-HALF_BALL_RADIUS, HALF_BALL_RADIUS, size=3)
        p[2] = abs(p[2])
        if np.linalg.norm(p) <= HALF_BALL_RADIUS:
            return p


def randomObstacle(rng: np.random.Generator) -> CollisionPrimitive:
    kind = ('sphere', 'box', 'cylinder')[int(rng.integers(3))]
    lo, hi = OBSTACLE_DIM_RANGE
    n = {'sphere': 1, 'box': 3, 'cylinder': 2}[kind]
    dims = rng.uniform(lo, hi, size=n)
    pose = homogeneous(randomRotation(rng).as_matrix(), _halfBallPoint(rng))
    return CollisionPrimitive(kind, pose, dims)


def generateSynthetic2(d: int, seed: int) -> Task:
    ''' d goals and d random sphere / box / cylinder obstacles in the upper half ball '''
    if d < 1:
        raise ValueError('d must be >= 1')

    rng = np.random.default_rng(seed)
    obstacles = [randomObstacle(rng) for _ in range(d)]
    goals = [Goal(f'g{i + 1}', Pose(_halfBallPoint(rng), randomRotation(rng))) for i in range(d)]
    return Task(goals, tolerancePreset('arbitrary'), Scene(obstacles), np.eye(4), f'synthetic2-d{d}-s{seed}')


def plausiblySolvable(task: Task, reachEstimate: float) -> bool:
    ''' cheap, non exhaustive, rejection of unsolvable tasks '''
    if reachEstimate <= 0.0:
        raise ValueError('reach estimate must be > 0')

    basePos = task.basePose[:3, 3]
    for o in task.scene.obstacles:
        if o.contains(basePos, task.tol.tP):
            logging.debug(f'   base position is inside obstacle {o}')
            return False

        for g in task.goals:
            if o.contains(g.pose.p, task.tolFor(g).tP):
                logging.debug(f'   goal {g.id} is inside obstacle {o}')
                return False

    for g in task.goals:
        if np.linalg.norm(g.pose.p - basePos) > reachEstimate:
            logging.debug(f'   goal {g.id} is out of reach')
            return False

    return True
