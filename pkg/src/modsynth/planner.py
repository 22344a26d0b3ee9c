import json
import time
import typing as T

import numpy as np
from zenlog import log as logging

from modsynth.dynamics import DEFAULT_DT_CHECK, DEFAULT_GRAVITY, torqueFeasible
from modsynth.errors import EmptyPath, InvalidEndpoint
from modsynth.geometry import Scene, inCollision
from modsynth.kinematics import IkOptions, ik
from modsynth.modlib import Assembly
from modsynth.tasks import Task, allGoalsReached
from modsynth.utils import deriveSeed


LIMIT_SLACK = 1e-9

_TRAPPED, _ADVANCED, _REACHED = range(3)


class PlanOptions:
    ''' motion planning and trajectory checking options '''

    def __init__(self, timeout: float = 3.0, maxIterations: int = 5000, stepSize: float = 0.1,
                 edgeResolution: float = 0.01, shortcutIterations: int = 200, dtSample: float = 0.01,
                 dtCheck: float = DEFAULT_DT_CHECK, gravity=DEFAULT_GRAVITY, selfCheck: bool = True,
                 ikOptions: IkOptions = None, home=None) -> None:
        '''
            @param timeout: wall clock budget of one planPath call, in seconds
            @param maxIterations: RRT-Connect iteration budget of one planPath call
            @param stepSize: RRT extension step, in radians of a joint whose range is a full turn
            @param edgeResolution: edge validity sampling resolution, in the same scaled units
            @param shortcutIterations: greedy shortcutting attempts
            @param dtSample: trajectory sampling period
            @param dtCheck: torque check period
            @param selfCheck: include self collisions in validity checks
            @param home: start configuration, zeros clamped in the limits by default
        '''
        self.timeout = timeout
        self.maxIterations = maxIterations
        self.stepSize = stepSize
        self.edgeResolution = edgeResolution
        self.shortcutIterations = shortcutIterations
        self.dtSample = dtSample
        self.dtCheck = dtCheck
        self.gravity = tuple(gravity)
        self.selfCheck = selfCheck
        self.ikOptions = ikOptions or IkOptions()
        self.home = home

    def toJson(self) -> T.Dict[str, T.Any]:
        return {
            'timeout': self.timeout,
            'max_iterations': self.maxIterations,
            'step_size': self.stepSize,
            'edge_resolution': self.edgeResolution,
            'shortcut_iterations': self.shortcutIterations,
            'dt_sample': self.dtSample,
            'dt_check': self.dtCheck,
            'gravity': list(self.gravity),
            'self_check': self.selfCheck,
            'ik_max_restarts': self.ikOptions.maxRestarts,
            'ik_max_iterations': self.ikOptions.maxIterations,
            'ik_damping': self.ikOptions.damping,
        }


class Path:
    ''' a piecewise linear joint space path '''

    def __init__(self, waypoints: T.List[np.ndarray]) -> None:
        self.waypoints = [np.asarray(w, dtype=float) for w in waypoints]

    def __len__(self) -> int:
        return len(self.waypoints)


class Trajectory:
    ''' time samples of q, qd, qdd; the acceleration of a sample holds until the next one '''

    def __init__(self, t, q, qd, qdd, goalTimes: T.List[float] = None) -> None:
        self.t = np.asarray(t, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.qd = np.asarray(qd, dtype=float)
        self.qdd = np.asarray(qdd, dtype=float)
        self.goalTimes = list(goalTimes or [])
        self.waypointTimes = []

    @property
    def tMax(self) -> float:
        return float(self.t[-1]) if len(self.t) else 0.0

    def __len__(self) -> int:
        return len(self.t)

    def sample(self, t: float) -> T.Tuple[np.ndarray, np.ndarray, np.ndarray]:
        ''' exact state at time t for piecewise constant accelerations '''
        k = int(np.searchsorted(self.t, t, side='right')) - 1
        k = min(max(k, 0), len(self.t) - 1)
        dt = t - self.t[k]
        if k == len(self.t) - 1 or dt <= 0.0:
            return (self.q[k].copy(), self.qd[k].copy(), self.qdd[k].copy())
        qdd = self.qdd[k]
        return (self.q[k] + self.qd[k] * dt + 0.5 * qdd * dt * dt, self.qd[k] + qdd * dt, qdd.copy())

    def toJson(self) -> T.Dict[str, T.Any]:
        return {
            't': self.t.tolist(),
            'q': self.q.tolist(),
            'qd': self.qd.tolist(),
            'qdd': self.qdd.tolist(),
            'goal_times': list(self.goalTimes),
        }

    @staticmethod
    def fromJson(data: T.Dict[str, T.Any]) -> 'Trajectory':
        return Trajectory(data['t'], data['q'], data['qd'], data['qdd'], data.get('goal_times', []))


def saveTrajectory(traj: Trajectory, path: str) -> None:
    with open(path, 'wt', encoding='utf8') as f:
        json.dump(traj.toJson(), f)


def loadTrajectory(path: str) -> Trajectory:
    with open(path, 'rt', encoding='utf8') as f:
        return Trajectory.fromJson(json.load(f))


#
# path planning
#

# joint range that keeps the step and resolution in their own units, a full turn
REFERENCE_RANGE = 2.0 * np.pi


class JointMetric:
    ''' joint space distance where every joint range counts as a full turn

        A revolute joint over [-pi, pi] keeps the nominal step in radians, a prismatic joint of a few
        centimeters gets the same number of steps across its range.
    '''

    def __init__(self, assembly: Assembly) -> None:
        span = np.maximum(assembly.qUpper - assembly.qLower, 1e-9)
        self.weights = REFERENCE_RANGE / span

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.linalg.norm((b - a) * self.weights))

    def steer(self, a: np.ndarray, b: np.ndarray, step: float) -> T.Tuple[np.ndarray, bool]:
        ''' moves from a toward b by at most step

            @return the new configuration and whether b was reached
        '''
        dist = self.distance(a, b)
        if dist <= step:
            return (b, True)
        return (a + (b - a) * (step / dist), False)


class _Validator:
    ''' configuration and edge validity for one assembly in one scene '''

    def __init__(self, assembly: Assembly, scene: Scene, opts: PlanOptions, base: np.ndarray) -> None:
        self.assembly = assembly
        self.scene = scene
        self.opts = opts
        self.base = base
        self.metric = JointMetric(assembly)

    def valid(self, q: np.ndarray) -> bool:
        return self.assembly.inLimits(q) and \
            not inCollision(self.assembly, q, self.scene, self.opts.selfCheck, self.base)

    def edgeValid(self, a: np.ndarray, b: np.ndarray) -> bool:
        ''' checks the straight segment between two valid configurations '''
        n = int(np.ceil(self.metric.distance(a, b) / self.opts.edgeResolution))
        for i in range(1, n):
            if not self.valid(a + (b - a) * (i / n)):
                return False
        return True


class _Tree:
    def __init__(self, root: np.ndarray, weights: np.ndarray) -> None:
        self.nodes = [root]
        self.parents = [-1]
        self.weights = weights
        self._array = root[np.newaxis, :].copy()

    def __len__(self) -> int:
        return len(self.nodes)

    def add(self, q: np.ndarray, parent: int) -> int:
        self.nodes.append(q)
        self.parents.append(parent)
        self._array = np.vstack([self._array, q])
        return len(self.nodes) - 1

    def nearest(self, q: np.ndarray) -> int:
        return int(np.argmin(np.sum(((self._array - q) * self.weights) ** 2, axis=1)))

    def branch(self, idx: int) -> T.List[np.ndarray]:
        ''' nodes from idx up to the root '''
        ret = []
        while idx >= 0:
            ret.append(self.nodes[idx])
            idx = self.parents[idx]
        return ret


def _extend(tree: _Tree, target: np.ndarray, validator: _Validator, step: float) -> T.Tuple[int, int]:
    near = tree.nearest(target)
    qNear = tree.nodes[near]
    qNew, reached = validator.metric.steer(qNear, target, step)
    status = _REACHED if reached else _ADVANCED

    if not validator.valid(qNew) or not validator.edgeValid(qNear, qNew):
        return (_TRAPPED, -1)
    return (status, tree.add(qNew, near))


def _connect(tree: _Tree, target: np.ndarray, validator: _Validator, step: float) -> T.Tuple[int, int]:
    while True:
        status, idx = _extend(tree, target, validator, step)
        if status != _ADVANCED:
            return (status, idx)


def shortcut(path: T.List[np.ndarray], validator: _Validator, iterations: int,
             rng: np.random.Generator) -> T.List[np.ndarray]:
    ''' greedy shortcutting: tries to join random pairs of waypoints by a straight edge '''
    ret = list(path)
    for _ in range(iterations):
        if len(ret) < 3:
            break
        i, j = sorted(rng.choice(len(ret), size=2, replace=False))
        if j - i < 2:
            continue
        if validator.edgeValid(ret[i], ret[j]):
            ret = ret[:i + 1] + ret[j:]
    return ret


def planPath(assembly: Assembly, qStart, qGoal, scene: Scene, timeout: float = None, seed: int = 0,
             opts: PlanOptions = None, base: np.ndarray = None) -> T.Optional[Path]:
    ''' RRT-Connect between two valid configurations, followed by greedy shortcutting

        @return the path, or None when the time or iteration budget is exhausted
    '''
    opts = opts or PlanOptions()
    timeout = opts.timeout if timeout is None else timeout
    validator = _Validator(assembly, scene, opts, base)

    qStart = np.asarray(qStart, dtype=float)
    qGoal = np.asarray(qGoal, dtype=float)
    for name, q in (('start', qStart), ('goal', qGoal)):
        if not validator.valid(q):
            raise InvalidEndpoint(f'{name} configuration is out of limits or in collision')

    if np.allclose(qStart, qGoal, atol=1e-12):
        return Path([qStart])

    if validator.edgeValid(qStart, qGoal):
        return Path([qStart, qGoal])

    rng = np.random.default_rng(seed)
    deadline = time.perf_counter() + timeout
    treeA, treeB = _Tree(qStart, validator.metric.weights), _Tree(qGoal, validator.metric.weights)
    aIsStart = True

    for it in range(opts.maxIterations):
        if time.perf_counter() > deadline:
            logging.debug(f'   planner timeout after {it} iterations')
            return None

        qRand = rng.uniform(assembly.qLower, assembly.qUpper)
        status, newIdx = _extend(treeA, qRand, validator, opts.stepSize)
        if status != _TRAPPED:
            qNew = treeA.nodes[newIdx]
            status, otherIdx = _connect(treeB, qNew, validator, opts.stepSize)
            if status == _REACHED:
                fromA = treeA.branch(newIdx)[::-1]
                fromB = treeB.branch(otherIdx)[1:]
                waypoints = fromA + fromB
                if not aIsStart:
                    waypoints = waypoints[::-1]
                waypoints = shortcut(waypoints, validator, opts.shortcutIterations, rng)
                logging.debug(f'   path found after {it + 1} iterations, {len(waypoints)} waypoints')
                return Path(waypoints)

        # balanced trees: always extend the smaller one
        if len(treeB) < len(treeA):
            treeA, treeB = treeB, treeA
            aIsStart = not aIsStart

    logging.debug(f'   planner gave up after {opts.maxIterations} iterations')
    return None


#
# time parameterization
#

class _SegmentProfile:
    ''' trapezoidal (or triangular) profile of the path parameter s in [0, 1] '''

    def __init__(self, q0: np.ndarray, delta: np.ndarray, assembly: Assembly) -> None:
        self.q0 = q0
        self.delta = delta
        moving = np.abs(delta) > 1e-15
        if not np.any(moving):
            self.ta = self.tc = self.duration = 0.0
            self.acc = self.vPeak = 0.0
            return

        absDelta = np.abs(delta[moving])
        vLim = np.where(delta[moving] > 0.0, assembly.qdUpper[moving], -assembly.qdLower[moving])
        aLim = np.minimum(assembly.qddUpper[moving], -assembly.qddLower[moving])
        vs = float(np.min(vLim / absDelta))
        acc = float(np.min(aLim / absDelta))

        if vs * vs / acc >= 1.0:
            self.ta = float(np.sqrt(1.0 / acc))
            self.tc = 0.0
        else:
            self.ta = vs / acc
            self.tc = (1.0 - vs * vs / acc) / vs
        self.acc = acc
        self.vPeak = acc * self.ta
        self.duration = 2.0 * self.ta + self.tc

    def phaseTimes(self) -> T.List[float]:
        return [0.0, self.ta, self.ta + self.tc, self.duration]

    def evaluate(self, t: float) -> T.Tuple[float, float, float]:
        ''' s, ds, dds at t, the acceleration being right continuous '''
        if self.duration == 0.0:
            return (1.0, 0.0, 0.0)
        t = min(max(t, 0.0), self.duration)
        ta, tc, a = self.ta, self.tc, self.acc
        sa = 0.5 * a * ta * ta
        if t < ta:
            return (0.5 * a * t * t, a * t, a)
        if t < ta + tc:
            return (sa + self.vPeak * (t - ta), self.vPeak, 0.0)
        if t < self.duration:
            r = self.duration - t
            return (1.0 - 0.5 * a * r * r, a * r, -a)
        return (1.0, 0.0, 0.0)


def timeParameterize(assembly: Assembly, path: Path, dtSample: float = 0.01) -> Trajectory:
    ''' zero velocity at waypoints, trapezoidal velocity profile on every segment '''
    if len(path) == 0:
        raise EmptyPath('can not parameterize an empty path')

    profiles = []
    for a, b in zip(path.waypoints[:-1], path.waypoints[1:]):
        profiles.append(_SegmentProfile(a, b - a, assembly))

    starts = [0.0]
    for p in profiles:
        starts.append(starts[-1] + p.duration)
    tMax = starts[-1]

    # every phase boundary plus the grid samples that are not too close to one
    boundaries = sorted(set([0.0, tMax] + [start + pt for start, p in zip(starts, profiles)
                                          for pt in p.phaseTimes()]))
    bounds = [boundaries[0]]
    for t in boundaries[1:]:
        if t - bounds[-1] > 1e-12:
            bounds.append(t)
    bounds = np.array(bounds)

    merged = list(bounds)
    if tMax > 0.0:
        for t in np.arange(0.0, tMax, dtSample):
            i = int(np.searchsorted(bounds, t))
            near = min(abs(t - bounds[max(i - 1, 0)]), abs(t - bounds[min(i, len(bounds) - 1)]))
            if near > 1e-9:
                merged.append(float(t))
    merged = sorted(float(t) for t in merged)

    n = assembly.nJ
    qs, qds, qdds = [], [], []
    k = 0
    for t in merged:
        # the segment that starts at or before t, empty segments skipped
        while k < len(profiles) and (starts[k + 1] <= t + 1e-12) and k < len(profiles) - 1:
            k += 1
        if not profiles:
            qs.append(path.waypoints[0].copy())
            qds.append(np.zeros(n))
            qdds.append(np.zeros(n))
            continue

        p = profiles[k]
        if t >= tMax - 1e-12:
            s, ds, dds = 1.0, 0.0, 0.0
            p = profiles[-1]
        else:
            s, ds, dds = p.evaluate(t - starts[k])
        qs.append(p.q0 + s * p.delta)
        qds.append(ds * p.delta)
        qdds.append(dds * p.delta)

    ret = Trajectory(merged, qs, qds, qdds)
    ret.waypointTimes = starts
    return ret


#
# task solving and trajectory validation
#

def homeConfig(assembly: Assembly, opts: PlanOptions) -> np.ndarray:
    home = np.zeros(assembly.nJ) if opts.home is None else np.asarray(opts.home, dtype=float)
    if home.shape != (assembly.nJ,):
        home = np.zeros(assembly.nJ)
    return assembly.clamp(home)


def verifyTrajectory(assembly: Assembly, traj: Trajectory, task: Task, opts: PlanOptions = None) -> bool:
    ''' checks collisions, joint, velocity, acceleration and torque limits and the goal order '''
    opts = opts or PlanOptions()
    if len(traj) == 0:
        return False
    if len(traj) > 1 and np.any(np.diff(traj.t) <= 0.0):
        logging.debug('   trajectory times are not strictly increasing')
        return False

    for i in range(len(traj)):
        if not assembly.inLimits(traj.q[i], LIMIT_SLACK):
            logging.debug(f'   joint limits violated at t={traj.t[i]:.3f}')
            return False
        if np.any(traj.qd[i] < assembly.qdLower - LIMIT_SLACK) or np.any(traj.qd[i] > assembly.qdUpper + LIMIT_SLACK):
            logging.debug(f'   velocity limits violated at t={traj.t[i]:.3f}')
            return False
        if np.any(traj.qdd[i] < assembly.qddLower - LIMIT_SLACK) or \
                np.any(traj.qdd[i] > assembly.qddUpper + LIMIT_SLACK):
            logging.debug(f'   acceleration limits violated at t={traj.t[i]:.3f}')
            return False
        if inCollision(assembly, traj.q[i], task.scene, opts.selfCheck, task.basePose):
            logging.debug(f'   collision at t={traj.t[i]:.3f}')
            return False

    if not torqueFeasible(assembly, traj, opts.dtCheck, opts.gravity, task.basePose):
        logging.debug('   torque limits violated')
        return False

    if not allGoalsReached(assembly, traj, task):
        logging.debug('   goals are not reached in order')
        return False
    return True


def solveTask(assembly: Assembly, task: Task, opts: PlanOptions = None, seed: int = 0) -> T.Optional[Trajectory]:
    ''' IK witness per goal, RRT-Connect between them, time parameterization and validation

        @return a verified trajectory, or None if the task is not solved within the budget
    '''
    opts = opts or PlanOptions()
    base = task.basePose

    def colliding(q):
        return inCollision(assembly, q, task.scene, opts.selfCheck, base)

    qPrev = homeConfig(assembly, opts)
    if colliding(qPrev):
        logging.debug('   home configuration is in collision')
        return None

    waypoints = [qPrev]
    goalIndices = []
    for k, goal in enumerate(task.goals):
        q = ik(assembly, goal.pose, task.tolFor(goal), opts.ikOptions, deriveSeed(seed, k, 0), colliding,
               base, qPrev)
        if q is None:
            logging.debug(f'   no collision free IK solution for goal {goal.id}')
            return None

        path = planPath(assembly, qPrev, q, task.scene, opts.timeout, deriveSeed(seed, k, 1), opts, base)
        if path is None:
            logging.debug(f'   no path toward goal {goal.id}')
            return None

        waypoints += path.waypoints[1:]
        goalIndices.append(len(waypoints) - 1)
        qPrev = q

    traj = timeParameterize(assembly, Path(waypoints), opts.dtSample)
    traj.goalTimes = [traj.waypointTimes[i] for i in goalIndices]

    if not verifyTrajectory(assembly, traj, task, opts):
        logging.debug('   trajectory failed verification')
        return None
    return traj
