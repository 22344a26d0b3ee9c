import functools
import itertools
import threading
import time
import typing as T
from collections import OrderedDict

import numpy as np
from zenlog import log as logging

from modsynth.geometry import inCollision
from modsynth.kinematics import IkResult, ikSearch, jointMotion
from modsynth.modlib import Assembly, Module, ModuleLibrary, assemble
from modsynth.planner import PlanOptions, Trajectory, solveTask
from modsynth.tasks import Task
from modsynth.utils import deriveSeed


LESS, EQUAL, GREATER = -1, 0, 1

D_MAX_SAMPLES = 101
DEFAULT_CACHE_CAPACITY = 1000

# sub seeds of an evaluation seed
STAGE_IK, STAGE_PLAN = 2, 4


class CostWeights:
    ''' C_T = wS * (cJ * nJ + cM * nM) + wP * (ct * tMax) '''

    def __init__(self, cJ: float = 1.0, cM: float = 0.2, ct: float = 1.0, wS: float = 1.0, wP: float = 1.0) -> None:
        values = (cJ, cM, ct, wS, wP)
        if any(v < 0.0 for v in values):
            raise ValueError('cost weights must be >= 0')
        if wS == 0.0 and wP == 0.0:
            raise ValueError('at least one of the setup and process weights must be > 0')
        if cJ == 0.0 and cM == 0.0 and ct == 0.0:
            raise ValueError('at least one cost coefficient must be > 0')

        self.cJ = float(cJ)
        self.cM = float(cM)
        self.ct = float(ct)
        self.wS = float(wS)
        self.wP = float(wP)

    @staticmethod
    def forJointWeight(wJ: float) -> 'CostWeights':
        ''' the joints / cycle time tradeoff family wJ * nJ + (5 - wJ) * tMax, wJ in [0, 5] '''
        if not 0.0 <= wJ <= 5.0:
            raise ValueError('wJ must be in [0, 5]')
        return CostWeights(wJ, 0.0, 5.0 - wJ)

    def setupCost(self, nJ: int, nM: int) -> float:
        return self.cJ * nJ + self.cM * nM

    def processCost(self, tMax: float) -> float:
        return self.ct * tMax

    def taskCost(self, nJ: int, nM: int, tMax: float) -> float:
        return self.wS * self.setupCost(nJ, nM) + self.wP * self.processCost(tMax)

    def toJson(self) -> T.Dict[str, float]:
        return {'c_j': self.cJ, 'c_m': self.cM, 'c_t': self.ct, 'w_s': self.wS, 'w_p': self.wP}


class FitnessVector:
    ''' the lexicographic fitness <f1, f2, f3, f4>, fields beyond depth are None '''

    def __init__(self, f1: int = None, f2: int = None, f3: int = None, f4: float = None, depth: int = 1) -> None:
        self.f1 = f1
        self.f2 = f2
        self.f3 = f3
        self.f4 = f4
        self.depth = depth
        self.stageTimes: T.Dict[str, float] = {}
        self.nJ = None
        self.nM = None
        self.tMax = None
        self.cost = None
        self.trajectory: T.Optional[Trajectory] = None

    def asTuple(self) -> T.Tuple:
        return (self.f1, self.f2, self.f3, self.f4)

    def toJson(self) -> T.Dict[str, T.Any]:
        ret = {
            'f1': self.f1,
            'f2': self.f2,
            'f3': self.f3,
            'f4': jsonFloat(self.f4),
            'depth': self.depth,
        }
        if self.cost is not None:
            ret['cost'] = jsonFloat(self.cost)
            ret['t_max'] = self.tMax
        return ret

    def __repr__(self) -> str:
        def fmt(v):
            return '-' if v is None else str(v)
        return f'({", ".join(fmt(v) for v in self.asTuple())})'


def jsonFloat(v):
    ''' JSON has no infinities: -inf is written as the string "-inf" '''
    if v is None:
        return None
    if np.isinf(v):
        return '-inf' if v < 0 else 'inf'
    return float(v)


def lexCompare(a: FitnessVector, b: FitnessVector) -> int:
    ''' lexicographic comparison, an unset field is below any value

        @return LESS, EQUAL or GREATER
    '''
    for va, vb in zip(a.asTuple(), b.asTuple()):
        if va is None and vb is None:
            return EQUAL
        if va is None:
            return LESS
        if vb is None:
            return GREATER
        if va < vb:
            return LESS
        if va > vb:
            return GREATER
    return EQUAL


fitnessKey = functools.cmp_to_key(lexCompare)


#
# the fitness stages
#

def _connectorDistance(module: Module, q: T.Sequence[float]) -> float:
    ''' distance between the proximal and distal connectors for the given joint values '''
    frame = np.eye(4)
    for spec, qi in zip(module.joints, q):
        frame = frame @ spec.parentFrame @ jointMotion(spec, qi) @ spec.childFrame
    distal = frame @ module.distal.frame
    return float(np.linalg.norm(distal[:3, 3] - module.proximal.frame[:3, 3]))


def dMax(module: Module) -> float:
    ''' maximum connector to connector distance over the joint ranges, by sampling '''
    if not module.joints:
        return _connectorDistance(module, ())

    perJoint = D_MAX_SAMPLES if len(module.joints) <= 2 else 11
    grids = [np.linspace(j.qLimits[0], j.qLimits[1], perJoint) for j in module.joints]
    return max(_connectorDistance(module, q) for q in itertools.product(*grids))


def assemblyReach(assembly: Assembly) -> float:
    return sum(dMax(m) for m in assembly.modules)


def f1ReachUpperBound(assembly: Assembly, task: Task, reach: float = None) -> int:
    ''' 1 iff the summed module reach covers the farthest goal, measured from the base '''
    if reach is None:
        reach = assemblyReach(assembly)
    distances = task.goalDistancesFromBase()
    return int(reach >= (float(np.max(distances)) if len(distances) else 0.0))


def ikStageSeed(seed: int) -> int:
    return deriveSeed(seed, STAGE_IK)


def _ikSeed(seed: int, goalIndex: int) -> int:
    # f2 and f3 share their IK seeds: the collision aware search replays the attempts of the
    # collision free one, so f3 <= f2
    return deriveSeed(seed, goalIndex)


def goalIk(assembly: Assembly, task: Task, goalIndex: int, seed: int = 0, opts: PlanOptions = None,
           collisionAware: bool = False) -> IkResult:
    ''' IK search toward a goal of the task, optionally rejecting colliding configurations '''
    opts = opts or PlanOptions()
    goal = task.goals[goalIndex]
    reject = None
    if collisionAware:
        def reject(q):
            return inCollision(assembly, q, task.scene, opts.selfCheck, task.basePose)

    return ikSearch(assembly, goal.pose, task.tolFor(goal), opts.ikOptions, _ikSeed(seed, goalIndex), reject,
                    task.basePose)


def f2ReachableGoals(assembly: Assembly, task: Task, seed: int = 0, opts: PlanOptions = None) -> int:
    ''' number of goals with an IK solution, collisions ignored '''
    return sum(goalIk(assembly, task, k, seed, opts).success for k in range(len(task.goals)))


def f3CollisionFreeGoals(assembly: Assembly, task: Task, seed: int = 0, opts: PlanOptions = None) -> int:
    ''' number of goals with a collision free IK solution '''
    return sum(goalIk(assembly, task, k, seed, opts, True).success for k in range(len(task.goals)))


def f4Cost(assembly: Assembly, task: Task, weights: CostWeights = None, opts: PlanOptions = None,
           seed: int = 0) -> T.Tuple[float, T.Optional[Trajectory]]:
    ''' -C_T of the solved task, -inf when no feasible trajectory is found

        @return (f4, trajectory)
    '''
    weights = weights or CostWeights()
    traj = solveTask(assembly, task, opts, deriveSeed(seed, STAGE_PLAN))
    if traj is None:
        return (-np.inf, None)
    return (-weights.taskCost(assembly.nJ, assembly.nM, traj.tMax), traj)


def evaluate(assembly: Assembly, task: Task, weights: CostWeights = None, opts: PlanOptions = None,
             seed: int = 0, reach: float = None, fullDepth: bool = False) -> FitnessVector:
    ''' staged evaluation stopping at the first objective below its maximum

        @param reach: precomputed summed reach of the assembly
        @param fullDepth: computes every stage regardless of the early stop
    '''
    weights = weights or CostWeights()
    opts = opts or PlanOptions()
    nGoals = len(task.goals)
    ret = FitnessVector()
    ret.nJ = assembly.nJ
    ret.nM = assembly.nM

    def timed(name, fn):
        start = time.perf_counter()
        value = fn()
        ret.stageTimes[name] = time.perf_counter() - start
        return value

    ret.f1 = timed('f1', lambda: f1ReachUpperBound(assembly, task, reach))
    ret.depth = 1
    if ret.f1 < 1 and not fullDepth:
        return ret

    ret.f2 = timed('f2', lambda: f2ReachableGoals(assembly, task, ikStageSeed(seed), opts))
    ret.depth = 2
    if ret.f2 < nGoals and not fullDepth:
        return ret

    ret.f3 = timed('f3', lambda: f3CollisionFreeGoals(assembly, task, ikStageSeed(seed), opts))
    ret.depth = 3
    if ret.f3 < nGoals and not fullDepth:
        return ret

    ret.f4, ret.trajectory = timed('f4', lambda: f4Cost(assembly, task, weights, opts, seed))
    ret.depth = 4
    if ret.trajectory is not None:
        ret.tMax = ret.trajectory.tMax
        ret.cost = -ret.f4
    return ret


#
# model cache
#

class CachedModel:
    ''' what is derived from a module id sequence alone '''

    def __init__(self, assembly: Assembly) -> None:
        self.assembly = assembly
        self.reach = assemblyReach(assembly)


class ModelCache:
    ''' LRU cache of derived models keyed by module id sequence, safe to share between threads '''

    def __init__(self, library: ModuleLibrary, capacity: int = DEFAULT_CACHE_CAPACITY) -> None:
        if capacity < 0:
            raise ValueError('cache capacity must be >= 0')
        self.library = library
        self.capacity = capacity
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self._items: T.Dict[T.Tuple[int, ...], CachedModel] = OrderedDict()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, ids) -> bool:
        with self._lock:
            return tuple(ids) in self._items

    def model(self, ids: T.Sequence[int]) -> CachedModel:
        key = tuple(ids)
        with self._lock:
            item = self._items.get(key)
            if item is not None:
                self._items.move_to_end(key)
                self.hits += 1
                return item
            self.misses += 1

        # built outside of the lock, two threads may build the same model
        item = CachedModel(assemble(self.library, key))
        if self.capacity == 0:
            return item

        with self._lock:
            self._items[key] = item
            self._items.move_to_end(key)
            while len(self._items) > self.capacity:
                self._items.popitem(last=False)
                self.evictions += 1
        return item

    def stats(self) -> T.Dict[str, int]:
        return {'hits': self.hits, 'misses': self.misses, 'evictions': self.evictions, 'size': len(self._items)}


def cachedEvaluate(cache: ModelCache, ids: T.Sequence[int], task: Task, weights: CostWeights = None,
                   opts: PlanOptions = None, seed: int = 0) -> FitnessVector:
    ''' evaluate with the derived model taken from the cache, the fitness itself is always recomputed '''
    model = cache.model(ids)
    ret = evaluate(model.assembly, task, weights, opts, seed, model.reach)
    logging.debug(f'   {list(ids)} -> {ret} depth={ret.depth}')
    return ret
