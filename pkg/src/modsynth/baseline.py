import math
import typing as T

import numpy as np
from zenlog import log as logging

from modsynth.evolve import GaConfig, RunHistory, evolvePopulation, libraryReachEstimate, rankIndividuals
from modsynth.fitness import CostWeights, ModelCache, goalIk, ikStageSeed, jsonFloat
from modsynth.kinematics import IkResult, jacobian
from modsynth.modlib import Assembly, ModuleLibrary, assemble
from modsynth.planner import PlanOptions, Trajectory, solveTask
from modsynth.tasks import Task, plausiblySolvable
from modsynth.utils import deriveSeed


DEFAULT_K = (0.0, 1.0, 1.0, 0.1, 0.1, 0.5, 0.1, 1.0)
INVERSE_MANIPULABILITY_CAP = 100.0
FINALISTS = 25
STREAM_STAGE2 = 5

CRITERIA_ORDER = ('R', 'L', 'A', 'D', 'nM', 'nJ', 'V')


class BaselineWeights:
    ''' the k1..k8 weights of f_B = exp(-(k1 R + k2 L + k3 A + k4 D + k5 nM + k6 nJ + k7 V)) + k8 P '''

    def __init__(self, k: T.Sequence[float] = DEFAULT_K) -> None:
        k = tuple(float(v) for v in k)
        if len(k) != 8:
            raise ValueError('expecting 8 baseline weights')
        if any(v < 0.0 for v in k):
            raise ValueError('baseline weights must be >= 0')
        if not any(k):
            raise ValueError('baseline weights can not be all zero')
        self.k = k

    def toJson(self) -> T.List[float]:
        return list(self.k)


class GoalSolutions:
    ''' collision aware IK results of every goal, shared by the criteria '''

    def __init__(self, assembly: Assembly, task: Task, results: T.List[IkResult]) -> None:
        self.assembly = assembly
        self.task = task
        self.results = results

    def witness(self, k: int) -> np.ndarray:
        r = self.results[k]
        return r.q if r.success else r.bestQ


def reliability(solutions: GoalSolutions) -> float:
    ''' not defined for this library, always 0 '''
    return 0.0


def positionError(solutions: GoalSolutions) -> float:
    return float(sum(r.posError for r in solutions.results))


def angularError(solutions: GoalSolutions) -> float:
    return float(sum(r.angError for r in solutions.results))


def _inverseManipulability(j: np.ndarray) -> float:
    # the smaller gram matrix so that arms with less than 6 joints are not always singular
    gram = j @ j.T if j.shape[0] <= j.shape[1] else j.T @ j
    det = np.linalg.det(gram) if gram.size else 0.0
    if det <= 0.0:
        return INVERSE_MANIPULABILITY_CAP
    return min(1.0 / math.sqrt(det), INVERSE_MANIPULABILITY_CAP)


def dexterity(solutions: GoalSolutions) -> float:
    ''' summed inverse manipulability at the goal witnesses '''
    ret = 0.0
    for k in range(len(solutions.results)):
        q = solutions.witness(k)
        if q is None:
            ret += INVERSE_MANIPULABILITY_CAP
        else:
            ret += _inverseManipulability(jacobian(solutions.assembly, q, solutions.task.basePose))
    return ret


def moduleCount(solutions: GoalSolutions) -> float:
    return float(solutions.assembly.nM)


def jointCount(solutions: GoalSolutions) -> float:
    return float(solutions.assembly.nJ)


def jointTravel(solutions: GoalSolutions) -> float:
    ''' L1 joint distance between consecutive goal witnesses '''
    witnesses = [solutions.witness(k) for k in range(len(solutions.results))]
    witnesses = [w for w in witnesses if w is not None]
    return float(sum(np.sum(np.abs(b - a)) for a, b in zip(witnesses[:-1], witnesses[1:])))


def reachableFraction(solutions: GoalSolutions) -> float:
    if not solutions.results:
        return 0.0
    return sum(r.success for r in solutions.results) / len(solutions.results)


DEFAULT_CRITERIA: T.Dict[str, T.Callable[[GoalSolutions], float]] = {
    'R': reliability,
    'L': positionError,
    'A': angularError,
    'D': dexterity,
    'nM': moduleCount,
    'nJ': jointCount,
    'V': jointTravel,
    'P': reachableFraction,
}


class BaselineFitness:
    ''' scalar fitness f_B, -inf for eliminated candidates '''

    FIELDS = ('fb',)

    def __init__(self, fB: float, kept: bool, nJ: int, nM: int, criteria: T.Dict[str, float] = None) -> None:
        self.fB = fB
        self.kept = kept
        self.nJ = nJ
        self.nM = nM
        self.criteria = criteria or {}
        self.trajectory = None

    @property
    def depth(self) -> int:
        return 2 if self.kept else 1

    def asTuple(self) -> T.Tuple[float]:
        return (self.fB,)

    def toJson(self) -> T.Dict[str, T.Any]:
        return {'f_b': jsonFloat(self.fB), 'kept': self.kept, 'criteria': self.criteria}

    def __repr__(self) -> str:
        return f'(fb={self.fB:.6g})'


def compareScalar(a: BaselineFitness, b: BaselineFitness) -> int:
    if a.fB < b.fB:
        return -1
    if a.fB > b.fB:
        return 1
    return 0


def _goalSolution(assembly: Assembly, task: Task, k: int, seed: int, opts: PlanOptions) -> IkResult:
    return goalIk(assembly, task, k, ikStageSeed(seed), opts, True)


def eliminate(assembly: Assembly, task: Task, seed: int = 0, opts: PlanOptions = None) -> bool:
    ''' keeps (True) the candidates with a collision free IK solution for the first and last goals '''
    opts = opts or PlanOptions()
    last = len(task.goals) - 1
    return all(_goalSolution(assembly, task, k, seed, opts).success for k in sorted({0, last}))


def formula(criteria: T.Dict[str, float], weights: BaselineWeights) -> float:
    exponent = sum(k * criteria[name] for k, name in zip(weights.k[:7], CRITERIA_ORDER))
    return math.exp(-exponent) + weights.k[7] * criteria['P']


def baselineFitness(assembly: Assembly, task: Task, weights: BaselineWeights = None, seed: int = 0,
                    opts: PlanOptions = None, criteria=None) -> BaselineFitness:
    ''' eliminates or scores an assembly

        @param criteria: name to function table, DEFAULT_CRITERIA entries are used for the missing ones
    '''
    weights = weights or BaselineWeights()
    opts = opts or PlanOptions()
    table = dict(DEFAULT_CRITERIA)
    table.update(criteria or {})

    n = len(task.goals)
    results: T.List[T.Optional[IkResult]] = [None] * n
    for k in sorted({0, n - 1}):
        results[k] = _goalSolution(assembly, task, k, seed, opts)
        if not results[k].success:
            return BaselineFitness(-math.inf, False, assembly.nJ, assembly.nM)

    for k in range(n):
        if results[k] is None:
            results[k] = _goalSolution(assembly, task, k, seed, opts)

    solutions = GoalSolutions(assembly, task, results)
    values = {name: float(fn(solutions)) for name, fn in table.items()}
    return BaselineFitness(formula(values, weights), True, assembly.nJ, assembly.nM, values)


class Stage2Entry:
    ''' a finalist of the second stage '''

    def __init__(self, rank: int, ids: T.Tuple[int, ...], fB: float, cost: float, tMax: float) -> None:
        self.rank = rank
        self.ids = ids
        self.fB = fB
        self.cost = cost
        self.tMax = tMax

    @property
    def solved(self) -> bool:
        return math.isfinite(self.cost)

    def toJson(self) -> T.Dict[str, T.Any]:
        return {'rank': self.rank, 'ids': list(self.ids), 'f_b': jsonFloat(self.fB),
                'solved': self.solved, 't_max': self.tMax, 'cost': jsonFloat(self.cost)}


def stage2CsvText(entries: T.List[Stage2Entry]) -> str:
    lines = ['rank,ids,f_b,solved,t_max,cost']
    for e in entries:
        tMax = '' if e.tMax is None else f'{e.tMax:.9g}'
        cost = f'{e.cost:.9g}' if e.solved else 'inf'
        lines.append(f'{e.rank},{";".join(str(i) for i in e.ids)},{e.fB:.9g},{int(e.solved)},{tMax},{cost}')
    return '\n'.join(lines) + '\n'


def runBaseline(library: ModuleLibrary, task: Task, config: GaConfig = None, weights: BaselineWeights = None,
                costWeights: CostWeights = None, opts: PlanOptions = None, timing: bool = True,
                cache: ModelCache = None, finalists: int = FINALISTS
                ) -> T.Tuple[T.Optional[Assembly], T.Optional[Trajectory], RunHistory]:
    ''' hierarchical elimination GA with f_B, then trajectories for the best distinct finalists

        @return (best assembly, its trajectory, history), the finalists are in history.extra['stage2']
    '''
    config = config or GaConfig()
    weights = weights or BaselineWeights()
    costWeights = costWeights or CostWeights()
    opts = opts or PlanOptions()
    cache = cache or ModelCache(library, config.cacheCapacity)

    if not plausiblySolvable(task, libraryReachEstimate(library, config.nc)):
        logging.warning(f"task {task.name} looks unsolvable with this library, running anyway")

    def evaluateOne(ids, seed) -> BaselineFitness:
        assembly = cache.model(ids).assembly
        return baselineFitness(assembly, task, weights, seed, opts)

    history = RunHistory(BaselineFitness.FIELDS, 2)
    history, seen = evolvePopulation(library, config, evaluateOne, compareScalar, history, timing)

    logging.info(f"==> second stage on at most {finalists} finalists")
    ranked = [ind for ind in rankIndividuals(list(seen.values()), compareScalar) if ind.fitness.kept][:finalists]
    entries = []
    best = None
    for rank, ind in enumerate(ranked):
        assembly = assemble(library, ind.ids)
        traj = solveTask(assembly, task, opts, deriveSeed(config.seed, STREAM_STAGE2, rank))
        if traj is None:
            entries.append(Stage2Entry(rank, ind.ids, ind.fitness.fB, math.inf, None))
            continue

        cost = costWeights.taskCost(assembly.nJ, assembly.nM, traj.tMax)
        entries.append(Stage2Entry(rank, ind.ids, ind.fitness.fB, cost, traj.tMax))
        logging.debug(f"   finalist {rank} {list(ind.ids)} cost={cost:.4f}")
        if best is None or cost < best[2]:
            best = (assembly, traj, cost)

    history.extra['stage2'] = [e.toJson() for e in entries]
    history.extra['cache'] = cache.stats()
    history.stage2 = entries
    if best is None:
        return (None, None, history)
    return (best[0], best[1], history)
