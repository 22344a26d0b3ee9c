import json
import os
import typing as T

import numpy as np
from scipy import stats
from zenlog import log as logging

from modsynth.errors import ModsynthError


BOOTSTRAP_RESAMPLES = 1000
CI_LEVEL = 0.95


class RunSummary:
    ''' what a report needs from one run directory '''

    def __init__(self, path: str, task: str, achieved: bool, cost: T.Optional[float], nJ: int,
                 tMax: T.Optional[float], wJ: T.Optional[float], seed: T.Optional[int]) -> None:
        self.path = path
        self.task = task
        self.achieved = achieved
        self.cost = cost
        self.nJ = nJ
        self.tMax = tMax
        self.wJ = wJ
        self.seed = seed


def loadRun(path: str) -> RunSummary:
    ''' reads a run from its output directory or from one of the files in it '''
    runDir = path if os.path.isdir(path) else os.path.dirname(path) or '.'
    solutionPath = os.path.join(runDir, 'solution.json')
    if not os.path.isfile(solutionPath):
        raise ModsynthError(f'no solution.json in {runDir}')

    with open(solutionPath, 'rt', encoding='utf8') as f:
        solution = json.load(f)

    config = {}
    configPath = os.path.join(runDir, 'config_resolved.json')
    if os.path.isfile(configPath):
        with open(configPath, 'rt', encoding='utf8') as f:
            config = json.load(f)

    try:
        return RunSummary(runDir, solution['task'], bool(solution['achieved']), solution.get('cost'),
                          solution.get('n_j'), solution.get('t_max'), config.get('w_j'), config.get('seed'))
    except KeyError as e:
        raise ModsynthError(f'{solutionPath} misses the {e} field') from e


def bootstrapCi(values: T.Sequence[float], rng: np.random.Generator, resamples: int = BOOTSTRAP_RESAMPLES,
                level: float = CI_LEVEL) -> T.Tuple[float, float, float]:
    ''' mean and percentile bootstrap confidence interval of the mean

        @return (mean, low, high)
    '''
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise ValueError('no value to bootstrap')

    mean = float(np.mean(data))
    if data.size == 1 or np.all(data == data[0]):
        return (mean, mean, mean)

    res = stats.bootstrap((data,), np.mean, n_resamples=resamples, confidence_level=level, method='percentile',
                          random_state=rng)
    return (mean, float(res.confidence_interval.low), float(res.confidence_interval.high))


def _fmt(v) -> str:
    if v is None:
        return ''
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f'{v:.6g}'
    return str(v)


def summaryCsvText(runs: T.List[RunSummary]) -> str:
    ''' one row per task: achieved, best cost and the n_J / t_max of the best run '''
    byTask: T.Dict[str, T.List[RunSummary]] = {}
    for r in runs:
        byTask.setdefault(r.task, []).append(r)

    lines = ['task,runs,achieved,best_cost,n_j,t_max']
    for task in sorted(byTask):
        items = byTask[task]
        solved = [r for r in items if r.achieved and r.cost is not None]
        if solved:
            best = min(solved, key=lambda r: r.cost)
            row = [task, len(items), True, float(best.cost), best.nJ, best.tMax]
        else:
            row = [task, len(items), False, None, None, None]
        lines.append(','.join(_fmt(v) for v in row))
    return '\n'.join(lines) + '\n'


def sweepCsvText(runs: T.List[RunSummary], seed: int = 0) -> str:
    ''' per joint weight wJ: mean and bootstrap interval of the cost, n_J and t_max of solved runs '''
    rng = np.random.default_rng(seed)
    byWeight: T.Dict[float, T.List[RunSummary]] = {}
    for r in runs:
        if r.wJ is None:
            continue
        byWeight.setdefault(float(r.wJ), []).append(r)

    header = ['w_j', 'runs', 'solved']
    for name in ('cost', 'n_j', 't_max'):
        header += [f'{name}_mean', f'{name}_ci_low', f'{name}_ci_high']
    lines = [','.join(header)]

    for wJ in sorted(byWeight):
        items = byWeight[wJ]
        solved = [r for r in items if r.achieved and r.cost is not None]
        row = [wJ, len(items), len(solved)]
        for values in ([r.cost for r in solved], [r.nJ for r in solved], [r.tMax for r in solved]):
            row += list(bootstrapCi(values, rng)) if values else [None, None, None]
        lines.append(','.join(_fmt(v) for v in row))
    return '\n'.join(lines) + '\n'


def writeReport(paths: T.List[str], outDir: str, seed: int = 0) -> T.Tuple[str, str]:
    ''' @return the paths of the summary and sweep CSV files '''
    runs = [loadRun(p) for p in paths]
    logging.info(f" * aggregating {len(runs)} runs")

    os.makedirs(outDir, exist_ok=True)
    summaryPath = os.path.join(outDir, 'summary.csv')
    sweepPath = os.path.join(outDir, 'sweep.csv')
    with open(summaryPath, 'wt', encoding='utf8', newline='') as f:
        f.write(summaryCsvText(runs))
    with open(sweepPath, 'wt', encoding='utf8', newline='') as f:
        f.write(sweepCsvText(runs, seed))
    return (summaryPath, sweepPath)
