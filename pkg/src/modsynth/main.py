#! /usr/bin/env python3
import configparser
import getopt
import json
import os
import pathlib
import sys
import typing as T

from zenlog import log as logging

import modsynth
from modsynth.baseline import BaselineWeights, runBaseline, stage2CsvText
from modsynth.errors import ModsynthError
from modsynth.evolve import GaConfig, libraryReachEstimate, run as runGa
from modsynth.fitness import CostWeights, evaluate
from modsynth.kinematics import IkOptions
from modsynth.modlib import assemble, loadLibrary
from modsynth.planner import PlanOptions, saveTrajectory
from modsynth.report import writeReport
from modsynth.tasks import generateSynthetic1, generateSynthetic2, loadTask, plausiblySolvable, saveTask, \
    tolerancePreset
from modsynth.utils import checkModsynthVersion, deriveSeed, findDataFile


COMMANDS = ('optimize', 'baseline', 'gen-tasks', 'evaluate', 'report',)
SETTINGS = ('synthetic1', 'synthetic2',)
LOG_LEVELS = ('debug', 'info', 'warning', 'error', 'critical',)
GEN_TASK_ATTEMPTS = 100

EXIT_OK, EXIT_INPUT_ERROR, EXIT_NO_SOLUTION = 0, 1, 2


def doHelp(args, is_error) -> int:
    ''' '''
    print(f"usage: {args[0]} <command> [options] [<run dir>...]")
    print("commands:")
    print("\toptimize: synthesizes the best module composition for a task")
    print("\tbaseline: same with the hierarchical elimination baseline")
    print("\tgen-tasks: generates synthetic tasks")
    print("\tevaluate: evaluates the fitness of one composition")
    print("\treport: aggregates the given run directories")
    print("options:")
    print("\t--help: shows this help")
    print("\t--version: prints the version")
    print("\t--debug: show verbose information")
    print("\t--config=<path>: an options file, keys of its [modsynth] section are read as options")
    print("\t--modules=<path>: the module library (defaults to the fixture library)")
    print("\t--task=<path>: the task file")
    print("\t--preset=<name>: overrides the task tolerances (sphere_like, partially_symmetric, arbitrary)")
    print("\t--seed=<int>: the run seed (defaults to 0)")
    print("\t--out=<dir>: where artifacts are written (defaults to the current directory)")
    print("\t--parallelism=<int>: fitness evaluation workers")
    print("\t--generations=<int>, --population=<int>, --nc=<int>: genetic algorithm sizes")
    print("\t--p-m=<float>, --p-j=<float>, --parent-fraction=<float>: genetic algorithm rates")
    print("\t--timeout-s=<float>: planner timeout per goal")
    print("\t--plan-iterations=<int>: planner iteration budget per goal")
    print("\t--cost=<cJ,cM,ct>: task cost coefficients (defaults to 1,0.2,1)")
    print("\t--wj=<float>: task cost wJ * nJ + (5 - wJ) * t_max")
    print("\t--baseline-weights=<k1,...,k8>: baseline fitness weights")
    print("\t--setting=<synthetic1|synthetic2>, --d=<int>, --count=<int>: task generation")
    print("\t--ids=<id,id,...>: module ids of the composition to evaluate")
    print("\t--no-timing: writes zero wall times so that run artifacts are comparable")
    if is_error:
        return EXIT_INPUT_ERROR

    return EXIT_OK


class ModsynthConfig:
    ''' modsynth run configuration '''

    def __init__(self) -> None:
        self.debug = False
        self.command = None
        self.configFile = None
        self.modules = 'fixture'
        self.task = None
        self.preset = None
        self.seed = 0
        self.out = pathlib.PurePath(os.getcwd())
        self.timing = True

        self.nc = 12
        self.population = 25
        self.generations = 200
        self.pM = 0.1
        self.pJ = 0.9
        self.parentFraction = 0.4
        self.parallelism = 1
        self.cacheCapacity = 1000

        self.timeout = 3.0
        self.planIterations = 5000
        self.cost = (1.0, 0.2, 1.0)
        self.wJ = None
        self.baselineK = None

        self.setting = 'synthetic1'
        self.d = 3
        self.count = 20
        self.ids = None
        self.inputs = []

        #
        # data files are searched:
        #   * as given,
        #   * then in the paths provided in MODSYNTH_PATH,
        #   * then in the modsynth pocket
        self.pocketDir = pathlib.Path(__file__).parent / 'pocket'
        self.searchPaths = os.environ.get('MODSYNTH_PATH', '').split(':') + [str(self.pocketDir)]

    def findFile(self, fname: str, what: str) -> str:
        ret = findDataFile(fname, self.searchPaths)
        if ret is None:
            raise ModsynthError(f'{what} {fname} not found')
        return ret

    def gaConfig(self) -> GaConfig:
        return GaConfig(self.nc, self.population, self.generations, self.pM, self.pJ, self.parentFraction,
                        self.seed, self.parallelism, self.cacheCapacity)

    def planOptions(self) -> PlanOptions:
        return PlanOptions(timeout=self.timeout, maxIterations=self.planIterations, ikOptions=IkOptions())

    def costWeights(self) -> CostWeights:
        if self.wJ is not None:
            return CostWeights.forJointWeight(self.wJ)
        return CostWeights(*self.cost)

    def baselineWeights(self) -> BaselineWeights:
        return BaselineWeights() if self.baselineK is None else BaselineWeights(self.baselineK)

    def toJson(self) -> T.Dict[str, T.Any]:
        ''' every parameter of the run, defaults included '''
        return {
            'version': modsynth.__version__,
            'command': self.command,
            'modules': self.modules,
            'task': self.task,
            'preset': self.preset,
            'seed': self.seed,
            'timing': self.timing,
            'ga': self.gaConfig().toJson(),
            'cost': self.costWeights().toJson(),
            'w_j': self.wJ,
            'plan': self.planOptions().toJson(),
            'baseline_weights': self.baselineWeights().toJson(),
        }


_ARGS_CONTINUE, _ARGS_HELP, _ARGS_VERSION, _ARGS_ERROR = range(4)

_LONG_OPTIONS = [
    "help", "version", "debug", "config=", "modules=", "task=", "preset=", "seed=", "out=", "parallelism=",
    "generations=", "population=", "nc=", "p-m=", "p-j=", "parent-fraction=", "timeout-s=", "plan-iterations=",
    "cost=", "wj=", "baseline-weights=", "setting=", "d=", "count=", "ids=", "no-timing",
]


def _floats(value: str, n: int, what: str) -> T.Tuple[float, ...]:
    ret = tuple(float(v) for v in value.split(','))
    if len(ret) != n:
        raise ValueError(f'{what} expects {n} comma separated values')
    return ret


def treatArgOrOption(config: ModsynthConfig, option: str, value: str, fromCmdLine: bool) -> int:
    if not fromCmdLine:
        option = '--' + option

        # flags in an options file carry a boolean value
        if option in ('--debug', '--no-timing',) and value.lower() in ('false', 'off', 'no', '0',):
            return _ARGS_CONTINUE

    if option in ('-h', '--help',):
        return _ARGS_HELP

    if option in ('-v', '--version',):
        print(modsynth.__version__)
        return _ARGS_VERSION

    try:
        if option in ('-d', '--debug',):
            logging.level('debug')
            config.debug = True
        elif option in ('--requires',):
            if fromCmdLine:
                logging.error("requires can only be given in an options file")
                return _ARGS_ERROR
            if not checkModsynthVersion(value, modsynth.__version__):
                logging.error(f"this options file requires modsynth {value}, running {modsynth.__version__}")
                return _ARGS_ERROR
        elif option in ('--config',):
            if not fromCmdLine:
                logging.error("options file can't be given in an options file")
                return _ARGS_ERROR
            config.configFile = value
        elif option in ('--modules',):
            config.modules = value
        elif option in ('--task',):
            config.task = value
        elif option in ('--preset',):
            tolerancePreset(value)
            config.preset = value
        elif option in ('--seed',):
            config.seed = int(value)
        elif option in ('--out',):
            config.out = pathlib.PurePath(os.path.abspath(value))
        elif option in ('--parallelism',):
            config.parallelism = int(value)
        elif option in ('--generations',):
            config.generations = int(value)
        elif option in ('--population',):
            config.population = int(value)
        elif option in ('--nc',):
            config.nc = int(value)
        elif option in ('--p-m',):
            config.pM = float(value)
        elif option in ('--p-j',):
            config.pJ = float(value)
        elif option in ('--parent-fraction',):
            config.parentFraction = float(value)
        elif option in ('--timeout-s',):
            config.timeout = float(value)
        elif option in ('--plan-iterations',):
            config.planIterations = int(value)
        elif option in ('--cost',):
            config.cost = _floats(value, 3, 'cost')
        elif option in ('--wj',):
            config.wJ = float(value)
        elif option in ('--baseline-weights',):
            config.baselineK = _floats(value, 8, 'baseline weights')
        elif option in ('--setting',):
            if value not in SETTINGS:
                logging.error(f"invalid setting {value}, expecting one of {', '.join(SETTINGS)}")
                return _ARGS_ERROR
            config.setting = value
        elif option in ('--d',):
            config.d = int(value)
        elif option in ('--count',):
            config.count = int(value)
        elif option in ('--ids',):
            config.ids = [int(v) for v in value.split(',')]
        elif option in ('--no-timing',):
            config.timing = False
        else:
            logging.error(f"unknown option {option}")
            return _ARGS_ERROR
    except ValueError as e:
        logging.error(f"invalid value '{value}' for {option}: {e}")
        return _ARGS_ERROR

    return _ARGS_CONTINUE


def readOptionsFile(config: ModsynthConfig) -> bool:
    ''' injects the keys of the [modsynth] section as options '''
    logging.debug(f'reading options from {config.configFile}')
    if not os.path.isfile(config.configFile):
        logging.error(f'options file {config.configFile} not found')
        return False

    options = configparser.ConfigParser()
    options.optionxform = str
    try:
        options.read(config.configFile, encoding='utf8')
    except configparser.Error as e:
        logging.error(f'invalid options file {config.configFile}: {e}')
        return False

    if 'modsynth' not in options.sections():
        return True

    for option, value in options['modsynth'].items():
        argRes = treatArgOrOption(config, option, value, False)
        if argRes != _ARGS_CONTINUE:
            logging.error(f'invalid item {option}={value} in modsynth section')
            return False
    return True


def _writeJson(path: str, data) -> None:
    with open(path, 'wt', encoding='utf8') as f:
        json.dump(data, f, indent=2)
        f.write('\n')


def _loadInputs(config: ModsynthConfig):
    library = loadLibrary(config.findFile(config.modules, 'module library'))
    if not library.checkOptimizable():
        raise ModsynthError('the module library can not be optimized')

    if config.task is None:
        raise ModsynthError('a task is required (--task)')
    task = loadTask(config.findFile(config.task, 'task'))
    if config.preset:
        task = task.withTolerances(tolerancePreset(config.preset, task.tol.tP))
    return (library, task)


def _writeRunArtifacts(config: ModsynthConfig, task, assembly, trajectory, history, fitnessJson) -> int:
    os.makedirs(config.out, exist_ok=True)
    weights = config.costWeights()
    achieved = trajectory is not None

    solution = {
        'task': task.name,
        'achieved': achieved,
        'ids': list(assembly.ids) if assembly is not None else None,
        'module_names': [m.name for m in assembly.modules] if assembly is not None else None,
        'n_j': assembly.nJ if assembly is not None else None,
        'n_m': assembly.nM if assembly is not None else None,
        'fitness': fitnessJson,
        'f4': None,
        'cost': None,
        't_max': None,
    }
    if achieved:
        cost = weights.taskCost(assembly.nJ, assembly.nM, trajectory.tMax)
        solution.update({'f4': -cost, 'cost': cost, 't_max': trajectory.tMax})
        saveTrajectory(trajectory, os.path.join(config.out, 'trajectory.json'))
    else:
        solution['f4'] = '-inf'

    _writeJson(os.path.join(config.out, 'solution.json'), solution)
    _writeJson(os.path.join(config.out, 'config_resolved.json'), config.toJson())
    history.saveCsv(os.path.join(config.out, 'history.csv'))
    history.saveJson(os.path.join(config.out, 'history.json'))

    if not achieved:
        logging.info(" * no feasible solution found")
        return EXIT_NO_SOLUTION

    logging.info(f" * best composition {list(assembly.ids)} cost={solution['cost']:.4f} "
                 f"n_J={assembly.nJ} t_max={trajectory.tMax:.3f}s")
    return EXIT_OK


def cmdOptimize(config: ModsynthConfig) -> int:
    library, task = _loadInputs(config)
    logging.info(f"==> optimizing {task.name} with {len(library)} modules")
    assembly, trajectory, history = runGa(library, task, config.gaConfig(), config.costWeights(),
                                          config.planOptions(), config.timing)
    fitnessJson = history.best.fitness.toJson() if history.best else None
    return _writeRunArtifacts(config, task, assembly, trajectory, history, fitnessJson)


def cmdBaseline(config: ModsynthConfig) -> int:
    library, task = _loadInputs(config)
    logging.info(f"==> baseline on {task.name} with {len(library)} modules")
    assembly, trajectory, history = runBaseline(library, task, config.gaConfig(), config.baselineWeights(),
                                                config.costWeights(), config.planOptions(), config.timing)

    os.makedirs(config.out, exist_ok=True)
    with open(os.path.join(config.out, 'stage2.csv'), 'wt', encoding='utf8', newline='') as f:
        f.write(stage2CsvText(history.stage2))

    fitnessJson = history.best.fitness.toJson() if history.best else None
    return _writeRunArtifacts(config, task, assembly, trajectory, history, fitnessJson)


def cmdGenTasks(config: ModsynthConfig) -> int:
    if config.d < 1 or config.count < 1:
        logging.error('d and count must be >= 1')
        return EXIT_INPUT_ERROR

    library = loadLibrary(config.findFile(config.modules, 'module library'))
    reach = libraryReachEstimate(library, config.nc)
    generator = generateSynthetic1 if config.setting == 'synthetic1' else generateSynthetic2

    os.makedirs(config.out, exist_ok=True)
    for i in range(config.count):
        for attempt in range(GEN_TASK_ATTEMPTS):
            task = generator(config.d, deriveSeed(config.seed, i, attempt))
            if plausiblySolvable(task, reach):
                break
            logging.debug(f'   task {i} attempt {attempt} rejected')
        else:
            logging.error(f'no plausible task {i} after {GEN_TASK_ATTEMPTS} attempts')
            return EXIT_INPUT_ERROR

        path = os.path.join(config.out, f'{config.setting}-d{config.d}-{i:02d}.json')
        saveTask(task, path)
        logging.debug(f' * wrote {path}')

    logging.info(f" * {config.count} {config.setting} tasks written in {config.out}")
    return EXIT_OK


def cmdEvaluate(config: ModsynthConfig) -> int:
    if not config.ids:
        logging.error('a module id sequence is required (--ids)')
        return EXIT_INPUT_ERROR

    library, task = _loadInputs(config)
    try:
        assembly = assemble(library, config.ids)
    except KeyError as e:
        raise ModsynthError(str(e)) from e

    weights = config.costWeights()
    fv = evaluate(assembly, task, weights, config.planOptions(), config.seed)
    output = {
        'ids': list(assembly.ids),
        'fitness': fv.toJson(),
        'depth': fv.depth,
        'stage_ms': {k: (v * 1000.0 if config.timing else 0.0) for k, v in fv.stageTimes.items()},
    }
    if fv.depth == 4 and fv.trajectory is not None:
        output['cost_breakdown'] = {
            'n_j': assembly.nJ,
            'n_m': assembly.nM,
            't_max': fv.trajectory.tMax,
            'setup': weights.wS * weights.setupCost(assembly.nJ, assembly.nM),
            'process': weights.wP * weights.processCost(fv.trajectory.tMax),
            'total': fv.cost,
        }
    print(json.dumps(output, indent=2))
    return EXIT_OK


def cmdReport(config: ModsynthConfig) -> int:
    if not config.inputs:
        logging.error('report expects at least one run directory')
        return EXIT_INPUT_ERROR

    summary, sweep = writeReport(config.inputs, str(config.out), config.seed)
    logging.info(f" * wrote {summary} and {sweep}")
    return EXIT_OK


_COMMAND_FNS = {
    'optimize': cmdOptimize,
    'baseline': cmdBaseline,
    'gen-tasks': cmdGenTasks,
    'evaluate': cmdEvaluate,
    'report': cmdReport,
}


def run(args: T.List[str]) -> int:
    ''' '''
    level = os.environ.get('MODSYNTH_LOG', 'info').lower()
    logging.level(level if level in LOG_LEVELS else 'info')

    config = ModsynthConfig()

    try:
        opts, extraArgs = getopt.gnu_getopt(args[1:], "hdv", _LONG_OPTIONS)
    except getopt.GetoptError as e:
        logging.error(str(e))
        return doHelp(args, True)

    # the options file first, so that the command line wins
    for option, value in opts:
        if option == '--config':
            config.configFile = value
    if config.configFile and not readOptionsFile(config):
        return EXIT_INPUT_ERROR

    for option, value in opts:
        argRes = treatArgOrOption(config, option, value, True)
        if argRes in (_ARGS_ERROR, _ARGS_HELP,):
            return doHelp(args, argRes == _ARGS_ERROR)
        if argRes == _ARGS_VERSION:
            return EXIT_OK

    if not extraArgs or extraArgs[0] not in COMMANDS:
        logging.error(f"expecting a command among {', '.join(COMMANDS)}")
        return doHelp(args, True)

    config.command = extraArgs[0]
    config.inputs = extraArgs[1:]

    logging.info(f"=== modsynth {config.command} ===")
    try:
        # validates the numeric parameters before anything runs
        config.gaConfig()
        config.costWeights()
        config.baselineWeights()
        return _COMMAND_FNS[config.command](config)
    except (ModsynthError, ValueError, OSError) as e:
        logging.error(f"{config.command}: {e}")
        return EXIT_INPUT_ERROR


def main() -> int:
    ''' '''
    return run(sys.argv)


if __name__ == '__main__':
    sys.exit(main())
