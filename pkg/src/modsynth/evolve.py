import concurrent.futures
import functools
import io
import json
import math
import time
import typing as T

import numpy as np
from zenlog import log as logging

from modsynth.errors import InitFailure, ModsynthError
from modsynth.fitness import CostWeights, FitnessVector, ModelCache, cachedEvaluate, dMax, lexCompare
from modsynth.modlib import (EMPTY_GENE, Assembly, ModuleLibrary, assemble, canConnect, checkStructure,
                             mutationCandidates)
from modsynth.planner import PlanOptions, Trajectory
from modsynth.tasks import Task, plausiblySolvable
from modsynth.utils import deriveSeed


INIT_RETRIES = 100

# named random sub streams of a run seed
STREAM_INIT, STREAM_CROSSOVER, STREAM_MUTATION, STREAM_EVALUATION = range(1, 5)


class Chromosome:
    ''' fixed length gene vector, 0 being the empty slot '''

    def __init__(self, genes: T.Sequence[int]) -> None:
        self.genes = [int(g) for g in genes]

    def __len__(self) -> int:
        return len(self.genes)

    def __eq__(self, other) -> bool:
        return isinstance(other, Chromosome) and self.genes == other.genes

    def __hash__(self) -> int:
        return hash(tuple(self.genes))

    def copy(self) -> 'Chromosome':
        return Chromosome(self.genes)

    def __repr__(self) -> str:
        return f'<chromosome {self.genes}>'


class GaConfig:
    ''' genetic algorithm parameters '''

    def __init__(self, nc: int = 12, population: int = 25, generations: int = 200, pM: float = 0.1,
                 pJ: float = 0.9, parentFraction: float = 0.4, seed: int = 0, parallelism: int = 1,
                 cacheCapacity: int = 1000) -> None:
        if nc < 2:
            raise ValueError('chromosome length must be >= 2')
        if population < 2:
            raise ValueError('population must be >= 2')
        if generations < 1:
            raise ValueError('generations must be >= 1')
        if not 0.0 <= pM <= 1.0:
            raise ValueError('pM must be in [0, 1]')
        if not 0.0 <= pJ <= 1.0:
            raise ValueError('pJ must be in [0, 1]')
        if not 0.0 < parentFraction < 1.0:
            raise ValueError('parentFraction must be in (0, 1)')
        if parallelism < 1:
            raise ValueError('parallelism must be >= 1')

        self.nc = nc
        self.population = population
        self.generations = generations
        self.pM = pM
        self.pJ = pJ
        self.parentFraction = parentFraction
        self.seed = seed
        self.parallelism = parallelism
        self.cacheCapacity = cacheCapacity

    @property
    def nParents(self) -> int:
        return max(1, math.ceil(self.parentFraction * self.population))

    def toJson(self) -> T.Dict[str, T.Any]:
        return {
            'nc': self.nc,
            'population': self.population,
            'generations': self.generations,
            'p_m': self.pM,
            'p_j': self.pJ,
            'parent_fraction': self.parentFraction,
            'seed': self.seed,
            'parallelism': self.parallelism,
            'cache_capacity': self.cacheCapacity,
        }


#
# encoding
#

def chromosomeIds(library: ModuleLibrary, chromosome: Chromosome) -> T.Tuple[int, ...]:
    return tuple(library.geneToId[g] for g in chromosome.genes if g != EMPTY_GENE)


def decode(library: ModuleLibrary, chromosome: Chromosome) -> Assembly:
    ''' drops the empty genes and assembles the remaining modules in order '''
    return assemble(library, chromosomeIds(library, chromosome))


def encode(library: ModuleLibrary, ids: T.Sequence[int], nc: int) -> Chromosome:
    ''' base first, interior modules packed after it, end effector in the last gene '''
    ids = list(ids)
    if len(ids) < 2:
        raise ValueError('an assembly has at least a base and an end effector')
    if len(ids) > nc:
        raise ValueError(f'{len(ids)} modules do not fit in {nc} genes')

    genes = [library.idToGene[i] for i in ids]
    return Chromosome(genes[:-1] + [EMPTY_GENE] * (nc - len(genes)) + genes[-1:])


def isValid(library: ModuleLibrary, genes: T.Sequence[int]) -> bool:
    try:
        checkStructure([library.moduleForGene(g) for g in genes if g != EMPTY_GENE])
    except ModsynthError:
        return False
    if genes[0] == EMPTY_GENE or genes[-1] == EMPTY_GENE:
        return False
    return True


#
# operators
#

def _randomChromosome(library: ModuleLibrary, config: GaConfig, rng: np.random.Generator) -> T.Optional[Chromosome]:
    bases = library.bases()
    base = bases[int(rng.integers(len(bases)))]
    genes = [library.idToGene[base.id]]
    last = base

    for _ in range(config.nc - 2):
        followers = [m for m in library.regulars() if canConnect(last, m)]
        jointGroup = [library.idToGene[m.id] for m in followers if m.hasJoint]
        staticGroup = [library.idToGene[m.id] for m in followers if not m.hasJoint] + [EMPTY_GENE]

        group = jointGroup if jointGroup and rng.random() < config.pJ else staticGroup
        gene = group[int(rng.integers(len(group)))]
        genes.append(gene)
        if gene != EMPTY_GENE:
            last = library.moduleForGene(gene)

    eefs = [e for e in library.endEffectors() if canConnect(last, e)]
    if not eefs:
        return None
    genes.append(library.idToGene[eefs[int(rng.integers(len(eefs)))].id])
    return Chromosome(genes)


def initPopulation(library: ModuleLibrary, config: GaConfig, rng: np.random.Generator = None) -> T.List[Chromosome]:
    ''' weighted random sampling of connector valid chromosomes, joint modules drawn with probability pJ '''
    if not library.bases() or not library.endEffectors():
        raise InitFailure('the module library needs at least a base and an end effector')

    rng = rng or np.random.default_rng(deriveSeed(config.seed, STREAM_INIT))
    ret = []
    for _ in range(config.population):
        for _ in range(INIT_RETRIES):
            c = _randomChromosome(library, config, rng)
            if c is not None:
                ret.append(c)
                break
        else:
            raise InitFailure(f'no valid chromosome built after {INIT_RETRIES} attempts')
    return ret


def crossover(a: Chromosome, b: Chromosome, library: ModuleLibrary, rng: np.random.Generator) -> Chromosome:
    ''' single point crossover, trying every cut point in random order '''
    nc = len(a)
    for cut in rng.permutation(np.arange(1, nc)):
        genes = a.genes[:cut] + b.genes[cut:]
        if isValid(library, genes):
            return Chromosome(genes)
    return a.copy()


def mutate(chromosome: Chromosome, library: ModuleLibrary, pM: float, rng: np.random.Generator) -> Chromosome:
    ''' per gene mutation toward a connector compatible candidate '''
    genes = list(chromosome.genes)
    for pos in range(len(genes)):
        if rng.random() >= pM:
            continue

        candidates = sorted(mutationCandidates(library, genes, pos))
        if not candidates:
            continue

        previous = genes[pos]
        genes[pos] = candidates[int(rng.integers(len(candidates)))]
        if not isValid(library, genes):
            genes[pos] = previous
    return Chromosome(genes)


class Individual:
    ''' an evaluated chromosome '''

    def __init__(self, chromosome: Chromosome, ids: T.Tuple[int, ...], fitness, order: int) -> None:
        self.chromosome = chromosome
        self.ids = ids
        self.fitness = fitness
        self.order = order

    @property
    def nJ(self) -> int:
        return self.fitness.nJ

    @property
    def nM(self) -> int:
        return self.fitness.nM


def rankCompare(a: Individual, b: Individual, compare=lexCompare) -> int:
    ''' orders individuals best first: higher fitness, then fewer joints, fewer modules, insertion order '''
    c = compare(a.fitness, b.fitness)
    if c:
        return -c
    for va, vb in ((a.nJ, b.nJ), (a.nM, b.nM), (a.order, b.order)):
        if va != vb:
            return -1 if va < vb else 1
    return 0


def rankIndividuals(individuals: T.List[Individual], compare=lexCompare) -> T.List[Individual]:
    return sorted(individuals, key=functools.cmp_to_key(lambda a, b: rankCompare(a, b, compare)))


def select(individuals: T.List[Individual], config: GaConfig, compare=lexCompare) -> T.List[Individual]:
    ''' truncation selection of the ceil(parentFraction * p) best individuals '''
    n = max(1, math.ceil(config.parentFraction * len(individuals)))
    return rankIndividuals(individuals, compare)[:n]


#
# history
#

class GenerationRecord:
    def __init__(self, generation: int, best: Individual, populationBest: Individual,
                 depthHistogram: T.List[int], wallMs: float) -> None:
        self.generation = generation
        self.best = best
        self.populationBest = populationBest
        self.depthHistogram = depthHistogram
        self.wallMs = wallMs


def _csvValue(v) -> str:
    if v is None:
        return ''
    if isinstance(v, float):
        if math.isinf(v):
            return '-inf' if v < 0 else 'inf'
        return f'{v:.9g}'
    return str(v)


class RunHistory:
    ''' per generation best-so-far individual, population best, depth histogram and wall time '''

    def __init__(self, fields: T.Sequence[str] = ('f1', 'f2', 'f3', 'f4'), maxDepth: int = 4) -> None:
        self.fields = tuple(fields)
        self.maxDepth = maxDepth
        self.records: T.List[GenerationRecord] = []
        self.extra: T.Dict[str, T.Any] = {}
        # finalists of a second stage, baseline runs only
        self.stage2 = []

    def __len__(self) -> int:
        return len(self.records)

    @property
    def best(self) -> T.Optional[Individual]:
        return self.records[-1].best if self.records else None

    def csvText(self) -> str:
        out = io.StringIO()
        header = ['generation'] + [f'best_{f}' for f in self.fields] + ['depth_histogram', 'wall_ms']
        out.write(','.join(header) + '\n')
        for r in self.records:
            values = [str(r.generation)] + [_csvValue(v) for v in r.best.fitness.asTuple()]
            values += [';'.join(str(n) for n in r.depthHistogram), f'{r.wallMs:.1f}']
            out.write(','.join(values) + '\n')
        return out.getvalue()

    def toJson(self) -> T.Dict[str, T.Any]:
        return {
            'fields': list(self.fields),
            'generations': [{
                'generation': r.generation,
                'best_ids': list(r.best.ids),
                'best_genes': r.best.chromosome.genes,
                'best': r.best.fitness.toJson(),
                'population_best_ids': list(r.populationBest.ids),
                'population_best': r.populationBest.fitness.toJson(),
                'depth_histogram': r.depthHistogram,
                'wall_ms': r.wallMs,
            } for r in self.records],
            **self.extra,
        }

    def saveCsv(self, path: str) -> None:
        with open(path, 'wt', encoding='utf8', newline='') as f:
            f.write(self.csvText())

    def saveJson(self, path: str) -> None:
        with open(path, 'wt', encoding='utf8') as f:
            json.dump(self.toJson(), f, indent=2)


#
# generation loop
#

EvaluateFn = T.Callable[[T.Tuple[int, ...], int], T.Any]


def libraryReachEstimate(library: ModuleLibrary, nc: int) -> float:
    ''' reach estimate for assemblies of at most nc modules, each regular module counted at most once '''
    bases = [dMax(m) for m in library.bases()]
    eefs = [dMax(m) for m in library.endEffectors()]
    regulars = sorted((dMax(m) for m in library.regulars()), reverse=True)
    return max(bases, default=0.0) + max(eefs, default=0.0) + sum(regulars[:max(nc - 2, 0)])


def evolvePopulation(library: ModuleLibrary, config: GaConfig, evaluateOne: EvaluateFn, compare=lexCompare,
                     history: RunHistory = None, timing: bool = True) -> T.Tuple[RunHistory, T.Dict]:
    ''' the steady state loop: evaluate, select, refill by crossover, mutate the offspring

        @param evaluateOne: (module ids, seed) -> fitness
        @return the history and the best individual seen for every distinct id sequence
    '''
    history = history or RunHistory()
    crossRng = np.random.default_rng(deriveSeed(config.seed, STREAM_CROSSOVER))
    mutRng = np.random.default_rng(deriveSeed(config.seed, STREAM_MUTATION))
    population = initPopulation(library, config)

    best = None
    seen: T.Dict[T.Tuple[int, ...], Individual] = {}
    executor = None
    if config.parallelism > 1:
        executor = concurrent.futures.ThreadPoolExecutor(max_workers=config.parallelism)

    try:
        for gen in range(config.generations):
            start = time.perf_counter()
            idsList = [chromosomeIds(library, c) for c in population]
            seeds = [deriveSeed(config.seed, STREAM_EVALUATION, gen, i) for i in range(len(population))]
            if executor is not None:
                fitnesses = list(executor.map(evaluateOne, idsList, seeds))
            else:
                fitnesses = [evaluateOne(ids, s) for ids, s in zip(idsList, seeds)]

            individuals = [Individual(c, ids, f, gen * len(population) + i)
                           for i, (c, ids, f) in enumerate(zip(population, idsList, fitnesses))]
            ranked = rankIndividuals(individuals, compare)
            if best is None or rankCompare(ranked[0], best, compare) < 0:
                best = ranked[0]

            for ind in individuals:
                known = seen.get(ind.ids)
                if known is None or rankCompare(ind, known, compare) < 0:
                    seen[ind.ids] = ind
                if ind is not best:
                    ind.fitness.trajectory = None

            histogram = [0] * history.maxDepth
            for f in fitnesses:
                histogram[f.depth - 1] += 1

            parents = select(individuals, config, compare)
            if gen < config.generations - 1:
                population = _nextPopulation(library, config, parents, crossRng, mutRng)

            wallMs = (time.perf_counter() - start) * 1000.0 if timing else 0.0
            history.records.append(GenerationRecord(gen, best, ranked[0], histogram, wallMs))
            logging.info(f" * generation {gen}: best={best.fitness} ids={list(best.ids)} depths={histogram}")
    finally:
        if executor is not None:
            executor.shutdown()

    return (history, seen)


def _nextPopulation(library: ModuleLibrary, config: GaConfig, parents: T.List[Individual],
                    crossRng: np.random.Generator, mutRng: np.random.Generator) -> T.List[Chromosome]:
    # parents are kept as they are, only the offspring are mutated
    ret = [p.chromosome for p in parents]
    while len(ret) < config.population:
        if len(parents) > 1:
            i, j = crossRng.choice(len(parents), size=2, replace=False)
        else:
            i = j = 0
        child = crossover(parents[i].chromosome, parents[j].chromosome, library, crossRng)
        ret.append(mutate(child, library, config.pM, mutRng))
    return ret


def run(library: ModuleLibrary, task: Task, config: GaConfig = None, weights: CostWeights = None,
        opts: PlanOptions = None, timing: bool = True,
        cache: ModelCache = None) -> T.Tuple[T.Optional[Assembly], T.Optional[Trajectory], RunHistory]:
    ''' optimizes the module composition for task with the lexicographic fitness

        The trajectory is the one computed while evaluating the best individual, it is not planned again
        once the run is over.

        @return (best assembly, its trajectory or None, the run history)
    '''
    config = config or GaConfig()
    weights = weights or CostWeights()
    opts = opts or PlanOptions()
    cache = cache or ModelCache(library, config.cacheCapacity)

    if not plausiblySolvable(task, libraryReachEstimate(library, config.nc)):
        logging.warning(f"task {task.name} looks unsolvable with this library, running anyway")

    def evaluateOne(ids, seed) -> FitnessVector:
        return cachedEvaluate(cache, ids, task, weights, opts, seed)

    history, _ = evolvePopulation(library, config, evaluateOne, lexCompare, RunHistory(), timing)
    history.extra['cache'] = cache.stats()

    best = history.best
    if best is None:
        return (None, None, history)
    return (assemble(library, best.ids), best.fitness.trajectory, history)
