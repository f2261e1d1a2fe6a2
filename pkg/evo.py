"""Parallel genetic algorithm tuning the OLSR configuration for energy.

Lower fitness is better. The master owns all evolutionary state and its own
random stream; evaluations run in a WorkerPool and are seeded only by
(master_seed, generation, index), so results do not depend on worker count.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import analysis
import olsr
import schema
import sim
from errors import ConfigurationError, EvolutionError
from scenario import Scenario
from workers import TaskFailure, WorkerPool

logger = logging.getLogger(__name__)

STREAMS = {"scenario": 0, "ga": 1, "simulation": 2}
DEFAULT_ADMISSION = 0.85
SIGMA_RANGE = (0.5, 1.0)
SCALE_RANGE = (0.5, 2.0)

HISTORY_COLUMNS = ["generation", "best_f", "avg_f", "best_energy", "best_pdr", "penalized_count"]


def stream_seed(master_seed: int, name: str, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, STREAMS[name], *key])


# --------- Fitness ---------
@dataclass(frozen=True)
class FitnessRecord:
    f: float
    f_raw: float
    penalized: bool
    energy: float
    pdr: Optional[float]
    metrics: Optional[schema.SimMetrics] = None
    error: Optional[str] = None


def fitness(energy: float, pdr: float, ctx: schema.FitnessContext) -> float:
    return ctx.delta + ctx.w1 * energy / ctx.e_rfc + ctx.w2 * pdr / ctx.pdr_max


def penalized_fitness(energy: float, pdr: float, ctx: schema.FitnessContext) -> float:
    gap = (ctx.pdr_rfc - pdr) / ctx.pdr_rfc
    return fitness(energy, pdr, ctx) + ctx.admission * gap * energy / ctx.e_rfc


def worst_fitness(ctx: Optional[schema.FitnessContext] = None) -> float:
    return 1.0 + (ctx.admission if ctx is not None else DEFAULT_ADMISSION)


def score(
    energy: float, pdr: float, ctx: schema.FitnessContext, metrics: Optional[schema.SimMetrics] = None
) -> FitnessRecord:
    f_raw = fitness(energy, pdr, ctx)
    if pdr < ctx.pdr_floor:
        return FitnessRecord(penalized_fitness(energy, pdr, ctx), f_raw, True, energy, pdr, metrics)
    return FitnessRecord(f_raw, f_raw, False, energy, pdr, metrics)


def failed_record(error: str, ctx: Optional[schema.FitnessContext] = None) -> FitnessRecord:
    worst = worst_fitness(ctx)
    return FitnessRecord(worst, worst, False, math.nan, None, None, error)


def calibrate_context(
    scenario: Scenario, nic: sim.NicProfile = sim.DEFAULT_NIC, seed: int = 0, **weights
) -> schema.FitnessContext:
    """Measure E_RFC and PDR_RFC with one RFC-default run of `scenario`."""
    metrics = sim.run_simulation(scenario, olsr.rfc_default(), nic, seed)
    if not metrics.pdr:
        raise ConfigurationError(f"RFC defaults deliver no data on {scenario.name}; cannot calibrate")
    ctx = schema.FitnessContext(e_rfc=metrics.e_total_mj, pdr_rfc=metrics.pdr, **weights)
    logger.info(f"calibrated on {scenario.name}: E_RFC={ctx.e_rfc:.2f} mJ, PDR_RFC={ctx.pdr_rfc:.2f}%")
    return ctx


# --------- Individuals and evaluation ---------
@dataclass
class Individual:
    genes: np.ndarray
    generation: int = 0
    index: int = 0
    fitness: Optional[FitnessRecord] = None

    @property
    def f(self) -> float:
        return self.fitness.f if self.fitness is not None else math.inf

    def config(self, space: olsr.ParamSpace = olsr.DEFAULT_SPACE) -> schema.OlsrConfig:
        return olsr.decode_genome(self.genes, space)


class EvalTask(NamedTuple):
    genes: Tuple[float, ...]
    generation: int
    index: int
    seed: int


@dataclass(frozen=True)
class SeedPolicy:
    """Per-evaluation simulation seeds; `fixed` reuses the calibration seed."""

    master_seed: int
    fixed: bool = False

    def seed_for(self, generation: int, index: int) -> int:
        if self.fixed:
            return self.master_seed
        return int(stream_seed(self.master_seed, "simulation", generation, index).generate_state(1)[0])

    def task(self, ind: Individual) -> EvalTask:
        return EvalTask(tuple(float(g) for g in ind.genes), ind.generation, ind.index, self.seed_for(ind.generation, ind.index))


class SimulationEvaluator:
    def __init__(
        self,
        scenario: Scenario,
        nic: sim.NicProfile,
        ctx: schema.FitnessContext,
        space: olsr.ParamSpace = olsr.DEFAULT_SPACE,
        pad_seconds: float = 0.0,
    ):
        self.scenario = scenario
        self.nic = nic
        self.ctx = ctx
        self.space = space
        self.pad_seconds = pad_seconds

    def __call__(self, task: EvalTask) -> FitnessRecord:
        started = time.perf_counter()
        try:
            config = olsr.decode_genome(task.genes, self.space)
            metrics = sim.run_simulation(self.scenario, config, self.nic, task.seed)
            record = score(metrics.e_total_mj, metrics.pdr or 0.0, self.ctx, metrics)
        except Exception as exc:
            logger.warning(f"evaluation ({task.generation}, {task.index}) failed: {exc}")
            record = failed_record(f"{type(exc).__name__}: {exc}", self.ctx)
        remaining = self.pad_seconds - (time.perf_counter() - started)
        if remaining > 0:
            time.sleep(remaining)
        return record


class SyntheticEvaluator:
    """Mean normalized distance to `target`; no simulation involved."""

    def __init__(self, target: Sequence[float], space: olsr.ParamSpace = olsr.DEFAULT_SPACE, pad_seconds: float = 0.0):
        self.target = np.asarray(target, dtype=float)
        self.space = space
        self.pad_seconds = pad_seconds

    def __call__(self, task: EvalTask) -> FitnessRecord:
        if self.pad_seconds > 0:
            time.sleep(self.pad_seconds)
        f = float(np.mean(np.abs(np.asarray(task.genes) - self.target) / self.space.span))
        return FitnessRecord(f, f, False, 0.0, None)


def evaluate(
    ind: Individual,
    scenario: Scenario,
    nic: sim.NicProfile,
    ctx: schema.FitnessContext,
    seed_policy: SeedPolicy,
    space: olsr.ParamSpace = olsr.DEFAULT_SPACE,
) -> FitnessRecord:
    return SimulationEvaluator(scenario, nic, ctx, space)(seed_policy.task(ind))


# --------- Initialization ---------
def diagonal_offsets(space: olsr.ParamSpace, pop_size: int, betas: np.ndarray) -> np.ndarray:
    """alpha[p, i] = ((p + beta[p, i]) / pop_size) * span_i."""
    p = np.arange(pop_size, dtype=float)[:, None]
    return (p + np.asarray(betas, dtype=float)) / pop_size * space.span


def diagonal_genes(space: olsr.ParamSpace, pop_size: int, betas: np.ndarray) -> np.ndarray:
    raw = space.rfc + diagonal_offsets(space, pop_size, betas)
    wrapped = space.lower + np.mod(raw - space.lower, space.span)
    return np.array([space.clip(row) for row in wrapped])


def diagonal_init(space: olsr.ParamSpace, pop_size: int, rng: np.random.Generator) -> List[Individual]:
    if pop_size < 1:
        raise EvolutionError("pop_size must be >= 1")
    genes = diagonal_genes(space, pop_size, rng.random((pop_size, space.size)))
    return [Individual(row, 0, p) for p, row in enumerate(genes)]


# --------- Variation ---------
def blend(p: np.ndarray, q: np.ndarray, sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return sigma * p + (1 - sigma) * q, (1 - sigma) * p + sigma * q


def arithmetic_crossover(
    parent_p: np.ndarray, parent_q: np.ndarray, sigma: float, space: olsr.ParamSpace = olsr.DEFAULT_SPACE
) -> Tuple[np.ndarray, np.ndarray]:
    """`parent_p` is the fitter parent and carries weight sigma in child 1."""
    child1, child2 = blend(parent_p, parent_q, sigma)
    return space.clip(child1), space.clip(child2)


def resample_genes(
    genes: np.ndarray, indices: Sequence[int], betas: Sequence[float], space: olsr.ParamSpace = olsr.DEFAULT_SPACE
) -> np.ndarray:
    out = np.array(genes, dtype=float)
    idx = list(indices)
    out[idx] = space.lower[idx] + np.asarray(betas, dtype=float) * space.span[idx]
    return space.clip(out)


Move = Callable[[np.ndarray, np.random.Generator, olsr.ParamSpace], np.ndarray]


class Movement(NamedTuple):
    name: str
    apply: Move


def _resample(*indices: int) -> Move:
    def move(genes, rng, space):
        return resample_genes(genes, indices, rng.random(len(indices)), space)

    return move


def _tie(target: int, source: int, factor: float = 3.0) -> Move:
    def move(genes, rng, space):
        out = np.array(genes, dtype=float)
        out[target] = factor * out[source]
        return space.clip(out)

    return move


def _scale(gene: int) -> Move:
    def move(genes, rng, space):
        out = np.array(genes, dtype=float)
        out[gene] *= rng.uniform(*SCALE_RANGE)
        return space.clip(out)

    return move


def _step_willingness(genes, rng, space):
    out = np.array(genes, dtype=float)
    out[olsr.WILLINGNESS_GENE] += rng.choice((-1, 1))
    return space.clip(out)


def _reset_one(genes, rng, space):
    out = np.array(genes, dtype=float)
    i = int(rng.integers(space.size))
    out[i] = space.rfc[i]
    return space.clip(out)


HELLO, REFRESH, TC, WILL, NEIGHB, MID, TOP, DUP = range(8)

MOVEMENTS: Tuple[Movement, ...] = tuple(
    [Movement(f"resample {name}", _resample(i)) for i, name in enumerate(olsr.GENE_ORDER)]
    + [
        Movement("resample hello+neighb_hold", _resample(HELLO, NEIGHB)),
        Movement("resample tc+top_hold", _resample(TC, TOP)),
        Movement("resample tc+mid_hold", _resample(TC, MID)),
        Movement("resample refresh+hello", _resample(REFRESH, HELLO)),
        Movement("neighb_hold = 3 x hello", _tie(NEIGHB, HELLO)),
        Movement("top_hold = 3 x tc", _tie(TOP, TC)),
        Movement("mid_hold = 3 x tc", _tie(MID, TC)),
        Movement("scale hello", _scale(HELLO)),
        Movement("scale tc", _scale(TC)),
        Movement("willingness +-1", _step_willingness),
        Movement("resample hold times", _resample(NEIGHB, MID, TOP, DUP)),
        Movement("resample intervals", _resample(HELLO, REFRESH, TC)),
        Movement("reset one gene to RFC", _reset_one),
        Movement("resample genome", _resample(*range(8))),
    ]
)


def mutate(
    ind: Individual,
    rng: np.random.Generator,
    space: olsr.ParamSpace = olsr.DEFAULT_SPACE,
    movement: Optional[int] = None,
) -> Individual:
    """Apply catalog move `movement` (1-based), drawn uniformly when omitted."""
    if movement is None:
        movement = int(rng.integers(len(MOVEMENTS))) + 1
    genes = MOVEMENTS[movement - 1].apply(ind.genes, rng, space)
    return Individual(genes, ind.generation, ind.index)


# --------- Selection ---------
def tournament_select(population: Sequence[Individual], rng: np.random.Generator) -> Individual:
    if len(population) < 2:
        raise EvolutionError("tournament needs at least 2 individuals")
    i, j = rng.choice(len(population), size=2, replace=False)
    winner = min((int(i), int(j)), key=lambda k: (population[k].f, k))
    return population[winner]


# --------- Main loop ---------
@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_f: float
    avg_f: float
    best_energy: float
    best_pdr: Optional[float]
    penalized_count: int


@dataclass
class EvolutionResult:
    best: Individual
    history: List[GenerationStats] = field(default_factory=list)
    evaluations: int = 0

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(stats) for stats in self.history], columns=HISTORY_COLUMNS)


def _best(population: Sequence[Individual]) -> Individual:
    return min(population, key=lambda ind: (ind.f, ind.index))


def _generation_stats(generation: int, population: Sequence[Individual]) -> GenerationStats:
    best = _best(population)
    return GenerationStats(
        generation=generation,
        best_f=best.f,
        avg_f=float(np.mean([ind.f for ind in population])),
        best_energy=best.fitness.energy,
        best_pdr=best.fitness.pdr,
        penalized_count=sum(ind.fitness.penalized for ind in population),
    )


def evolve(
    settings: schema.GaSettings,
    space: olsr.ParamSpace = olsr.DEFAULT_SPACE,
    scenario: Optional[Scenario] = None,
    nic: sim.NicProfile = sim.DEFAULT_NIC,
    ctx: Optional[schema.FitnessContext] = None,
    *,
    evaluator: Optional[Callable[[EvalTask], FitnessRecord]] = None,
    seed_policy: Optional[SeedPolicy] = None,
    on_evaluated: Optional[Callable[[Individual], None]] = None,
) -> EvolutionResult:
    if evaluator is None:
        if scenario is None or ctx is None:
            raise ConfigurationError("evolve needs a scenario and a fitness context or an explicit evaluator")
        evaluator = SimulationEvaluator(scenario, nic, ctx, space)
    seed_policy = seed_policy or SeedPolicy(settings.master_seed)
    rng = np.random.default_rng(stream_seed(settings.master_seed, "ga"))
    result = EvolutionResult(best=None)

    with WorkerPool(evaluator, settings.workers) as pool:

        def evaluate_batch(batch: List[Individual]) -> None:
            records = pool.map([seed_policy.task(ind) for ind in batch])
            for ind, record in zip(batch, records):
                if isinstance(record, TaskFailure):
                    logger.warning(f"worker failed on ({ind.generation}, {ind.index}): {record.error}")
                    record = failed_record(record.error, ctx)
                ind.fitness = record
                if on_evaluated is not None:
                    on_evaluated(ind)
            result.evaluations += len(batch)

        population = diagonal_init(space, settings.pop_size, rng)
        evaluate_batch(population)
        result.history.append(_generation_stats(0, population))

        for generation in range(1, settings.generations + 1):
            elites = sorted(population, key=lambda ind: (ind.f, ind.index))[: settings.elitism]
            offspring: List[np.ndarray] = []
            while len(offspring) < settings.pop_size - settings.elitism:
                a = tournament_select(population, rng)
                b = tournament_select(population, rng)
                fitter, other = (a, b) if (a.f, a.index) <= (b.f, b.index) else (b, a)
                if rng.random() < settings.p_c:
                    children = arithmetic_crossover(fitter.genes, other.genes, rng.uniform(*SIGMA_RANGE), space)
                else:
                    children = (fitter.genes.copy(), other.genes.copy())
                for genes in children:
                    child = Individual(genes)
                    if rng.random() < settings.p_m:
                        child = mutate(child, rng, space)
                    offspring.append(child.genes)

            newcomers = [
                Individual(genes, generation, settings.elitism + k)
                for k, genes in enumerate(offspring[: settings.pop_size - settings.elitism])
            ]
            evaluate_batch(newcomers)
            carried = [Individual(e.genes, generation, k, e.fitness) for k, e in enumerate(elites)]
            population = carried + newcomers

            stats = _generation_stats(generation, population)
            result.history.append(stats)
            logger.info(
                f"generation {generation}: best F={stats.best_f:.4f}, avg F={stats.avg_f:.4f}, "
                f"{stats.penalized_count} penalized"
            )

    result.best = _best(population)
    return result


# --------- Parameter-setting study ---------
GRID_COLUMNS = [
    "p_c", "p_m", "avg_f", "stdev_pct", "best_f", "avg_energy", "avg_pdr", "avg_gap_energy", "avg_gap_pdr",
]


def _nan_if_none(value: Optional[float]) -> float:
    return math.nan if value is None else float(value)


def parameter_setting_grid(
    pc_values: Sequence[float],
    pm_values: Sequence[float],
    repetitions: int,
    settings: schema.GaSettings,
    space: olsr.ParamSpace = olsr.DEFAULT_SPACE,
    scenario: Optional[Scenario] = None,
    nic: sim.NicProfile = sim.DEFAULT_NIC,
    ctx: Optional[schema.FitnessContext] = None,
    *,
    evaluator: Optional[Callable[[EvalTask], FitnessRecord]] = None,
    fixed_seed: bool = False,
) -> pd.DataFrame:
    """One evolve run per (p_c, p_m, repetition); repetition r uses master_seed + r."""
    if not pc_values or not pm_values or repetitions < 1:
        raise ConfigurationError("parameter grid needs p_c and p_m candidates and >= 1 repetition")
    rows: List[Dict[str, float]] = []
    for p_c in pc_values:
        for p_m in pm_values:
            bests: List[FitnessRecord] = []
            for rep in range(repetitions):
                run_settings = settings.model_copy(
                    update={"p_c": p_c, "p_m": p_m, "master_seed": settings.master_seed + rep}
                )
                policy = SeedPolicy(run_settings.master_seed, fixed_seed)
                result = evolve(
                    run_settings, space, scenario, nic, ctx, evaluator=evaluator, seed_policy=policy
                )
                bests.append(result.best.fitness)

            fs = np.array([b.f for b in bests])
            energies = np.array([b.energy for b in bests], dtype=float)
            pdrs = np.array([_nan_if_none(b.pdr) for b in bests])
            stdev = float(np.std(fs, ddof=1)) if len(fs) > 1 else 0.0
            row = {
                "p_c": p_c,
                "p_m": p_m,
                "avg_f": float(fs.mean()),
                "stdev_pct": 100.0 * stdev / float(fs.mean()) if fs.mean() else 0.0,
                "best_f": float(fs.min()),
                "avg_energy": float(energies.mean()),
                "avg_pdr": float(np.nanmean(pdrs)) if not np.all(np.isnan(pdrs)) else math.nan,
                "avg_gap_energy": math.nan,
                "avg_gap_pdr": math.nan,
            }
            if ctx is not None:
                row["avg_gap_energy"] = float(np.mean([analysis.gap_energy(e, ctx.e_rfc) for e in energies]))
                if not math.isnan(row["avg_pdr"]):
                    row["avg_gap_pdr"] = analysis.gap_pdr(row["avg_pdr"], ctx.pdr_rfc)
            logger.info(f"grid p_c={p_c} p_m={p_m}: avg F={row['avg_f']:.4f}, best F={row['best_f']:.4f}")
            rows.append(row)
    return pd.DataFrame(rows, columns=GRID_COLUMNS)
