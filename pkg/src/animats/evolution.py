"""Tournament-selection GA over genome populations.

Each generation every genome is scored by ``genome_fitness``; the next
population is built from tournament winners, each copied and mutated. There is
no elitism.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .evaluation import FitnessReport, TrialConfig, genome_fitness
from .genome import (INITIAL_SIZE, Genome, MutationParams, mutate, new_random_genome,
                     load_genomes, save_genomes, seed_start_codons)
from .world import Environment, default_environment

log = logging.getLogger(__name__)

INIT_STREAM = 10
SELECTION_STREAM = 11

CONDITIONS = {"G_single": 1, "G_0.25": 18, "G_0.50": 36, "G_0.75": 54, "G_1.00": 72}

STATS_COLUMNS = ("generation", "mean_F", "max_F", "sem_F", "mean_length")


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 100
    tournament_size: int = 5
    generations: int = 10_000
    swarm_size: int = 1
    n_trials: int = 30
    seed: int = 0
    initial_size: int = INITIAL_SIZE
    # start codons planted in each generation-0 genome; 0 gives fully random genomes
    initial_gates: int = 10
    checkpoint_every: int = 100
    workers: int = 1

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be positive")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must lie in [1, population_size]")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")
        if self.n_trials < 1:
            raise ValueError("n_trials must be positive")
        if self.initial_gates < 0:
            raise ValueError("initial_gates must be non-negative")


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    mean: float
    max: float
    sem: float
    mean_length: float

    def row(self):
        return (self.generation, repr(self.mean), repr(self.max), repr(self.sem),
                repr(self.mean_length))


@dataclass
class EvolutionRecord:
    stats: list[GenerationStats] = field(default_factory=list)
    final_population: list[Genome] = field(default_factory=list)
    final_fitness: list[float] = field(default_factory=list)
    checkpoints: list[int] = field(default_factory=list)

    @property
    def mean_fitness(self) -> np.ndarray:
        return np.array([s.mean for s in self.stats])

    @property
    def max_fitness(self) -> np.ndarray:
        return np.array([s.max for s in self.stats])


class EvolutionIOError(OSError):
    pass


def tournament_select(fitnesses: Sequence[float], k: int, rng: np.random.Generator) -> int:
    """Draw k indices with replacement and return the fittest.

    Ties go to the earliest draw.
    """
    n = len(fitnesses)
    if n == 0:
        raise ValueError("cannot select from an empty population")
    if k < 1:
        raise ValueError("tournament size must be at least 1")
    drawn = rng.integers(0, n, size=k)
    scores = np.asarray(fitnesses, dtype=float)[drawn]
    return int(drawn[int(np.argmax(scores))])


def next_generation(population: Sequence[Genome], fitnesses: Sequence[float],
                    params: MutationParams, rng: np.random.Generator,
                    tournament_size: int = 5) -> list[Genome]:
    offspring = []
    for _ in range(len(population)):
        parent = population[tournament_select(fitnesses, tournament_size, rng)]
        offspring.append(mutate(parent, params, rng))
    return offspring


def evaluate_population(population: Sequence[Genome], env: Environment, trial: TrialConfig,
                        n_trials: int, seed: int, generation: int,
                        executor: ThreadPoolExecutor | None = None) -> list[FitnessReport]:
    def score(i: int) -> FitnessReport:
        return genome_fitness(population[i], env, trial, n_trials, seed=seed,
                              generation=generation, genome_index=i)

    if executor is None:
        return [score(i) for i in range(len(population))]
    return list(executor.map(score, range(len(population))))


def _stats(generation: int, population: Sequence[Genome], fitness: np.ndarray) -> GenerationStats:
    sem = float(fitness.std(ddof=1) / np.sqrt(fitness.size)) if fitness.size > 1 else 0.0
    return GenerationStats(generation, float(fitness.mean()), float(fitness.max()), sem,
                           float(np.mean([len(g) for g in population])))


def _stats_header(fh, seed: int) -> csv.writer:
    fh.write(f"# animats {__version__} seed={seed}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(STATS_COLUMNS)
    return writer


def _read_stats(path: Path, before: int) -> list[GenerationStats]:
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in list(csv.reader(lines))[1:]:
        if int(row[0]) < before:
            rows.append(GenerationStats(int(row[0]), *(float(v) for v in row[1:])))
    return rows


def _latest_checkpoint(out: Path) -> tuple[int, list[Genome]] | None:
    files = sorted((out / "checkpoints").glob("gen_*.txt"))
    for path in reversed(files):
        try:
            return int(path.stem[4:]), load_genomes(path)
        except (ValueError, OSError):
            log.warning("skipping unreadable checkpoint %s", path)
    return None


def evolve(cfg: GAConfig, env: Environment | None = None, trial: TrialConfig | None = None,
           params: MutationParams = MutationParams(), run_dir: str | Path | None = None,
           progress: Callable[[GenerationStats], None] | None = None,
           resume: bool = False) -> EvolutionRecord:
    """Run one evolution experiment.

    With ``run_dir`` set, writes ``stats.csv``, a checkpoint population every
    ``cfg.checkpoint_every`` generations under ``checkpoints/``, and the final
    population with its fitness values.

    ``resume=True`` restarts from the newest checkpoint in ``run_dir``. All
    random streams are keyed by generation, so a resumed run writes the same
    bytes as an uninterrupted one.
    """
    env = env or default_environment()
    trial = trial or TrialConfig(swarm_size=cfg.swarm_size)
    if trial.swarm_size != cfg.swarm_size:
        trial = TrialConfig(trial.steps, trial.timeout, trial.reward, trial.penalty,
                            cfg.swarm_size, trial.seed)
    record = EvolutionRecord()
    init_rng = np.random.default_rng([cfg.seed, INIT_STREAM])
    population = [seed_start_codons(new_random_genome(cfg.initial_size, init_rng, params),
                                    cfg.initial_gates, init_rng)
                  for _ in range(cfg.population_size)]

    out = Path(run_dir) if run_dir is not None else None
    first = 0
    if resume and out is not None and (out / "stats.csv").exists():
        found = _latest_checkpoint(out)
        if found is not None and found[0] <= cfg.generations:
            first, population = found
            record.stats = _read_stats(out / "stats.csv", first)
            record.checkpoints = list(range(0, first, cfg.checkpoint_every))
            log.info("resuming %s at generation %d", out, first)

    stats_fh = writer = None
    executor = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    generation = first
    try:
        if out is not None:
            (out / "checkpoints").mkdir(parents=True, exist_ok=True)
            stats_fh = open(out / "stats.csv", "w", newline="")
            writer = _stats_header(stats_fh, cfg.seed)
            writer.writerows(s.row() for s in record.stats)
        for generation in range(first, cfg.generations + 1):
            reports = evaluate_population(population, env, trial, cfg.n_trials, cfg.seed,
                                          generation, executor)
            fitness = np.array([r.mean for r in reports])
            stats = _stats(generation, population, fitness)
            record.stats.append(stats)
            if writer is not None:
                writer.writerow(stats.row())
                stats_fh.flush()
            if progress is not None:
                progress(stats)
            if cfg.checkpoint_every and generation % cfg.checkpoint_every == 0:
                record.checkpoints.append(generation)
                if out is not None:
                    save_genomes(out / "checkpoints" / f"gen_{generation:06d}.txt", population)
            if generation == cfg.generations:
                record.final_population = list(population)
                record.final_fitness = fitness.tolist()
                break
            rng = np.random.default_rng([cfg.seed, SELECTION_STREAM, generation])
            population = next_generation(population, fitness, params, rng, cfg.tournament_size)
        if out is not None:
            save_genomes(out / "final_population.txt", record.final_population)
            with open(out / "final_fitness.csv", "w", newline="") as fh:
                fh.write(f"# animats {__version__} seed={cfg.seed}\n")
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("genome_id", "F"))
                w.writerows((i, repr(f)) for i, f in enumerate(record.final_fitness))
    except OSError as exc:
        raise EvolutionIOError(f"I/O failure at generation {generation}: {exc}") from exc
    finally:
        if stats_fh is not None:
            stats_fh.close()
        if executor is not None:
            executor.shutdown()
    return record
