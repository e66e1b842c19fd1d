"""Experiment configuration and the operations behind the command line.

A configuration is a text file of ``key = value`` lines with ``#`` comments.
Every run directory starts with a ``config.txt`` snapshot holding the full
resolved configuration, so a run can be repeated from that file alone.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .analysis import (TRANSITION_SIZES, VALID_CODES, bootstrap_ci, brain_graph_metrics,
                       generalizability_sweep, kruskal_wallis, occupancy_heatmap,
                       pairwise_mann_whitney, state_transition_counts,
                       transition_matrix)
from .brain import decode_gates, dump_gates_jsonl, effective_connectivity
from .evaluation import TrialConfig, TrialLog, read_trial_log, run_trial
from .evolution import CONDITIONS, GAConfig, evolve
from .genome import Genome, MutationParams, load_genomes
from .world import Environment, default_environment, load_environment

log = logging.getLogger(__name__)

SNAPSHOT = "config.txt"
REPLICATE_FILES = ("stats.csv", "final_population.txt", "final_fitness.csv")
TRIAL_LOG = "trial_log.csv"
# keys that change how a run executes but not what it computes
EXECUTION_KEYS = frozenset({"workers", "output"})


class ConfigError(ValueError):
    pass


class MissingArtifactError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    condition: str = "G_single"
    replicates: int = 30
    seed: int = 0
    map: str = "default"
    output: str = "runs"
    workers: int = 1
    # genetic algorithm
    population_size: int = 100
    tournament_size: int = 5
    generations: int = 10_000
    n_trials: int = 30
    initial_size: int = 5000
    initial_gates: int = 10
    checkpoint_every: int = 100
    # trials
    steps: int = 500
    timeout: int = 100
    reward: float = 1.0
    penalty: float = 0.075
    # mutation
    point_rate: float = 0.005
    copy_delete_rate: float = 0.00002
    segment_min: int = 128
    segment_max: int = 512
    size_min: int = 2000
    size_max: int = 20000

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ConfigError(f"invalid value for 'condition': {self.condition!r} "
                              f"(choose from {', '.join(CONDITIONS)})")
        if self.replicates < 1:
            raise ConfigError("invalid value for 'replicates': must be at least 1")
        if self.workers < 1:
            raise ConfigError("invalid value for 'workers': must be at least 1")
        # surface range errors from the component configs under ConfigError
        try:
            self.trial_config()
            self.mutation_params()
            self.ga_config(self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def swarm_size(self) -> int:
        return CONDITIONS[self.condition]

    def trial_config(self, swarm_size: int | None = None, seed: int | None = None) -> TrialConfig:
        return TrialConfig(self.steps, self.timeout, self.reward, self.penalty,
                           swarm_size or self.swarm_size, self.seed if seed is None else seed)

    def mutation_params(self) -> MutationParams:
        return MutationParams(self.point_rate, self.copy_delete_rate, self.segment_min,
                              self.segment_max, self.size_min, self.size_max)

    def ga_config(self, seed: int, workers: int = 1) -> GAConfig:
        return GAConfig(self.population_size, self.tournament_size, self.generations,
                        self.swarm_size, self.n_trials, seed, self.initial_size,
                        self.initial_gates, self.checkpoint_every, workers)

    def environment(self) -> Environment:
        if self.map == "default":
            return default_environment()
        return load_environment(Path(self.map).read_text())

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(key: str, value: str):
    kind = type(getattr(ExperimentConfig, key))
    try:
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
    except ValueError:
        raise ConfigError(f"invalid value for {key!r}: {value!r}") from None
    return value


def parse_overrides(pairs: Iterable[str]) -> dict:
    """Turn ``key=value`` strings into typed config changes."""
    changes = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"expected key=value, got {pair!r}")
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        changes[key] = _coerce(key, value)
    return changes


def parse_config(text: str, base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        changes[key] = _coerce(key, value.strip())
    return base.replace(**changes)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    lines = [f"# animats {__version__} seed={cfg.seed}"]
    lines += [f"{name} = {getattr(cfg, name)!r}" if isinstance(getattr(cfg, name), float)
              else f"{name} = {getattr(cfg, name)}" for name in _FIELDS]
    return "\n".join(lines) + "\n"


def _comparable(cfg: ExperimentConfig) -> dict:
    return {k: v for k, v in dataclasses.asdict(cfg).items() if k not in EXECUTION_KEYS}


def replicate_seed(master: int, replicate: int) -> int:
    return int(np.random.SeedSequence([master, replicate]).generate_state(1)[0])


def _csv_writer(fh, seed) -> csv.writer:
    fh.write(f"# animats {__version__} seed={seed}\n")
    return csv.writer(fh, lineterminator="\n")


# --- evolve -----------------------------------------------------------------------

def cli_evolve(cfg: ExperimentConfig, resume: bool = True) -> Path:
    """Run every replicate of ``cfg`` under ``cfg.output``.

    An existing snapshot must match ``cfg`` (execution-only keys aside);
    finished replicates are then skipped and unfinished ones resume from
    their newest checkpoint.
    """
    out = Path(cfg.output)
    snapshot = out / SNAPSHOT
    if snapshot.exists():
        previous = load_config(snapshot)
        old, new = _comparable(previous), _comparable(cfg)
        diff = [k for k in old if old[k] != new[k]]
        if diff:
            detail = ", ".join(f"{k}: {old[k]!r} != {new[k]!r}" for k in diff)
            raise ConfigError(f"{snapshot} does not match the requested config ({detail}); "
                              f"refusing to resume")
        if not resume:
            raise ConfigError(f"{out} already holds a run; pass resume to continue it")
    out.mkdir(parents=True, exist_ok=True)
    snapshot.write_text(dump_config(cfg))

    env = cfg.environment()
    trial = cfg.trial_config()
    params = cfg.mutation_params()
    concurrent = min(cfg.workers, cfg.replicates)
    inner = max(1, cfg.workers // concurrent)

    def run(r: int) -> None:
        rep_dir = out / f"rep_{r:03d}"
        if all((rep_dir / name).exists() for name in REPLICATE_FILES):
            log.info("replicate %d already complete", r)
            return
        ga = cfg.ga_config(replicate_seed(cfg.seed, r), inner)
        evolve(ga, env, trial, params, run_dir=rep_dir, resume=True)
        log.info("replicate %d done", r)

    if concurrent > 1:
        with ThreadPoolExecutor(concurrent) as pool:
            list(pool.map(run, range(cfg.replicates)))
    else:
        for r in range(cfg.replicates):
            run(r)
    return out


# --- sweep ------------------------------------------------------------------------

SWEEP_COLUMNS = ("label", "size", "fraction", "mean_F")


def cli_sweep(genome_file: str | Path, cfg: ExperimentConfig, out_file: str | Path,
              index: int = 0) -> Path:
    """Generalizability sweep of one genome: 21 rows, then an ``AUC`` row."""
    genomes = load_genomes(genome_file)
    if not 0 <= index < len(genomes):
        raise IndexError(f"{genome_file} holds {len(genomes)} genomes, no index {index}")
    env = cfg.environment()
    result = generalizability_sweep(genomes[index], env, cfg.trial_config(), cfg.n_trials,
                                    seed=cfg.seed)
    out_file = Path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    with open(out_file, "w", newline="") as fh:
        writer = _csv_writer(fh, cfg.seed)
        writer.writerow(SWEEP_COLUMNS)
        for e in result.entries:
            writer.writerow((e.label, e.size, repr(e.fraction), repr(e.mean_fitness)))
        writer.writerow(("AUC", "", "", repr(result.auc)))
    return out_file


# --- trial ------------------------------------------------------------------------

def cli_trial(genome_file: str | Path, cfg: ExperimentConfig, out_dir: str | Path,
              index: int = 0, swarm_size: int | None = None) -> TrialLog:
    """One trial with the full log, the decoded gates and per-animat fitness."""
    genomes = load_genomes(genome_file)
    if not 0 <= index < len(genomes):
        raise IndexError(f"{genome_file} holds {len(genomes)} genomes, no index {index}")
    g = genomes[index]
    tcfg = cfg.trial_config(swarm_size)
    trial_log = run_trial(g, cfg.environment(), tcfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / TRIAL_LOG, "w", newline="") as fh:
        trial_log.write_csv(fh, seed=cfg.seed, cfg=tcfg)
    (out / "gates.jsonl").write_text(dump_gates_jsonl(decode_gates(g)))
    with open(out / "fitness.csv", "w", newline="") as fh:
        writer = _csv_writer(fh, cfg.seed)
        writer.writerow(("animat_id", "f"))
        writer.writerows((a, repr(float(f))) for a, f in enumerate(trial_log.fitness))
    return trial_log


# --- analyze ----------------------------------------------------------------------

ANALYSES = ("heatmap", "states", "tpm", "graph", "stats")


@dataclass
class _Replicate:
    label: str
    path: Path
    cfg: ExperimentConfig


def _expected_message(path: Path, what: str) -> str:
    return (f"{path}: missing artifacts for {what}; expected one of: {TRIAL_LOG}; "
            f"{' + '.join(REPLICATE_FILES)}; or {SNAPSHOT} with rep_*/ subdirectories")


def _replicates(path: Path, what: str) -> list[_Replicate]:
    """Replicate directories under an experiment or replicate directory."""
    if (path / SNAPSHOT).exists() and sorted(path.glob("rep_*")):
        cfg = load_config(path / SNAPSHOT)
        reps = sorted(p for p in path.glob("rep_*") if p.is_dir())
    elif all((path / name).exists() for name in REPLICATE_FILES):
        parent = path.parent / SNAPSHOT
        cfg = load_config(parent) if parent.exists() else ExperimentConfig()
        reps = [path]
    else:
        raise MissingArtifactError(_expected_message(path, what))
    for rep in reps:
        absent = [name for name in REPLICATE_FILES if not (rep / name).exists()]
        if absent:
            raise MissingArtifactError(f"{rep}: missing {', '.join(absent)} "
                                       f"(expected {', '.join(REPLICATE_FILES)})")
    return [_Replicate(f"{cfg.condition}/{rep.name}", rep, cfg) for rep in reps]


def _final_fitness(rep: Path) -> np.ndarray:
    with open(rep / "final_fitness.csv", newline="") as fh:
        rows = list(csv.reader(ln for ln in fh if not ln.startswith("#")))
    return np.array([float(r[1]) for r in rows[1:]])


def _best_genome(rep: Path) -> Genome:
    return load_genomes(rep / "final_population.txt")[int(np.argmax(_final_fitness(rep)))]


def _logs_for(path: Path, sizes: Sequence[int] | None, n_trials: int, seed: int,
              what: str) -> dict[str, list[TrialLog]]:
    """Trial logs per source: read from a trial directory, or simulated for the
    fittest final genome of each replicate at every requested swarm size."""
    if (path / TRIAL_LOG).exists():
        with open(path / TRIAL_LOG, newline="") as fh:
            return {path.name: [read_trial_log(fh)]}
    out = {}
    for rep in _replicates(path, what):
        g = _best_genome(rep.path)
        env = rep.cfg.environment()
        logs = []
        for size in sizes or (rep.cfg.swarm_size,):
            for k in range(n_trials):
                tcfg = rep.cfg.trial_config(size, seed=replicate_seed(seed, k))
                logs.append(run_trial(g, env, tcfg))
        out[rep.label] = logs
    return out


def _analyze_heatmap(paths, out, sizes, n_trials, seed) -> list[Path]:
    logs = [lg for p in paths for lgs in _logs_for(p, sizes, n_trials, seed, "heatmap").values()
            for lg in lgs]
    grid = occupancy_heatmap(logs)
    target = out / "heatmap.csv"
    with open(target, "w", newline="") as fh:
        writer = _csv_writer(fh, seed)
        writer.writerow(("x", *(f"y{y}" for y in range(grid.shape[1]))))
        writer.writerows((x, *row) for x, row in enumerate(grid.tolist()))
    return [target]


def _analyze_states(paths, out, sizes, n_trials, seed) -> list[Path]:
    sizes = sizes or TRANSITION_SIZES
    sources = {}
    for p in paths:
        sources.update(_logs_for(p, sizes, n_trials, seed, "states"))
    labels = list(sources)
    counts = np.stack([state_transition_counts(sources[k]) for k in labels])
    target = out / "states.csv"
    with open(target, "w", newline="") as fh:
        writer = _csv_writer(fh, seed)
        writer.writerow(("source", *VALID_CODES))
        writer.writerows((k, *row) for k, row in zip(labels, counts.tolist()))
        if len(labels) > 1:
            mean, lo, hi = bootstrap_ci(counts, rng=np.random.default_rng(seed))
            for name, row in (("mean", mean), ("ci_low", lo), ("ci_high", hi)):
                writer.writerow((name, *(repr(float(v)) for v in row)))
    return [target]


def _analyze_tpm(paths, out, sizes, n_trials, seed) -> list[Path]:
    sizes = sizes or TRANSITION_SIZES
    conditions = {}
    for p in paths:
        for label, logs in _logs_for(p, sizes, n_trials, seed, "tpm").items():
            conditions.setdefault(label.split("/")[0], []).extend(logs)
    labels, raw, scaled = transition_matrix(conditions)
    target = out / "tpm.csv"
    with open(target, "w", newline="") as fh:
        writer = _csv_writer(fh, seed)
        writer.writerow(("condition", "from", "to", "count", "scaled"))
        for c, label in enumerate(labels):
            for i, a in enumerate(VALID_CODES):
                for j, b in enumerate(VALID_CODES):
                    writer.writerow((label, a, b, int(raw[c, i, j]), repr(float(scaled[c, i, j]))))
    return [target]


def _analyze_graph(paths, out, sizes, n_trials, seed) -> list[Path]:
    target = out / "graph.csv"
    with open(target, "w", newline="") as fh:
        writer = _csv_writer(fh, seed)
        writer.writerow(("source", "genome_id", "lscc_size", "avg_shortest_path",
                         "avg_betweenness", "avg_degree", "unreachable_pairs"))
        for p in paths:
            for rep in _replicates(p, "graph"):
                for i, g in enumerate(load_genomes(rep.path / "final_population.txt")):
                    m = brain_graph_metrics(effective_connectivity(decode_gates(g)))
                    writer.writerow((rep.label, i, m.lscc_size, repr(m.avg_shortest_path),
                                     repr(m.avg_betweenness), repr(m.avg_degree),
                                     m.unreachable_pairs))
    return [target]


def replicate_final_means(path: Path) -> tuple[str, list[float]]:
    """Condition label and the population-mean final fitness of each replicate."""
    reps = _replicates(path, "stats")
    return reps[0].cfg.condition, [float(_final_fitness(r.path).mean()) for r in reps]


def write_stats_tables(groups: Mapping[str, Sequence[float]], out: Path, seed) -> list[Path]:
    """Pairwise Mann-Whitney p and U as lower-triangular tables, plus Kruskal-Wallis."""
    labels = list(groups)
    pairs = pairwise_mann_whitney(groups)
    written = []
    for name, attr in (("stats_p.csv", "p"), ("stats_U.csv", "U")):
        target = out / name
        with open(target, "w", newline="") as fh:
            writer = _csv_writer(fh, seed)
            writer.writerow(("", *labels[:-1]))
            for i, row_label in enumerate(labels[1:], start=1):
                cells = [repr(getattr(pairs[row_label, labels[j]], attr)) for j in range(i)]
                writer.writerow((row_label, *cells, *[""] * (len(labels) - 1 - i)))
        written.append(target)
    target = out / "stats_kruskal.csv"
    with open(target, "w", newline="") as fh:
        writer = _csv_writer(fh, seed)
        writer.writerow(("groups", "H", "df", "p"))
        if len(labels) >= 2:
            h, p = kruskal_wallis([groups[k] for k in labels])
            writer.writerow((";".join(labels), repr(h), len(labels) - 1, repr(p)))
    written.append(target)
    return written


def _analyze_stats(paths, out, sizes, n_trials, seed) -> list[Path]:
    groups = {}
    for p in paths:
        label, values = replicate_final_means(p)
        while label in groups:
            label += "'"
        groups[label] = values
    if len(groups) < 2:
        raise ValueError("stats needs at least two experiment directories")
    return write_stats_tables(groups, out, seed)


_DISPATCH = {"heatmap": _analyze_heatmap, "states": _analyze_states, "tpm": _analyze_tpm,
             "graph": _analyze_graph, "stats": _analyze_stats}


def cli_analyze(run_dirs: Sequence[str | Path], which: str, out_dir: str | Path,
                sizes: Sequence[int] | None = None, n_trials: int = 1, seed: int = 0) -> list[Path]:
    """Run one analysis over the given run directories and return the CSVs written.

    Trial directories contribute their logged trial; experiment and replicate
    directories contribute ``n_trials`` fresh trials of each replicate's
    fittest final genome per swarm size.
    """
    if which not in _DISPATCH:
        raise ValueError(f"unknown analysis {which!r} (choose from {', '.join(ANALYSES)})")
    paths = [Path(p) for p in run_dirs]
    for p in paths:
        if not p.is_dir():
            raise MissingArtifactError(_expected_message(p, which))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _DISPATCH[which](paths, out, sizes, n_trials, seed)
