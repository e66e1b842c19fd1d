"""Trial execution and the per-animat / per-genome fitness functions.

An animat earns ``reward`` for a gate crossing at step t when it made no
crossing in the preceding ``timeout`` steps (window ``[max(0, t-timeout), t)``),
and pays ``penalty`` for every step on which it shares its cell. A genome's
fitness is the mean over trials of one randomly tracked animat's fitness.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__, _kernel
from .brain import LEFT_MOTOR, RIGHT_MOTOR, Gate, PackedGates, pack_gates
from .genome import Genome
from .world import Environment

# stream tags keep the derived RNG streams disjoint
PLACEMENT_STREAM = 1
TRACKING_STREAM = 2
SWEEP_STREAM = 3

LOG_COLUMNS = ("step", "animat_id", "x", "y", "heading", "wall_bit", "animat_bit",
               "m_l", "m_r", "collided", "crossed")


class MalformedLogError(ValueError):
    pass


class SwarmSizeError(ValueError):
    pass


@dataclass(frozen=True)
class TrialConfig:
    steps: int = 500
    timeout: int = 100
    reward: float = 1.0
    penalty: float = 0.075
    swarm_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        if not 0 <= self.timeout <= self.steps:
            raise ValueError("timeout must lie in [0, steps]")
        if self.penalty < 0:
            raise ValueError("penalty must be non-negative")
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be at least 1")


@dataclass(frozen=True, eq=False)
class TrialLog:
    """Per-step, per-animat record of one trial.

    ``data[t, a]`` holds, for step t, the sensors read at the start of the
    step, the motor pair executed in response, the pose after moving, and the
    collision / crossing flags for that new pose.
    """

    env_fingerprint: str
    grid_shape: tuple[int, int]  # (height, width) of the environment
    starts: np.ndarray          # (N, 3): x, y, heading at t=0
    data: np.ndarray = field(repr=False)   # (T, N, 9) int16, channels per _kernel
    fitness: np.ndarray = field(repr=False)

    @property
    def steps(self) -> int:
        return self.data.shape[0]

    @property
    def swarm_size(self) -> int:
        return self.data.shape[1]

    def channel(self, index: int) -> np.ndarray:
        return self.data[:, :, index]

    @property
    def sensors(self) -> np.ndarray:
        return self.data[:, :, _kernel.WALL_BIT:_kernel.ANIMAT_BIT + 1]

    @property
    def motors(self) -> np.ndarray:
        return self.data[:, :, _kernel.M_LEFT:_kernel.M_RIGHT + 1]

    @property
    def crossed(self) -> np.ndarray:
        return self.data[:, :, _kernel.CROSSED].astype(bool)

    @property
    def collided(self) -> np.ndarray:
        return self.data[:, :, _kernel.COLLIDED].astype(bool)

    def rows(self):
        for t in range(self.steps):
            for a in range(self.swarm_size):
                yield (t, a, *(int(v) for v in self.data[t, a]))

    def write_csv(self, fh, seed: int | None = None, cfg: TrialConfig | None = None) -> None:
        """Write the log with a metadata comment that ``read_trial_log`` understands."""
        cfg = cfg or TrialConfig(steps=self.steps, swarm_size=self.swarm_size)
        height, width = self.grid_shape
        fh.write(f"# animats {__version__} seed={seed} env={self.env_fingerprint} "
                 f"grid={height}x{width} timeout={cfg.timeout} reward={cfg.reward!r} "
                 f"penalty={cfg.penalty!r}\n")
        fh.write("# starts=" + ";".join(f"{x}:{y}:{h}" for x, y, h in self.starts) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        writer.writerows(self.rows())


def read_trial_log(fh) -> TrialLog:
    """Inverse of ``TrialLog.write_csv``; per-animat fitness is recomputed."""
    meta: dict[str, str] = {}
    body = []
    for lineno, line in enumerate(fh, start=1):
        if line.startswith("#"):
            for token in line[1:].split():
                key, sep, value = token.partition("=")
                if sep:
                    meta[key] = value
        elif line.strip():
            body.append((lineno, line))
    missing = [k for k in ("env", "grid", "starts", "timeout", "reward", "penalty") if k not in meta]
    if missing:
        raise MalformedLogError(f"log metadata lacks {', '.join(missing)}")
    if not body or tuple(body[0][1].strip().split(",")) != LOG_COLUMNS:
        raise MalformedLogError(f"expected header {','.join(LOG_COLUMNS)}")
    starts = np.array([[int(v) for v in item.split(":")] for item in meta["starts"].split(";")],
                      dtype=np.int64).reshape(-1, 3)
    n = starts.shape[0]
    rows = []
    for lineno, line in body[1:]:
        fields = line.strip().split(",")
        if len(fields) != len(LOG_COLUMNS):
            raise MalformedLogError(f"line {lineno}: expected {len(LOG_COLUMNS)} fields, "
                                    f"got {len(fields)}")
        try:
            rows.append([int(v) for v in fields])
        except ValueError:
            raise MalformedLogError(f"line {lineno}: non-integer field") from None
    table = np.array(rows, dtype=np.int64).reshape(-1, len(LOG_COLUMNS))
    if n == 0 or table.shape[0] % n:
        raise MalformedLogError(f"{table.shape[0]} rows do not divide into {n} animats")
    steps = table.shape[0] // n
    expected = np.stack(np.meshgrid(np.arange(steps), np.arange(n), indexing="ij"), -1).reshape(-1, 2)
    if not np.array_equal(table[:, :2], expected):
        raise MalformedLogError("rows are not ordered by step, then animat id")
    data = table[:, 2:].reshape(steps, n, _kernel.N_CHANNELS).astype(np.int16)
    height, width = (int(v) for v in meta["grid"].split("x"))
    cfg = TrialConfig(steps=steps, timeout=int(meta["timeout"]), reward=float(meta["reward"]),
                      penalty=float(meta["penalty"]), swarm_size=n)
    fitness = np.array([animat_fitness(data[:, a, _kernel.CROSSED], data[:, a, _kernel.COLLIDED], cfg)
                        for a in range(n)])
    return TrialLog(meta["env"], (height, width), starts, data, fitness)


@dataclass(frozen=True)
class FitnessReport:
    tracked: tuple[int, ...]
    per_trial: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_trial)) if self.per_trial else 0.0

    def csv_rows(self, generation: int, genome_id: int):
        for trial, (a, f) in enumerate(zip(self.tracked, self.per_trial)):
            yield (generation, genome_id, trial, a, repr(f))
        yield (generation, genome_id, "F", "", repr(self.mean))


def animat_fitness(crossed: Sequence[bool], collided: Sequence[bool],
                   cfg: TrialConfig = TrialConfig()) -> float:
    """Fitness of one animat from its crossing and collision series."""
    if len(crossed) < cfg.steps or len(collided) < cfg.steps:
        raise MalformedLogError(
            f"log covers {min(len(crossed), len(collided))} steps, expected {cfg.steps}")
    rewards = 0
    last = -(cfg.timeout + 1)
    for t in range(cfg.steps):
        if crossed[t]:
            if t - last > cfg.timeout:
                rewards += 1
            last = t
    collisions = int(np.count_nonzero(np.asarray(collided[:cfg.steps], dtype=bool)))
    return rewards * cfg.reward - collisions * cfg.penalty


def transition_table(brain: Genome | Sequence[Gate] | PackedGates) -> np.ndarray:
    """The brain's 256-entry next-state table, however it was given."""
    if isinstance(brain, Genome):
        return _kernel.genome_transition_table(brain.sites)
    if isinstance(brain, PackedGates):
        return brain.transition_table()
    return pack_gates(list(brain)).transition_table()


MOTOR_BITS = (1 << LEFT_MOTOR) | (1 << RIGHT_MOTOR)


def trial_starts(env: Environment, n: int, n_trials: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Random non-overlapping start cells and uniform headings, (n_trials, n, 3) int64."""
    n_available = len(env.start_positions)
    if n > n_available:
        raise SwarmSizeError(f"swarm exceeds start positions ({n} > {n_available})")
    order = rng.permuted(np.tile(np.arange(n_available), (n_trials, 1)), axis=1)[:, :n]
    starts = np.empty((n_trials, n, 3), dtype=np.int64)
    starts[:, :, :2] = env.start_array[order]
    starts[:, :, 2] = rng.integers(0, 4, size=(n_trials, n))
    return starts


def place_swarm(env: Environment, n: int, rng: np.random.Generator) -> np.ndarray:
    return trial_starts(env, n, 1, rng)[0]


def simulate_from(brain: Genome | Sequence[Gate] | PackedGates, env: Environment, starts: np.ndarray, cfg: TrialConfig) -> TrialLog:
    table = transition_table(brain)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    log = np.zeros((cfg.steps, starts.shape[0], _kernel.N_CHANNELS), dtype=np.int16)
    fitness = _kernel.simulate(env.cells, env.rooms, table, starts, cfg.steps,
                               cfg.timeout, cfg.reward, cfg.penalty, log)
    return TrialLog(env.fingerprint, env.cells.shape, starts, log, fitness)


def run_trial(brain: Genome | Sequence[Gate] | PackedGates, env: Environment,
              cfg: TrialConfig) -> TrialLog:
    """One trial of ``cfg.swarm_size`` clones, placed from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    starts = place_swarm(env, cfg.swarm_size, rng)
    return simulate_from(brain, env, starts, cfg)


def tracked_animats(seed: int, generation: int, n: int, n_trials: int) -> np.ndarray:
    rng = np.random.default_rng([seed, TRACKING_STREAM, generation, n])
    return rng.integers(0, n, size=n_trials)


def genome_fitness(brain: Genome | Sequence[Gate] | PackedGates, env: Environment,
                   cfg: TrialConfig, n_trials: int = 30, *, seed: int | None = None,
                   generation: int = 0, genome_index: int = 0) -> FitnessReport:
    """Mean tracked-animat fitness over ``n_trials`` randomized trials.

    Placements come from the (seed, generation, genome_index) stream and the
    tracked animat of trial i from the (seed, generation) stream, so every
    trial's inputs are fixed before any simulation runs.
    """
    seed = cfg.seed if seed is None else seed
    table = transition_table(brain)
    n = cfg.swarm_size
    rng = np.random.default_rng([seed, PLACEMENT_STREAM, generation, genome_index])
    starts = trial_starts(env, n, n_trials, rng)
    tracked = tracked_animats(seed, generation, n, n_trials)
    if not (table & MOTOR_BITS).any():
        # motors never fire: nobody moves, starts are distinct, so every f is 0
        per_trial = np.zeros(n_trials)
    else:
        per_trial = _kernel.evaluate_trials(
            env.cells, env.rooms, table, starts, tracked, cfg.steps, cfg.timeout,
            cfg.reward, cfg.penalty)
    return FitnessReport(tuple(int(a) for a in tracked), tuple(float(f) for f in per_trial))
