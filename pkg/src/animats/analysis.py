"""Post-hoc analyses of evolved animats.

Behaviour (occupancy heatmaps, motor-state frequencies, sensor/action
transition statistics), generalizability across swarm sizes, brain-graph
complexity, and the rank tests used to compare conditions.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .evaluation import SWEEP_STREAM, TrialConfig, TrialLog, genome_fitness
from .genome import Genome
from .world import N_STARTS, Environment

# --- generalizability ---------------------------------------------------------

# sizes used for the transition statistics: 100%, 75%, 50%, 25%, single
TRANSITION_SIZES = (72, 54, 36, 18, 1)


@dataclass(frozen=True)
class SweepEntry:
    label: str
    size: int
    fraction: float
    mean_fitness: float


@dataclass(frozen=True)
class SweepResult:
    entries: tuple[SweepEntry, ...]

    @property
    def auc(self) -> float:
        return area_under_curve([e.fraction for e in self.entries],
                                [e.mean_fitness for e in self.entries])

    @property
    def sizes(self) -> list[int]:
        return [e.size for e in self.entries]

    @property
    def means(self) -> list[float]:
        return [e.mean_fitness for e in self.entries]


def sweep_grid(max_size: int = N_STARTS) -> list[tuple[str, int, float]]:
    """(label, swarm size, fraction) for 100%, 95%, ..., 5% and single."""
    grid = []
    for k in range(20, 0, -1):
        size = max(1, round(k * max_size / 20))
        grid.append((f"{5 * k}%", size, k / 20))
    grid.append(("single", 1, 1 / max_size))
    return grid


def area_under_curve(fractions: Sequence[float], values: Sequence[float]) -> float:
    """Trapezoidal area of ``values`` over swarm fraction, independent of input order."""
    order = np.argsort(np.asarray(fractions, dtype=float), kind="stable")
    x = np.asarray(fractions, dtype=float)[order]
    y = np.asarray(values, dtype=float)[order]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def generalizability_sweep(g: Genome, env: Environment, cfg: TrialConfig = TrialConfig(),
                           n_trials: int = 30, seed: int = 0) -> SweepResult:
    """Mean tracked-animat fitness of ``g`` at each of the 21 test swarm sizes."""
    stream = int(np.random.SeedSequence([seed, SWEEP_STREAM]).generate_state(1)[0])
    entries = []
    for index, (label, size, fraction) in enumerate(sweep_grid(len(env.start_positions))):
        size_cfg = TrialConfig(cfg.steps, cfg.timeout, cfg.reward, cfg.penalty, size, cfg.seed)
        report = genome_fitness(g, env, size_cfg, n_trials, seed=stream, generation=index)
        entries.append(SweepEntry(label, size, fraction, report.mean))
    return SweepResult(tuple(entries))


# --- behaviour ------------------------------------------------------------------

def _check_same_env(logs: Sequence[TrialLog]) -> None:
    if not logs:
        raise ValueError("need at least one trial log")
    prints = {log.env_fingerprint for log in logs}
    if len(prints) > 1:
        raise ValueError(f"logs come from {len(prints)} different environments")


def occupancy_heatmap(logs: Sequence[TrialLog]) -> np.ndarray:
    """Animat-steps spent in each cell, summed over logs; indexed ``[x, y]``."""
    _check_same_env(logs)
    height, width = logs[0].grid_shape
    counts = np.zeros((width, height), dtype=np.int64)
    for log in logs:
        np.add.at(counts, (log.data[:, :, 0].ravel(), log.data[:, :, 1].ravel()), 1)
    return counts


def motor_state_frequencies(logs: Sequence[TrialLog]) -> tuple[float, float, float]:
    """Fractions of animat-steps spent moving, turning and standing still."""
    if not logs:
        raise ValueError("need at least one trial log")
    move = turn = stay = 0
    for log in logs:
        m = log.motors
        left, right = m[..., 0].astype(bool), m[..., 1].astype(bool)
        move += int(np.count_nonzero(left & right))
        turn += int(np.count_nonzero(left ^ right))
        stay += int(np.count_nonzero(~left & ~right))
    total = move + turn + stay
    return move / total, turn / total, stay / total


# 4-bit external state: wall sensed, animat sensed, turn, move forward
VALID_CODES = ("0000", "0001", "0010", "0100", "0101", "0110", "1000", "1001", "1010")
_CODE_INDEX = {code: i for i, code in enumerate(VALID_CODES)}


class InvalidStateError(ValueError):
    pass


def encode_external_state(wall: int, animat: int, motors: tuple[int, int]) -> str:
    if wall and animat:
        raise InvalidStateError("a wall and an animat cannot be sensed at the same time")
    left, right = motors
    turn = int(bool(left) != bool(right))
    forward = int(bool(left) and bool(right))
    return f"{int(bool(wall))}{int(bool(animat))}{turn}{forward}"


def code_index(code: str) -> int:
    try:
        return _CODE_INDEX[code]
    except KeyError:
        raise InvalidStateError(f"not a valid external state code: {code!r}") from None


# lookup: (wall, animat, m_l, m_r) packed as 4 bits -> index into VALID_CODES, -1 if invalid
_PACKED_TO_INDEX = np.full(16, -1, dtype=np.int64)
for _w in (0, 1):
    for _a in (0, 1):
        for _l in (0, 1):
            for _r in (0, 1):
                if not (_w and _a):
                    _PACKED_TO_INDEX[(_w << 3) | (_a << 2) | (_l << 1) | _r] = \
                        _CODE_INDEX[encode_external_state(_w, _a, (_l, _r))]


def external_codes(log: TrialLog) -> np.ndarray:
    """Code index of (sensors at step t, action at step t+1); shape (T-1, N)."""
    s = log.sensors.astype(np.int64)
    m = log.motors.astype(np.int64)
    packed = (s[:-1, :, 0] << 3) | (s[:-1, :, 1] << 2) | (m[1:, :, 0] << 1) | m[1:, :, 1]
    idx = _PACKED_TO_INDEX[packed]
    if (idx < 0).any():
        raise InvalidStateError("log contains a step sensing both a wall and an animat")
    return idx


def state_transition_counts(logs: Sequence[TrialLog] | Mapping[int, TrialLog]) -> np.ndarray:
    """Counts of the 9 external-state codes, summed over the given logs.

    Usually one log per test size in ``TRANSITION_SIZES``.
    """
    if isinstance(logs, Mapping):
        logs = list(logs.values())
    counts = np.zeros(len(VALID_CODES), dtype=np.int64)
    for log in logs:
        counts += np.bincount(external_codes(log).ravel(), minlength=len(VALID_CODES))
    return counts


def three_step_counts(logs: Sequence[TrialLog]) -> np.ndarray:
    """9x9 counts of code at (t, t+1) -> code at (t+1, t+2); rows are the earlier code."""
    k = len(VALID_CODES)
    counts = np.zeros((k, k), dtype=np.int64)
    for log in logs:
        codes = external_codes(log)
        pairs = codes[:-1].ravel() * k + codes[1:].ravel()
        counts += np.bincount(pairs, minlength=k * k).reshape(k, k)
    return counts


def scale_across_conditions(matrices: np.ndarray) -> np.ndarray:
    """Min-max scale each tile across the condition axis (axis 0) to [0, 1].

    Tiles whose value is the same in every condition map to 1 where nonzero
    and 0 where zero.
    """
    m = np.asarray(matrices, dtype=float)
    lo, hi = m.min(axis=0), m.max(axis=0)
    span = hi - lo
    flat = span == 0
    scaled = np.where(flat, 0.0, (m - lo) / np.where(flat, 1.0, span))
    return np.where(flat & (m > 0), 1.0, scaled)


def transition_matrix(conditions: Mapping[str, Sequence[TrialLog]]) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Raw and scaled 9x9 three-step transition counts per condition.

    Returns (labels, raw[C, 9, 9], scaled[C, 9, 9]).
    """
    labels = list(conditions)
    raw = np.stack([three_step_counts(conditions[c]) for c in labels])
    return labels, raw, scale_across_conditions(raw)


def bootstrap_ci(samples: np.ndarray, n_resamples: int = 10_000, confidence: float = 0.95,
                 rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Percentile bootstrap of the mean over axis 0; returns (mean, lower, upper)."""
    rng = rng or np.random.default_rng(0)
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    idx = rng.integers(0, x.shape[0], size=(n_resamples, x.shape[0]))
    means = x[idx].mean(axis=1)
    tail = (1.0 - confidence) / 2 * 100
    lower, upper = np.percentile(means, [tail, 100 - tail], axis=0)
    return x.mean(axis=0), lower, upper


# --- brain graphs -------------------------------------------------------------------

@dataclass(frozen=True)
class BrainGraphMetrics:
    lscc_size: int
    avg_shortest_path: float
    avg_betweenness: float
    avg_degree: float
    unreachable_pairs: int


def _successors(adj: np.ndarray) -> list[list[int]]:
    n = adj.shape[0]
    return [[j for j in range(n) if adj[i, j] and j != i] for i in range(n)]


def strongly_connected_components(adj: np.ndarray) -> list[set[int]]:
    """Tarjan's algorithm over a boolean adjacency matrix."""
    adj = np.asarray(adj, dtype=bool)
    succ = _successors(adj)
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    stack: list[int] = []
    on_stack: set[int] = set()
    components: list[set[int]] = []
    counter = 0

    def connect(v: int) -> None:
        nonlocal counter
        index[v] = low[v] = counter
        counter += 1
        stack.append(v)
        on_stack.add(v)
        for w in succ[v]:
            if w not in index:
                connect(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = set()
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.add(w)
                if w == v:
                    break
            components.append(comp)

    for v in range(adj.shape[0]):
        if v not in index:
            connect(v)
    return components


def _bfs_distances(succ: list[list[int]], source: int) -> list[int]:
    dist = [-1] * len(succ)
    dist[source] = 0
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in succ[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def betweenness(adj: np.ndarray, normalized: bool = True) -> np.ndarray:
    """Brandes betweenness centrality on the directed, unweighted graph."""
    succ = _successors(np.asarray(adj, dtype=bool))
    n = len(succ)
    centrality = np.zeros(n)
    for s in range(n):
        order = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        sigma[s] = 1
        dist = [-1] * n
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in succ[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                centrality[w] += delta[w]
    if normalized and n > 2:
        centrality /= (n - 1) * (n - 2)
    return centrality


def brain_graph_metrics(adj: np.ndarray) -> BrainGraphMetrics:
    """Graph measures of an 8x8 effective-connectivity matrix.

    Shortest paths are averaged over reachable ordered pairs only (0.0 when
    no pair is reachable); the number of unreachable pairs is reported
    separately. Betweenness is normalized by (n-1)(n-2). Degree counts
    distinct in- or out-neighbours, ignoring self-loops.
    """
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[0]
    lscc = max(len(c) for c in strongly_connected_components(adj)) if n else 0
    succ = _successors(adj)
    lengths, unreachable = [], 0
    for s in range(n):
        dist = _bfs_distances(succ, s)
        for t in range(n):
            if t == s:
                continue
            if dist[t] > 0:
                lengths.append(dist[t])
            else:
                unreachable += 1
    undirected = (adj | adj.T) & ~np.eye(n, dtype=bool)
    return BrainGraphMetrics(
        lscc_size=lscc,
        avg_shortest_path=float(np.mean(lengths)) if lengths else 0.0,
        avg_betweenness=float(betweenness(adj).mean()) if n else 0.0,
        avg_degree=float(undirected.sum(axis=1).mean()) if n else 0.0,
        unreachable_pairs=unreachable,
    )


# --- rank statistics ------------------------------------------------------------------

@dataclass(frozen=True)
class MannWhitneyResult:
    U: float
    p: float
    method: str

    def __iter__(self):
        return iter((self.U, self.p))


def midranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties given the average of the ranks they span."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_sizes(values: Sequence[float]) -> np.ndarray:
    _, counts = np.unique(np.asarray(values, dtype=float), return_counts=True)
    return counts


@lru_cache(maxsize=None)
def _u_counts(m: int, n: int) -> tuple[int, ...]:
    """Number of rank arrangements giving each U in 0..m*n under H0.

    The largest observation either comes from the first sample (adding n to
    U) or from the second (adding nothing).
    """
    if m == 0 or n == 0:
        return (1,)
    counts = [0] * (m * n + 1)
    for u, c in enumerate(_u_counts(m - 1, n)):
        counts[u + n] += c
    for u, c in enumerate(_u_counts(m, n - 1)):
        counts[u] += c
    return tuple(counts)


def mann_whitney_exact_cdf(u: int, m: int, n: int) -> float:
    """P(U <= u) under H0 for tie-free samples of sizes m and n."""
    counts = _u_counts(m, n)
    return sum(counts[:u + 1]) / math.comb(m + n, m)


def mann_whitney_u(a: Sequence[float], b: Sequence[float], method: str = "auto") -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test; U is the smaller of the two U statistics.

    ``method="auto"`` enumerates the exact null distribution when the sample
    sizes multiply to at most 400 and there are no ties, and otherwise uses
    the normal approximation with tie and continuity corrections.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.size, b.size
    if m == 0 or n == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    u_a = ranks[:m].sum() - m * (m + 1) / 2.0
    u_b = m * n - u_a
    u = min(u_a, u_b)
    ties = _tie_sizes(pooled)
    has_ties = bool((ties > 1).any())
    if method == "auto":
        method = "exact" if m * n <= 400 and not has_ties else "asymptotic"
    if method == "exact":
        if has_ties:
            raise ValueError("exact p-values need tie-free samples")
        p = min(1.0, 2.0 * mann_whitney_exact_cdf(int(round(u)), m, n))
    elif method == "asymptotic":
        total = m + n
        tie_term = float(np.sum(ties ** 3 - ties)) / (total * (total - 1))
        var = m * n / 12.0 * ((total + 1) - tie_term)
        if var <= 0:
            p = 1.0
        else:
            z = max(0.0, abs(u - m * n / 2.0) - 0.5) / math.sqrt(var)
            p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return MannWhitneyResult(float(u), float(p), method)


class KruskalResult(NamedTuple):
    H: float
    p: float


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> KruskalResult:
    """Tie-corrected Kruskal-Wallis H and its chi-square p-value.

    When every observation is tied the statistic is undefined; H = 0 and p = 1
    are returned by convention.
    """
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise ValueError("Kruskal-Wallis needs at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("groups must be non-empty")
    pooled = np.concatenate(groups)
    total = pooled.size
    ranks = midranks(pooled)
    h, start = 0.0, 0
    for g in groups:
        h += ranks[start:start + g.size].sum() ** 2 / g.size
        start += g.size
    h = 12.0 / (total * (total + 1)) * h - 3.0 * (total + 1)
    ties = _tie_sizes(pooled)
    correction = 1.0 - float(np.sum(ties ** 3 - ties)) / (total ** 3 - total)
    if correction <= 0:
        return KruskalResult(0.0, 1.0)
    h /= correction
    return KruskalResult(float(h), float(_scipy_stats.chi2.sf(h, len(groups) - 1)))


def pairwise_mann_whitney(groups: Mapping[str, Sequence[float]]) -> dict[tuple[str, str], MannWhitneyResult]:
    """Mann-Whitney result for every pair (row label, column label), row after column."""
    labels = list(groups)
    return {(labels[j], labels[i]): mann_whitney_u(groups[labels[j]], groups[labels[i]])
            for i, j in combinations(range(len(labels)), 2)}
