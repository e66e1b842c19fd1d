"""Shared test helpers."""
import numpy as np

from animats import _kernel
from animats.evaluation import TrialLog
from animats.genome import Genome, new_random_genome, seed_start_codons
from animats.world import NO_ROOM, WALL


def random_genome(seed: int, length: int = 5000, gates: int = 30) -> Genome:
    """Random genome with some planted start codons so it decodes to a real brain."""
    rng = np.random.default_rng(seed)
    return seed_start_codons(new_random_genome(length, rng), gates, rng)


# one gate: input wall sensor (node 0), output both motors, table 0 -> 11, 1 -> 11
FORWARD_GATE = [42, 213, 0, 1, 0, 4, 5, 3, 3]
# same wiring but never moves: all-zero table
STILL_GATE = [42, 213, 0, 0, 0, 4, 0, 0]


def genome_from(*chunks, length: int = 2000) -> Genome:
    """Zero-padded genome holding the given byte chunks back to back."""
    sites = [b for chunk in chunks for b in chunk]
    return Genome.from_bytes(sites + [0] * (length - len(sites)))


def check_world_invariants(env, data, starts=None):
    """Count violations of wall occupancy, wall+animat sensing and crossing alternation.

    With ``starts`` the first crossing of each animat must also leave its start room.
    """
    x, y = data[..., _kernel.X], data[..., _kernel.Y]
    violations = int(np.count_nonzero(env.cells[y, x] == WALL))
    violations += int(np.count_nonzero(data[..., _kernel.WALL_BIT] & data[..., _kernel.ANIMAT_BIT]))
    rooms = env.rooms[y, x]
    for a in range(data.shape[1]):
        steps = np.nonzero(data[:, a, _kernel.CROSSED])[0]
        entered = rooms[steps, a]
        violations += int(np.count_nonzero(entered[1:] == entered[:-1]))
        violations += int(np.count_nonzero(entered == NO_ROOM))
        if starts is not None and len(entered):
            violations += int(entered[0] == env.room(int(starts[a][0]), int(starts[a][1])))
    return violations


def synthetic_log(sensors, motors, fingerprint="synthetic", positions=None):
    """TrialLog from (T, N, 2) sensor and motor arrays; positions default to (1, 1)."""
    sensors = np.asarray(sensors)
    motors = np.asarray(motors)
    steps, n = sensors.shape[:2]
    data = np.zeros((steps, n, _kernel.N_CHANNELS), dtype=np.int16)
    data[..., _kernel.X] = data[..., _kernel.Y] = 1
    if positions is not None:
        data[..., _kernel.X], data[..., _kernel.Y] = positions
    data[..., _kernel.WALL_BIT] = sensors[..., 0]
    data[..., _kernel.ANIMAT_BIT] = sensors[..., 1]
    data[..., _kernel.M_LEFT] = motors[..., 0]
    data[..., _kernel.M_RIGHT] = motors[..., 1]
    return TrialLog(fingerprint, (32, 32), np.zeros((n, 3), dtype=np.int64), data, np.zeros(n))
