"""Compiled trial simulator.

Mirrors ``world.step_swarm`` exactly; the test-suite checks the two against
each other step by step. Brain states are 8-bit masks (bit i = node i) and
the brain itself is passed as its 256-entry transition table.
"""
import numpy as np
from numba import njit

# log channels, in the order of the trial CSV columns
X, Y, HEADING, WALL_BIT, ANIMAT_BIT, M_LEFT, M_RIGHT, COLLIDED, CROSSED = range(9)
N_CHANNELS = 9

@njit(cache=True, nogil=True)
def simulate(cells, rooms, transition, starts, n_steps, timeout, reward, penalty, log):
    """Run one trial; returns per-animat fitness.

    ``transition[s]`` is the brain's next state for current state s.
    ``starts`` is (N, 3) of x, y, heading. ``log`` is (n_steps, N, 9) int16 to
    record every step, or an empty (0, 0, 0) array to skip recording.
    """
    height, width = cells.shape
    n = starts.shape[0]
    record = log.shape[0] > 0
    walls = (cells == 1).ravel()
    labels = rooms.ravel()
    step = np.array([-width, 1, width, -1], dtype=np.int64)
    turn = np.array([0, 3, 1, 0], dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    head = np.empty(n, dtype=np.int64)
    new_pos = np.empty(n, dtype=np.int64)
    new_head = np.empty(n, dtype=np.int64)
    brains = np.zeros(n, dtype=np.int64)
    last_room = np.empty(n, dtype=np.int64)
    last_cross = np.full(n, -(timeout + 1), dtype=np.int64)
    n_rewards = np.zeros(n, dtype=np.int64)
    n_collisions = np.zeros(n, dtype=np.int64)
    occ = np.zeros(height * width, dtype=np.int32)
    for a in range(n):
        pos[a] = starts[a, 1] * width + starts[a, 0]
        head[a] = starts[a, 2]
        occ[pos[a]] += 1
        last_room[a] = labels[pos[a]]

    for t in range(n_steps):
        # sense from poses at t, update brains, decide moves
        for a in range(n):
            p = pos[a]
            h = head[a]
            ahead = p + step[h]
            wall = 1 if walls[ahead] else 0
            animat = 1 if occ[ahead] > 0 else 0
            nxt = np.int64(transition[(brains[a] & 0xFC) | wall | (animat << 1)])
            brains[a] = nxt
            motors = nxt >> 6
            # branch-free: motors 1 turns left, 2 turns right, 3 moves unless blocked
            new_head[a] = (h + turn[motors]) & 3
            new_pos[a] = p + step[h] * ((motors >> 1) & motors & (1 - wall))
            if record:
                log[t, a, 3] = wall
                log[t, a, 4] = animat
                log[t, a, 5] = motors & 1
                log[t, a, 6] = motors >> 1

        # apply all actions at once
        for a in range(n):
            occ[pos[a]] -= 1
            occ[new_pos[a]] += 1
            pos[a] = new_pos[a]
            head[a] = new_head[a]

        for a in range(n):
            p = pos[a]
            collided = occ[p] > 1
            crossed = False
            room = labels[p]
            if room != 0 and room != last_room[a]:
                crossed = last_room[a] != 0
                last_room[a] = room
            if collided:
                n_collisions[a] += 1
            if crossed:
                if t - last_cross[a] > timeout:
                    n_rewards[a] += 1
                last_cross[a] = t
            if record:
                log[t, a, 0] = p % width
                log[t, a, 1] = p // width
                log[t, a, 2] = head[a]
                log[t, a, 7] = 1 if collided else 0
                log[t, a, 8] = 1 if crossed else 0

    out = np.empty(n, dtype=np.float64)
    for a in range(n):
        out[a] = n_rewards[a] * reward - n_collisions[a] * penalty
    return out


@njit(cache=True, nogil=True)
def evaluate_trials(cells, rooms, transition, starts, tracked, n_steps, timeout,
                    reward, penalty):
    """Fitness of the tracked animat in each of R trials; ``starts`` is (R, N, 3)."""
    n_trials = starts.shape[0]
    empty = np.zeros((0, 0, 0), dtype=np.int16)
    out = np.empty(n_trials, dtype=np.float64)
    for r in range(n_trials):
        f = simulate(cells, rooms, transition, starts[r], n_steps, timeout, reward,
                     penalty, empty)
        out[r] = f[tracked[r]]
    return out


@njit(cache=True, nogil=True)
def genome_transition_table(sites):
    """Decode a genome straight into its 256-entry transition table.

    Fast path for evolution; ``brain.decode_gates`` + ``pack_gates`` is the
    reference this must agree with.
    """
    n = sites.shape[0]
    table = np.zeros(256, dtype=np.uint8)
    inputs = np.zeros(4, dtype=np.int64)
    outputs = np.zeros(4, dtype=np.int64)
    for i in range(n):
        if sites[i] != 42 or sites[(i + 1) % n] != 213:
            continue
        c = i + 2
        n_in = 1 + np.int64(sites[c % n]) % 4
        n_out = 1 + np.int64(sites[(c + 1) % n]) % 4
        for k in range(n_in):
            inputs[k] = np.int64(sites[(c + 2 + k) % n]) % 8
        for k in range(n_out):
            outputs[k] = 2 + np.int64(sites[(c + 2 + n_in + k) % n]) % 6
        first_row = c + 2 + n_in + n_out
        for s in range(256):
            row = 0
            for k in range(n_in):
                row |= ((s >> inputs[k]) & 1) << k
            pattern = np.int64(sites[(first_row + row) % n])
            mask = 0
            for k in range(n_out):
                if (pattern >> k) & 1:
                    mask |= 1 << outputs[k]
            table[s] |= mask
    return table
