import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from animats.brain import Gate, decode_gates
from animats.evaluation import TrialConfig, simulate_from, trial_starts
from animats.world import (GATE, NO_ROOM, OPEN, ROOM_A, ROOM_B, WALL, Heading, MapError, Pose,
                           TrialState, apply_action, default_environment, dump_environment,
                           load_environment, sense, step_swarm)

from helpers import check_world_invariants, random_genome


def test_default_environment_geometry(env):
    assert env.cells.shape == (32, 32)
    assert (env.cells[0] == WALL).all() and (env.cells[-1] == WALL).all()
    assert (env.cells[:, 0] == WALL).all() and (env.cells[:, -1] == WALL).all()
    assert np.count_nonzero(env.cells == GATE) == 4
    assert len(env.start_positions) == 72
    assert len(set(env.start_positions)) == 72
    rooms = [env.room(x, y) for x, y in env.start_positions]
    assert rooms.count(ROOM_A) == rooms.count(ROOM_B) == 36
    for x, y in env.start_positions:
        assert env.cells[y, x] == OPEN


def test_start_layout_is_mirror_symmetric(env):
    starts = set(env.start_positions)
    assert {(x, 31 - y) for x, y in starts} == starts


def test_gate_cells_are_unlabeled(env):
    assert (env.rooms[env.cells == GATE] == NO_ROOM).all()
    assert (env.rooms[env.cells == WALL] == NO_ROOM).all()


def test_dump_load_round_trip(env):
    assert load_environment(dump_environment(env)) == env


def _map_lines(env):
    return [list(line) for line in dump_environment(env).splitlines()]


def _text(lines):
    return "\n".join("".join(line) for line in lines) + "\n"


def test_load_rejects_wrong_start_count(env):
    lines = _map_lines(env)
    x, y = env.start_positions[0]
    lines[y][x] = "."
    with pytest.raises(MapError, match="expected 72 start positions"):
        load_environment(_text(lines))


def test_load_rejects_missing_gate(env):
    # replace the gate by open cells: the rooms now touch directly
    lines = _map_lines(env)
    for y in (15, 16):
        for x in (15, 16):
            lines[y][x] = "." if y == 15 else ","
    with pytest.raises(MapError, match="rooms connected without gate"):
        load_environment(_text(lines))


def test_load_rejects_closed_gate(env):
    lines = _map_lines(env)
    for y in (15, 16):
        for x in (15, 16):
            lines[y][x] = "#"
    with pytest.raises(MapError, match="not connected through a gate"):
        load_environment(_text(lines))


def test_load_reports_position(env):
    lines = _map_lines(env)
    lines[3][7] = "?"
    with pytest.raises(MapError, match="line 4, column 8") as err:
        load_environment(_text(lines))
    assert (err.value.line, err.value.column) == (4, 8)
    ragged = _text(_map_lines(env)[:5]) + "##\n"
    with pytest.raises(MapError, match="line 6.*non-rectangular"):
        load_environment(ragged)


def test_load_rejects_open_border(env):
    lines = _map_lines(env)
    lines[0][5] = "."
    with pytest.raises(MapError, match="border"):
        load_environment(_text(lines))


def test_sense_examples(env):
    assert sense(env, [Pose(1, 5, Heading.LEFT)], 0) == (1, 0)
    facing = [Pose(5, 5, Heading.RIGHT), Pose(6, 5, Heading.LEFT)]
    assert sense(env, facing, 0) == (0, 1)
    assert sense(env, facing, 1) == (0, 1)
    assert sense(env, [Pose(5, 5, Heading.UP)], 0) == (0, 0)


def test_apply_action_examples(env):
    p = Pose(5, 5, Heading.UP)
    assert apply_action(env, p, (1, 0)) == Pose(5, 5, Heading.LEFT)
    assert apply_action(env, p, (0, 1)) == Pose(5, 5, Heading.RIGHT)
    assert apply_action(env, p, (0, 0)) == p
    assert apply_action(env, p, (1, 1)) == Pose(5, 4, Heading.UP)
    blocked = Pose(5, 1, Heading.UP)
    assert apply_action(env, blocked, (1, 1)) == blocked
    q = p
    for _ in range(4):
        q = apply_action(env, q, (0, 1))
    assert q == p


def _state(env, poses, gates=()):
    return TrialState.start(env, list(gates), poses)


def test_single_animat_never_collides(env):
    forward = Gate((0,), (6, 7), (3, 3))
    state = _state(env, [Pose(5, 5, Heading.RIGHT)], [forward])
    for _ in range(40):
        state, events = step_swarm(env, state)
        assert events.collided == (False,)


def test_animats_moving_into_one_cell_both_collide(env):
    forward = Gate((0,), (6, 7), (3, 3))
    poses = [Pose(5, 5, Heading.RIGHT), Pose(7, 5, Heading.LEFT)]
    _, events = step_swarm(env, _state(env, poses, [forward]))
    assert events.collided == (True, True)


def test_crossing_fires_once_on_entering_b(env):
    forward = Gate((0,), (6, 7), (3, 3))
    state = _state(env, [Pose(15, 13, Heading.DOWN)], [forward])
    crossings = []
    for _ in range(5):
        state, events = step_swarm(env, state)
        p = state.poses[0]
        crossings.append((p.y, events.crossed[0]))
    # rows 14 (A), 15 and 16 (gate), 17 (B), 18 (B)
    assert crossings == [(14, False), (15, False), (16, False), (17, True), (18, False)]


def _reference_log(env, gates, starts, steps):
    poses = [Pose(int(x), int(y), Heading(int(h))) for x, y, h in starts]
    state = _state(env, poses, gates)
    rows = []
    for _ in range(steps):
        state, ev = step_swarm(env, state)
        rows.append([[p.x, p.y, int(p.heading), s[0], s[1], m[0], m[1], int(c), int(x)]
                     for p, s, m, c, x in zip(state.poses, ev.sensors, ev.motors,
                                              ev.collided, ev.crossed)])
    return np.array(rows)


@pytest.mark.parametrize("seed", range(12))
def test_kernel_matches_reference_stepper(env, seed):
    g = random_genome(seed, gates=40)
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    starts = trial_starts(env, n, 1, rng)[0]
    cfg = TrialConfig(steps=120, swarm_size=n)
    log = simulate_from(g, env, starts, cfg)
    assert np.array_equal(log.data, _reference_log(env, decode_gates(g), starts, cfg.steps))


def test_index_permutation_equivariance(env):
    g = random_genome(77, gates=40)
    rng = np.random.default_rng(1)
    starts = trial_starts(env, 20, 1, rng)[0]
    perm = rng.permutation(20)
    cfg = TrialConfig(steps=200, swarm_size=20)
    a = simulate_from(g, env, starts, cfg)
    b = simulate_from(g, env, starts[perm], cfg)
    assert np.array_equal(a.data[:, perm], b.data)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 72))
def test_world_invariants_hold(env, seed, n):
    g = random_genome(seed % 100_000, gates=60)
    starts = trial_starts(env, n, 1, np.random.default_rng(seed))[0]
    log = simulate_from(g, env, starts, TrialConfig(steps=200, swarm_size=n))
    assert check_world_invariants(env, log.data, starts) == 0


def test_no_crossing_from_start_room(env):
    # standing still in the start room never counts as a crossing
    still = Gate((0,), (6,), (0, 0))
    state = _state(env, [Pose(x, y, Heading.UP) for x, y in env.start_positions[:10]], [still])
    state, events = step_swarm(env, state)
    assert not any(events.crossed)


def test_default_environment_is_cached_value_equal():
    assert default_environment() == default_environment()
    assert default_environment().fingerprint == default_environment().fingerprint
