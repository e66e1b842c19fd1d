"""Two-room grid world: geometry, map files, sensing and movement.

Coordinates are ``(x, y)`` with x the column and y the row; arrays are indexed
``[y, x]``. Headings are numbered clockwise from up, so a right turn adds one.
"""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Sequence

import numpy as np

from .brain import LEFT_MOTOR, N_NODES, RIGHT_MOTOR, Gate, brain_step

OPEN, WALL, GATE = 0, 1, 2
NO_ROOM, ROOM_A, ROOM_B = 0, 1, 2
N_STARTS = 72

DX = (0, 1, 0, -1)
DY = (-1, 0, 1, 0)


class Heading(IntEnum):
    UP = 0
    RIGHT = 1
    DOWN = 2
    LEFT = 3


class MapError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True, eq=False)
class Environment:
    cells: np.ndarray                       # (H, W) of OPEN / WALL / GATE
    rooms: np.ndarray                       # (H, W) of NO_ROOM / ROOM_A / ROOM_B
    start_positions: tuple[tuple[int, int], ...] = field(default=())

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def is_wall(self, x: int, y: int) -> bool:
        return bool(self.cells[y, x] == WALL)

    def room(self, x: int, y: int) -> int:
        return int(self.rooms[y, x])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Environment):
            return NotImplemented
        return (np.array_equal(self.cells, other.cells)
                and np.array_equal(self.rooms, other.rooms)
                and self.start_positions == other.start_positions)

    def __hash__(self):
        return hash(self.fingerprint)

    @cached_property
    def fingerprint(self) -> str:
        return hashlib.sha1(dump_environment(self).encode()).hexdigest()[:16]

    @cached_property
    def start_array(self) -> np.ndarray:
        """Start cells as an (S, 2) int64 array of x, y."""
        return np.asarray(self.start_positions, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True)
class Pose:
    x: int
    y: int
    heading: Heading

    def ahead(self) -> tuple[int, int]:
        return self.x + DX[self.heading], self.y + DY[self.heading]


# --- construction -------------------------------------------------------------

def default_environment() -> Environment:
    """32x32 world split by a two-row wall with a 2x2 gate at its centre.

    Room A is rows 1-14, room B rows 17-30. Each room holds a 6x6 lattice of
    start cells, mirror-symmetric about the dividing wall; no start cell
    touches a wall or another start cell.
    """
    size = 32
    cells = np.full((size, size), OPEN, dtype=np.int8)
    cells[0, :] = cells[-1, :] = WALL
    cells[:, 0] = cells[:, -1] = WALL
    cells[15:17, :] = WALL
    cells[15:17, 15:17] = GATE
    rooms = np.zeros_like(cells)
    rooms[1:15, 1:31] = ROOM_A
    rooms[17:31, 1:31] = ROOM_B
    cols = (3, 8, 13, 18, 23, 28)
    rows_a = (2, 4, 6, 8, 10, 12)
    starts = [(x, y) for y in rows_a for x in cols]
    starts += [(x, size - 1 - y) for y in reversed(rows_a) for x in cols]
    return Environment(cells, rooms, tuple(starts))


_CHAR_CELL = {"#": (WALL, NO_ROOM), ".": (OPEN, ROOM_A), ",": (OPEN, ROOM_B),
              "G": (GATE, NO_ROOM), "S": (OPEN, ROOM_A), "s": (OPEN, ROOM_B)}


def dump_environment(env: Environment) -> str:
    starts = set(env.start_positions)
    lines = []
    for y in range(env.height):
        row = []
        for x in range(env.width):
            kind, room = env.cells[y, x], env.rooms[y, x]
            if kind == WALL:
                row.append("#")
            elif kind == GATE:
                row.append("G")
            elif (x, y) in starts:
                row.append("S" if room == ROOM_A else "s")
            else:
                row.append("." if room == ROOM_A else ",")
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def _neighbours(x: int, y: int, width: int, height: int):
    for d in range(4):
        nx, ny = x + DX[d], y + DY[d]
        if 0 <= nx < width and 0 <= ny < height:
            yield nx, ny


def _flood(mask: np.ndarray, seed: tuple[int, int]) -> np.ndarray:
    height, width = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    seen[seed[1], seed[0]] = True
    queue = deque([seed])
    while queue:
        x, y = queue.popleft()
        for nx, ny in _neighbours(x, y, width, height):
            if mask[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                queue.append((nx, ny))
    return seen


def load_environment(text: str, expected_starts: int = N_STARTS) -> Environment:
    """Parse a character map ('#' wall, '.'/',' open A/B, 'G' gate, 'S'/'s' start A/B)."""
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    for i, ln in enumerate(lines, start=1):
        if len(ln) != width:
            raise MapError(f"non-rectangular map: expected width {width}, got {len(ln)}",
                           i, min(len(ln), width) + 1)
        for j, ch in enumerate(ln, start=1):
            if ch not in _CHAR_CELL:
                raise MapError(f"unknown map character {ch!r}", i, j)
    height = len(lines)
    cells = np.zeros((height, width), dtype=np.int8)
    rooms = np.zeros((height, width), dtype=np.int8)
    starts_a, starts_b = [], []
    for y, ln in enumerate(lines):
        for x, ch in enumerate(ln):
            cells[y, x], rooms[y, x] = _CHAR_CELL[ch]
            if ch == "S":
                starts_a.append((x, y))
            elif ch == "s":
                starts_b.append((x, y))

    for y in range(height):
        for x in range(width):
            on_border = x in (0, width - 1) or y in (0, height - 1)
            if on_border and cells[y, x] != WALL:
                raise MapError("border cell is not a wall", y + 1, x + 1)

    n_starts = len(starts_a) + len(starts_b)
    if n_starts != expected_starts:
        raise MapError(f"expected {expected_starts} start positions, found {n_starts}")

    for label, name in ((ROOM_A, "A"), (ROOM_B, "B")):
        members = np.argwhere(rooms == label)
        if members.size == 0:
            raise MapError(f"room {name} has no cells")
        y0, x0 = members[0]
        reached = _flood(rooms == label, (int(x0), int(y0)))
        stray = np.argwhere((rooms == label) & ~reached)
        if stray.size:
            raise MapError(f"room {name} is disconnected", int(stray[0][0]) + 1,
                           int(stray[0][1]) + 1)

    for y, x in np.argwhere(rooms == ROOM_A):
        for nx, ny in _neighbours(int(x), int(y), width, height):
            if rooms[ny, nx] == ROOM_B:
                raise MapError("rooms connected without gate", int(y) + 1, int(x) + 1)

    y0, x0 = np.argwhere(rooms == ROOM_A)[0]
    reached = _flood(cells != WALL, (int(x0), int(y0)))
    if not reached[rooms == ROOM_B].any():
        raise MapError("rooms not connected through a gate")
    unreached = np.argwhere((cells != WALL) & ~reached)
    if unreached.size:
        y, x = unreached[0]
        raise MapError("unlabeled or unreachable open cell", int(y) + 1, int(x) + 1)

    return Environment(cells, rooms, tuple(starts_a + starts_b))


# --- sensing and movement ---------------------------------------------------------

def sense(env: Environment, poses: Sequence[Pose], a: int) -> tuple[int, int]:
    ax, ay = poses[a].ahead()
    wall = int(env.is_wall(ax, ay))
    animat = int(any(p.x == ax and p.y == ay for i, p in enumerate(poses) if i != a))
    return wall, animat


def apply_action(env: Environment, pose: Pose, motors: tuple[int, int]) -> Pose:
    left, right = motors
    if left and right:
        nx, ny = pose.ahead()
        if env.is_wall(nx, ny):
            return pose
        return Pose(nx, ny, pose.heading)
    if left:
        return Pose(pose.x, pose.y, Heading((pose.heading - 1) % 4))
    if right:
        return Pose(pose.x, pose.y, Heading((pose.heading + 1) % 4))
    return pose


@dataclass(frozen=True)
class TrialState:
    gates: tuple[Gate, ...]
    poses: tuple[Pose, ...]
    brains: tuple[tuple[int, ...], ...]
    last_room: tuple[int, ...]

    @classmethod
    def start(cls, env: Environment, gates: Sequence[Gate], poses: Sequence[Pose]) -> TrialState:
        return cls(tuple(gates), tuple(poses), tuple((0,) * N_NODES for _ in poses),
                   tuple(env.room(p.x, p.y) for p in poses))


@dataclass(frozen=True)
class StepEvents:
    sensors: tuple[tuple[int, int], ...]
    motors: tuple[tuple[int, int], ...]
    collided: tuple[bool, ...]
    crossed: tuple[bool, ...]


def step_swarm(env: Environment, state: TrialState) -> tuple[TrialState, StepEvents]:
    """Advance every animat one step with synchronous updates.

    All animats sense from the poses at t, all brains update, then every
    action is applied at once. Animats never block each other.
    """
    sensors = tuple(sense(env, state.poses, a) for a in range(len(state.poses)))
    brains, motors, poses = [], [], []
    for pose, brain, (wall, animat) in zip(state.poses, state.brains, sensors):
        current = list(brain)
        current[0], current[1] = wall, animat
        nxt = brain_step(current, state.gates)
        m = (nxt[LEFT_MOTOR], nxt[RIGHT_MOTOR])
        brains.append(tuple(nxt))
        motors.append(m)
        poses.append(apply_action(env, pose, m))

    occupancy: dict[tuple[int, int], int] = {}
    for p in poses:
        occupancy[p.x, p.y] = occupancy.get((p.x, p.y), 0) + 1
    collided = tuple(occupancy[p.x, p.y] > 1 for p in poses)

    crossed, last_room = [], []
    for p, prev in zip(poses, state.last_room):
        room = env.room(p.x, p.y)
        if room != NO_ROOM and room != prev:
            crossed.append(prev != NO_ROOM)
            last_room.append(room)
        else:
            crossed.append(False)
            last_room.append(prev)

    new_state = TrialState(state.gates, tuple(poses), tuple(brains), tuple(last_room))
    return new_state, StepEvents(sensors, tuple(motors), collided, tuple(crossed))
