"""Markov Brain decoding and update.

Node layout (8 binary nodes)::

    0 wall sensor   1 animat sensor   2-5 hidden   6 left motor   7 right motor

Gates are deterministic lookup tables decoded from the genome. Byte layout of
one gate, starting at a (42, 213) start codon::

    42 213 | n_in | n_out | n_in input bytes | n_out output bytes | 2**n_in table bytes

with ``n_in = 1 + byte % 4``, ``n_out = 1 + byte % 4``, input node ``byte % 8``,
output node ``2 + byte % 6`` and each table byte contributing its low ``n_out``
bits as one row. All reads wrap around the circular genome.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .genome import Genome

N_NODES = 8
WALL_SENSOR, ANIMAT_SENSOR = 0, 1
HIDDEN = (2, 3, 4, 5)
LEFT_MOTOR, RIGHT_MOTOR = 6, 7
START_CODON = (42, 213)
MAX_IO = 4


@dataclass(frozen=True)
class Gate:
    """One deterministic gate.

    ``table[r]`` is the output pattern for input row ``r``; bit k of the pattern
    goes to ``outputs[k]``. The first listed input is the least significant bit
    of ``r``.
    """

    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    table: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= len(self.inputs) <= MAX_IO or not 1 <= len(self.outputs) <= MAX_IO:
            raise ValueError("gates need 1-4 inputs and 1-4 outputs")
        if any(not 0 <= i < N_NODES for i in self.inputs):
            raise ValueError(f"input node out of range: {self.inputs}")
        if any(not 2 <= o < N_NODES for o in self.outputs):
            raise ValueError(f"gates may not write sensor nodes: {self.outputs}")
        if len(self.table) != 2 ** len(self.inputs):
            raise ValueError("table must have 2**n_inputs rows")
        if any(not 0 <= row < 2 ** len(self.outputs) for row in self.table):
            raise ValueError("table row wider than the output set")

    def row_index(self, state: Sequence[int]) -> int:
        return sum((state[node] & 1) << k for k, node in enumerate(self.inputs))

    def to_dict(self) -> dict:
        return {"inputs": list(self.inputs), "outputs": list(self.outputs),
                "table": list(self.table)}


def find_start_codons(g: Genome) -> list[int]:
    """Positions i with sites[i], sites[i+1] == (42, 213), wrapping at the end."""
    data = g.tobytes()
    if len(data) < 2:
        return []
    codon = bytes(START_CODON)
    hits = []
    i = data.find(codon)
    while i != -1:
        hits.append(i)
        i = data.find(codon, i + 1)
    if data[-1] == START_CODON[0] and data[0] == START_CODON[1]:
        hits.append(len(data) - 1)
    return hits


def decode_gates(g: Genome) -> list[Gate]:
    """Decode every start codon, scanning left to right from index 0."""
    data = g.tobytes()
    n = len(data)
    gates = []
    for pos in find_start_codons(g):
        # unroll the circular genome far enough for the largest gate (2+2+4+4+16)
        start = (pos + 2) % n
        if start + 28 <= n:
            body = data[start:start + 28]
        else:
            body = bytes(data[(start + k) % n] for k in range(28))
        n_in = 1 + body[0] % 4
        n_out = 1 + body[1] % 4
        inputs = tuple(b % 8 for b in body[2:2 + n_in])
        outputs = tuple(2 + b % 6 for b in body[2 + n_in:2 + n_in + n_out])
        mask = (1 << n_out) - 1
        first_row = 2 + n_in + n_out
        table = tuple(b & mask for b in body[first_row:first_row + 2 ** n_in])
        gates.append(Gate(inputs, outputs, table))
    return gates


def brain_step(state: Sequence[int], gates: Iterable[Gate]) -> list[int]:
    """Map the 8-node state at t to t+1.

    Gate outputs are OR-ed per node; nodes nobody writes become 0, and sensor
    nodes always come back 0 because sensing overwrites them each step.
    """
    nxt = [0] * N_NODES
    for gate in gates:
        pattern = gate.table[gate.row_index(state)]
        for k, node in enumerate(gate.outputs):
            nxt[node] |= (pattern >> k) & 1
    return nxt


def effective_connectivity(gates: Iterable[Gate]) -> np.ndarray:
    adj = np.zeros((N_NODES, N_NODES), dtype=bool)
    for gate in gates:
        for i in gate.inputs:
            for j in gate.outputs:
                adj[i, j] = True
    return adj


@dataclass(frozen=True)
class PackedGates:
    """Array form of a gate list for the compiled simulator.

    ``row_masks[g, r]`` is the node bitmask that gate g ORs into the next
    state when its input row is r.
    """

    inputs: np.ndarray      # (G, 4) int64
    n_inputs: np.ndarray    # (G,) int64
    row_masks: np.ndarray   # (G, 16) uint8

    @property
    def count(self) -> int:
        return int(self.n_inputs.size)

    @property
    def drives_motors(self) -> bool:
        motor_bits = (1 << LEFT_MOTOR) | (1 << RIGHT_MOTOR)
        return bool(np.any(self.row_masks & motor_bits))

    def transition_table(self) -> np.ndarray:
        """Next state for each of the 256 current states, as a (256,) uint8 array.

        The brain is a deterministic function of its 8 bits, so tabulating it
        once turns every update into a single lookup.
        """
        states = np.arange(2 ** N_NODES, dtype=np.int64)
        table = np.zeros(2 ** N_NODES, dtype=np.uint8)
        for g in range(self.count):
            row = np.zeros_like(states)
            for k in range(int(self.n_inputs[g])):
                row |= ((states >> self.inputs[g, k]) & 1) << k
            table |= self.row_masks[g][row]
        return table


def pack_gates(gates: Sequence[Gate]) -> PackedGates:
    count = len(gates)
    inputs = np.zeros((count, MAX_IO), dtype=np.int64)
    n_inputs = np.zeros(count, dtype=np.int64)
    row_masks = np.zeros((count, 2 ** MAX_IO), dtype=np.uint8)
    for gi, gate in enumerate(gates):
        n_inputs[gi] = len(gate.inputs)
        inputs[gi, :len(gate.inputs)] = gate.inputs
        for r, pattern in enumerate(gate.table):
            mask = 0
            for k, node in enumerate(gate.outputs):
                if (pattern >> k) & 1:
                    mask |= 1 << node
            row_masks[gi, r] = mask
    return PackedGates(inputs, n_inputs, row_masks)


def dump_gates_jsonl(gates: Iterable[Gate]) -> str:
    return "".join(json.dumps(g.to_dict()) + "\n" for g in gates)


def load_gates_jsonl(text: str) -> list[Gate]:
    gates = []
    for line in text.splitlines():
        if line.strip():
            d = json.loads(line)
            gates.append(Gate(tuple(d["inputs"]), tuple(d["outputs"]), tuple(d["table"])))
    return gates
