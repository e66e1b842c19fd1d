"""Circular byte genomes and their mutation operators.

A genome is a string of unsigned 8-bit sites. Index arithmetic wraps, so a
segment may start near the end and continue at the front.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ALPHABET_SIZE = 256
INITIAL_SIZE = 5000


class GenomeError(ValueError):
    """Raised for out-of-bounds sizes or corrupt genome files."""


@dataclass(frozen=True)
class MutationParams:
    point_rate: float = 0.005
    copy_delete_rate: float = 0.00002
    segment_min: int = 128
    segment_max: int = 512
    size_min: int = 2000
    size_max: int = 20000

    def __post_init__(self):
        for name in ("point_rate", "copy_delete_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise GenomeError(f"{name} must lie in [0, 1], got {rate}")
        if not 1 <= self.segment_min <= self.segment_max:
            raise GenomeError("need 1 <= segment_min <= segment_max")
        if not 1 <= self.size_min <= self.size_max:
            raise GenomeError("need 1 <= size_min <= size_max")


@dataclass(frozen=True, eq=False)
class Genome:
    """Immutable wrapper around a uint8 site array."""

    sites: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.sites)
        if arr.ndim != 1:
            raise GenomeError("genome sites must be one-dimensional")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() >= ALPHABET_SIZE):
                raise GenomeError("sites must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        else:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "sites", arr)

    @classmethod
    def from_bytes(cls, data: bytes | Sequence[int]) -> Genome:
        return cls(np.frombuffer(bytes(data), dtype=np.uint8))

    def __len__(self) -> int:
        return int(self.sites.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Genome):
            return NotImplemented
        return np.array_equal(self.sites, other.sites)

    def __hash__(self) -> int:
        return hash(self.sites.tobytes())

    def __repr__(self) -> str:
        return f"Genome(len={len(self)})"

    def tobytes(self) -> bytes:
        return self.sites.tobytes()

    def hex(self) -> str:
        return self.sites.tobytes().hex()


def new_random_genome(length: int, rng: np.random.Generator,
                      params: MutationParams = MutationParams()) -> Genome:
    if not params.size_min <= length <= params.size_max:
        raise GenomeError(
            f"genome length {length} outside [{params.size_min}, {params.size_max}]")
    return Genome(rng.integers(0, ALPHABET_SIZE, size=length, dtype=np.uint8))


def seed_start_codons(g: Genome, count: int, rng: np.random.Generator,
                      codon: tuple[int, int] = (42, 213)) -> Genome:
    """Overwrite ``count`` uniformly placed site pairs with the gate start codon."""
    if count <= 0:
        return g
    sites = g.sites.copy()
    n = len(sites)
    for pos in rng.integers(0, n, size=count):
        sites[pos] = codon[0]
        sites[(pos + 1) % n] = codon[1]
    return Genome(sites)


def point_mutate(g: Genome, params: MutationParams, rng: np.random.Generator) -> Genome:
    """Replace each site with a fresh uniform symbol with probability point_rate.

    The replacement may redraw the old symbol, so the expected fraction of
    visibly changed sites is ``point_rate * 255/256``.
    """
    if params.point_rate == 0.0:
        return g
    hit = rng.random(len(g)) < params.point_rate
    n = int(hit.sum())
    if n == 0:
        return g
    sites = g.sites.copy()
    sites[hit] = rng.integers(0, ALPHABET_SIZE, size=n, dtype=np.uint8)
    return Genome(sites)


def _circular_indices(length: int, start: int, count: int) -> np.ndarray:
    return (start + np.arange(count)) % length


def duplicate_segment(g: Genome, start: int, length: int,
                      params: MutationParams = MutationParams()) -> Genome:
    """Copy ``length`` sites from ``start`` and insert them right after the source.

    Skipped (genome returned unchanged) when the result would exceed size_max.
    """
    n = len(g)
    if n + length > params.size_max or length > n:
        return g
    segment = g.sites[_circular_indices(n, start, length)]
    insert_at = (start + length) % n
    if insert_at == 0:
        insert_at = n
    return Genome(np.concatenate([g.sites[:insert_at], segment, g.sites[insert_at:]]))


def delete_segment(g: Genome, start: int, length: int,
                   params: MutationParams = MutationParams()) -> Genome:
    """Remove the circular segment [start, start+length).

    Skipped when the result would drop below size_min.
    """
    n = len(g)
    if n - length < params.size_min or length > n:
        return g
    keep = np.ones(n, dtype=bool)
    keep[_circular_indices(n, start, length)] = False
    return Genome(g.sites[keep])


def copy_delete_mutate(g: Genome, params: MutationParams,
                       rng: np.random.Generator) -> Genome:
    if params.copy_delete_rate == 0.0:
        return g
    n_copy = int(rng.binomial(len(g), params.copy_delete_rate))
    n_delete = int(rng.binomial(len(g), params.copy_delete_rate))
    for _ in range(n_copy):
        seg = int(rng.integers(params.segment_min, params.segment_max + 1))
        start = int(rng.integers(0, len(g)))
        g = duplicate_segment(g, start, seg, params)
    for _ in range(n_delete):
        seg = int(rng.integers(params.segment_min, params.segment_max + 1))
        start = int(rng.integers(0, len(g)))
        g = delete_segment(g, start, seg, params)
    return g


def mutate(g: Genome, params: MutationParams, rng: np.random.Generator) -> Genome:
    # point mutation first, then copy/delete; the order is part of the determinism contract
    return copy_delete_mutate(point_mutate(g, params, rng), params, rng)


# --- persistence -------------------------------------------------------------

_HEADER = struct.Struct("<Q")
_HEX_DIGITS = frozenset("0123456789abcdefABCDEF")


def encode_binary(genomes: Iterable[Genome]) -> bytes:
    """Concatenate genomes as (8-byte little-endian length, raw sites) records."""
    out = bytearray()
    for g in genomes:
        out += _HEADER.pack(len(g))
        out += g.tobytes()
    return bytes(out)


def decode_binary(data: bytes) -> list[Genome]:
    genomes = []
    offset = 0
    while offset < len(data):
        if offset + _HEADER.size > len(data):
            raise GenomeError(f"truncated length header at byte offset {offset}")
        (n,) = _HEADER.unpack_from(data, offset)
        offset += _HEADER.size
        if offset + n > len(data):
            raise GenomeError(
                f"genome at byte offset {offset - _HEADER.size} declares {n} sites "
                f"but only {len(data) - offset} bytes remain")
        genomes.append(Genome(np.frombuffer(data, dtype=np.uint8, count=n, offset=offset)))
        offset += n
    return genomes


def encode_hex(genomes: Iterable[Genome]) -> str:
    return "".join(g.hex() + "\n" for g in genomes)


def decode_hex(text: str) -> list[Genome]:
    """Parse one hex genome per line; blank lines and '#' comments are skipped.

    Errors report the line, column and character offset of the bad input.
    """
    genomes = []
    line_start = 0
    for lineno, raw in enumerate(text.splitlines(keepends=True), start=1):
        offset, line_start = line_start, line_start + len(raw)
        stripped = raw.rstrip("\r\n")
        line = stripped.strip()
        if not line or line.startswith("#"):
            continue
        lead = len(stripped) - len(stripped.lstrip())
        bad = next((i for i, ch in enumerate(line) if ch not in _HEX_DIGITS), None)
        if bad is not None:
            raise GenomeError(f"line {lineno}, column {lead + bad + 1} (offset {offset + lead + bad}): "
                              f"invalid hex digit {line[bad]!r}")
        if len(line) % 2:
            raise GenomeError(f"line {lineno} (offset {offset}): odd number of hex digits "
                              f"({len(line)})")
        genomes.append(Genome.from_bytes(bytes.fromhex(line)))
    return genomes


def save_genomes(path: str | Path, genomes: Iterable[Genome]) -> None:
    """Write genomes; ``.bin`` selects the binary format, anything else hex lines."""
    path = Path(path)
    if path.suffix == ".bin":
        path.write_bytes(encode_binary(genomes))
    else:
        path.write_text(encode_hex(genomes))


def load_genomes(path: str | Path) -> list[Genome]:
    path = Path(path)
    if path.suffix == ".bin":
        return decode_binary(path.read_bytes())
    return decode_hex(path.read_text())
