"""Space-time Poisson vertex clouds, red/black colouring and the shared edge-mark oracle."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ArgumentError, ContractError
from .model import ModelParams, TorusBox

UNCOLOURED, BLACK, RED = 0, 1, 2
COLOUR_NAMES = {UNCOLOURED: "uncoloured", BLACK: "black", RED: "red"}
COLOUR_CODES = {v: k for k, v in COLOUR_NAMES.items()}

MAX_IDS = 2**32

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_M32 = np.uint64(0xFFFFFFFF)


def stream_rng(seed: int, label: str) -> np.random.Generator:
    """Independent generator for a (seed, label) stream."""
    digest = hashlib.blake2b(label.encode(), digest_size=16).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=words))


def _u64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.uint64)


def splitmix64(z):
    z = _u64(z)
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def fmix32(h):
    h = _u64(h) & _M32
    h ^= h >> np.uint64(16)
    h = (h * np.uint64(0x85EBCA6B)) & _M32
    h ^= h >> np.uint64(13)
    h = (h * np.uint64(0xC2B2AE35)) & _M32
    h ^= h >> np.uint64(16)
    return h


def younger_keys(seed_key: int, younger) -> np.ndarray:
    with np.errstate(over="ignore"):
        return splitmix64(np.uint64(seed_key) ^ (_u64(younger) * np.uint64(0xD1B54A32D192ED03)))


def marks_from_keys(keys, older) -> np.ndarray:
    """53-bit uniform marks for (older id, per-younger key) pairs."""
    o = _u64(older) & _M32
    keys = _u64(keys)
    h1 = fmix32(((o * np.uint64(0x9E3779B1)) & _M32) ^ (keys & _M32))
    h2 = fmix32(((o * np.uint64(0x7FEB352D)) & _M32) ^ (keys >> np.uint64(32)))
    return ((h1 << np.uint64(21)) | (h2 >> np.uint64(11))).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class MarkOracle:
    """Deterministic uniform mark V for every unordered pair of vertex ids."""

    seed: int

    @property
    def seed_key(self) -> int:
        return int(splitmix64(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF)))

    def marks(self, a, b) -> np.ndarray:
        """Vectorized marks; each pair is ordered internally, so mark(a,b) = mark(b,a)."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        older, younger = np.minimum(a, b), np.maximum(a, b)
        return marks_from_keys(younger_keys(self.seed_key, younger), older)

    def __call__(self, a: int, b: int) -> float:
        return float(self.marks(np.array([a]), np.array([b]))[0])


def edge_mark(oracle: MarkOracle, older_id: int, younger_id: int) -> float:
    if older_id == younger_id:
        raise ArgumentError("edge marks are only defined for distinct vertices")
    if min(older_id, younger_id) < 0 or max(older_id, younger_id) >= MAX_IDS:
        raise ArgumentError("vertex ids must lie in [0, 2^32)")
    return oracle(older_id, younger_id)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Birth-ordered vertices: global ids, positions (m, d), births in (0,1], colour codes."""

    ids: np.ndarray
    positions: np.ndarray
    birth: np.ndarray
    colour: np.ndarray
    box: TorusBox
    params: Optional[ModelParams] = None

    def __post_init__(self):
        m = self.ids.shape[0]
        if self.positions.shape != (m, self.box.dimension):
            raise ContractError("positions must have shape (count, d)")
        if self.birth.shape != (m,) or self.colour.shape != (m,):
            raise ContractError("birth and colour arrays must match the id array")

    @property
    def count(self) -> int:
        return int(self.ids.shape[0])

    @property
    def dimension(self) -> int:
        return self.box.dimension

    @property
    def volume(self) -> float:
        return self.box.side ** self.box.dimension

    @property
    def coloured(self) -> bool:
        return self.count > 0 and bool(np.all(self.colour != UNCOLOURED))

    def is_birth_ordered(self) -> bool:
        return bool(np.all(np.diff(self.birth) > 0)) and bool(np.all(np.diff(self.ids) > 0))

    def subset(self, mask) -> "PointCloud":
        if not isinstance(mask, slice):
            mask = np.asarray(mask)
        return replace(self, ids=self.ids[mask], positions=self.positions[mask],
                       birth=self.birth[mask], colour=self.colour[mask])

    def prefix(self, k: int) -> "PointCloud":
        return self.subset(slice(0, k))

    def with_colour(self, colour: np.ndarray) -> "PointCloud":
        return replace(self, colour=np.asarray(colour, dtype=np.int8))

    def local_index(self, gid) -> np.ndarray:
        """Rows of the given global ids (ArgumentError for unknown ids)."""
        gid = np.asarray(gid, dtype=np.int64)
        idx = np.searchsorted(self.ids, gid)
        idx = np.minimum(idx, max(self.count - 1, 0))
        if self.count == 0 or np.any(self.ids[idx] != gid):
            raise ArgumentError("unknown vertex id")
        return idx


def sample_points(params: ModelParams, stream_label: str = "points") -> PointCloud:
    """Poisson(lambda n) vertices, uniform on the torus, births uniform on (0,1]."""
    rng = stream_rng(params.seed, stream_label)
    box = params.box
    m = int(rng.poisson(params.intensity * params.volume))
    if m >= MAX_IDS:
        raise ArgumentError(f"{m} vertices exceed the 2^32 id space of the mark oracle")
    h = 0.5 * box.side
    pos = rng.uniform(-h, h, size=(m, box.dimension))
    pos[pos >= h] = -h
    birth = 1.0 - rng.random(m)
    # resample ties so births are strictly ordered
    while True:
        order = np.argsort(birth, kind="stable")
        birth = birth[order]
        pos = pos[order]
        dup = np.flatnonzero(np.diff(birth) == 0)
        if dup.size == 0:
            break
        birth[dup + 1] = 1.0 - rng.random(dup.size)
    return PointCloud(np.arange(m, dtype=np.int64), pos, birth,
                      np.zeros(m, dtype=np.int8), box, params)


def colour_points(cloud: PointCloud, r: float, stream_label: str = "colour") -> PointCloud:
    """Colour each vertex red with probability r, black otherwise."""
    if not 0.0 <= r <= 1.0:
        raise ArgumentError(f"red probability must lie in [0,1], got {r}")
    if np.any(cloud.colour != UNCOLOURED):
        raise ContractError("cloud is already coloured")
    seed = cloud.params.seed if cloud.params is not None else 0
    u = stream_rng(seed, stream_label).random(cloud.count)
    return cloud.with_colour(np.where(u < r, RED, BLACK).astype(np.int8))


def early_vertex_count(cloud: PointCloud, sigma: float) -> int:
    if not 0.0 <= sigma <= 1.0:
        raise ArgumentError(f"sigma must lie in [0,1], got {sigma}")
    return int(np.count_nonzero(cloud.birth <= sigma))


def cube_index(cloud: PointCloud) -> np.ndarray:
    """Per-axis unit-cube coordinates; the last cube of each axis may be truncated."""
    side = cloud.box.side
    ncube = int(np.ceil(side - 1e-12))
    c = np.floor(cloud.positions + 0.5 * side).astype(np.int64)
    return np.clip(c, 0, ncube - 1)


def dense_cube_census(cloud: PointCloud, m: int):
    """Counts N_z per unit cube and the sorted array of flat indices with N_z >= m."""
    if m < 1:
        raise ArgumentError(f"density threshold must be >= 1, got {m}")
    d = cloud.dimension
    ncube = int(np.ceil(cloud.box.side - 1e-12))
    counts = np.zeros((ncube,) * d, dtype=np.int64)
    if cloud.count:
        np.add.at(counts, tuple(cube_index(cloud).T), 1)
    dense = np.flatnonzero(counts.ravel() >= m)
    return counts, dense
