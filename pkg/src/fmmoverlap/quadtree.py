"""
Uniform quadtree over the unit square: box geometry, particle binning,
neighbor lists and interaction lists.

Boxes at level ``l`` live on a ``2**l x 2**l`` grid.  ``i`` indexes the x
direction, ``j`` the y direction, and the linear key is ``i * 2**l + j``.
Box extents are half-open: ``[x0, x0 + w) x [y0, y0 + w)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ROOT_WIDTH = 1.0


class OutOfDomainError(ValueError):
    """A particle lies outside the half-open unit square."""

    def __init__(self, index: int, position: complex):
        super().__init__(
            f"particle {index} at ({position.real!r}, {position.imag!r}) "
            "lies outside the domain [0,1)x[0,1)"
        )
        self.index = index
        self.position = position


@dataclass(frozen=True)
class Particle:
    position: complex
    circulation: float

    def __post_init__(self):
        if not np.isfinite(self.circulation):
            raise ValueError("circulation must be finite")


@dataclass(frozen=True, eq=False)
class Particles:
    """Struct-of-arrays particle container.

    ``z`` holds positions as complex numbers ``x + iy`` and ``gamma`` the
    circulations.  Both arrays are copied and made read-only.
    """

    z: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=np.complex128).reshape(-1)
        gamma = np.array(self.gamma, dtype=np.float64).reshape(-1)
        if z.shape != gamma.shape:
            raise ValueError("positions and circulations differ in length")
        if not np.all(np.isfinite(gamma)):
            raise ValueError("circulations must be finite")
        z.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "gamma", gamma)

    def __len__(self) -> int:
        return self.z.shape[0]

    def __getitem__(self, index: int) -> Particle:
        return Particle(complex(self.z[index]), float(self.gamma[index]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    @classmethod
    def from_list(cls, particles: Iterable[Particle]) -> "Particles":
        particles = list(particles)
        return cls(
            np.array([p.position for p in particles], dtype=np.complex128),
            np.array([p.circulation for p in particles], dtype=np.float64),
        )

    @classmethod
    def from_xy(cls, xy, gamma) -> "Particles":
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        return cls(xy[:, 0] + 1j * xy[:, 1], gamma)


def as_particles(particles) -> Particles:
    if isinstance(particles, Particles):
        return particles
    return Particles.from_list(particles)


@dataclass(frozen=True)
class Box:
    level: int
    i: int
    j: int
    center: complex
    width: float

    @property
    def key(self) -> int:
        return self.i * (1 << self.level) + self.j


class Quadtree:
    """Fully materialized uniform quadtree with levels ``0..levels``.

    Geometry is computed once at construction.  Neighbor and interaction
    lists are built on first request and cached; the cache is filled before
    any concurrent reader sees the tree (stage 3 of a run).
    """

    def __init__(self, levels: int):
        if int(levels) != levels or levels < 2:
            raise ValueError(f"levels must be an integer >= 2, got {levels!r}")
        self.levels = int(levels)
        self.width = ROOT_WIDTH
        self._centers = []
        for level in range(self.levels + 1):
            n = 1 << level
            w = self.width / n
            c = (np.arange(n) + 0.5) * w
            # key = i * n + j -> x varies slowest
            centers = (c[:, None] + 1j * c[None, :]).reshape(-1)
            centers.setflags(write=False)
            self._centers.append(centers)
        self._neighbors: dict[int, NeighborLists] = {}
        self._interactions: dict[int, InteractionLists] = {}

    def __repr__(self):
        return f"Quadtree(levels={self.levels})"

    def side(self, level: int) -> int:
        return 1 << level

    def n_boxes(self, level: int) -> int:
        self._check_level(level, lo=0)
        return 4**level

    def box_width(self, level: int) -> float:
        return self.width / (1 << level)

    def centers(self, level: int) -> np.ndarray:
        self._check_level(level, lo=0)
        return self._centers[level]

    def box(self, level: int, key: int) -> Box:
        n = self.side(level)
        i, j = divmod(int(key), n)
        return Box(level, i, j, complex(self._centers[level][key]),
                   self.box_width(level))

    def key(self, level: int, i: int, j: int) -> int:
        return i * self.side(level) + j

    def parent(self, level: int, key: int) -> int:
        self._check_level(level, lo=1)
        n = self.side(level)
        i, j = divmod(int(key), n)
        return self.key(level - 1, i // 2, j // 2)

    def children(self, level: int, key: int) -> tuple[int, int, int, int]:
        """Keys of the four children at ``level + 1``, in ascending order."""
        self._check_level(level, lo=0, hi=self.levels - 1)
        n = self.side(level)
        i, j = divmod(int(key), n)
        return tuple(self.key(level + 1, 2 * i + di, 2 * j + dj)
                     for di in (0, 1) for dj in (0, 1))

    def neighbors(self, level: int) -> "NeighborLists":
        if level not in self._neighbors:
            self._neighbors[level] = neighbor_lists(self, level)
        return self._neighbors[level]

    def interactions(self, level: int) -> "InteractionLists":
        if level not in self._interactions:
            self._interactions[level] = interaction_lists(self, level)
        return self._interactions[level]

    def _check_level(self, level, lo=0, hi=None):
        hi = self.levels if hi is None else hi
        if not lo <= level <= hi:
            raise ValueError(f"level {level} outside [{lo}, {hi}]")


def build_tree(levels: int) -> Quadtree:
    return Quadtree(levels)


@dataclass(frozen=True, eq=False)
class Binning:
    """Partition of particle indices over the finest-level boxes.

    ``order`` lists particle indices grouped by box key (ascending index
    within a box); box ``k`` owns ``order[offsets[k]:offsets[k + 1]]``.
    """

    levels: int
    box_of: np.ndarray
    order: np.ndarray
    offsets: np.ndarray

    def particles_in(self, key: int) -> np.ndarray:
        return self.order[self.offsets[key]:self.offsets[key + 1]]

    def count(self, key: int) -> int:
        return int(self.offsets[key + 1] - self.offsets[key])

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def n_particles(self) -> int:
        return self.box_of.shape[0]


def bin_particles(tree: Quadtree, particles) -> Binning:
    particles = as_particles(particles)
    z = particles.z
    x, y = z.real, z.imag
    inside = (np.isfinite(x) & np.isfinite(y)
              & (x >= 0) & (x < tree.width) & (y >= 0) & (y < tree.width))
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0])
        raise OutOfDomainError(bad, complex(z[bad]))
    n = tree.side(tree.levels)
    # scaling by a power of two is exact, so floor() honours the half-open edges
    i = np.floor(x * n).astype(np.int64)
    j = np.floor(y * n).astype(np.int64)
    box_of = i * n + j
    order = np.argsort(box_of, kind="stable")
    offsets = np.zeros(4**tree.levels + 1, dtype=np.int64)
    np.cumsum(np.bincount(box_of, minlength=4**tree.levels), out=offsets[1:])
    for arr in (box_of, order, offsets):
        arr.setflags(write=False)
    return Binning(tree.levels, box_of, order, offsets)


def _adjacent(n: int, i: int, j: int) -> list[tuple[int, int]]:
    out = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            a, b = i + di, j + dj
            if 0 <= a < n and 0 <= b < n:
                out.append((a, b))
    return out


@dataclass(frozen=True, eq=False)
class NeighborLists:
    level: int
    lists: tuple

    def __getitem__(self, key: int) -> np.ndarray:
        return self.lists[key]

    def __len__(self):
        return len(self.lists)

    def classify(self) -> dict[str, int]:
        """Count corner (3 neighbors), edge (5) and interior (8) boxes."""
        sizes = np.array([len(v) for v in self.lists])
        if self.level == 0:
            return {"corner": 0, "edge": 0, "interior": 0}
        return {"corner": int(np.sum(sizes == 3)),
                "edge": int(np.sum(sizes == 5)),
                "interior": int(np.sum(sizes == 8))}


def neighbor_lists(tree: Quadtree, level: int) -> NeighborLists:
    if not 1 <= level <= tree.levels:
        raise ValueError(f"level must lie in [1, {tree.levels}], got {level}")
    n = tree.side(level)
    lists = []
    for key in range(n * n):
        i, j = divmod(key, n)
        keys = sorted(a * n + b for a, b in _adjacent(n, i, j))
        arr = np.array(keys, dtype=np.int64)
        arr.setflags(write=False)
        lists.append(arr)
    return NeighborLists(level, tuple(lists))


@dataclass(frozen=True, eq=False)
class InteractionLists:
    level: int
    lists: tuple

    def __getitem__(self, key: int) -> np.ndarray:
        return self.lists[key]

    def __len__(self):
        return len(self.lists)

    def max_size(self) -> int:
        return max(len(v) for v in self.lists)


def interaction_lists(tree: Quadtree, level: int) -> InteractionLists:
    if not 2 <= level <= tree.levels:
        raise ValueError(
            f"interaction lists need 2 <= level <= {tree.levels}, got {level}")
    n = tree.side(level)
    np_ = n // 2
    lists = []
    for key in range(n * n):
        i, j = divmod(key, n)
        pi, pj = i // 2, j // 2
        keys = []
        for a, b in [(pi, pj)] + _adjacent(np_, pi, pj):
            for di in (0, 1):
                for dj in (0, 1):
                    ci, cj = 2 * a + di, 2 * b + dj
                    if abs(ci - i) > 1 or abs(cj - j) > 1:
                        keys.append(ci * n + cj)
        arr = np.array(sorted(keys), dtype=np.int64)
        arr.setflags(write=False)
        lists.append(arr)
    return InteractionLists(level, tuple(lists))


def uniform_lattice(levels: int, per_box: int, gamma=None,
                    seed: int | None = 0) -> Particles:
    """Particles placed so every finest box holds exactly ``per_box``.

    Each box gets the first ``per_box`` points of a ``k x k`` sub-lattice
    (``k = ceil(sqrt(per_box))``) at cell midpoints.  Circulations come from
    ``gamma`` if given, else uniform on [-1, 1) from ``seed``.
    """
    if per_box < 0 or int(per_box) != per_box:
        raise ValueError("per_box must be a non-negative integer")
    per_box = int(per_box)
    n = 1 << levels
    w = ROOT_WIDTH / n
    k = int(np.ceil(np.sqrt(per_box))) if per_box else 0
    sub = (np.arange(k) + 0.5) / max(k, 1)
    local = (sub[:, None] + 1j * sub[None, :]).reshape(-1)[:per_box] * w
    corners = (np.arange(n)[:, None] * w + 1j * np.arange(n)[None, :] * w)
    z = (corners.reshape(-1)[:, None] + local[None, :]).reshape(-1)
    if gamma is None:
        gamma = np.random.default_rng(seed).uniform(-1.0, 1.0, z.shape[0])
    else:
        gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), z.shape)
    return Particles(z, gamma)


def uniform_random(n: int, seed: int, gamma_range: Sequence[float] = (-1.0, 1.0)
                   ) -> Particles:
    rng = np.random.default_rng(seed)
    xy = rng.random((n, 2))
    gamma = rng.uniform(gamma_range[0], gamma_range[1], n)
    return Particles.from_xy(xy, gamma)
