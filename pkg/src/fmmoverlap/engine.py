"""
Reference FMM pipeline built from per-box stage kernels.

Stages follow the dependency graph of the method:

    1 tree construction        6 multipole-to-local
    2 particle binning         7 local-to-local
    3 neighbor/interaction     8 local-to-particle
    4 particle-to-multipole    9 near-field direct evaluation
    5 multipole-to-multipole  10 far + near summation

:class:`FmmState` owns every intermediate array.  Each stage method writes
only the slot of the box it is called for, which is what lets the scheduler
run the same methods concurrently and still get bit-identical output.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import costmodel, expansion, flops
from . import kernel
from .kernel import KernelParams
from .quadtree import Binning, Quadtree, as_particles, bin_particles, build_tree

STAGE_NAMES = {
    1: "tree",
    2: "binning",
    3: "lists",
    4: "p2m",
    5: "m2m",
    6: "m2l",
    7: "l2l",
    8: "l2p",
    9: "near",
    10: "combine",
}

Mode = Literal["sequential", "overlapped"]


@dataclass(frozen=True)
class FmmConfig:
    levels: int = 3
    order: int = expansion.DEFAULT_ORDER
    sigma: float | None = None
    mode: Mode = "sequential"
    workers: int = 1

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 2:
            raise ValueError(f"levels must be an integer >= 2, got {self.levels!r}")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be an integer >= 1, got {self.order!r}")
        if self.sigma is not None and not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")
        if self.mode not in ("sequential", "overlapped"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ValueError(f"workers must be an integer >= 1, got {self.workers!r}")

    def kernel_params(self) -> KernelParams:
        if self.sigma is not None:
            return KernelParams(self.sigma)
        return KernelParams(0.1 / (1 << self.levels))


@dataclass
class StageStats:
    flops: int = 0
    wall_time: float = 0.0
    tasks: int = 0


@dataclass
class StageReport:
    stages: dict = field(default_factory=lambda: {s: StageStats() for s in STAGE_NAMES})
    n_particles: int = 0
    levels: int = 0
    order: int = 0
    near_pairs: int = 0

    def add(self, stage: int, flop_count: int, seconds: float):
        st = self.stages[stage]
        st.flops += int(flop_count)
        st.wall_time += seconds
        st.tasks += 1

    def flops(self, stage: int) -> int:
        return self.stages[stage].flops

    def total_flops(self) -> int:
        return sum(s.flops for s in self.stages.values())


class FmmState:
    """Storage and per-box stage kernels for one FMM evaluation."""

    def __init__(self, particles, config: FmmConfig):
        self.particles = as_particles(particles)
        self.config = config
        self.levels = config.levels
        self.order = config.order
        self.params = config.kernel_params()
        self.tree: Quadtree | None = None
        self.binning: Binning | None = None
        n = len(self.particles)
        self.far = np.zeros(n, dtype=np.complex128)
        self.near = np.zeros(n, dtype=np.complex128)
        self.total = np.zeros(n, dtype=np.complex128)
        self.multipoles: dict[int, np.ndarray] = {}
        self.m2l_part: dict[int, np.ndarray] = {}
        self.locals: dict[int, np.ndarray] = {}
        self.near_pairs = np.zeros(4**self.levels, dtype=np.int64)

    # -- setup -------------------------------------------------------------
    def build_tree(self) -> int:
        self.tree = build_tree(self.levels)
        self.allocate()
        return 0

    def allocate(self):
        for level in range(2, self.levels + 1):
            shape = (4**level, self.order)
            self.multipoles[level] = np.zeros(shape, dtype=np.complex128)
            self.m2l_part[level] = np.zeros(shape, dtype=np.complex128)
            self.locals[level] = np.zeros(shape, dtype=np.complex128)

    def bin(self) -> int:
        self.binning = bin_particles(self.tree, self.particles)
        return 0

    def lists(self) -> int:
        for level in range(1, self.levels + 1):
            self.tree.neighbors(level)
        for level in range(2, self.levels + 1):
            self.tree.interactions(level)
        return 0

    # -- upward sweep ------------------------------------------------------
    def p2m_box(self, key: int) -> int:
        idx = self.binning.particles_in(key)
        center = self.tree.centers(self.levels)[key]
        self.multipoles[self.levels][key] = expansion.p2m_coeffs(
            self.particles.z[idx], self.particles.gamma[idx], center, self.order)
        return flops.p2m(idx.size, self.order)

    def m2m_box(self, level: int, key: int) -> int:
        tree = self.tree
        center = tree.centers(level)[key]
        kids = tree.children(level, key)
        child_centers = tree.centers(level + 1)
        acc = np.zeros(self.order, dtype=np.complex128)
        for c in kids:
            t = expansion.m2m_matrix(child_centers[c] - center, self.order)
            acc = acc + t @ self.multipoles[level + 1][c]
        self.multipoles[level][key] = acc
        return 4 * flops.m2m(self.order)

    # -- downward sweep ----------------------------------------------------
    def m2l_box(self, level: int, key: int) -> int:
        ilist = self.tree.interactions(level)[key]
        centers = self.tree.centers(level)
        b = expansion.m2l_coeffs(self.multipoles[level][ilist], centers[ilist],
                                 centers[key])
        if level == 2:
            self.locals[2][key] = b
        else:
            self.m2l_part[level][key] = b
        return ilist.size * flops.m2l(self.order)

    def l2l_box(self, level: int, key: int) -> int:
        tree = self.tree
        parent = tree.parent(level, key)
        shift = tree.centers(level)[key] - tree.centers(level - 1)[parent]
        t = expansion.l2l_matrix(shift, self.order)
        self.locals[level][key] = (self.m2l_part[level][key]
                                   + t @ self.locals[level - 1][parent])
        return flops.l2l(self.order) + flops.COMPLEX_ADD * self.order

    def l2p_box(self, key: int) -> int:
        idx = self.binning.particles_in(key)
        if idx.size:
            center = self.tree.centers(self.levels)[key]
            self.far[idx] = expansion.l2p_eval(self.locals[self.levels][key], center,
                                               self.particles.z[idx])
        return flops.l2p(idx.size, self.order)

    # -- evaluation --------------------------------------------------------
    def near_box(self, key: int) -> int:
        targets, v, pairs = kernel.near_box(self.tree, self.binning, self.particles,
                                     self.params, key)
        self.near[targets] = v
        self.near_pairs[key] = pairs
        return flops.near(pairs)

    def combine_box(self, key: int) -> int:
        idx = self.binning.particles_in(key)
        self.total[idx] = self.far[idx] + self.near[idx]
        return flops.combine(idx.size)

    # -- dispatch ----------------------------------------------------------
    def run_task(self, stage: int, level: int | None, key: int | None) -> int:
        if stage == 1:
            return self.build_tree()
        if stage == 2:
            return self.bin()
        if stage == 3:
            return self.lists()
        if stage == 4:
            return self.p2m_box(key)
        if stage == 5:
            return self.m2m_box(level, key)
        if stage == 6:
            return self.m2l_box(level, key)
        if stage == 7:
            return self.l2l_box(level, key)
        if stage == 8:
            return self.l2p_box(key)
        if stage == 9:
            return self.near_box(key)
        if stage == 10:
            return self.combine_box(key)
        raise ValueError(f"unknown stage {stage}")


def stage_tasks(levels: int, stage: int) -> list[tuple[int | None, int | None]]:
    """``(level, key)`` instances of one stage, in reference order."""
    finest = [(levels, k) for k in range(4**levels)]
    if stage in (1, 2, 3):
        return [(None, None)]
    if stage == 5:
        return [(l, k) for l in range(levels - 1, 1, -1) for k in range(4**l)]
    if stage == 6:
        return [(l, k) for l in range(2, levels + 1) for k in range(4**l)]
    if stage == 7:
        return [(l, k) for l in range(3, levels + 1) for k in range(4**l)]
    return finest


def reference_stage_order(mode: Mode) -> tuple[int, ...]:
    if mode == "overlapped":
        # near field right after its inputs exist, ahead of the sweeps
        return (1, 2, 3, 9, 4, 5, 6, 7, 8, 10)
    return tuple(range(1, 11))


def run_reference(state: FmmState, mode: Mode = "sequential") -> StageReport:
    report = StageReport(n_particles=len(state.particles), levels=state.levels,
                         order=state.order)
    for stage in reference_stage_order(mode):
        for level, key in stage_tasks(state.levels, stage):
            t0 = time.perf_counter()
            count = state.run_task(stage, level, key)
            report.add(stage, count, time.perf_counter() - t0)
    report.near_pairs = int(state.near_pairs.sum())
    return report


def compute_velocities(particles, config: FmmConfig | None = None
                       ) -> tuple[np.ndarray, StageReport]:
    """Velocities of all particles by the FMM, plus per-stage counters.

    With ``config.workers == 1`` the single-threaded reference path runs;
    otherwise the task-graph scheduler executes the same stage kernels on a
    worker pool.  Both give bit-identical results.
    """
    config = config or FmmConfig()
    if config.workers > 1:
        from .scheduler import build_dag, execute

        result = execute(build_dag(build_tree(config.levels)), particles, config)
        return result.velocities, result.report
    state = FmmState(particles, config)
    report = run_reference(state, config.mode)
    return state.total.copy(), report


def upward_sweep(tree: Quadtree, binning: Binning, particles, order: int
                 ) -> dict[int, np.ndarray]:
    """Multipole coefficients for every box on levels ``L`` down to 2."""
    state = FmmState(particles, FmmConfig(levels=tree.levels, order=order))
    state.tree, state.binning = tree, binning
    state.allocate()
    for level, key in stage_tasks(tree.levels, 4):
        state.p2m_box(key)
    for level, key in stage_tasks(tree.levels, 5):
        state.m2m_box(level, key)
    return state.multipoles


def downward_sweep(tree: Quadtree, multipoles: dict[int, np.ndarray],
                   order: int) -> dict[int, np.ndarray]:
    """Local coefficients for every box on levels 2..L.

    Interaction lists come from ``tree.interactions``.
    """
    state = FmmState([], FmmConfig(levels=tree.levels, order=order))
    state.tree = tree
    state.allocate()
    state.multipoles = multipoles
    for level, key in stage_tasks(tree.levels, 6):
        state.m2l_box(level, key)
    for level, key in stage_tasks(tree.levels, 7):
        state.l2l_box(level, key)
    return state.locals


def combine(far, near) -> np.ndarray:
    far = np.asarray(far, dtype=np.complex128)
    near = np.asarray(near, dtype=np.complex128)
    if far.shape != near.shape:
        raise AssertionError(
            f"far and near fields differ in length: {far.shape} vs {near.shape}")
    return far + near


@dataclass(frozen=True)
class FlopCheck:
    stage: int
    name: str
    counted: int
    predicted: float | None
    reconciled: bool

    @property
    def matches(self) -> bool | None:
        if self.predicted is None or not self.reconciled:
            return None
        return self.counted == self.predicted


def flop_report(report: StageReport) -> list[FlopCheck]:
    """Instrumented counts per stage beside the closed-form predictions.

    Only initialization (stage 4) and near-field work (stage 9) are itemized
    tightly enough to reconcile; they are compared when the particle count is
    a whole number per finest box.  Other stages list the model's per-level
    totals for reference.
    """
    n, levels, t = report.n_particles, report.levels, report.order
    per_box = n / 4**levels
    uniform = n > 0 and float(per_box).is_integer()
    predictions = {
        4: costmodel.work_init(n, t) - 2,
        5: costmodel.work_up(levels, t),
        6: costmodel.work_m2l(levels, t),
        7: costmodel.work_l2l(levels, t) if levels >= 3 else 0,
        9: costmodel.work_direct(levels, int(per_box)) if uniform else (0 if n == 0 else None),
    }
    checks = []
    for stage, name in STAGE_NAMES.items():
        pred = predictions.get(stage)
        reconciled = stage == 4 or (stage == 9 and pred is not None)
        checks.append(FlopCheck(stage, name, report.flops(stage), pred, reconciled))
    return checks
