"""
Analytical runtime model for the parallel 2D FMM.

The modelled runtime on ``P`` processes is

    T = a N/P + b log4(P) + c N/(B P) + d N B/P

with ``a..d`` given per expansion order ``t`` and flop rate ``r``.  The
``b log4 P`` term is the reduction bottleneck: coarse tree levels hold fewer
cells than processes.  It disappears from the critical path once every
process has at least ``b * L_root`` seconds of near-field work, i.e.
``B >= (b/d) P L_root / N``.

``log4 P`` is treated as a real number throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Literal

import numpy as np


@dataclass(frozen=True)
class MachineModel:
    rate: float = 1.0
    processes: int = 1

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("flop rate must be positive")
        if int(self.processes) != self.processes or self.processes < 1:
            raise ValueError("process count must be an integer >= 1")


@dataclass(frozen=True)
class CostCoefficients:
    """Seconds per unit of each runtime term, for expansion order ``order``."""

    a: float
    b: float
    c: float
    d: float
    order: int | None = None

    def scaled(self, factor: float) -> "CostCoefficients":
        return CostCoefficients(self.a * factor, self.b * factor, self.c * factor,
                                self.d * factor, self.order)


def log4(x) -> float:
    return math.log(x) / math.log(4.0)


def coefficient_polynomials(t: int) -> dict[str, Fraction]:
    """Flop counts behind each coefficient (before dividing by the rate)."""
    t = Fraction(t)
    return {
        "a": 16 * t - 15,
        "b": (84 - 48 * t + 571 * t * t) / 3,
        "c": (128 - 48 * t + 844 * t * t) / 3,
        "d": Fraction(198),
    }


def coefficients(t: int, machine: MachineModel | None = None) -> CostCoefficients:
    if int(t) != t or t < 1:
        raise ValueError(f"order must be an integer >= 1, got {t!r}")
    machine = machine or MachineModel()
    rate = Fraction(machine.rate) if isinstance(machine.rate, int) else machine.rate
    poly = coefficient_polynomials(int(t))
    vals = {k: float(v / rate) for k, v in poly.items()}
    return CostCoefficients(order=int(t), **vals)


def total_time(N: float, P: float, B: float, coeffs: CostCoefficients) -> float:
    if N < 1 or P < 1:
        raise ValueError("N and P must be >= 1")
    if not B > 0:
        raise ValueError("B must be positive")
    return (coeffs.a * N / P + coeffs.b * log4(P)
            + coeffs.c * N / (B * P) + coeffs.d * N * B / P)


def optimal_B(coeffs: CostCoefficients) -> float:
    """Box population minimizing ``c/B + d B``."""
    return math.sqrt(coeffs.c / coeffs.d)


def min_B_cover(N: float, P: float, coeffs: CostCoefficients,
                L_root: float | None = None) -> float:
    """Smallest B whose near-field work hides ``L_root`` serial levels."""
    if N < 1 or P < 1:
        raise ValueError("N and P must be >= 1")
    if L_root is None:
        L_root = log4(P)
    return coeffs.b / coeffs.d * P * L_root / N


def min_particles_per_process(P: float, B: float, coeffs: CostCoefficients) -> float:
    """Smallest ``N/P`` free of the reduction bottleneck at fixed ``B``."""
    if P < 1 or not B > 0:
        raise ValueError("need P >= 1 and B > 0")
    return coeffs.b / coeffs.d * log4(P) / B


def sweep_min_size(P_values: Iterable[float], B: float, t: int
                   ) -> list[tuple[float, float]]:
    coeffs = coefficients(t)
    return [(P, min_particles_per_process(P, B, coeffs)) for P in P_values]


def powers_of_four(P_min: float, P_max: float) -> list[int]:
    if P_min < 1 or P_max < P_min:
        raise ValueError(f"bad process range [{P_min}, {P_max}]")
    out, p = [], 1
    while p <= P_max:
        if p >= P_min:
            out.append(p)
        p *= 4
    return out


# -- work counts (flops) -------------------------------------------------------

def m2m_cell_flops(t: int) -> int:
    """Per-cell upward translation work, four children."""
    return 4 * (2 + 2 * t * t + 4 * t * (t - 1))


def m2l_cell_flops(t: int) -> int:
    return 27 * (2 + 2 * t * t + 15 * t * t)


def l2l_cell_flops(t: int) -> int:
    return 4 * (2 + 2 * t * t + 8 * t * t)


def work_init(N: int, t: int) -> int:
    return 2 + (8 * t + 3) * N


def work_up(L: int, t: int) -> int:
    _check_levels(L, 2)
    return sum(4**l for l in range(2, L)) * m2m_cell_flops(t)


def work_m2l(L: int, t: int) -> int:
    _check_levels(L, 2)
    return sum(4**l for l in range(2, L + 1)) * m2l_cell_flops(t)


def work_l2l(L: int, t: int) -> int:
    _check_levels(L, 3)
    return sum(4**l for l in range(3, L + 1)) * l2l_cell_flops(t)


def work_direct(L: int, B):
    """Near-field flops over corner, edge and interior boxes."""
    _check_levels(L, 2)
    corner = 4 * (4 * B * B - B)
    edge = (2**(L + 2) - 8) * (6 * B * B - B)
    interior = (4**L - 2**(L + 2) + 4) * (9 * B * B - B)
    return 22 * (corner + edge + interior)


def work_direct_forms(L: int, B) -> tuple:
    """The three successively simplified forms of :func:`work_direct`."""
    N = 4**L * B
    first = work_direct(L, B)
    second = 22 * (9 * 4**L * B * B - 3 * (2**(L + 2) - 8) * B * B
                   - 20 * B * B - 4**L * B)
    # sqrt(N/B) = 2**L exactly for a uniform tree
    third = 22 * (9 * (N // B if isinstance(B, int) else N / B) * B * B
                  - 12 * 2**L * B * B + 4 * B * B - N)
    return first, second, third


def up_sweep_time(L: int, t: int, P: int, rate: float = 1.0) -> float:
    """Upward translation time with at most one cell per process per level."""
    _check_levels(L, 2)
    return sum(max(4**l / P, 1.0) for l in range(2, L)) * m2m_cell_flops(t) / rate


def _check_levels(L, lo):
    if int(L) != L or L < lo:
        raise ValueError(f"need an integer level count >= {lo}, got {L!r}")


# -- timeline ------------------------------------------------------------------

@dataclass(frozen=True)
class TimelineReport:
    mode: str
    N: float
    P: int
    B: float
    order: int
    levels: int
    L_root: float
    makespan: float
    idle: dict
    busy: float
    utilization: float
    bottleneck_covered: bool
    direct_time: float
    coarse_time: float


def _coarse_busy_groups(P: int, L_root: float, per_level: float):
    """Process groups and their busy time on the under-populated levels.

    Level ``l`` (weight ``min(1, L_root - l)`` for the fractional top level)
    keeps processes ``0 .. 4**l - 1`` busy for ``per_level`` seconds each.
    Returns ``[(group_size, busy_seconds), ...]`` covering all ``P``.
    """
    n_levels = math.ceil(L_root - 1e-12) if L_root > 0 else 0
    weights = [min(1.0, L_root - l) for l in range(n_levels)]
    bounds = [min(4**l, P) for l in range(n_levels)]
    groups, lo = [], 0
    # processes in [4**(k-1), 4**k) are busy on levels k .. n_levels-1
    edges = [0] + [b for b in bounds] + [P]
    for k in range(len(edges) - 1):
        hi = edges[k + 1]
        size = hi - lo
        if size > 0:
            busy = per_level * sum(weights[k:])
            groups.append((size, busy))
        lo = max(lo, hi)
    return groups


def timeline_simulate(N: float, P: int, B: float, t: int,
                      machine: MachineModel | None = None,
                      mode: Literal["sequential", "overlapped"] = "overlapped",
                      L_root: float | None = None) -> TimelineReport:
    """Process-level timeline of one FMM evaluation.

    Perfectly parallel work (``a N/P + c N/(B P)``) runs first on every
    process.  The ``L_root`` coarse levels then run with
    ``max(4**l / P, 1)`` cells per process, each level costing ``b`` seconds
    of serial work, so processes beyond ``4**l`` sit idle.  Near-field work
    is local: every process owns ``d N B / P`` seconds of it.  Sequential
    mode runs it after the sweeps; overlapped mode runs it inside each
    process's idle window.  The bottleneck is covered when no process has
    coarse-phase idle time left over.
    """
    if N <= 0 or P < 1 or B <= 0 or t < 1:
        raise ValueError("N, P, B and t must be positive")
    if mode not in ("sequential", "overlapped"):
        raise ValueError(f"unknown mode {mode!r}")
    machine = machine or MachineModel()
    coeffs = coefficients(t, machine)
    P = int(P)
    L_root = log4(P) if L_root is None else float(L_root)
    levels = max(2, int(round(log4(N / B))))

    parallel = (coeffs.a * N + coeffs.c * N / B) / P
    direct = coeffs.d * N * B / P
    coarse = coeffs.b * L_root
    # a process is busy at most for the whole coarse phase; the cap absorbs
    # rounding in the per-level sum
    groups = [(n, min(s, coarse)) for n, s in _coarse_busy_groups(P, L_root, coeffs.b)]
    busy = P * (parallel + direct) + sum(n * s for n, s in groups)

    if mode == "sequential" or P == 1:
        makespan = parallel + (coarse + direct)
        coarse_idle = sum(n * (coarse - s) for n, s in groups)
        idle = {"coarse_sweep": coarse_idle, "tail": 0.0}
    else:
        finish = [(n, parallel + max(coarse, s + direct)) for n, s in groups]
        makespan = max(f for _, f in finish)
        coarse_idle = sum(n * max(0.0, coarse - s - direct) for n, s in groups)
        tail = sum(n * (makespan - f) for n, f in finish)
        idle = {"coarse_sweep": coarse_idle, "tail": tail}
    # covered: the emptiest process has enough near-field work for the whole
    # coarse phase
    least_busy = min(s for _, s in groups) if groups else 0.0
    covered = direct + least_busy >= coarse
    utilization = busy / (P * makespan) if makespan > 0 else 1.0
    return TimelineReport(mode=mode, N=N, P=P, B=B, order=t, levels=levels,
                          L_root=L_root, makespan=makespan, idle=idle, busy=busy,
                          utilization=min(utilization, 1.0),
                          bottleneck_covered=bool(covered), direct_time=direct,
                          coarse_time=coarse)
