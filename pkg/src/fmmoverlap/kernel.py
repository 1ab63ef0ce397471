"""
Gaussian-regularized Biot-Savart kernel in complex form.

Positions and velocities are complex numbers: ``z = x + iy`` and
``u + iv``.  The rotated vector ``(-v, u)`` of ``z = (u, v)`` is simply
``1j * z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import flops
from .quadtree import Binning, Quadtree, as_particles

TWO_PI = 2.0 * math.pi

# below this value of |z|^2 / (2 sigma^2) use the series for 1 - exp(-q)
SERIES_CUTOFF = 1e-8


class SingularPointError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class KernelParams:
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma!r}")

    @classmethod
    def for_tree(cls, tree: Quadtree) -> "KernelParams":
        """Core radius of one tenth of the finest box width."""
        return cls(tree.box_width(tree.levels) / 10.0)


def zeta(x, y, params: KernelParams):
    """Normalized 2D Gaussian basis function centred at ``y``."""
    s2 = params.sigma**2
    r2 = np.abs(np.asarray(x) - np.asarray(y)) ** 2
    return np.exp(-r2 / (2.0 * s2)) / (TWO_PI * s2)


def _core_factor(r2, two_s2):
    """(1 - exp(-q)) / r2 with q = r2 / two_s2, finite at r2 = 0."""
    q = r2 / two_s2
    small = q < SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = -np.expm1(-q) / r2
    series = (1.0 - 0.5 * q) / two_s2
    return np.where(small, series, exact)


def biot_savart_regularized(z, params: KernelParams):
    """Velocity induced at offset ``z`` by a unit Gaussian vortex.

    Returns a complex scalar for scalar input, else an array.  The value at
    ``z = 0`` is exactly zero.
    """
    z = np.asarray(z, dtype=np.complex128)
    r2 = z.real**2 + z.imag**2
    k = (1j * z) * (_core_factor(r2, 2.0 * params.sigma**2) / TWO_PI)
    return complex(k) if k.ndim == 0 else k


def biot_savart_farfield(z):
    """Point-vortex kernel ``i / (2 pi conj(z))``."""
    z = np.asarray(z, dtype=np.complex128)
    if np.any(z == 0):
        raise SingularPointError("far-field kernel is singular at z = 0")
    k = 1j / (TWO_PI * np.conj(z))
    return complex(k) if k.ndim == 0 else k


def _pair_sum(zt, zs, gs, two_s2):
    dz = zt[:, None] - zs[None, :]
    r2 = dz.real**2 + dz.imag**2
    k = (1j * dz) * (_core_factor(r2, two_s2) * gs[None, :])
    return np.sum(k, axis=1) / TWO_PI


def direct_sum_all(particles, params: KernelParams, chunk: int = 512) -> np.ndarray:
    """O(N^2) velocity of every particle induced by all particles."""
    p = as_particles(particles)
    two_s2 = 2.0 * params.sigma**2
    out = np.empty(len(p), dtype=np.complex128)
    for start in range(0, len(p), chunk):
        stop = min(start + chunk, len(p))
        out[start:stop] = _pair_sum(p.z[start:stop], p.z, p.gamma, two_s2)
    return out


def near_sources(tree: Quadtree, binning: Binning, key: int) -> np.ndarray:
    """Particle indices in box ``key`` and its neighbors, in box-key order."""
    keys = np.sort(np.append(tree.neighbors(tree.levels)[key], key))
    return np.concatenate([binning.particles_in(k) for k in keys])


def near_box(tree: Quadtree, binning: Binning, particles, params: KernelParams,
             key: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Near-field velocities for the particles of one finest box.

    Returns ``(targets, velocities, n_pairs)``.  Only this box's targets are
    written, so boxes can be processed independently.  ``n_pairs`` counts
    ordered pairs with distinct particles.
    """
    targets = binning.particles_in(key)
    if targets.size == 0:
        return targets, np.zeros(0, dtype=np.complex128), 0
    sources = near_sources(tree, binning, key)
    v = _pair_sum(particles.z[targets], particles.z[sources],
                  particles.gamma[sources], 2.0 * params.sigma**2)
    # every target is also one of the sources; K(0) = 0 drops the self term
    n_pairs = targets.size * sources.size - targets.size
    return targets, v, n_pairs


def near_field_eval(tree: Quadtree, binning: Binning, particles,
                    params: KernelParams, counter: dict | None = None
                    ) -> np.ndarray:
    """Direct evaluation over own and neighboring boxes for every particle.

    Each unordered pair is evaluated once from each end.  If ``counter`` is
    given, ``counter["pairs"]`` and ``counter["flops"]`` are incremented.
    """
    particles = as_particles(particles)
    out = np.zeros(len(particles), dtype=np.complex128)
    pairs = 0
    for key in range(tree.n_boxes(tree.levels)):
        targets, v, n = near_box(tree, binning, particles, params, key)
        out[targets] = v
        pairs += n
    if counter is not None:
        counter["pairs"] = counter.get("pairs", 0) + pairs
        counter["flops"] = counter.get("flops", 0) + flops.near(pairs)
    return out
