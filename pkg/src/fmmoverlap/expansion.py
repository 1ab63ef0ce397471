"""
Complex power-series expansions for the 2D point-vortex kernel.

The far field of a cluster is carried as the conjugate velocity
``w(z) = u - iv = (-i / 2pi) * sum_p gamma_p / (z - z_p)``.  A multipole
expansion about ``c`` stores ``a_m`` with ``w(z) = sum_m a_m / (z - c)**(m+1)``
and a local expansion stores ``b_l`` with ``w(z) = sum_l b_l (z - c)**l``.
Physical velocities are recovered by conjugation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernel import TWO_PI

DEFAULT_ORDER = 15


class SeparationError(ValueError):
    """Expansion used outside its region of validity."""


@lru_cache(maxsize=None)
def binomials(order: int) -> np.ndarray:
    """``C[n, k]`` for ``0 <= n, k < 2 * order``, exact ints cast to float."""
    size = 2 * order
    table = np.zeros((size, size))
    for n in range(size):
        for k in range(n + 1):
            table[n, k] = float(math.comb(n, k))
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def _m2l_tables(order: int):
    l = np.arange(order)[:, None]
    m = np.arange(order)[None, :]
    c = binomials(order)[l + m, m] * np.where(l % 2 == 0, 1.0, -1.0)
    power = l + m + 1
    c.setflags(write=False)
    power.setflags(write=False)
    return c, power


@lru_cache(maxsize=None)
def _shift_tables(order: int):
    """Lower-triangular ``C(k, m)`` and exponent ``k - m`` (masked)."""
    k = np.arange(order)[:, None]
    m = np.arange(order)[None, :]
    mask = m <= k
    c = np.where(mask, binomials(order)[k, m], 0.0)
    power = np.where(mask, k - m, 0)
    for arr in (c, power, mask):
        arr.setflags(write=False)
    return c, power, mask


def _powers(d, n: int) -> np.ndarray:
    """``d**0 .. d**(n-1)`` by repeated multiplication, along the last axis."""
    d = np.asarray(d, dtype=np.complex128)
    out = np.empty(d.shape + (n,), dtype=np.complex128)
    out[..., 0] = 1.0
    for k in range(1, n):
        out[..., k] = out[..., k - 1] * d
    return out


@dataclass(frozen=True, eq=False)
class MultipoleExpansion:
    center: complex
    coeffs: np.ndarray
    width: float | None = None

    @property
    def order(self) -> int:
        return self.coeffs.shape[0]


@dataclass(frozen=True, eq=False)
class LocalExpansion:
    center: complex
    coeffs: np.ndarray

    @property
    def order(self) -> int:
        return self.coeffs.shape[0]


def _check_order(order):
    if int(order) != order or order < 1:
        raise ValueError(f"expansion order must be an integer >= 1, got {order!r}")


def p2m_coeffs(z: np.ndarray, gamma: np.ndarray, center: complex,
               order: int) -> np.ndarray:
    """Multipole coefficients of point vortices about ``center``.

    ``0**0`` is taken as 1, so a particle at the center only feeds ``a_0``.
    """
    if z.size == 0:
        return np.zeros(order, dtype=np.complex128)
    dz = np.asarray(z, dtype=np.complex128) - center
    pw = _powers(dz, order)
    return (-1j / TWO_PI) * (np.asarray(gamma, dtype=np.float64) @ pw)


def p2m(particles, center: complex, order: int,
        width: float | None = None) -> MultipoleExpansion:
    from .quadtree import as_particles

    _check_order(order)
    p = as_particles(particles)
    return MultipoleExpansion(complex(center), p2m_coeffs(p.z, p.gamma, center, order),
                              width)


def m2m_matrix(shift: complex, order: int) -> np.ndarray:
    """Translation matrix for moving a multipole by ``shift = old - new``."""
    c, power, mask = _shift_tables(order)
    pw = _powers(shift, order)
    return np.where(mask, c * pw[power], 0.0)


def m2m(child: MultipoleExpansion, new_center: complex) -> MultipoleExpansion:
    shift = child.center - new_center
    coeffs = m2m_matrix(shift, child.order) @ child.coeffs
    width = None if child.width is None else 2.0 * child.width
    return MultipoleExpansion(complex(new_center), coeffs, width)


def m2l_coeffs(src_coeffs: np.ndarray, src_centers: np.ndarray,
               target_center: complex) -> np.ndarray:
    """Summed local coefficients from a batch of multipoles.

    ``src_coeffs`` has shape ``(k, t)``.  Contributions are reduced over the
    batch in the given order.
    """
    src_coeffs = np.atleast_2d(src_coeffs)
    k, order = src_coeffs.shape
    if k == 0:
        return np.zeros(order, dtype=np.complex128)
    c, power = _m2l_tables(order)
    inv = 1.0 / (target_center - np.asarray(src_centers, dtype=np.complex128))
    pw = _powers(inv, 2 * order)
    # h[s, l, m] = (-1)**l C(l+m, m) / (target - source)**(l+m+1)
    h = pw[:, power] * c[None, :, :]
    contrib = np.sum(h * src_coeffs[:, None, :], axis=2)
    return np.sum(contrib, axis=0)


def m2l(source: MultipoleExpansion, target_center: complex) -> LocalExpansion:
    if source.width is not None:
        sep = abs(target_center - source.center)
        if sep < 2.0 * source.width * (1 - 1e-12):
            raise SeparationError(
                f"target center {target_center} is {sep:.6g} from the source; "
                f"need at least {2.0 * source.width:.6g}")
    elif target_center == source.center:
        raise SeparationError("target center coincides with the source center")
    coeffs = m2l_coeffs(source.coeffs[None, :], np.array([source.center]),
                        complex(target_center))
    return LocalExpansion(complex(target_center), coeffs)


def l2l_matrix(shift: complex, order: int) -> np.ndarray:
    """Re-centering matrix for ``shift = new - old``: ``b' = T @ b``."""
    return m2m_matrix(shift, order).T


def l2l(parent: LocalExpansion, child_center: complex) -> LocalExpansion:
    shift = child_center - parent.center
    coeffs = l2l_matrix(shift, parent.order) @ parent.coeffs
    return LocalExpansion(complex(child_center), coeffs)


def horner(coeffs: np.ndarray, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.complex128)
    w = np.full(y.shape, coeffs[-1], dtype=np.complex128)
    for b in coeffs[-2::-1]:
        w = w * y + b
    return w


def l2p_eval(coeffs: np.ndarray, center: complex, z) -> np.ndarray:
    return np.conj(horner(coeffs, np.asarray(z) - center))


def l2p(local: LocalExpansion, position):
    """Physical velocity from a local expansion at one or more positions."""
    v = l2p_eval(local.coeffs, local.center, position)
    return complex(v) if v.ndim == 0 else v


def m2p_eval(multipole: MultipoleExpansion, position):
    """Direct evaluation of a multipole expansion (validation only)."""
    y = np.asarray(position, dtype=np.complex128) - multipole.center
    r = np.abs(y)
    limit = 0.0 if multipole.width is None else multipole.width / math.sqrt(2.0)
    if np.any(r <= limit):
        raise SeparationError("evaluation point inside the source box")
    inv = 1.0 / y
    v = np.conj(inv * horner(multipole.coeffs, inv))
    return complex(v) if v.ndim == 0 else v
