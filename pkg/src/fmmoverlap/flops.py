"""Flop-count conventions used by the instrumented FMM stages.

A complex multiply is 6 flops, a complex add 2, a complex division 9 and an
exponential 1.  These are accounting conventions, not hardware counts.
"""

COMPLEX_ADD = 2
COMPLEX_MUL = 6
COMPLEX_DIV = 9

# one regularized Biot-Savart evaluation plus accumulation
KERNEL_EVAL = 22


def p2m(n_particles: int, order: int) -> int:
    # 2 for z - center, 1 for scaling the circulation, then one complex
    # multiply-add per retained term
    return n_particles * (3 + (COMPLEX_MUL + COMPLEX_ADD) * order)


def m2m(order: int) -> int:
    # powers of the shift plus the lower-triangular translation and the add
    # into the parent
    tri = order * (order + 1) // 2
    return COMPLEX_MUL * (order - 1) + (COMPLEX_MUL + COMPLEX_ADD) * tri \
        + COMPLEX_ADD * order


def m2l(order: int) -> int:
    # one reciprocal, 2t-2 powers, a dense t x t product with binomial scaling
    return (COMPLEX_DIV + COMPLEX_MUL * (2 * order - 2)
            + (COMPLEX_MUL + COMPLEX_ADD + 2) * order * order
            + COMPLEX_ADD * order)


def l2l(order: int) -> int:
    tri = order * (order + 1) // 2
    return COMPLEX_MUL * (order - 1) + (COMPLEX_MUL + COMPLEX_ADD) * tri \
        + COMPLEX_ADD * order


def l2p(n_particles: int, order: int) -> int:
    # z - center, then Horner
    return n_particles * (COMPLEX_ADD + (COMPLEX_MUL + COMPLEX_ADD) * (order - 1))


def near(n_pairs: int) -> int:
    return KERNEL_EVAL * n_pairs


def combine(n_particles: int) -> int:
    return COMPLEX_ADD * n_particles
