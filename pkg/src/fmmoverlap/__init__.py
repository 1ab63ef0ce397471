"""2D vortex-particle FMM run as a task graph, with an analytical cost model.

Near-field direct evaluation has no dependency on the multipole sweeps, so
it can fill the processors the coarse tree levels leave idle.
"""
from .costmodel import (CostCoefficients, MachineModel, coefficients, min_B_cover,
                        min_particles_per_process, optimal_B, sweep_min_size,
                        timeline_simulate, total_time)
from .engine import FmmConfig, StageReport, compute_velocities, flop_report
from .expansion import (LocalExpansion, MultipoleExpansion, l2l, l2p, m2l, m2m,
                        m2p_eval, p2m)
from .kernel import (KernelParams, biot_savart_farfield, biot_savart_regularized,
                     direct_sum_all, near_field_eval, zeta)
from .quadtree import (Particle, Particles, Quadtree, bin_particles, build_tree,
                       interaction_lists, neighbor_lists, uniform_lattice,
                       uniform_random)
from .scheduler import build_dag, execute, simulate_schedule, validate_trace

__version__ = "0.1.0"
