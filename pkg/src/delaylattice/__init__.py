"""Linear difference-delay systems, their fundamental solution and its Stieltjes calculus."""
from .bvcalculus import (BVError, BVFunction, IntervalSpec, measure_of, measure_total_variation,
                         stieltjes_integrate, sup_norm, total_variation, variation_product_bound)
from .fundamental import (FundamentalSlice, FundamentalSolution, build_slice, eval_fundamental,
                          slice_total_variation)
from .lattice import Lattice, LatticePoint, enumerate_lattice
from .model import (Constant, DelaySystem, InitialProblem, PiecewiseLinear, TrigPolynomial,
                    check_compatibility, eval_signal, project_compatible, random_trig_system,
                    signal_variation)
from .representation import certify_equivalence, represent_solution
from .solver import DirectSolver, Trajectory, eval_solution, sample_trajectory
from .stability import DecayEstimate, fit_decay, variation_profile
from .volterra import (AtomicKernel, GridKernel, ResolventConfig, build_resolvent, forcing_from_initial,
                       forcing_function, kernel_from_system, solve_volterra)

__version__ = "0.1.0"
