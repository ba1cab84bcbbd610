"""Counting point configurations in fractal sets: rank conditions for linear
systems, random Cantor measures, the multilinear counting form in physical and
Fourier space, and brute-force configuration search."""

from .approxident import constant_CP, mollified_limit_check, surface_chart, surface_integral
from .configsearch import (ConfigurationHit, ExceptionalSubspace, PointSet, atom_count_bound,
                           c_epsilon_measure, count_positive_roots, make_colinear_system,
                           make_parallelogram_system, make_triangle_system, make_vandermonde_system,
                           search_configurations)
from .fractal import (CantorParams, FourierSample, GridMeasure, ball_condition_constant,
                      decay_exponent_fit, fourier_transform, gen_radial_product, gen_random_cantor,
                      mollify_split)
from .functions import BallIndicator, BoxIndicator, GridFunction, smooth_bump
from .linsys import (MatrixSystem, build_system, check_nondegenerate, check_reduced_nondegenerate,
                     coordinate_chart_check, subspace_S_basis, system_from_A)
from .multiform import (decomposition_terms, lambda_direct, lambda_fourier, lambda_star_tau,
                        theta_eval)

__version__ = "0.1.0"
