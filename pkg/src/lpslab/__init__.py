"""Numerical laboratory for square functions of reversible Markov semigroups.

Finite weighted spaces make every operator a matrix, every semigroup a
spectral multiplier family, and every identity a finite computation that
can be checked against an independent oracle.
"""

from .errors import (IllConditionedContour, InvalidInput, InvariantViolation,
                     LpsError, PreconditionViolation, TruncationFailure)
from .measure_markov import (MarkovOperator, RotaDilation, SpectralDecomposition,
                             WeightedSpace, chain_from_dict, chain_to_dict,
                             fixed_point_projection, make_markov, make_space,
                             random_reversible, rota_dilation, spectral, square)
from .vector_spaces import (BanachParams, ConvexityEstimate, VectorField, apply,
                            convexity_modulus_probe, duality_pairing,
                            estimate_operator_norm, field_from_dict, field_to_dict,
                            lp_norm, random_field, scalar_lp_norm,
                            spectral_operator_norm, vector_field, x_norm)
from .semigroup_calculus import (Semigroup, TimeGrid, derivative, evolve, frac_M,
                                 frac_derivative, frac_multipliers, heat,
                                 make_time_grid, poisson_subordinate, subordinated,
                                 subordination_multipliers)
from .functional_calculus import (Contour, HinfFunction, StolzDomain,
                                  algebraic_condition, calibrate_gamma,
                                  hinf_apply_contour, hinf_function,
                                  resolvent_bound_scan, scaled_symbol, sector_boundary,
                                  spectral_apply, stolz_boundary_points, stolz_contains,
                                  stolz_gap, stolz_loop, test_function)
from .square_functions import (PointwiseFunction, discrete_square, g_function,
                               hn_functional)
from .verify import (ConstantReport, InstanceFamily, check_discrete_l2_identity,
                     check_l2_identity, l2_constant, stable_hash,
                     verify_analyticity, verify_contraction_bound,
                     verify_cotype_inequality, verify_hn_bound, verify_mcintosh,
                     verify_spectrum_stolz, verify_type_inequality)

__version__ = "0.1.0"
