"""Bregman divergences, Wasserstein-Bregman transport and Bregman-ball ambiguity sets."""

from .ambiguity import (AmbiguitySet, WorstCase, build_asymptotic, build_concentration, contains,
                        drso_demo, project_simplex, solve_worst_case, worst_case_linear)
from .asymptotics import (SpectralLimit, empirical_law_check, jacobi_eigh, law_samples, limit_spectrum,
                          mc_quantile)
from .concentration import (bound_record, deviation_for_confidence, empirical_tail_check,
                            mean_upper_bound, radius_for_confidence, tail_bound)
from .divergence import bias_variance_check, bregman, bregman_rows, duality_gap, fisher_identity_check
from .generators import (BUILTINS, ConvergenceError, ConvexGenerator, Domain, DomainError, conjugate_value,
                         custom_generator, generator_config, generator_from_config,
                         legendre_gradient_inverse, make_builtin)
from .learn import ObjectiveError, PushforwardFamily, fit, lipschitz_probe, objective
from .transport import (DiscreteDistribution, TransportPlan, cost_matrix, decompose, solve_exact,
                        solve_sinkhorn, wasserstein_bregman, wasserstein_p)

__version__ = "0.1.0"
