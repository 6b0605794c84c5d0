"""Robustness certification for ReLU networks.

Certifies L-infinity robustness with a family of bound methods built on the
exact convex hull of a ReLU neuron composed with its multivariate affine
pre-activation over a box: interval arithmetic and propagation baselines, a
propagation method that swaps violated hull inequalities into the bounding
functions (``fastc2v``), and an LP method that adds them as cutting planes
(``optc2v``).
"""

from .network import (BoxDomain, Network, NetworkInvariantError,
                      NetworkParseError, Neuron, classify, eval_network,
                      generate_random_network, load_network, save_network)
from .hull import (HullCut, HullInstance, Separation, classify_phase,
                   corner_value, cut_from_pair, delta_upper_value,
                   enumerate_cut_pairs, make_hull_instance,
                   minimize_upper_envelope_median, minimize_upper_envelope_sort,
                   separate_median, separate_sort)
from .propagation import (AffineBoundPair, AffineFunc, BoundsResult, LinearExpr,
                          ScalarBounds, backward_pass, box_maximize,
                          compute_all_bounds, forward_pass, initial_pair,
                          interval_bounds, tightened_bound)
from .simplex import LpModel, LpSolution, LpStatus, solve_lp
from .relaxation import (CutPool, build_delta_lp, exact_max_oracle,
                         lifted_envelope_value, lp_all_bounds, optc2v_bound)
from .verifier import (RobustnessInstance, VerificationReport, attack_upper_bound,
                       batch_verify, build_input_box, generate_instances,
                       load_instances, margin_objective, save_instances, verify)

__version__ = "0.1.0"
