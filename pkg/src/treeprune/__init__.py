"""Pruning processes on random trees.

Samplers for conditioned Galton-Watson trees and p-trees, coding paths with
their exact combinatorial identities, Poisson pruning dynamics, and
metric-measure comparison tools.
"""

from .trees import (BiMeasureTree, LabeledRootedTree, PlaneTree, SpannedTree,
                    TreeStructureError, mirror, mrca, mu_skeleton_and_leaves,
                    sample_tree_17, spanned_subtree, subtree_mass)
from .coding import (CodingPaths, SigmaDecomposition, ancestor_by_path,
                     children_split, compute_paths, lex_to_revlex,
                     pruning_profile, sigma_up, sigma_up_profile)
from .samplers import (BudgetError, OffspringLaw, PVector, ScalingConstants,
                       UnreachableError, enumerate_trees, make_offspring,
                       make_rng, sample_gw_conditioned,
                       sample_gw_conditioned_many, sample_ptree,
                       scaling_constants)
from .pruning import (CutEvent, PruneState, Trajectory, apply_cut,
                      initial_state, make_pruning_measure,
                      percolation_marginal, prune_trajectory, sample_next_cut)
from .mmspace import (Correspondence, FiniteMMSpace, SpannedSample,
                      distance_matrix_sample, energy_distance, glue_metric,
                      gp_exhaustive, gp_upper_bound, lower_mass,
                      prokhorov_distance, sample_spanned_bimeasure,
                      space_from_tree)
from .diagnostics import (ExperimentReport, GateError, exp_brownian_sigma,
                          exp_mass_bound, exp_pruning_mass, exp_reverse_path,
                          exp_span_cloud)

__version__ = "0.1.0"
