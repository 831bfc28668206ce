"""Random automaton circuits on subset states: Markov chains on subset spaces,
their relaxation and mixing, and the moment operators they control."""

__version__ = "0.1.0"

from .errors import CapacityError, FitError, InvalidSubsetError, IterativeFailure
from .subsetcore import Subset, rank_subset, unrank_subset, sub_subsets, relative_coordinate
from .gates import GateFamily, GateId, apply_to_bitstring, apply_to_subset, sample_gate, is_involution
from .chain import (
    TransitionOperator,
    gamma_apply,
    build_sparse,
    top_eigenvalues,
    relaxation_time,
    reachable_component,
    has_self_loop,
    relative_chain,
    multipole_residual,
)
from .dynamics import (
    SubsetDistribution,
    TvTrace,
    tv_distance,
    evolve_exact,
    mixing_time,
    sample_trajectory,
    observable_trace,
    phi_map,
    induced_initial,
    fit_late_time,
    parse_initial_state,
)
from .moments import (
    enumerate_types,
    haar_moment,
    subset_phase_moment,
    subset_moment,
    trace_distance,
    m_matrix,
    entanglement_entropy,
)
