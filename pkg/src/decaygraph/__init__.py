"""Decay-based clustering of dynamic graphs.

Generates dynamic stochastic block model instances, clusters them with
exponentially smoothed spectral clustering (scalar or per-cluster decay
rates), trains toy-scale RNNGCN/TRNNGCN classifiers, and evaluates the
results. See the ``decaygraph`` CLI for the experiment runner.
"""

from decaygraph.dsbm import (
    DynamicGraph,
    ParameterError,
    SbmParams,
    build_connectivity,
    build_transition_matrix,
    connection_probability,
    evolve_memberships,
    generate_sequence,
    sample_initial_memberships,
    sample_snapshot,
)
from decaygraph.smoothing import (
    SmoothedAdjacency,
    effective_weights,
    optimal_decay_matrix,
    optimal_decay_rate,
    smooth_matrix,
    smooth_scalar,
)
from decaygraph.spectral import (
    decayed_spectral_cluster,
    kmeans,
    leading_singular_vectors,
    spectral_cluster,
)
from decaygraph.metrics import (
    EvalReport,
    accuracy,
    macro_auc,
    macro_f1,
    match_labels,
    relative_error,
    spectral_norm,
)

__version__ = "0.1.0"
