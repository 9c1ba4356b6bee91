"""Decentralized bilevel optimization simulator.

Thin package wrapper around the pybind11 extension; everything lives in
``dbosim._core``.
"""

from ._core import (
    ConfigError,
    ConsensusMatrix,
    DerivedConstants,
    DivergenceError,
    Graph,
    OracleError,
    ProblemConstants,
    Rng,
    SyntheticQuadratic,
    bias_bound,
    build_consensus_matrix,
    derived_constants,
    edge_list,
    execute,
    generate_er_graph,
    graph_from_edge_list,
    hypergrad_full,
    hypergrad_stoch,
    laplacian,
    rate_fit,
    spectral_gap,
    stepsize_bounds,
    stepsize_clauses,
    true_global_grad,
    true_local_grad,
)

__all__ = [
    "ConfigError",
    "ConsensusMatrix",
    "DerivedConstants",
    "DivergenceError",
    "Graph",
    "OracleError",
    "ProblemConstants",
    "Rng",
    "SyntheticQuadratic",
    "bias_bound",
    "build_consensus_matrix",
    "derived_constants",
    "edge_list",
    "execute",
    "generate_er_graph",
    "graph_from_edge_list",
    "hypergrad_full",
    "hypergrad_stoch",
    "laplacian",
    "rate_fit",
    "spectral_gap",
    "stepsize_bounds",
    "stepsize_clauses",
    "true_global_grad",
    "true_local_grad",
]

__version__ = "0.1.0"
