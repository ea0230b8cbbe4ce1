"""Changepoint detection in attributed dynamic graphs by monitoring the
modularity a graph neural network assigns to each snapshot."""

from modmon.core import (
    AttributedSnapshot,
    DegreeSummary,
    DynamicNetwork,
    SoftAssignment,
    degree_summary,
    modularity_hard,
    modularity_pairwise,
    modularity_soft,
    normalized_adjacency,
)

__version__ = "0.1.0"

__all__ = [
    "AttributedSnapshot",
    "DegreeSummary",
    "DynamicNetwork",
    "SoftAssignment",
    "degree_summary",
    "modularity_hard",
    "modularity_pairwise",
    "modularity_soft",
    "normalized_adjacency",
]
