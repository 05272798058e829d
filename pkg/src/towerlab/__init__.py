"""Desk-scale laboratory for two-tower semantic product search.

The pipeline runs end to end on one machine: ingest a click log into a
bipartite graph, mine training pairs by random walks on that graph,
train a pair of shared-weight text towers with a contrastive loss, and
evaluate ranking quality bucketed by what the training data has seen.
"""

__version__ = "0.1.0"

from .errors import TowerlabError

__all__ = ["TowerlabError", "__version__"]
