"""Link prediction with statistical heuristics, heuristic encoding and GCNs
with trainable node embeddings."""

__version__ = "0.1.0"
