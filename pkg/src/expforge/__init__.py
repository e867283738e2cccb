"""expforge: learns game graphs from annotated platformer traces and generates
novel playable games by heuristic search over weighted recombinations."""

__version__ = "0.1.0"
