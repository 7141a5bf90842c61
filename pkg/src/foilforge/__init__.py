"""foilforge: bidirectional airfoil / pressure-distribution surrogate pipeline."""

__version__ = "0.1.0"
