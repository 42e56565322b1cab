"""Actor-critic training engine with simplicial representation heads."""

__version__ = "0.1.0"
