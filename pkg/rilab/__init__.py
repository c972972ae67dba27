"""rilab - Monte Carlo laboratory for random interlacements on Z^d."""

__version__ = "0.1.0"
