"""Device-agnostic mmWave beam selection on Fibonacci grids."""

__version__ = "0.1.0"
