"""GLN-AR forecasting."""

__version__ = "0.1.0"
