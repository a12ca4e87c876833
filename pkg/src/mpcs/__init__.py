"""Analysis on marked Poisson configuration spaces."""

__version__ = "0.1.0"
