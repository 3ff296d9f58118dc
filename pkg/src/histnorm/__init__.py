"""Neural historical spelling normalisation."""

__version__ = "0.1.0"
