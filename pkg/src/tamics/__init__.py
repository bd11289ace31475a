"""Topic-aware most influential community search over uncertain social graphs."""

__version__ = "0.1.0"
