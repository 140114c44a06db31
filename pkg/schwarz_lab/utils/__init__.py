"""Utility modules for Schwarz Lab."""

from .csvio import read_csv, write_csv
from .rng import derive_rng

__all__ = ['derive_rng', 'read_csv', 'write_csv']
