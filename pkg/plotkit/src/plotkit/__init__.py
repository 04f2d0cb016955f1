"""Offline rendering of simulation run outputs.

Reads only the solver's documented ASCII formats (x-t field and mask files,
gauge CSVs, patch layout logs, flag maps) and writes static images.
"""

__version__ = "0.1.0"
