"""Periodisation and homogenisation of random conductance media on the discrete torus."""
__version__ = "0.1.0"
