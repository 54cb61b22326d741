"""Monte Carlo laboratory for SLE hitting laws and their lattice counterparts."""

__version__ = "0.1.0"
