"""critdecay: numerical verification lab for dispersive estimates with
critically decaying (inverse-square class) potentials."""

__version__ = "0.1.0"
