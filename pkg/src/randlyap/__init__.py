"""Random perturbations of standard-map-like torus maps: simulation and checks."""
__version__ = "0.1.0"
