"""Gap-of-log-densities scores for conditional GANs on a small numpy/Cython core."""

__version__ = "0.1.0"
