"""Computational toolkit for linear equations in almost-prime weights.

Modules: linear_systems (affine systems, local factors, singular series,
kernels), prime_sets (factor tables and the theta weights), sieve_weights
(Selberg-type majorants), gowers (uniformity norms), nilsequences (torus
phases and equidistribution), counting (lattice sums, W-trick, density
reports) and cli.
"""

from .errors import AlmostTwinError, ConfigError, OutOfRangeError, PreconditionError, SizeLimitError

__version__ = "0.1.0"

__all__ = ["AlmostTwinError", "ConfigError", "OutOfRangeError", "PreconditionError", "SizeLimitError", "__version__"]
