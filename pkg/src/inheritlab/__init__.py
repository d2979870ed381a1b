"""inheritlab: numerical checks for curl eigenfields, frequency functions,
non-inheriting Einstein-Maxwell fields and radial Carleman models."""

import jax

# Curvature and operator identities are checked near round-off.
jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"
