"""Exact series, expansion identities, Green's functions, diagram bounds and
Monte Carlo for spread-out self-avoiding walk, lattice trees/animals and
bond percolation."""

__version__ = "0.1.0"

from .errors import GuardError
from .lattice import ScalarField, StepKernel, Torus, build_kernel, kernel_from_json
from .series import ActivityPoly, SiteSeries

__all__ = ["GuardError", "ScalarField", "StepKernel", "Torus", "build_kernel", "kernel_from_json",
           "ActivityPoly", "SiteSeries", "__version__"]
