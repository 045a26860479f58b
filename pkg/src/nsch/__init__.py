"""Structure-preserving compressible Navier-Stokes/Cahn-Hilliard simulator
with the Flory-Huggins potential on staggered rectangular grids."""

from .grid import Grid, ScalarField, VectorField
from .potential import PotentialParams, RegularizedPotential, verify_potential
from .state import State, build_initial_state, preset, validate_initial_data
from .stepper import StepConfig, step

__all__ = [
    "Grid", "ScalarField", "VectorField", "PotentialParams", "RegularizedPotential",
    "verify_potential", "State", "build_initial_state", "preset", "validate_initial_data",
    "StepConfig", "step",
]
__version__ = "0.1.0"
