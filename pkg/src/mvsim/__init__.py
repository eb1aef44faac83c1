"""Pseudo-spectral simulation of a magnetoviscoelastic fluid on the 2-torus.

Modules:

``spectral``          grid, transforms, dealiasing, Leray projection, norms
``fields``            state, model parameters, energy densities, stresses
``dynamics``          the time stepper and pressure recovery
``initial``           named initial-condition presets
``diagnostics``       energy budgets, local energies, singular-time scans
``littlewood_paley``  dyadic blocks, Besov norms, paraproducts, verifiers
``uniqueness``        twin runs, difference energy, bilinear estimate fits
``config``, ``io``, ``runner``, ``cli``, ``selftest``
                      configuration, snapshots, run orchestration, command line
"""

from .dynamics import StepperConfig, integrate, step, with_pressure
from .errors import *  # noqa: F401,F403
from .fields import ModelParams, SimState
from .spectral import Grid, SpectralField

__version__ = "0.1.0"

__all__ = ["Grid", "ModelParams", "SimState", "SpectralField", "StepperConfig", "integrate", "step", "with_pressure"]
