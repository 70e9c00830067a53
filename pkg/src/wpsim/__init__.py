"""Simulation and experiment harness for the coupled Westervelt / Pennes thermo-acoustic system."""

from .discretization import BoundaryConditionSpec, DiscreteOperator, Grid, build_laplacian, discrete_norm, eigen_decompose
from .errors import (
    BracketInvalid,
    ConfigError,
    LinearSolveFailure,
    NewtonDivergence,
    NonDecayingSignal,
    ParabolicityLost,
    SingularSteadyProblem,
    WPSimError,
)
from .model import Coefficient, CoefficientSet, Forcing, Model, PhysicalParams, SourceModel
from .timestepper import Operators, State, StepperConfig, Trajectory, check_compatibility, integrate, nonlinear_step

__version__ = "0.1.0"
