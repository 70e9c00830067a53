"""Experiments on top of the integrator: equilibria, spectra, decay, smoothing, sweeps, MMS."""

from .decay import DecayFit, decay_experiment, fit_decay, fit_exponential
from .equilibrium import EquilibriumResult, compute_equilibrium
from .mms import ConvergenceReport, mms_convergence, sine_cosine_solution
from .smoothing import SmoothingReport, smoothing_probe
from .spectrum import Spectrum, linearized_spectrum
from .sweep import DataShape, SweepReport, smallness_sweep, static_critical_amplitude
