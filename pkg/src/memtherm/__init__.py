"""Exact-diagonalization study of thermalization in a master-mode memory model."""
from .fock import FockState, SectorBasis, enumerate_sector, sector_dimension
from .model import ModelParams, ModelInstance, build_hamiltonian, build_model, initial_state_vector
from .spectrum import Spectrum, count_in_window, diagonalize
from .diagnostics import DiagnosticsReport, analyze
from .levelstats import spacing_stats
from .indeptests import TestResult, run_all_tests
from .fitting import FitResult, fit, fit_suite
from .pipeline import StudyConfig, run_study

__version__ = "0.1.0"
