"""Rotor-bearing simulation and oil supply flowrate identification toolkit."""

from .bearing import (BearingCoefficients, BearingGeometry, CoefficientTable,
                      FilmMesh, Lubricant, ShaftKinematics,
                      build_coefficient_table, calibrate_nominal,
                      find_equilibrium, hydrodynamic_force,
                      interpolate_coefficients, linearized_coefficients,
                      load_coefficient_table, save_coefficient_table,
                      solve_film)
from .config import Machine, ScenarioSpec, load_machine, load_scenario, generic_turbine_path
from .ekf import FilterRun, NoiseConfig, run_filter
from .modes import PlacementAnalysis
from .rotor import Disc, Material, RotorModel, ShaftElement, assemble_global
from .scenarios import (build_plant, build_tables, run_constant_grid,
                        run_drop_scenario, simulate_truth)
from .statespace import Plant, build_continuous, discretize, measurement_matrix

__version__ = "0.1.0"
