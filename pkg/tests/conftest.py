import math

import numpy as np
import pytest

from lubemon.bearing import (BearingGeometry, FilmMesh, Lubricant,
                             save_coefficient_table, load_coefficient_table)
from lubemon.config import load_machine, generic_turbine_path
from lubemon.scenarios import build_plant, build_tables

SPEED_75HZ = 2.0 * math.pi * 75.0
BEARING_LOAD = np.array([0.0, -3272.8])


@pytest.fixture(scope="session")
def turbine_bearing_geometry():
    return BearingGeometry(
        radius=0.045, width=0.070, radial_clearance=120.0e-6,
        groove_angular_position=math.pi,
        groove_circumferential_length=16.2e-3, groove_axial_width=35.0e-3)


@pytest.fixture(scope="session")
def turbine_lubricant():
    return Lubricant(dynamic_viscosity=0.094, supply_pressure=0.5e5)


@pytest.fixture(scope="session")
def small_mesh(turbine_bearing_geometry):
    """Coarse film mesh keeping unit tests fast."""
    return FilmMesh.build(turbine_bearing_geometry, 64, 16)


@pytest.fixture(scope="session")
def turbine_machine():
    return load_machine(generic_turbine_path())


@pytest.fixture(scope="session")
def turbine_table(turbine_machine, tmp_path_factory):
    """The reference 7-point coefficient table (built once per session)."""
    path = tmp_path_factory.mktemp("tables") / "turbine_table.csv"
    t1, _ = build_tables(turbine_machine)
    save_coefficient_table(t1, path)
    return load_coefficient_table(path)


@pytest.fixture(scope="session")
def turbine_plant(turbine_machine, turbine_table):
    return build_plant(turbine_machine, (turbine_table, turbine_table))
