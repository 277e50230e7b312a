"""Solve the cavitating oil film of the turbine bearing and plot the fields.

Walks through the lowest layer of the toolkit: build the bearing geometry,
solve the mass-conserving film at the nominal supply flowrate and at a
starved one, and look at how the pressure hill and the fluid-fraction
deficit move.  Writes two SVG maps into ./out.
"""

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from lubemon.bearing import (ML_MIN_PER_M3_S, FilmMesh, ShaftKinematics,
                             find_equilibrium, hydrodynamic_force, solve_film)
from lubemon.config import load_machine, generic_turbine_path

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

machine = load_machine(generic_turbine_path())
geom = machine.bearing_geometry
lub = machine.lubricant
mesh = machine.film_mesh()
speed = machine.rotor.rotational_speed
load = machine.bearing_loads()[0]

print(f"bearing: R={geom.radius * 1e3:.0f} mm, L={geom.width * 1e3:.0f} mm, "
      f"c={geom.radial_clearance * 1e6:.0f} um, groove at "
      f"{math.degrees(geom.groove_angular_position):.0f} deg")

fig, axes = plt.subplots(2, 2, figsize=(11, 6), sharex=True, sharey=True)
for row, frac in enumerate((1.0, 0.6)):
    q = frac * machine.nominal_flow
    eq, station = find_equilibrium(geom, lub, mesh, speed, load, q)
    st = station.solve(np.asarray(eq.eccentricity0))
    F = hydrodynamic_force(st, geom)
    e = np.asarray(eq.eccentricity0) * 1e6
    print(f"q = {q * ML_MIN_PER_M3_S:6.1f} ml/min: equilibrium "
          f"e = ({e[0]:6.2f}, {e[1]:6.2f}) um, "
          f"F = ({F[0]:7.1f}, {F[1]:7.1f}) N, "
          f"min fluid fraction {st.fluid_fraction.min():.3f}")

    deg = np.degrees(mesh.phi)
    zmm = mesh.z * 1e3
    m0 = axes[row, 0].pcolormesh(deg, zmm, st.pressure.T / 1e6, shading="auto")
    axes[row, 0].set_title(f"pressure [MPa], q = {frac:.0%} nominal")
    fig.colorbar(m0, ax=axes[row, 0])
    m1 = axes[row, 1].pcolormesh(deg, zmm, st.fluid_fraction.T,
                                 shading="auto", vmin=0.6, vmax=1.0)
    axes[row, 1].set_title("fluid fraction [-]")
    fig.colorbar(m1, ax=axes[row, 1])

for ax in axes[1]:
    ax.set_xlabel("circumferential angle [deg]")
for ax in axes[:, 0]:
    ax.set_ylabel("axial position [mm]")
fig.tight_layout()
fig.savefig(out / "film_fields.svg")
print(f"wrote {out / 'film_fields.svg'}")
