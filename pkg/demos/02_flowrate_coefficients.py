"""Build the flowrate-indexed bearing coefficient table and plot the trends.

The table is the bridge between the film solver and the rotor model: for a
grid of supply flowrates it stores the static equilibrium and the linearized
stiffness/damping about it.  Starvation stiffens the film and pushes the
shaft outward; both trends are visible here.  Takes a minute or two.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from lubemon.bearing import ML_MIN_PER_M3_S, save_coefficient_table
from lubemon.config import load_machine, generic_turbine_path
from lubemon.scenarios import build_tables

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

machine = load_machine(generic_turbine_path())
table, _ = build_tables(machine)
save_coefficient_table(table, out / "coefficients.csv")
print(f"wrote {out / 'coefficients.csv'}")

q = table.flowrate_grid * ML_MIN_PER_M3_S
ecc = np.array([np.linalg.norm(e.equilibrium.eccentricity0)
                for e in table.entries]) * 1e6
K = np.array([e.stiffness for e in table.entries]) / 1e6
C = np.array([e.damping for e in table.entries]) / 1e3

fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
axes[0].plot(q, ecc, "o-")
axes[0].set_ylabel("equilibrium eccentricity [um]")
for i, j, name in ((0, 0, "Kxx"), (0, 1, "Kxy"), (1, 0, "Kyx"), (1, 1, "Kyy")):
    axes[1].plot(q, K[:, i, j], "o-", label=name)
axes[1].set_ylabel("stiffness [MN/m]")
axes[1].legend(fontsize=8)
for i, j, name in ((0, 0, "Cxx"), (0, 1, "Cxy"), (1, 1, "Cyy")):
    axes[2].plot(q, C[:, i, j], "o-", label=name)
axes[2].set_ylabel("damping [kNs/m]")
axes[2].legend(fontsize=8)
for ax in axes:
    ax.set_xlabel("supply flowrate [ml/min]")
fig.tight_layout()
fig.savefig(out / "coefficient_trends.svg")
print(f"wrote {out / 'coefficient_trends.svg'}")
print(f"reciprocity check: Cxy = {C[3, 0, 1]:.1f}, Cyx = {C[3, 1, 0]:.1f} kNs/m")
