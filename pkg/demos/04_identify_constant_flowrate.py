"""Identify constant supply flowrates from noisy vibration, end to end.

Reproduces one cell of the reference test matrix: the truth plant runs at a
starved combination (85% / 95% of nominal), the four bearing displacements
are contaminated with 1 um of white noise, velocities are numerically
differentiated, and the augmented-state filter estimates both flowrates
from the eight channels.  Takes ~half a minute once the table exists.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from lubemon.bearing import ML_MIN_PER_M3_S, load_coefficient_table, save_coefficient_table
from lubemon.config import load_machine, generic_turbine_path
from lubemon.scenarios import build_plant, build_tables, run_constant_case

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

machine = load_machine(generic_turbine_path())
table_path = out / "coefficients.csv"
if table_path.is_file():
    table = load_coefficient_table(table_path)
else:
    table, _ = build_tables(machine)
    save_coefficient_table(table, table_path)

plant = build_plant(machine, (table, table))
res = run_constant_case(plant, machine, 0.85, 0.95, sigma=1.0e-6, seed=42)

q_true = np.array(res.summary["q_true_ml_min"])
print(res.run.summary())
print(f"truth: q1={q_true[0]:.1f}, q2={q_true[1]:.1f} ml/min")
print(f"relative errors: {res.errors_pct[0]:.2f}% / {res.errors_pct[1]:.2f}%")

t = res.truth.times
q = res.run.flowrates * ML_MIN_PER_M3_S
s = res.run.flowrate_std * ML_MIN_PER_M3_S
fig, ax = plt.subplots(figsize=(8, 4))
for b, color in ((0, "tab:blue"), (1, "tab:orange")):
    ax.plot(t, q[:, b], color=color, lw=0.9, label=f"bearing {b + 1} estimate")
    ax.fill_between(t, q[:, b] - s[:, b], q[:, b] + s[:, b], color=color, alpha=0.2)
    ax.axhline(q_true[b], color=color, ls="--", lw=0.8)
ax.set_xlabel("time [s]")
ax.set_ylabel("supply flowrate [ml/min]")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(out / "identification.svg")
print(f"wrote {out / 'identification.svg'}")
