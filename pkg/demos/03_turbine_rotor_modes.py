"""Rotordynamic placement of the turbine: critical speed and whip onset.

Sweeps the rotation speed holding the nominal lubrication condition (0.5 bar
groove pressure), recomputing the bearing equilibrium and coefficients at
each speed, and locates where the synchronous line crosses the first whirl
branch and where the least-damped mode turns unstable.  Takes a few minutes.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from lubemon.config import load_machine, generic_turbine_path
from lubemon.modes import PlacementAnalysis

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

machine = load_machine(generic_turbine_path())
analysis = PlacementAnalysis(machine)

speeds = np.arange(40.0, 111.0, 10.0)
first_freq = []
growth = []
for hz in speeds:
    pt = analysis.at_speed(hz)
    cand = pt.frequencies_hz[pt.frequencies_hz > 0.75 * hz]
    first_freq.append(cand.min() if cand.size else np.nan)
    growth.append(pt.max_real)
    print(f"{hz:5.0f} Hz: lowest branch {first_freq[-1]:6.1f} Hz, "
          f"max growth rate {pt.max_real:+7.2f} 1/s, "
          f"supply flow {pt.flowrate * 6e7:.0f} ml/min")

critical = analysis.critical_speed(lo=40.0, hi=70.0)
onset = analysis.instability_onset(lo=70.0, hi=120.0)
print(f"\nfirst critical speed  : {critical:.1f} Hz  (reference ~55)")
print(f"instability threshold : {onset:.1f} Hz  (reference ~95)")

fig, axes = plt.subplots(1, 2, figsize=(10, 4))
axes[0].plot(speeds, first_freq, "o-", label="first whirl branch")
axes[0].plot(speeds, speeds, "k--", lw=0.8, label="synchronous line")
axes[0].axvline(critical, color="tab:red", lw=0.8)
axes[0].set_xlabel("rotation speed [Hz]")
axes[0].set_ylabel("damped frequency [Hz]")
axes[0].legend(fontsize=8)
axes[1].plot(speeds, growth, "o-")
axes[1].axhline(0.0, color="k", lw=0.8)
axes[1].axvline(onset, color="tab:red", lw=0.8)
axes[1].set_xlabel("rotation speed [Hz]")
axes[1].set_ylabel("least-damped growth rate [1/s]")
fig.tight_layout()
fig.savefig(out / "placement.svg")
print(f"wrote {out / 'placement.svg'}")
