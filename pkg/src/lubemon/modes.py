"""Rotordynamic placement: critical speed and stability threshold.

The machine is swept over rotation speed holding the nominal lubrication
condition (groove at the supply pressure), because the supply system - not a
fixed flowrate - is what stays constant when a real machine changes speed.
At each speed the bearing equilibrium and linearized coefficients are
recomputed, folded into the rotor model and the damped eigenvalues of the
first-order state matrix evaluated.

Two placement numbers are extracted:

* critical speed: lowest speed at which the synchronous line crosses a
  whirl branch (sub-synchronous branches excluded),
* instability onset: lowest speed at which the least-damped mode's real
  part reaches zero (oil-whip threshold).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bearing import find_equilibrium, linearized_coefficients
from .config import Machine
from .rotor import assemble_global
from .statespace import build_continuous


@dataclass
class SpeedPoint:
    speed_hz: float
    frequencies_hz: np.ndarray   # oscillatory modes in the analysis window
    max_real: float              # growth rate of the least-damped mode, 1/s
    flowrate: float              # groove flow at this speed, m^3/s


class PlacementAnalysis:
    """Damped eigenvalue analysis of a machine across rotation speed."""

    def __init__(self, machine: Machine, f_window=(5.0, 500.0)):
        self.machine = machine
        self.gm = assemble_global(machine.rotor)
        self.mesh = machine.film_mesh()
        self.f_window = f_window
        self._guess = None
        self._cache: dict[float, SpeedPoint] = {}

    def _coefficients(self, speed):
        geom = self.machine.bearing_geometry
        lub = self.machine.lubricant
        load = self.machine.bearing_loads()[0]
        eq, station = find_equilibrium(geom, lub, self.mesh, speed, load, 0.0,
                                       pressure_driven=True,
                                       initial_guess=self._guess)
        self._guess = np.asarray(eq.eccentricity0)
        co = linearized_coefficients(geom, lub, self.mesh, speed, eq, 0.0,
                                     pressure_driven=True, _station=station)
        return co, eq.flowrate

    def at_speed(self, speed_hz) -> SpeedPoint:
        pt = self._cache.get(round(speed_hz, 9))
        if pt is not None:
            return pt
        w = 2.0 * math.pi * speed_hz
        co, q = self._coefficients(w)
        css = build_continuous(self.gm, w, (co, co),
                               self.machine.rotor.bearing_nodes)
        ev = np.linalg.eigvals(css.A)
        lo, hi = self.f_window
        lam = ev[(ev.imag > 2 * math.pi * lo) & (ev.imag < 2 * math.pi * hi)]
        pt = SpeedPoint(
            speed_hz=float(speed_hz),
            frequencies_hz=np.sort(lam.imag) / (2 * math.pi),
            max_real=float(lam.real.max()),
            flowrate=q,
        )
        self._cache[round(speed_hz, 9)] = pt
        return pt

    def _synchronous_margin(self, speed_hz):
        """min(branch frequency) - speed over the super-synchronous branches."""
        pt = self.at_speed(speed_hz)
        cand = pt.frequencies_hz[pt.frequencies_hz > 0.75 * speed_hz]
        if cand.size == 0:
            return -speed_hz
        return float(cand.min() - speed_hz)

    def critical_speed(self, lo=20.0, hi=80.0, tol=0.25):
        """Bisect the synchronous crossing of the lowest whirl branch, Hz."""
        a, b = lo, hi
        fa = self._synchronous_margin(a)
        fb = self._synchronous_margin(b)
        if fa < 0:
            raise ValueError(f"lower bound {lo} Hz already above the crossing")
        if fb > 0:
            raise ValueError(f"no synchronous crossing below {hi} Hz")
        while b - a > tol:
            m = 0.5 * (a + b)
            if self._synchronous_margin(m) > 0:
                a = m
            else:
                b = m
        return 0.5 * (a + b)

    def instability_onset(self, lo=60.0, hi=130.0, tol=0.25):
        """Bisect the zero crossing of the least-damped mode's real part, Hz."""
        a, b = lo, hi
        ra = self.at_speed(a).max_real
        rb = self.at_speed(b).max_real
        if ra >= 0:
            raise ValueError(f"already unstable at {lo} Hz")
        if rb < 0:
            raise ValueError(f"still stable at {hi} Hz")
        while b - a > tol:
            m = 0.5 * (a + b)
            if self.at_speed(m).max_real < 0:
                a = m
            else:
                b = m
        return 0.5 * (a + b)
