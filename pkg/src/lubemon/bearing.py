"""Hydrodynamic journal bearing with mass-conserving cavitation.

Finite-volume solver for the pressure / fluid-fraction formulation of the
Reynolds equation on the unwrapped film (circumferential direction periodic,
ambient pressure at both axial ends).  The oil supply enters the flow balance
of the cells covered by the feeding groove, either as a prescribed volumetric
flowrate or as a prescribed groove pressure.  On top of the film solver the
module provides static equilibrium search, linearized stiffness/damping
coefficients by central finite differences, and flowrate-indexed coefficient
tables with piecewise-linear interpolation.

Conventions
-----------
* The circumferential angle ``phi`` is measured from the positive X axis,
  film thickness ``h = c - ex*cos(phi) - ey*sin(phi)``.
* The groove is centered at ``groove_angular_position`` (default 0 rad).
* Shaft rotation is positive (oil dragged towards increasing ``phi``).
* Forces are the action of the film on the shaft; stiffness and damping are
  stored restoring-positive, i.e. ``F(e) ~ F0 - K (e - e0) - C edot``.
* All quantities SI; pressures are gauge.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

ML_MIN_PER_M3_S = 6.0e7  # 1 m^3/s = 6e7 ml/min


class BearingError(Exception):
    """Base class for bearing model failures."""


class ContactError(BearingError):
    """Kinematics produce non-positive film thickness (out of model range)."""


class SolverConvergenceError(BearingError):
    """Film solver exhausted its iteration budget.

    Carries the tail of the residual history for diagnosis.
    """

    def __init__(self, message, residual_history):
        super().__init__(message)
        self.residual_history = np.asarray(residual_history)


class CapacityExceededError(BearingError):
    """No static equilibrium inside the clearance circle (severe starvation)."""


@dataclass(frozen=True)
class BearingGeometry:
    """Cylindrical journal bearing with a single axial feeding groove."""

    radius: float
    width: float
    radial_clearance: float
    groove_angular_position: float = 0.0
    groove_circumferential_length: float = 0.0
    groove_axial_width: float = 0.0

    def __post_init__(self):
        if self.radial_clearance <= 0.0:
            raise ValueError("radial_clearance must be positive")
        if self.groove_axial_width > self.width:
            raise ValueError("groove_axial_width larger than bearing width")
        if self.groove_circumferential_length >= 2.0 * math.pi * self.radius:
            raise ValueError("groove longer than bearing circumference")


@dataclass(frozen=True)
class Lubricant:
    """Oil properties and supply condition (gauge pressures)."""

    dynamic_viscosity: float
    supply_pressure: float = 0.0
    cavitation_pressure: float = 0.0

    def __post_init__(self):
        if self.dynamic_viscosity <= 0.0:
            raise ValueError("dynamic_viscosity must be positive")
        if self.supply_pressure < self.cavitation_pressure:
            raise ValueError("supply_pressure below cavitation_pressure")


@dataclass(frozen=True)
class FilmMesh:
    """Uniform cell-centered grid over the unwrapped film.

    ``n_circ`` must be even so that red-black sweeps stay consistent across
    the periodic seam.  Groove cells are those whose center falls inside the
    groove footprint.
    """

    n_circ: int
    n_axial: int
    phi: np.ndarray          # (n_circ,) cell-center angles, rad
    z: np.ndarray            # (n_axial,) cell-center axial coordinate, m
    dx: float                # circumferential cell size (arc length), m
    dz: float                # axial cell size, m
    groove: np.ndarray       # (n_circ, n_axial) bool mask

    @staticmethod
    def build(geometry: BearingGeometry, n_circ: int = 160, n_axial: int = 40) -> "FilmMesh":
        if n_circ < 40 or n_axial < 10:
            raise ValueError("mesh below resolution floor (40 x 10)")
        if n_circ % 2:
            raise ValueError("n_circ must be even for red-black sweeps")
        dphi = 2.0 * math.pi / n_circ
        phi = (np.arange(n_circ) + 0.5) * dphi
        dz = geometry.width / n_axial
        z = (np.arange(n_axial) + 0.5) * dz - 0.5 * geometry.width

        half_arc = 0.5 * geometry.groove_circumferential_length / geometry.radius
        # shortest angular distance to the groove center
        d = np.angle(np.exp(1j * (phi - geometry.groove_angular_position)))
        in_circ = np.abs(d) <= half_arc
        in_ax = np.abs(z) <= 0.5 * geometry.groove_axial_width
        groove = in_circ[:, None] & in_ax[None, :]
        if not groove.any():
            raise ValueError("groove footprint does not cover any cell")
        return FilmMesh(
            n_circ=n_circ,
            n_axial=n_axial,
            phi=phi,
            z=z,
            dx=geometry.radius * dphi,
            dz=dz,
            groove=groove,
        )


@dataclass(frozen=True)
class ShaftKinematics:
    """Shaft center position/velocity inside the clearance and spin speed."""

    eccentricity: tuple[float, float]
    eccentricity_rate: tuple[float, float] = (0.0, 0.0)
    rotational_speed: float = 0.0


@dataclass
class FilmState:
    """Converged film fields plus solver diagnostics."""

    pressure: np.ndarray        # (n_circ, n_axial), Pa gauge
    fluid_fraction: np.ndarray  # (n_circ, n_axial), 0..1
    film_thickness: np.ndarray  # (n_circ, n_axial), m
    mesh: FilmMesh
    kinematics: ShaftKinematics
    groove_flow: float          # net oil flow supplied through the groove, m^3/s
    sweeps: int
    residual: float             # normalized max cell flow imbalance
    mass_balance: float         # normalized global (in - out - squeeze) defect


@dataclass(frozen=True)
class EquilibriumPoint:
    eccentricity0: tuple[float, float]
    flowrate: float
    residual_force: float


@dataclass
class BearingCoefficients:
    """Linearized film stiffness/damping about a static equilibrium.

    Restoring-positive convention: the film force on the shaft is
    ``F = static_reaction - stiffness @ (e - e0) - damping @ edot``.
    """

    stiffness: np.ndarray       # 2x2, N/m
    damping: np.ndarray         # 2x2, N s/m
    equilibrium: EquilibriumPoint
    static_reaction: tuple[float, float]
    clamped: bool = False       # set when produced by out-of-range interpolation


@dataclass
class CoefficientTable:
    flowrate_grid: np.ndarray           # sorted, m^3/s
    entries: list[BearingCoefficients]

    def __post_init__(self):
        self.flowrate_grid = np.asarray(self.flowrate_grid, dtype=float)
        if len(self.entries) != self.flowrate_grid.size:
            raise ValueError("one entry required per grid point")
        if self.flowrate_grid.size >= 2 and not np.all(np.diff(self.flowrate_grid) > 0):
            raise ValueError("flowrate grid must be strictly increasing")


def film_thickness(geometry, kinematics, circumferential_angle):
    """Oil film thickness at ``circumferential_angle`` (rad, from +X axis)."""
    ex, ey = kinematics.eccentricity
    phi = np.asarray(circumferential_angle, dtype=float)
    h = geometry.radial_clearance - ex * np.cos(phi) - ey * np.sin(phi)
    if np.any(h <= 0.0):
        raise ContactError("film thickness non-positive: shaft contacts the bearing")
    return h if h.ndim else float(h)


def _film_arrays(geometry, lubricant, mesh, kinematics):
    """Precompute per-cell FVM coefficients for the current kinematics."""
    c = geometry.radial_clearance
    ex, ey = kinematics.eccentricity
    exd, eyd = kinematics.eccentricity_rate
    mu = lubricant.dynamic_viscosity
    U = kinematics.rotational_speed * geometry.radius

    e_mag = math.hypot(ex, ey)
    if e_mag >= c:
        raise ContactError(f"eccentricity {e_mag:.3e} m exceeds clearance {c:.3e} m")

    phi_w = mesh.phi - 0.5 * mesh.dx / geometry.radius  # west-face angles
    h_c = film_thickness(geometry, kinematics, mesh.phi)
    h_w = film_thickness(geometry, kinematics, phi_w)
    h_e = np.roll(h_w, -1)
    hdot_c = -exd * np.cos(mesh.phi) - eyd * np.sin(mesh.phi)

    nz = mesh.n_axial
    aE = (h_e ** 3 / (12.0 * mu) * mesh.dz / mesh.dx)[:, None] * np.ones((1, nz))
    aW = (h_w ** 3 / (12.0 * mu) * mesh.dz / mesh.dx)[:, None] * np.ones((1, nz))
    az = (h_c ** 3 / (12.0 * mu) * mesh.dx / mesh.dz)[:, None] * np.ones((1, nz))
    aN = az.copy()
    aS = az.copy()
    aS[:, 0] *= 2.0       # half-cell distance to the ambient end
    aN[:, -1] *= 2.0

    cE = (0.5 * U * h_e * mesh.dz)[:, None] * np.ones((1, nz))
    cW = (0.5 * U * h_w * mesh.dz)[:, None] * np.ones((1, nz))
    sq = (hdot_c * mesh.dx * mesh.dz)[:, None] * np.ones((1, nz))

    return {
        "aE": aE, "aW": aW, "aN": aN, "aS": aS,
        "cE": cE, "cW": cW, "sq": sq,
        "h_c": h_c, "U": U,
    }


def _neighbor_fields(p, theta):
    """Neighbor pressures (periodic in x, ambient beyond the axial ends)."""
    pE = np.roll(p, -1, axis=0)
    pW = np.roll(p, 1, axis=0)
    pN = np.empty_like(p)
    pN[:, :-1] = p[:, 1:]
    pN[:, -1] = 0.0
    pS = np.empty_like(p)
    pS[:, 1:] = p[:, :-1]
    pS[:, 0] = 0.0
    thW = np.roll(theta, 1, axis=0)
    return pE, pW, pN, pS, thW


def _cell_residual(arr, p, theta, p_cav, source):
    """Flow balance of every cell with the current fields, m^3/s."""
    pE, pW, pN, pS, thW = _neighbor_fields(p, theta)
    diff = (arr["aE"] * (pE - p) + arr["aW"] * (pW - p)
            + arr["aN"] * (pN - p) + arr["aS"] * (pS - p))
    couette = arr["cE"] * theta - arr["cW"] * thW
    return diff - couette - arr["sq"] * theta + source


def solve_film(geometry, lubricant, mesh, kinematics, supply_flowrate, *,
               pressure_driven=False, warm_start=None, tol=1.0e-6,
               max_sweeps=100_000):
    """Solve the cavitating film for prescribed supply flow (or groove pressure).

    Red-black Gauss-Seidel with over-relaxation on the pressure cells; each
    visited cell switches between a pressure unknown (full film, theta = 1)
    and a fluid-fraction unknown (cavitated, p = p_cav) so that the converged
    fields satisfy the complementarity condition exactly.

    With ``pressure_driven=True`` the groove cells are held at the supply
    pressure and the returned ``groove_flow`` is the flow the groove had to
    inject to sustain it; otherwise ``supply_flowrate`` (m^3/s) is distributed
    uniformly over the groove cell areas.
    """
    if not pressure_driven and supply_flowrate <= 0.0:
        raise ValueError("supply_flowrate must be positive")

    arr = _film_arrays(geometry, lubricant, mesh, kinematics)
    p_cav = lubricant.cavitation_pressure
    nx, nz = mesh.n_circ, mesh.n_axial

    source = np.zeros((nx, nz))
    if pressure_driven:
        free = ~mesh.groove
    else:
        free = np.ones((nx, nz), dtype=bool)
        source[mesh.groove] = supply_flowrate / mesh.groove.sum()

    if warm_start is not None:
        p = np.array(warm_start[0], dtype=float)
        theta = np.array(warm_start[1], dtype=float)
    else:
        p = np.zeros((nx, nz))
        theta = np.ones((nx, nz))
    if pressure_driven:
        p[mesh.groove] = lubricant.supply_pressure
        theta[mesh.groove] = 1.0

    ii, jj = np.meshgrid(np.arange(nx), np.arange(nz), indexing="ij")
    colors = [(((ii + jj) % 2 == k) & free) for k in (0, 1)]

    aP = arr["aE"] + arr["aW"] + arr["aN"] + arr["aS"]
    den_cav = arr["cE"] + arr["sq"]
    degenerate = den_cav <= 1.0e-30  # no carry-out flow: cell cannot cavitate

    # flow scale used to normalize residuals (Couette + pressure-driven part)
    c = geometry.radial_clearance
    p_ref = max(lubricant.supply_pressure, 1.0e5)
    q_ref = (0.5 * abs(arr["U"]) * c * mesh.dz
             + c ** 3 / (12.0 * lubricant.dynamic_viscosity) * p_ref / mesh.dx * mesh.dz)

    omega = 1.7
    check_every = 20
    history = []
    prev_res = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        for mask in colors:
            pE, pW, pN, pS, thW = _neighbor_fields(p, theta)
            nb = arr["aE"] * pE + arr["aW"] * pW + arr["aN"] * pN + arr["aS"] * pS
            p_gs = (nb - arr["cE"] + arr["cW"] * thW - arr["sq"] + source) / aP
            p_new = p + omega * (p_gs - p)
            num_cav = (nb - aP * p_cav + arr["cW"] * thW + source)
            with np.errstate(divide="ignore", invalid="ignore"):
                th_new = np.where(degenerate, 1.0, num_cav / np.where(degenerate, 1.0, den_cav))

            was_full = theta >= 1.0
            stays_full = was_full & (p_new >= p_cav)
            refills = ~was_full & (th_new >= 1.0)
            full = stays_full | refills | degenerate

            upd_p = np.where(full, np.where(was_full, p_new, np.maximum(p_gs, p_cav)), p_cav)
            upd_t = np.where(full, 1.0, np.clip(th_new, 0.0, 1.0))
            p[mask] = upd_p[mask]
            theta[mask] = upd_t[mask]
        sweeps += 1

        if sweeps % check_every == 0:
            res = _cell_residual(arr, p, theta, p_cav, source)
            r = float(np.abs(res[free]).max()) / q_ref
            history.append(r)
            if r < tol:
                break
            # relaxation can limit-cycle through the cavitation switch
            if len(history) >= 25 and r > 0.999 * prev_res and omega > 1.0:
                omega = max(1.0, omega - 0.35)
                prev_res = np.inf
            else:
                prev_res = r
    else:
        raise SolverConvergenceError(
            f"film solver not converged after {max_sweeps} sweeps "
            f"(residual {history[-1]:.3e})", history[-200:])

    res = _cell_residual(arr, p, theta, p_cav, source)
    if pressure_driven:
        groove_flow = float(-res[mesh.groove].sum())
    else:
        groove_flow = float(supply_flowrate)

    # global balance: supplied flow - axial outflow - squeeze accumulation
    out_s = float((arr["aS"][:, 0] * (p[:, 0] - 0.0)).sum())
    out_n = float((arr["aN"][:, -1] * (p[:, -1] - 0.0)).sum())
    squeeze = float((arr["sq"] * theta).sum())
    balance = (groove_flow - out_s - out_n - squeeze) / (q_ref * mesh.groove.sum())

    h2d = arr["h_c"][:, None] * np.ones((1, nz))
    return FilmState(
        pressure=p,
        fluid_fraction=theta,
        film_thickness=h2d,
        mesh=mesh,
        kinematics=kinematics,
        groove_flow=groove_flow,
        sweeps=sweeps,
        residual=history[-1] if history else 0.0,
        mass_balance=balance,
    )


def hydrodynamic_force(state: FilmState, geometry: BearingGeometry):
    """Integrate the pressure field: force of the film on the shaft, N."""
    mesh = state.mesh
    dA = mesh.dx * mesh.dz
    px = state.pressure.sum(axis=1) * dA
    fx = -float((px * np.cos(mesh.phi)).sum())
    fy = -float((px * np.sin(mesh.phi)).sum())
    return np.array([fx, fy])


def _squeeze_pressure_response(geometry, lubricant, mesh, base: FilmState,
                               edot, *, dirichlet=None, tol=1.0e-8,
                               max_sweeps=100_000):
    """Film force under a squeeze-rate perturbation with frozen fluid fraction.

    Solves the pressure field for the equilibrium film state plus the squeeze
    source ``theta0 * dh/dt`` with the cavitation boundary held fixed (Lund's
    perturbation): cavitated cells keep ``p = p_cav``, full-film cells carry
    the pressure unknown without switching.  The restriction makes the
    perturbation operator self-adjoint, which is what gives the damping
    matrix its reciprocity.
    """
    kin = replace(base.kinematics, eccentricity_rate=tuple(edot))
    arr = _film_arrays(geometry, lubricant, mesh, kin)
    full = base.fluid_fraction >= 1.0 - 1.0e-9
    if dirichlet is not None:
        full &= ~dirichlet
    theta = base.fluid_fraction

    nx, nz = mesh.n_circ, mesh.n_axial
    ii, jj = np.meshgrid(np.arange(nx), np.arange(nz), indexing="ij")
    colors = [(((ii + jj) % 2 == k) & full) for k in (0, 1)]
    aP = arr["aE"] + arr["aW"] + arr["aN"] + arr["aS"]

    c = geometry.radial_clearance
    q_ref = (0.5 * abs(arr["U"]) * c * mesh.dz
             + c ** 3 / (12.0 * lubricant.dynamic_viscosity) * 1.0e5 / mesh.dx * mesh.dz)

    p = base.pressure.copy()
    omega = 1.7
    for sweep in range(max_sweeps):
        for mask in colors:
            pE, pW, pN, pS, thW = _neighbor_fields(p, theta)
            nb = arr["aE"] * pE + arr["aW"] * pW + arr["aN"] * pN + arr["aS"] * pS
            p_gs = (nb - (arr["cE"] * theta - arr["cW"] * thW)
                    - arr["sq"] * theta) / aP
            p[mask] = (p + omega * (p_gs - p))[mask]
        if (sweep + 1) % 20 == 0:
            pE, pW, pN, pS, thW = _neighbor_fields(p, theta)
            res = (arr["aE"] * pE + arr["aW"] * pW + arr["aN"] * pN
                   + arr["aS"] * pS - aP * p
                   - (arr["cE"] * theta - arr["cW"] * thW) - arr["sq"] * theta)
            if float(np.abs(res[full]).max()) / q_ref < tol:
                break
    else:
        raise SolverConvergenceError("squeeze perturbation solve stalled", [])

    dA = mesh.dx * mesh.dz
    px = p.sum(axis=1) * dA
    return np.array([-float((px * np.cos(mesh.phi)).sum()),
                     -float((px * np.sin(mesh.phi)).sum())])


class _FilmStation:
    """One bearing operating point: caches warm starts across repeated solves."""

    def __init__(self, geometry, lubricant, mesh, speed, supply_flowrate,
                 pressure_driven=False):
        self.geometry = geometry
        self.lubricant = lubricant
        self.mesh = mesh
        self.speed = speed
        self.q = supply_flowrate
        self.pressure_driven = pressure_driven
        self._warm = None

    def solve(self, e, edot=(0.0, 0.0)):
        kin = ShaftKinematics(tuple(e), tuple(edot), self.speed)
        st = solve_film(self.geometry, self.lubricant, self.mesh, kin,
                        self.q, pressure_driven=self.pressure_driven,
                        warm_start=self._warm)
        self._warm = (st.pressure, st.fluid_fraction)
        return st

    def force(self, e, edot=(0.0, 0.0)):
        return hydrodynamic_force(self.solve(e, edot), self.geometry)


def find_equilibrium(geometry, lubricant, mesh, speed, static_load,
                     supply_flowrate, *, tol_rel=1.0e-3, pressure_driven=False,
                     initial_guess=None, max_iter=40):
    """Static shaft position where the film balances ``static_load``.

    ``static_load`` is the external force applied to the shaft, N (gravity
    loading is ``(0, -W)``).  Damped Newton iteration on the eccentricity with
    a finite-difference force Jacobian; steps are clamped inside the clearance
    circle.  Falls back on step bisection whenever a trial point does not
    reduce the force residual.
    """
    load = np.asarray(static_load, dtype=float)
    c = geometry.radial_clearance
    ftol = max(tol_rel * np.linalg.norm(load), 1.0e-12)
    station = _FilmStation(geometry, lubricant, mesh, speed, supply_flowrate,
                           pressure_driven)

    if initial_guess is not None:
        starts = [np.asarray(initial_guess, dtype=float)]
    elif np.linalg.norm(load) == 0.0:
        starts = [np.zeros(2)]
    else:
        # probe the force at a small eccentricity opposite the load, then
        # rotate the start so the probed attitude angle is compensated and
        # scale it by the measured load deficit
        u = -load / np.linalg.norm(load)
        e_probe = 0.1 * c * u
        f_probe = station.force(e_probe)
        delta = math.atan2(f_probe[1], f_probe[0]) - math.atan2(-load[1], -load[0])
        ca, sa = math.cos(-delta), math.sin(-delta)
        direction = np.array([[ca, -sa], [sa, ca]]) @ u
        gain = (np.linalg.norm(load) / max(np.linalg.norm(f_probe), 1.0e-12)) ** 0.7
        eps = min(max(0.1 * gain, 0.03), 0.6)
        starts = [eps * c * direction, 0.1 * c * u]

    def residual(ev):
        return station.force(ev) + load

    de = 1.0e-3 * c
    last = None
    for e0 in starts:
        e = np.array(e0, dtype=float)
        try:
            r = residual(e)
        except (ContactError, SolverConvergenceError):
            continue
        for _ in range(max_iter):
            rn = np.linalg.norm(r)
            if rn < ftol:
                st = station.solve(e)
                return EquilibriumPoint(
                    eccentricity0=(float(e[0]), float(e[1])),
                    flowrate=st.groove_flow,
                    residual_force=float(rn),
                ), station
            J = np.empty((2, 2))
            for j in range(2):
                dv = np.zeros(2)
                dv[j] = de
                J[:, j] = (residual(e + dv) - r) / de
            try:
                step = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                step = -r * (de / max(np.linalg.norm(r), 1.0e-30))
            smax = 0.15 * c
            sn = np.linalg.norm(step)
            if sn > smax:
                step *= smax / sn

            improved = False
            alpha = 1.0
            for _ in range(8):
                trial = e + alpha * step
                if np.linalg.norm(trial) < 0.98 * c:
                    try:
                        rt = residual(trial)
                    except (ContactError, SolverConvergenceError):
                        rt = None
                    if rt is not None and np.linalg.norm(rt) < (1.0 - 1.0e-4 * alpha) * rn:
                        e, r = trial, rt
                        improved = True
                        break
                alpha *= 0.5
            if not improved:
                break
        last = (np.linalg.norm(r), np.linalg.norm(e) / c)

    raise CapacityExceededError(
        f"no equilibrium found (best residual {last[0]:.3e} N at eccentricity "
        f"ratio {last[1]:.3f}, flowrate "
        f"{supply_flowrate * ML_MIN_PER_M3_S:.1f} ml/min)" if last else
        "no equilibrium found: all starting points failed to solve")


def linearized_coefficients(geometry, lubricant, mesh, speed, equilibrium,
                            supply_flowrate, *, rel_step=1.0e-3,
                            pressure_driven=False, _station=None):
    """Stiffness and damping of the film about ``equilibrium``.

    Stiffness: central finite differences of the full nonlinear solve with
    displacement step ``rel_step * c``.  Damping: central differences of the
    frozen-film squeeze perturbation (velocity step ``rel_step * c * speed``),
    which preserves reciprocity.  Coefficients are returned in the
    restoring-positive convention (``K = -dF/de``, ``C = -dF/dedot``).  When a
    perturbed solve fails the step is halved once before giving up.
    """
    c = geometry.radial_clearance
    e0 = np.asarray(equilibrium.eccentricity0, dtype=float)
    station = _station or _FilmStation(geometry, lubricant, mesh, speed,
                                       supply_flowrate, pressure_driven)

    base = station.solve(e0)
    f0 = hydrodynamic_force(base, geometry)
    dirichlet = mesh.groove if pressure_driven else None

    def diff(perturb, step):
        for s in (step, 0.5 * step):
            try:
                fp = perturb(+s)
                fm = perturb(-s)
                return (fp - fm) / (2.0 * s)
            except (ContactError, SolverConvergenceError):
                continue
        raise SolverConvergenceError(
            "finite-difference perturbation failed on both step sizes", [])

    de = rel_step * c
    dv = rel_step * c * max(abs(speed), 1.0)
    K = np.empty((2, 2))
    C = np.empty((2, 2))
    for j, unit in enumerate((np.array([1.0, 0.0]), np.array([0.0, 1.0]))):
        K[:, j] = -diff(lambda s: station.force(e0 + s * unit), de)
        C[:, j] = -diff(
            lambda s: _squeeze_pressure_response(
                geometry, lubricant, mesh, base, s * unit, dirichlet=dirichlet),
            dv)

    return BearingCoefficients(
        stiffness=K,
        damping=C,
        equilibrium=equilibrium,
        static_reaction=(float(f0[0]), float(f0[1])),
    )


def build_coefficient_table(geometry, lubricant, mesh, speed, static_load,
                            q_grid, *, tol_rel=1.0e-3):
    """Equilibrium plus linearized coefficients at every grid flowrate.

    The grid must be sorted ascending; equilibria are warm-started from the
    neighbouring flowrate.  Failures are re-raised with the offending
    flowrate identified.
    """
    q_grid = np.asarray(q_grid, dtype=float)
    if q_grid.size < 1 or (q_grid.size >= 2 and not np.all(np.diff(q_grid) > 0)):
        raise ValueError("q_grid must be sorted strictly ascending")

    entries = []
    guess = None
    for q in q_grid[::-1]:  # start flooded where equilibrium is tamest
        try:
            eq, station = find_equilibrium(
                geometry, lubricant, mesh, speed, static_load, q,
                tol_rel=tol_rel, initial_guess=guess)
            coeffs = linearized_coefficients(
                geometry, lubricant, mesh, speed, eq, q, _station=station)
        except BearingError as exc:
            message = (f"coefficient table failed at flowrate "
                       f"{q * ML_MIN_PER_M3_S:.1f} ml/min: {exc}")
            if isinstance(exc, SolverConvergenceError):
                raise SolverConvergenceError(
                    message, exc.residual_history) from exc
            raise type(exc)(message) from exc
        guess = np.asarray(eq.eccentricity0)
        entries.append(coeffs)
    entries.reverse()
    return CoefficientTable(flowrate_grid=q_grid, entries=entries)


def interpolate_coefficients(table: CoefficientTable, q: float) -> BearingCoefficients:
    """Piecewise-linear, entry-wise interpolation of the table at flowrate ``q``.

    Out-of-range flowrates clamp to the nearest endpoint; the returned
    coefficients carry ``clamped=True`` in that case.
    """
    grid = table.flowrate_grid
    clamped = bool(q < grid[0] or q > grid[-1])
    if grid.size == 1:
        if not np.isclose(q, grid[0], rtol=1.0e-12, atol=0.0):
            raise ValueError("single-point table usable only at its grid flowrate")
        e = table.entries[0]
        return replace(e, stiffness=e.stiffness.copy(), damping=e.damping.copy(),
                       clamped=False)

    qc = float(np.clip(q, grid[0], grid[-1]))
    k = int(np.searchsorted(grid, qc, side="right") - 1)
    k = min(max(k, 0), grid.size - 2)
    t = (qc - grid[k]) / (grid[k + 1] - grid[k])
    a, b = table.entries[k], table.entries[k + 1]

    def mix(u, v):
        return (1.0 - t) * np.asarray(u) + t * np.asarray(v)

    e0 = mix(a.equilibrium.eccentricity0, b.equilibrium.eccentricity0)
    f0 = mix(a.static_reaction, b.static_reaction)
    eq = EquilibriumPoint(
        eccentricity0=(float(e0[0]), float(e0[1])),
        flowrate=qc,
        residual_force=max(a.equilibrium.residual_force, b.equilibrium.residual_force),
    )
    return BearingCoefficients(
        stiffness=mix(a.stiffness, b.stiffness),
        damping=mix(a.damping, b.damping),
        equilibrium=eq,
        static_reaction=(float(f0[0]), float(f0[1])),
        clamped=clamped,
    )


def calibrate_nominal(geometry, lubricant, mesh, speed, static_load, *,
                      tol_rel=1.0e-3):
    """Groove flowrate of the pressure-driven solve at static equilibrium.

    Defines the nominal lubrication condition: the groove is held at the
    supply pressure, the shaft is placed at its equilibrium under
    ``static_load``, and the flow the groove injects is returned (m^3/s).
    """
    eq, _ = find_equilibrium(geometry, lubricant, mesh, speed, static_load,
                             supply_flowrate=0.0, tol_rel=tol_rel,
                             pressure_driven=True)
    return eq.flowrate


def detect_flooded_threshold(geometry, lubricant, mesh, speed, static_load,
                             q_bracket, *, rel_tol=2.0e-3):
    """Smallest supply flowrate that keeps the groove outlet fully flooded.

    Bisects on the predicate "theta == 1 on every cell of the first
    circumferential column downstream of the groove (over the groove's axial
    rows)" evaluated at the static equilibrium for each candidate flowrate.
    """
    gcols = np.where(mesh.groove.any(axis=1))[0]
    rows = mesh.groove.any(axis=0)
    # first column after the groove in the drag direction, wrap-aware
    nxt = (gcols + 1) % mesh.n_circ
    exit_col = int(nxt[~np.isin(nxt, gcols)][0])

    def flooded(q):
        eq, station = find_equilibrium(geometry, lubricant, mesh, speed,
                                       static_load, q)
        st = station.solve(np.asarray(eq.eccentricity0))
        return bool(np.all(st.fluid_fraction[exit_col, rows] >= 1.0 - 1.0e-9))

    lo, hi = q_bracket
    if flooded(lo):
        return float(lo)
    if not flooded(hi):
        raise CapacityExceededError("upper bracket still starved")
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if flooded(mid):
            hi = mid
        else:
            lo = mid
    return float(hi)


_CSV_COLUMNS = ["flowrate_ml_min", "ex0_um", "ey0_um",
                "Kxx", "Kxy", "Kyx", "Kyy",
                "Cxx", "Cxy", "Cyx", "Cyy",
                "Fx0_N", "Fy0_N"]


def save_coefficient_table(table: CoefficientTable, path):
    """Write the table in the documented CSV schema (one row per flowrate)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(_CSV_COLUMNS)
        for q, e in zip(table.flowrate_grid, table.entries):
            ex0, ey0 = e.equilibrium.eccentricity0
            K, C = e.stiffness, e.damping
            w.writerow([repr(float(v)) for v in (
                q * ML_MIN_PER_M3_S,
                ex0 * 1.0e6, ey0 * 1.0e6,
                K[0, 0], K[0, 1], K[1, 0], K[1, 1],
                C[0, 0], C[0, 1], C[1, 0], C[1, 1],
                e.static_reaction[0], e.static_reaction[1],
            )])


def load_coefficient_table(path) -> CoefficientTable:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != _CSV_COLUMNS:
        raise ValueError(f"{path}: not a coefficient table (bad header)")
    grid = []
    entries = []
    for row in rows[1:]:
        v = [float(x) for x in row]
        q = v[0] / ML_MIN_PER_M3_S
        eq = EquilibriumPoint(
            eccentricity0=(v[1] * 1.0e-6, v[2] * 1.0e-6),
            flowrate=q, residual_force=0.0)
        entries.append(BearingCoefficients(
            stiffness=np.array([[v[3], v[4]], [v[5], v[6]]]),
            damping=np.array([[v[7], v[8]], [v[9], v[10]]]),
            equilibrium=eq,
            static_reaction=(v[11], v[12]),
        ))
        grid.append(q)
    return CoefficientTable(flowrate_grid=np.array(grid), entries=entries)
