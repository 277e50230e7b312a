"""Experiment laboratory: truth synthesis, noise, identification, scoring.

Ground truth is generated with the same linearized-coefficient plant the
filter uses (stepped exactly at the sample rate through the matrix
exponential), which makes the zero-noise identification a consistency
oracle.  Measurement noise is added to the displacement channels; velocity
channels are produced by numerically differentiating the noisy
displacements, as in a rig where only proximity probes exist.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import bearing as brg
from .bearing import ML_MIN_PER_M3_S, CoefficientTable, build_coefficient_table
from .config import Machine, ProfileSpec, ScenarioSpec, load_machine
from .ekf import FilterRun, NoiseConfig, run_filter
from .rotor import assemble_global
from .statespace import Plant

# the reference coefficient grid: 7 flowrates spanning 50%..150% of the
# flooded lubrication threshold
DEFAULT_GRID_ML_MIN = np.linspace(273.0, 819.0, 7)

MEASUREMENT_COLUMNS = ["time_s",
                       "disp_b1_x_m", "disp_b1_y_m", "disp_b2_x_m", "disp_b2_y_m",
                       "vel_b1_x_m_s", "vel_b1_y_m_s", "vel_b2_x_m_s", "vel_b2_y_m_s"]


def flowrate_profile(spec: ProfileSpec, nominal_flow):
    """Turn a profile spec (levels as fractions of nominal) into q(t) [m^3/s]."""
    if spec.kind == "constant":
        level = spec.value * nominal_flow
        return lambda t: np.full_like(np.asarray(t, dtype=float), level, dtype=float)
    if spec.kind == "sigmoid":
        return sigmoid_profile(spec.q_start * nominal_flow, spec.q_end * nominal_flow,
                               spec.t_center, spec.duration)
    if spec.kind == "piecewise":
        times = np.asarray(spec.times, dtype=float)
        values = np.asarray(spec.values, dtype=float) * nominal_flow
        return lambda t: np.interp(np.asarray(t, dtype=float), times, values)
    raise ValueError(f"unknown profile kind {spec.kind!r}")


def sigmoid_profile(q_start, q_end, t_center, duration):
    """Logistic transition hitting 1% / 99% of the swing at t_center -+ duration/2."""
    if duration <= 0:
        raise ValueError("transition duration must be positive")
    rate = 2.0 * math.log(99.0) / duration

    def q(t):
        t = np.asarray(t, dtype=float)
        arg = np.clip(-rate * (t - t_center), -60.0, 60.0)
        return q_start + (q_end - q_start) / (1.0 + np.exp(arg))

    return q


def build_tables(machine: Machine, q_grid=None, *, tol_rel=1.0e-3):
    """Coefficient tables for the two bearings (shared when loads are equal)."""
    if q_grid is None:
        q_grid = DEFAULT_GRID_ML_MIN / ML_MIN_PER_M3_S
    geom = machine.bearing_geometry
    mesh = machine.film_mesh()
    speed = machine.rotor.rotational_speed
    load1, load2 = machine.bearing_loads()
    t1 = build_coefficient_table(geom, machine.lubricant, mesh, speed, load1,
                                 q_grid, tol_rel=tol_rel)
    if np.allclose(load1, load2):
        return t1, t1
    t2 = build_coefficient_table(geom, machine.lubricant, mesh, speed, load2,
                                 q_grid, tol_rel=tol_rel)
    return t1, t2


def build_plant(machine: Machine, tables, *, sample_period=1.0e-3, mode="cached"):
    gm = assemble_global(machine.rotor)
    return Plant(
        gm, tables,
        bearing_nodes=machine.rotor.bearing_nodes,
        speed=machine.rotor.rotational_speed,
        unbalance_node=machine.rotor.unbalance_node,
        unbalance_moment=machine.rotor.unbalance_moment,
        unbalance_phase=machine.rotor.unbalance_phase,
        sample_period=sample_period,
        mode=mode,
    )


def perturbed_table(table: CoefficientTable, fraction) -> CoefficientTable:
    """Scale all stiffness/damping entries by ``1 + fraction``.

    Robustness study helper: simulating the truth with a perturbed table
    while identifying with the unperturbed one injects a controlled plant
    mismatch.  Goes beyond the reference experiments, which share one plant.
    """
    import dataclasses
    entries = [dataclasses.replace(
        e, stiffness=(1.0 + fraction) * e.stiffness,
        damping=(1.0 + fraction) * e.damping) for e in table.entries]
    return CoefficientTable(flowrate_grid=table.flowrate_grid.copy(),
                            entries=entries)


@dataclass
class TruthRecord:
    times: np.ndarray        # (N,) seconds, discard prefix removed
    channels: np.ndarray     # (N, 8) displacement + velocity, SI
    flowrates: np.ndarray    # (N, 2) true supply flowrates, m^3/s


def simulate_truth(plant: Plant, profiles, duration, *, discard=5.0) -> TruthRecord:
    """Clean bearing-node response under the given flowrate profiles.

    Starts on the static deflection at the initial flowrates so the discard
    prefix only has to absorb the unbalance transient; the retained samples
    span ``[discard, duration]`` at the plant sample period.
    """
    dt = plant.dt
    n_total = int(round(duration / dt))
    q1_fn, q2_fn = profiles
    x = np.zeros(plant.n_states)
    q0 = np.array([float(q1_fn(0.0)), float(q2_fn(0.0))])
    x[-2:] = q0
    # fixed point of the forcing-free map: (I - A_d) r* = b
    pt = plant.blended(*q0)
    n2 = plant.n_states - 2
    x[:n2] = np.linalg.solve(np.eye(n2) - pt.A_d, pt.b)

    keep_from = int(round(discard / dt))
    times = []
    rows = []
    flows = []
    for k in range(n_total + 1):
        t = k * dt
        if k >= keep_from:
            times.append(t)
            rows.append(plant.H @ x[:n2])
            flows.append(x[-2:].copy())
        x[-2] = q1_fn(t)
        x[-1] = q2_fn(t)
        x = plant.transition(x, t)
    return TruthRecord(times=np.array(times), channels=np.array(rows),
                       flowrates=np.array(flows))


def add_noise(series, sigma, seed):
    """Independent Gaussian noise, same shape as ``series``; deterministic."""
    series = np.asarray(series, dtype=float)
    if sigma < 0:
        raise ValueError("noise std must be non-negative")
    if sigma == 0.0:
        return series.copy()
    rng = np.random.default_rng(seed)
    return series + rng.normal(0.0, sigma, size=series.shape)


def estimate_velocities(displacements, dt):
    """Central-difference velocities (one-sided at the ends)."""
    x = np.asarray(displacements, dtype=float)
    if x.shape[0] < 3:
        raise ValueError("need at least 3 samples to differentiate")
    v = np.empty_like(x)
    v[1:-1] = (x[2:] - x[:-2]) / (2.0 * dt)
    v[0] = (x[1] - x[0]) / dt
    v[-1] = (x[-1] - x[-2]) / dt
    return v


def build_measurements(truth: TruthRecord, sigma, seed, dt, *,
                       velocity_noise="differentiate"):
    """Noisy 8-channel measurement set from a clean truth record.

    ``velocity_noise`` selects how the velocity channels are produced:
    ``differentiate`` (central differences of the noisy displacements, the
    rig-realistic default), ``independent`` (true velocities plus their own
    noise) or ``exact`` (true velocities untouched; the matched-measurement
    path used by the zero-noise consistency oracle).
    """
    disp = add_noise(truth.channels[:, :4], sigma, seed)
    if velocity_noise == "differentiate":
        vel = estimate_velocities(disp, dt)
    elif velocity_noise == "independent":
        vel = add_noise(truth.channels[:, 4:], sigma, seed + 1)
    elif velocity_noise == "exact":
        vel = truth.channels[:, 4:].copy()
    else:
        raise ValueError("velocity_noise must be differentiate|independent|exact")
    return np.hstack([disp, vel])


def error_stats(identified, truth):
    """Relative errors |q_hat - q| / q in percent, with (avg, std, max)."""
    identified = np.atleast_1d(np.asarray(identified, dtype=float))
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    rel = np.abs(identified - truth) / truth * 100.0
    return rel, float(rel.mean()), float(rel.std()), float(rel.max())


@dataclass
class RunResult:
    """One scenario: truth, estimates and scores."""

    scenario: ScenarioSpec | None
    truth: TruthRecord
    run: FilterRun
    errors_pct: np.ndarray          # (2,) converged-estimate error per bearing
    summary: dict


def identify(plant: Plant, machine: Machine, truth: TruthRecord, sigma, seed,
             *, velocity_noise="differentiate", noise: NoiseConfig | None = None,
             keep_states=False) -> FilterRun:
    """Run the filter on noisy measurements synthesized from ``truth``."""
    Z = build_measurements(truth, sigma, seed, plant.dt,
                           velocity_noise=velocity_noise)
    if noise is None:
        noise = NoiseConfig.defaults(plant.n, max(sigma, 1.0e-9),
                                     machine.nominal_flow,
                                     sample_period=plant.dt)
    return run_filter(plant, truth.times, Z, noise,
                      nominal_flow=machine.nominal_flow, keep_states=keep_states)


def run_constant_case(plant, machine, level1, level2, sigma, seed, *,
                      duration=10.0, discard=5.0, truth=None,
                      velocity_noise="differentiate", noise=None):
    """Simulate + identify one constant-flowrate combination.

    Returns (RunResult); ``truth`` may be passed in to reuse across seeds.
    """
    q_nom = machine.nominal_flow
    if truth is None:
        profiles = (flowrate_profile(ProfileSpec("constant", value=level1), q_nom),
                    flowrate_profile(ProfileSpec("constant", value=level2), q_nom))
        truth = simulate_truth(plant, profiles, duration, discard=discard)
    run = identify(plant, machine, truth, sigma, seed, velocity_noise=velocity_noise,
                   noise=noise)
    q_true = np.array([level1, level2]) * q_nom
    if run.converged:
        rel, avg, _, mx = error_stats(run.converged_value, q_true)
    else:
        rel = np.full(2, np.nan)
    summary = {
        "level1": level1, "level2": level2, "sigma": sigma, "seed": seed,
        "converged": run.converged,
        "q_true_ml_min": (q_true * ML_MIN_PER_M3_S).tolist(),
        "q_est_ml_min": (run.converged_value * ML_MIN_PER_M3_S).tolist()
        if run.converged else None,
        "errors_pct": rel.tolist(),
    }
    return RunResult(scenario=None, truth=truth, run=run, errors_pct=rel,
                     summary=summary)


def run_constant_grid(plant, machine, levels, sigma, seeds, *,
                      duration=10.0, discard=5.0, velocity_noise="differentiate",
                      noise=None, progress=None):
    """Error matrix over all (level1, level2) combinations and seeds.

    Truth is seed-independent and reused across seeds.  Returns a list of
    per-case summaries plus aggregate statistics over every converged cell
    and bearing.
    """
    levels = list(levels)
    if not levels:
        raise ValueError("empty level list")
    results = []
    all_errors = []
    q_nom = machine.nominal_flow
    for l1 in levels:
        for l2 in levels:
            profiles = (flowrate_profile(ProfileSpec("constant", value=l1), q_nom),
                        flowrate_profile(ProfileSpec("constant", value=l2), q_nom))
            truth = simulate_truth(plant, profiles, duration, discard=discard)
            for seed in seeds:
                res = run_constant_case(plant, machine, l1, l2, sigma, seed,
                                        truth=truth, velocity_noise=velocity_noise,
                                        noise=noise)
                results.append(res.summary)
                if res.run.converged:
                    all_errors.extend(res.errors_pct.tolist())
                if progress:
                    progress(res.summary)
    errs = np.asarray(all_errors)
    stats = {
        "n_runs": len(results),
        "n_converged": int(sum(r["converged"] for r in results)),
        "avg_error_pct": float(errs.mean()) if errs.size else math.nan,
        "std_error_pct": float(errs.std()) if errs.size else math.nan,
        "max_error_pct": float(errs.max()) if errs.size else math.nan,
    }
    return results, stats


DROP_DURATIONS = {"slow": 4.0, "intermediate": 1.0, "sudden": 0.1}


def drop_profiles(kind, steepness, *, t_center=10.0, low=0.75, high=1.25):
    """Per-bearing profile specs for the leak/clog scenarios.

    ``kind``: "equal" (both drop to ``low``), "bearing1"/"bearing2" (single
    line leak), "clog1"/"clog2" (one line drops, the other rises to
    ``high``).  ``steepness`` is one of DROP_DURATIONS or a duration in
    seconds.
    """
    duration = DROP_DURATIONS.get(steepness, None)
    if duration is None:
        duration = float(steepness)
    drop = ProfileSpec("sigmoid", q_start=1.0, q_end=low,
                       t_center=t_center, duration=duration)
    rise = ProfileSpec("sigmoid", q_start=1.0, q_end=high,
                       t_center=t_center, duration=duration)
    hold = ProfileSpec("constant", value=1.0)
    if kind == "equal":
        return drop, drop
    if kind == "bearing1":
        return drop, hold
    if kind == "bearing2":
        return hold, drop
    if kind == "clog1":
        return drop, rise
    if kind == "clog2":
        return rise, drop
    raise ValueError(f"unknown drop kind {kind!r}")


def run_drop_scenario(plant, machine, kind, steepness, sigma, seed, *,
                      duration=20.0, discard=5.0, t_center=10.0,
                      low=0.75, high=1.25):
    """One real-time tracking scenario with plateau scoring.

    Plateau errors compare the mean estimate over the two seconds before the
    transition starts (and the final two seconds) against the true levels.
    """
    specs = drop_profiles(kind, steepness, t_center=t_center, low=low, high=high)
    q_nom = machine.nominal_flow
    profiles = tuple(flowrate_profile(s, q_nom) for s in specs)
    truth = simulate_truth(plant, profiles, duration, discard=discard)
    run = identify(plant, machine, truth, sigma, seed)

    dur = DROP_DURATIONS.get(steepness, steepness if isinstance(steepness, float) else 1.0)
    pre_hi = t_center - dur / 2.0
    pre = (truth.times >= pre_hi - 2.0) & (truth.times <= pre_hi)
    post = truth.times >= truth.times[-1] - 2.0
    q_pre_true = truth.flowrates[pre].mean(axis=0)
    q_post_true = truth.flowrates[post].mean(axis=0)
    q_pre_est = run.flowrates[pre].mean(axis=0)
    q_post_est = run.flowrates[post].mean(axis=0)
    pre_err, _, _, _ = error_stats(q_pre_est, q_pre_true)
    post_err, _, _, _ = error_stats(q_post_est, q_post_true)

    summary = {
        "kind": kind, "steepness": steepness, "sigma": sigma, "seed": seed,
        "pre_error_pct": pre_err.tolist(),
        "post_error_pct": post_err.tolist(),
        "q_post_true_ml_min": (q_post_true * ML_MIN_PER_M3_S).tolist(),
        "q_post_est_ml_min": (q_post_est * ML_MIN_PER_M3_S).tolist(),
    }
    return RunResult(scenario=None, truth=truth, run=run,
                     errors_pct=post_err, summary=summary)


def attributed_bearing(result: RunResult, *, t_center=10.0):
    """Which bearing the estimator says changed the most across the drop."""
    truth = result.truth
    run = result.run
    pre = truth.times <= t_center - 1.0
    post = truth.times >= truth.times[-1] - 2.0
    delta = np.abs(run.flowrates[post].mean(axis=0) - run.flowrates[pre].mean(axis=0))
    return int(np.argmax(delta))


def sensitivity_sweep(machine: Machine, plant: Plant, levels, *,
                      reference_flow=None, orbit_seconds=1.0,
                      settle_seconds=1.0):
    """Equilibrium eccentricity and orbit-amplitude variation per flow level.

    Fresh film equilibria are solved per level and bearing (no table
    interpolation), mirroring how the reference orbit study was built.
    Returns a dict of arrays indexed by the level list.
    """
    ref = reference_flow if reference_flow is not None else machine.nominal_flow
    geom = machine.bearing_geometry
    mesh = machine.film_mesh()
    speed = machine.rotor.rotational_speed
    loads = machine.bearing_loads()
    levels = list(levels)

    ecc = np.zeros((len(levels), 2))
    for b, load in enumerate(loads):
        guess = None
        for i, lv in enumerate(levels):
            eq, _ = brg.find_equilibrium(geom, machine.lubricant, mesh, speed,
                                         load, lv * ref, initial_guess=guess)
            guess = np.asarray(eq.eccentricity0)
            ecc[i, b] = np.linalg.norm(guess)

    amp_x = np.zeros((len(levels), 2))
    amp_y = np.zeros((len(levels), 2))
    q_nom = machine.nominal_flow
    for i, lv in enumerate(levels):
        # per-bearing level: sweep both together unless caller slices later
        profiles = (flowrate_profile(ProfileSpec("constant", value=lv), q_nom),
                    flowrate_profile(ProfileSpec("constant", value=lv), q_nom))
        truth = simulate_truth(plant, profiles, settle_seconds + orbit_seconds,
                               discard=settle_seconds)
        ch = truth.channels
        for b in range(2):
            x = ch[:, 2 * b]
            y = ch[:, 2 * b + 1]
            amp_x[i, b] = 0.5 * (x.max() - x.min())
            amp_y[i, b] = 0.5 * (y.max() - y.min())

    return {
        "levels": np.asarray(levels, dtype=float),
        "eccentricity_m": ecc,
        "amplitude_x_m": amp_x,
        "amplitude_y_m": amp_y,
        "ecc_increment_um": np.abs(np.diff(ecc, axis=0)) * 1.0e6,
        "amp_x_variation_um": np.diff(amp_x, axis=0) * 1.0e6,
        "amp_y_variation_um": np.diff(amp_y, axis=0) * 1.0e6,
    }


def save_measurements(path, times, channels):
    """Measurement CSV: time plus the 8 channels in the documented order."""
    channels = np.asarray(channels)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(MEASUREMENT_COLUMNS)
        for t, row in zip(times, channels):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def load_measurements(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValueError(f"{path}: empty measurement file")
    if rows[0] != MEASUREMENT_COLUMNS:
        missing = set(MEASUREMENT_COLUMNS) - set(rows[0])
        raise ValueError(f"{path}: bad measurement header, missing columns "
                         f"{sorted(missing) if missing else rows[0]}")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]])
    except ValueError as exc:
        for i, row in enumerate(rows[1:], start=2):
            try:
                [float(v) for v in row]
            except ValueError:
                raise ValueError(f"{path}: unparseable value at row {i}") from exc
        raise
    if data.ndim != 2 or data.shape[1] != 9:
        raise ValueError(f"{path}: expected 9 columns, got {data.shape}")
    return data[:, 0], data[:, 1:]
