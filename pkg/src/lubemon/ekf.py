"""Extended Kalman filter estimating shaft motion plus oil supply flowrates.

The augmented state ``[r; r'; q1; q2]`` evolves through the plant transition;
the two flowrates are random-walk states observed only through their effect
on the bearing coefficients.  The Jacobian is exact for the structural block
(the transition is linear in ``[r; r']``) and finite-differenced along the
two flowrate directions.  The covariance update uses the Joseph form,
implemented with rank-8 products because the output matrix is a selection.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .bearing import ML_MIN_PER_M3_S

FLOWRATE_JACOBIAN_STEP = 1.0e-6 / 60.0   # 1 ml/min, m^3/s


class FilterDivergenceError(Exception):
    """State or covariance left the numerically meaningful range."""

    def __init__(self, message, step, history=None):
        super().__init__(f"{message} (step {step})")
        self.step = step
        self.history = history


@dataclass
class NoiseConfig:
    """Diagonal process/measurement covariances and the initial covariance."""

    Q: np.ndarray          # (2n+2,) process variances
    R: np.ndarray          # (8,) measurement variances
    P0: np.ndarray         # (2n+2,) initial state variances

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.P0 = np.asarray(self.P0, dtype=float)
        if np.any(self.Q < 0) or np.any(self.P0 < 0):
            raise ValueError("variances must be non-negative")
        if np.any(self.R <= 0):
            raise ValueError("measurement variances must be positive")

    @classmethod
    def defaults(cls, n_dofs, sigma_v, nominal_flow, *, sample_period=1.0e-3,
                 corrected_velocity_r=False):
        """Published tuning: process stds 10 um / 10 um/s / 0.1 ml/min,
        measurement variance ``sigma_v**2`` on all eight channels.

        The structural-state noise values are continuous-time intensities
        (per root-second): the per-step variance is scaled by the sample
        period.  The flowrate value is the per-sample increment of the
        random walk.  Reading the structural values per-step instead makes
        the filter forget the plant within one sample and slows flowrate
        tracking by an order of magnitude.

        ``corrected_velocity_r=True`` instead assigns the velocity channels
        the variance that numerical differentiation of noisy displacements
        actually produces, ``sigma_v**2 / (2 dt**2)``.
        """
        q = np.concatenate([
            np.full(n_dofs, (10.0e-6) ** 2 * sample_period),
            np.full(n_dofs, (10.0e-6) ** 2 * sample_period),
            np.full(2, (0.1e-6 / 60.0) ** 2),
        ])
        r = np.full(8, float(sigma_v) ** 2)
        if corrected_velocity_r:
            r[4:] = sigma_v ** 2 / (2.0 * sample_period ** 2)
        p0 = np.concatenate([
            np.full(n_dofs, (100.0e-6) ** 2),
            np.full(n_dofs, (10.0e-3) ** 2),
            np.full(2, (0.1 * nominal_flow) ** 2),
        ])
        return cls(Q=q, R=r, P0=p0)


@dataclass
class FilterState:
    estimate: np.ndarray     # (2n+2,)
    covariance: np.ndarray   # (2n+2, 2n+2)
    step: int = 0


@dataclass
class StepDiagnostics:
    innovation: np.ndarray
    innovation_covariance: np.ndarray
    gain_norm: float
    flowrates: np.ndarray       # (2,)
    flowrate_std: np.ndarray    # (2,)
    nis: float                  # innovation^T S^-1 innovation


def jacobian(plant, state, t, dq=FLOWRATE_JACOBIAN_STEP):
    """Transition Jacobian at ``state``: exact linear block, FD flow columns.

    The linear block equals the discretized transition matrix at the current
    flowrates (the transition is linear in ``[r; r']``); the two flowrate
    columns are central finite differences of the transition, one-sided at
    the table edges where the interpolant clamps.
    """
    x = np.asarray(state, dtype=float)
    n2 = plant.n_states - 2
    pt = plant.blended(x[-2], x[-1])
    J = np.zeros((plant.n_states, plant.n_states))
    J[:n2, :n2] = pt.A_d
    J[n2:, n2:] = np.eye(2)
    J[:n2, n2:] = _flow_columns(plant, x, t, dq)
    return J


def _flow_columns(plant, x, t, dq=FLOWRATE_JACOBIAN_STEP, flow=None):
    """Finite-difference sensitivity of the [r; r'] block to (q1, q2)."""
    n2 = plant.n_states - 2
    q1, q2 = x[-2], x[-1]
    if flow is None:
        flow = plant.step_pieces(x, t)
    D = np.zeros((n2, 2))
    lo1, hi1 = plant.tables[0].flowrate_grid[[0, -1]]
    lo2, hi2 = plant.tables[1].flowrate_grid[[0, -1]]
    for col, (q, lo, hi) in enumerate(((q1, lo1, hi1), (q2, lo2, hi2))):
        qp = min(q + dq, hi)
        qm = max(q - dq, lo)
        if qp <= qm:
            continue
        if col == 0:
            df = flow(qp, q2) - flow(qm, q2)
        else:
            df = flow(q1, qp) - flow(q1, qm)
        D[:, col] = df / (qp - qm)
    return D


def predict(fstate: FilterState, t, plant, Q) -> FilterState:
    """A-priori state and covariance (Joseph-style block propagation).

    The Jacobian is never assembled: the structural block is the transition
    matrix (exact) and the two flowrate columns enter through rank-2 terms.
    """
    x = fstate.estimate
    if not math.isfinite(float(x.sum())):
        raise FilterDivergenceError("non-finite state estimate", fstate.step)
    n = plant.n_states
    n2 = n - 2
    flow = plant.step_pieces(x, t)
    x_pred = np.empty_like(x)
    x_pred[:n2] = flow(x[-2], x[-1])
    x_pred[n2:] = x[n2:]

    # J = [[A, D], [0, I]]: propagate with the stacked top block J1 = [A D]
    # so J P J^T = [[J1 P J1^T, (J1 P)[:, -2:]], [sym, P22]]
    P = fstate.covariance
    J1 = np.empty((n2, n))
    J1[:, :n2] = plant.blended(x[-2], x[-1]).A_d
    J1[:, n2:] = _flow_columns(plant, x, t, flow=flow)

    T = J1 @ P                   # (n2, n)
    Pn = np.empty_like(P)
    Pn[:n2, :n2] = T @ J1.T
    Pn[:n2, n2:] = T[:, n2:]
    Pn[n2:, :n2] = T[:, n2:].T
    Pn[n2:, n2:] = P[n2:, n2:]
    # the blocks are symmetric by construction up to rounding; the posterior
    # update enforces exact symmetry once per cycle
    Pn.flat[:: n + 1] += Q
    return FilterState(estimate=x_pred, covariance=Pn, step=fstate.step + 1)


def update(fstate: FilterState, z, plant, R):
    """A-posteriori state from one measurement vector (Joseph form)."""
    z = np.asarray(z, dtype=float)
    rows = plant.measured_rows
    if z.shape != (len(rows),) or not np.all(np.isfinite(z)):
        raise ValueError("measurement must be a finite vector of length 8")
    x = fstate.estimate
    P = fstate.covariance

    innov = z - x[rows]
    Ph = P[:, rows]                           # P H^T (column gather)
    S = Ph[rows, :].copy()
    m = S.shape[0]
    S.flat[:: m + 1] += R
    try:
        cho = cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(S)
        raise FilterDivergenceError(
            f"innovation covariance not invertible (cond {cond:.3e})",
            fstate.step) from exc
    K = cho_solve(cho, Ph.T, check_finite=False).T    # P H^T S^-1
    x_post = x + K @ innov

    # Joseph: (I - K H) P (I - K H)^T + K R K^T with H a row selection
    P_post = P - K @ P[rows, :]
    P_post -= P_post[:, rows] @ K.T
    P_post += (K * R) @ K.T
    P_post += P_post.T.copy()
    P_post *= 0.5

    nis = float(innov @ cho_solve(cho, innov, check_finite=False))
    n2 = plant.n_states - 2
    diag = StepDiagnostics(
        innovation=innov,
        innovation_covariance=S,
        gain_norm=float(np.linalg.norm(K)),
        flowrates=x_post[n2:].copy(),
        flowrate_std=np.sqrt(np.maximum(np.diag(P_post)[n2:], 0.0)),
        nis=nis,
    )
    return FilterState(estimate=x_post, covariance=P_post, step=fstate.step), diag


def detect_convergence(flowrate_trace, window, threshold):
    """First step at which both flowrates settle, plus the settled value.

    ``flowrate_trace`` is (N, 2); convergence is declared at the earliest
    step where the standard deviation of each flowrate over the trailing
    ``window`` samples is below ``threshold`` (absolute, m^3/s).  Returns
    ``(converged, first_index, mean_after)`` with the mean taken over
    everything from the first converged step to the end of the trace.
    """
    q = np.asarray(flowrate_trace, dtype=float)
    if q.ndim != 2 or q.shape[0] == 0:
        raise ValueError("flowrate trace must be a non-empty (N, 2) array")
    n = q.shape[0]
    window = int(window)
    if n < window or window < 2:
        return False, None, None
    # rolling std via cumulative sums
    c1 = np.cumsum(np.vstack([np.zeros((1, 2)), q]), axis=0)
    c2 = np.cumsum(np.vstack([np.zeros((1, 2)), q ** 2]), axis=0)
    s1 = c1[window:] - c1[:-window]
    s2 = c2[window:] - c2[:-window]
    var = np.maximum(s2 / window - (s1 / window) ** 2, 0.0)
    ok = np.all(np.sqrt(var) < threshold, axis=1)
    hits = np.nonzero(ok)[0]
    if hits.size == 0:
        return False, None, None
    first = int(hits[0]) + window - 1
    return True, first, q[first:].mean(axis=0)


@dataclass
class FilterRun:
    """Per-step estimate history of one identification run."""

    times: np.ndarray
    flowrates: np.ndarray        # (N, 2) a-posteriori
    flowrate_std: np.ndarray     # (N, 2)
    innovation_norm: np.ndarray  # (N,)
    nis: np.ndarray              # (N,)
    converged: bool
    converged_index: int | None
    converged_value: np.ndarray | None   # (2,)
    final_state: FilterState | None = None
    states: np.ndarray | None = None     # optional (N, 2n+2)

    def summary(self):
        if self.converged:
            q = self.converged_value * ML_MIN_PER_M3_S
            return (f"converged at t={self.times[self.converged_index]:.3f}s: "
                    f"q1={q[0]:.1f} ml/min, q2={q[1]:.1f} ml/min")
        return "not converged"


def run_filter(plant, times, measurements, noise: NoiseConfig,
               initial_state=None, *, convergence_window=1.0,
               convergence_threshold=None, nominal_flow=None,
               keep_states=False, psd_check_every=500) -> FilterRun:
    """Filter a uniformly sampled measurement stream.

    ``times`` (N,) and ``measurements`` (N, 8) must share the plant's sample
    period.  The default initial estimate is zero motion with both flowrates
    at ``nominal_flow``; the convergence threshold defaults to 0.5% of the
    nominal flowrate over a one-second trailing window.
    """
    times = np.asarray(times, dtype=float)
    Z = np.asarray(measurements, dtype=float)
    n_steps = times.shape[0]
    ns = plant.n_states
    if Z.shape != (n_steps, 8):
        raise ValueError(f"measurements must be (N, 8), got {Z.shape}")
    if n_steps >= 2:
        dts = np.diff(times)
        if not np.allclose(dts, plant.dt, rtol=1.0e-6, atol=1.0e-9):
            raise ValueError("measurement sample period does not match the plant")

    if nominal_flow is None:
        nominal_flow = float(np.mean(
            [t.flowrate_grid.mean() for t in plant.tables]))
    if convergence_threshold is None:
        convergence_threshold = 0.005 * nominal_flow

    if initial_state is None:
        x0 = np.zeros(ns)
        x0[-2:] = nominal_flow
    else:
        x0 = np.asarray(initial_state, dtype=float).copy()
    fs = FilterState(estimate=x0, covariance=np.diag(noise.P0.copy()), step=0)

    q_hist = np.empty((n_steps, 2))
    std_hist = np.empty((n_steps, 2))
    innov_hist = np.empty(n_steps)
    nis_hist = np.empty(n_steps)
    states = np.empty((n_steps, ns)) if keep_states else None

    if n_steps == 0:
        return FilterRun(times=times, flowrates=q_hist, flowrate_std=std_hist,
                         innovation_norm=innov_hist, nis=nis_hist,
                         converged=False, converged_index=None,
                         converged_value=None, final_state=fs, states=states)

    for k in range(n_steps):
        t_prev = times[k] - plant.dt
        try:
            fs = predict(fs, t_prev, plant, noise.Q)
            fs, diag = update(fs, Z[k], plant, noise.R)
        except FilterDivergenceError as exc:
            exc.history = FilterRun(
                times=times[:k], flowrates=q_hist[:k], flowrate_std=std_hist[:k],
                innovation_norm=innov_hist[:k], nis=nis_hist[:k],
                converged=False, converged_index=None, converged_value=None)
            raise
        q_hist[k] = diag.flowrates
        std_hist[k] = diag.flowrate_std
        innov_hist[k] = float(np.linalg.norm(diag.innovation))
        nis_hist[k] = diag.nis
        if keep_states:
            states[k] = fs.estimate
        if psd_check_every and (k + 1) % psd_check_every == 0:
            _assert_psd(fs.covariance, k)
    _assert_psd(fs.covariance, n_steps - 1)

    window = max(int(round(convergence_window / plant.dt)), 2)
    converged, idx, value = detect_convergence(q_hist, window, convergence_threshold)
    return FilterRun(times=times, flowrates=q_hist, flowrate_std=std_hist,
                     innovation_norm=innov_hist, nis=nis_hist,
                     converged=converged, converged_index=idx,
                     converged_value=value, final_state=fs, states=states)


def _assert_psd(P, step):
    w = np.linalg.eigvalsh(0.5 * (P + P.T))
    if w.min() < -1.0e-9 * max(np.trace(P), 1.0e-300):
        raise FilterDivergenceError(
            f"covariance lost positive semidefiniteness (min eig {w.min():.3e})",
            step)


_HISTORY_COLUMNS = ["time_s", "q1_ml_min", "q2_ml_min", "q1_std", "q2_std",
                    "innovation_norm", "converged_flag"]


def save_history(run: FilterRun, path):
    """Estimate history CSV in the documented schema."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(_HISTORY_COLUMNS)
        for k in range(run.times.shape[0]):
            conv = int(run.converged and run.converged_index is not None
                       and k >= run.converged_index)
            w.writerow([
                repr(float(run.times[k])),
                repr(float(run.flowrates[k, 0] * ML_MIN_PER_M3_S)),
                repr(float(run.flowrates[k, 1] * ML_MIN_PER_M3_S)),
                repr(float(run.flowrate_std[k, 0] * ML_MIN_PER_M3_S)),
                repr(float(run.flowrate_std[k, 1] * ML_MIN_PER_M3_S)),
                repr(float(run.innovation_norm[k])),
                conv,
            ])


def load_history(path):
    """Read back an estimate-history CSV as a dict of arrays (SI units)."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != _HISTORY_COLUMNS:
        raise ValueError(f"{path}: not an estimate history (bad header)")
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    if data.size == 0:
        data = data.reshape(0, len(_HISTORY_COLUMNS))
    return {
        "time_s": data[:, 0],
        "flowrates": data[:, 1:3] / ML_MIN_PER_M3_S,
        "flowrate_std": data[:, 3:5] / ML_MIN_PER_M3_S,
        "innovation_norm": data[:, 5],
        "converged_flag": data[:, 6].astype(int),
    }
