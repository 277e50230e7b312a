"""State-space plant of the rotor on flowrate-dependent bearings.

The second-order model is rewritten in first-order form

    s' = A s + B u,   A = [[0, I], [-M^-1 K, -M^-1 (C + Omega G)]],
                      B = [[0], [M^-1]]

with the linearized bearing stiffness/damping folded into K and C at the
bearing-node translational dofs, so only state-independent forces remain in
``u``: gravity, the rotating unbalance and the constant bearing terms
``F0(q) + K(q) e0(q)`` that anchor the linearization to the flowrate-dependent
equilibrium.  Discretization is the matrix-exponential zero-order hold; the
sinusoidal unbalance input is carried exactly through the exponential by
augmenting it with its two-state harmonic generator, so sampling introduces
no phase or amplitude error at the rotation frequency.

The flowrate-augmented transition adds the two supply flowrates as
random-walk states: ``x = [r; r'; q1; q2]``.  ``Plant`` evaluates it either
from a precomputed grid of discretized models (bilinear interpolation in
(q1, q2), exact at the table nodes) or by recomputing the exponential
whenever the flowrates move (``mode="exact"``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .bearing import CoefficientTable, interpolate_coefficients
from .rotor import DOF_PER_NODE, GlobalMatrices


@dataclass
class ContinuousStateSpace:
    A: np.ndarray
    B: np.ndarray
    H: np.ndarray | None = None


@dataclass
class DiscreteStateSpace:
    A_d: np.ndarray
    B_d: np.ndarray
    sample_period: float


def fold_bearing_coefficients(gm: GlobalMatrices, speed, coeffs_pair, bearing_nodes):
    """Global K and C (including Omega G) with the bearing terms added."""
    K = gm.K.copy()
    C = gm.C_struct + speed * gm.G
    for node, co in zip(bearing_nodes, coeffs_pair):
        sl = slice(DOF_PER_NODE * node, DOF_PER_NODE * node + 2)
        K[sl, sl] += co.stiffness
        C[sl, sl] += co.damping
    return K, C


def build_continuous(gm: GlobalMatrices, speed, coeffs_pair, bearing_nodes,
                     H=None) -> ContinuousStateSpace:
    """First-order state matrices with bearings folded in."""
    n = gm.M.shape[0]
    K, C = fold_bearing_coefficients(gm, speed, coeffs_pair, bearing_nodes)
    Minv = np.linalg.inv(gm.M)
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -Minv @ K
    A[n:, n:] = -Minv @ C
    B = np.zeros((2 * n, n))
    B[n:, :] = Minv
    return ContinuousStateSpace(A=A, B=B, H=H)


def discretize(A, B, dt) -> DiscreteStateSpace:
    """Zero-order-hold discretization through the block matrix exponential."""
    if dt <= 0:
        raise ValueError("sample period must be positive")
    n, m = B.shape
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = A
    blk[:n, n:] = B
    E = expm(blk * dt)
    if not np.all(np.isfinite(E)):
        raise FloatingPointError("matrix exponential overflowed")
    return DiscreteStateSpace(A_d=E[:n, :n], B_d=E[:n, n:], sample_period=dt)


def augment(dss: DiscreteStateSpace, H):
    """Append the two flowrate random-walk states.

    Returns (A_a, B_a, H_a): block-diagonal transition [A_d, I2], input
    [B_d; 0] and output [H, 0].
    """
    n = dss.A_d.shape[0]
    m = dss.B_d.shape[1]
    A_a = np.zeros((n + 2, n + 2))
    A_a[:n, :n] = dss.A_d
    A_a[n:, n:] = np.eye(2)
    B_a = np.vstack([dss.B_d, np.zeros((2, m))])
    H_a = np.hstack([H, np.zeros((H.shape[0], 2))])
    return A_a, B_a, H_a


def measurement_matrix(n_nodes, bearing_nodes):
    """Selection of the 8 measured channels from the state ``[r; r']``.

    Row order: displacements X/Y at bearing 1 then bearing 2, followed by
    the velocities of the same dofs.
    """
    n = DOF_PER_NODE * n_nodes
    for node in bearing_nodes:
        if not 0 <= node < n_nodes:
            raise ValueError(f"bearing node {node} out of range")
    H = np.zeros((8, 2 * n))
    for k, node in enumerate(bearing_nodes):
        H[2 * k, DOF_PER_NODE * node] = 1.0          # displacement X
        H[2 * k + 1, DOF_PER_NODE * node + 1] = 1.0  # displacement Y
        H[4 + 2 * k, n + DOF_PER_NODE * node] = 1.0      # velocity X
        H[4 + 2 * k + 1, n + DOF_PER_NODE * node + 1] = 1.0
    return H


def least_damped_mode(A, f_min=5.0, f_max=500.0):
    """(frequency Hz, damping ratio) of the slowest-decaying oscillatory mode.

    "Least damped" means largest real part (the mode that would go unstable
    first), not smallest damping ratio.
    """
    ev = np.linalg.eigvals(A)
    lam = ev[(ev.imag > 2 * math.pi * f_min) & (ev.imag < 2 * math.pi * f_max)]
    if lam.size == 0:
        raise ValueError("no oscillatory modes in the frequency window")
    i = int(np.argmax(lam.real))
    return float(lam[i].imag / (2 * math.pi)), float(-lam[i].real / abs(lam[i]))


class _DiscretizedPoint:
    """One (q1, q2) operating point: exact-harmonic ZOH pieces."""

    __slots__ = ("A_d", "Phi", "b")

    def __init__(self, A_d, Phi, b):
        self.A_d = A_d
        self.Phi = Phi
        self.b = b


class Plant:
    """Flowrate-augmented discrete plant shared by simulator and filter.

    State layout ``[r; r'; q1; q2]`` (length ``2n + 2``).  The transition
    reads the flowrates from the state, fetches the discretized model for
    them and advances one sample period; the flowrate states are carried
    unchanged (random walk).
    """

    def __init__(self, gm: GlobalMatrices, tables: tuple[CoefficientTable, CoefficientTable],
                 bearing_nodes, speed, unbalance_node, unbalance_moment,
                 unbalance_phase=0.0, sample_period=1.0e-3, mode="cached",
                 exact_threshold=0.5e-6 / 60.0):
        if mode not in ("cached", "exact"):
            raise ValueError("mode must be 'cached' or 'exact'")
        self.gm = gm
        self.tables = tables
        self.bearing_nodes = tuple(bearing_nodes)
        self.speed = float(speed)
        self.unbalance_node = unbalance_node
        self.unbalance_moment = float(unbalance_moment)
        self.unbalance_phase = float(unbalance_phase)
        self.dt = float(sample_period)
        self.mode = mode
        self.exact_threshold = float(exact_threshold)

        self.n = gm.M.shape[0]
        self.n_states = 2 * self.n + 2
        self.H = measurement_matrix(gm.n_nodes, self.bearing_nodes)
        self.H_a = np.hstack([self.H, np.zeros((8, 2))])
        self.measured_rows = [int(np.argmax(row)) for row in self.H_a]

        self._Minv = np.linalg.inv(gm.M)
        self._grid1 = tables[0].flowrate_grid
        self._grid2 = tables[1].flowrate_grid
        self._cache: dict[tuple, _DiscretizedPoint] = {}
        self._stacks: dict[tuple, tuple] = {}   # per-cell contiguous stacks
        self._blend_key = None
        self._blend = None
        self._exact_q = None
        self._exact_pt = None
        if mode == "cached":
            for i, qa in enumerate(self._grid1):
                for j, qb in enumerate(self._grid2):
                    self._cache[(i, j)] = self._discretize_pair(qa, qb)

    # -- model building ----------------------------------------------------

    def input_vector_dc(self, co_pair):
        """Constant force vector: gravity plus bearing anchor terms."""
        u = self.gm.weight.copy()
        for node, co in zip(self.bearing_nodes, co_pair):
            sl = slice(DOF_PER_NODE * node, DOF_PER_NODE * node + 2)
            e0 = np.asarray(co.equilibrium.eccentricity0)
            u[sl] += np.asarray(co.static_reaction) + co.stiffness @ e0
        return u

    def _unbalance_columns(self):
        W = np.zeros((self.n, 2))
        amp = self.unbalance_moment * self.speed ** 2
        W[DOF_PER_NODE * self.unbalance_node, 0] = amp
        W[DOF_PER_NODE * self.unbalance_node + 1, 1] = amp
        return W

    def _discretize_pair(self, q1, q2) -> _DiscretizedPoint:
        co_pair = (interpolate_coefficients(self.tables[0], q1),
                   interpolate_coefficients(self.tables[1], q2))
        css = build_continuous(self.gm, self.speed, co_pair, self.bearing_nodes)
        n2 = 2 * self.n
        W = self._unbalance_columns()
        u_dc = self.input_vector_dc(co_pair)
        # harmonic generator: w = (cos, sin)(Omega t + phase); w' = S w
        S = np.array([[0.0, -self.speed], [self.speed, 0.0]])
        blk = np.zeros((n2 + 3, n2 + 3))
        blk[:n2, :n2] = css.A
        blk[:n2, n2:n2 + 2] = css.B @ W
        blk[:n2, n2 + 2] = css.B @ u_dc
        blk[n2:n2 + 2, n2:n2 + 2] = S
        E = expm(blk * self.dt)
        return _DiscretizedPoint(
            A_d=np.ascontiguousarray(E[:n2, :n2]),
            Phi=np.ascontiguousarray(E[:n2, n2:n2 + 2]),
            b=np.ascontiguousarray(E[:n2, n2 + 2]),
        )

    # -- interpolation machinery --------------------------------------------

    def _cell(self, q, grid):
        """(index, weight, clamped) of the linear interpolation cell."""
        lo = grid[0]
        hi = grid[-1]
        clamped = q < lo or q > hi
        if grid.size == 1:
            return 0, 0.0, clamped
        qc = lo if q < lo else (hi if q > hi else q)
        k = int(np.searchsorted(grid, qc, side="right") - 1)
        if k < 0:
            k = 0
        elif k > grid.size - 2:
            k = grid.size - 2
        t = (qc - grid[k]) / (grid[k + 1] - grid[k])
        return k, t, clamped

    def corner_weights(self, q1, q2):
        """Bilinear corners and weights for (q1, q2); flags clamping."""
        i, tx, c1 = self._cell(q1, self._grid1)
        j, ty, c2 = self._cell(q2, self._grid2)
        if self._grid1.size == 1 and self._grid2.size == 1:
            corners = [((i, j), 1.0)]
        elif self._grid1.size == 1:
            corners = [((i, j), 1.0 - ty), ((i, j + 1), ty)]
        elif self._grid2.size == 1:
            corners = [((i, j), 1.0 - tx), ((i + 1, j), tx)]
        else:
            corners = [((i, j), (1 - tx) * (1 - ty)),
                       ((i + 1, j), tx * (1 - ty)),
                       ((i, j + 1), (1 - tx) * ty),
                       ((i + 1, j + 1), tx * ty)]
        return corners, (c1 or c2)

    def _point(self, key):
        pt = self._cache.get(key)
        if pt is None:
            pt = self._discretize_pair(self._grid1[key[0]], self._grid2[key[1]])
            self._cache[key] = pt
        return pt

    def _cell_stack(self, corner_keys):
        """Contiguous stacks of the corner matrices for one interpolation cell."""
        stack = self._stacks.get(corner_keys)
        if stack is None:
            pts = [self._point(k) for k in corner_keys]
            stack = (np.ascontiguousarray([p.A_d for p in pts]),
                     np.ascontiguousarray([p.Phi for p in pts]),
                     np.ascontiguousarray([p.b for p in pts]))
            self._stacks[corner_keys] = stack
        return stack

    def blended(self, q1, q2) -> _DiscretizedPoint:
        """Discretized model at (q1, q2) for the configured mode."""
        if self.mode == "exact":
            if (self._exact_q is None
                    or abs(q1 - self._exact_q[0]) > self.exact_threshold
                    or abs(q2 - self._exact_q[1]) > self.exact_threshold):
                g1 = float(min(max(q1, self._grid1[0]), self._grid1[-1]))
                g2 = float(min(max(q2, self._grid2[0]), self._grid2[-1]))
                self._exact_pt = self._discretize_pair(g1, g2)
                self._exact_q = (q1, q2)
            return self._exact_pt

        corners, _ = self.corner_weights(q1, q2)
        key = tuple(corners)
        if key == self._blend_key:
            return self._blend
        keys = tuple(k for k, _ in corners)
        w = np.array([wgt for _, wgt in corners])
        A_s, Phi_s, b_s = self._cell_stack(keys)
        pt = _DiscretizedPoint(
            A_d=np.tensordot(w, A_s, axes=1),
            Phi=np.tensordot(w, Phi_s, axes=1),
            b=w @ b_s,
        )
        self._blend_key = key
        self._blend = pt
        return pt

    # -- stepping -----------------------------------------------------------

    def harmonic(self, t):
        arg = self.speed * t + self.unbalance_phase
        return np.array([math.cos(arg), math.sin(arg)])

    def transition(self, state, t):
        """Advance the augmented state one sample period from time ``t``."""
        x = np.asarray(state, dtype=float)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite state entering transition")
        q1, q2 = x[-2], x[-1]
        pt = self.blended(q1, q2)
        out = np.empty_like(x)
        out[:-2] = pt.A_d @ x[:-2] + pt.Phi @ self.harmonic(t) + pt.b
        out[-2:] = x[-2:]
        return out

    def step_pieces(self, state, t):
        """Precompute per-corner products so nearby flowrates step cheaply.

        Returns a closure ``f(q1, q2) -> next [r; r'] block`` that shares the
        corner matrix-vector products; used by the filter Jacobian, which
        evaluates the transition at small flowrate perturbations.
        """
        x = np.asarray(state, dtype=float)
        w_h = self.harmonic(t)
        if self.mode == "exact":
            def flow(q1, q2):
                pt = self.blended(q1, q2)
                return pt.A_d @ x[:-2] + pt.Phi @ w_h + pt.b
            return flow

        cells = {}
        n2 = self.n_states - 2
        xr = np.ascontiguousarray(x[:-2])
        grid1 = self._grid1
        grid2 = self._grid2

        def cell_products(keys):
            prods = cells.get(keys)
            if prods is None:
                A_s, Phi_s, b_s = self._cell_stack(keys)
                c = A_s.shape[0]
                prods = A_s.reshape(c * n2, n2) @ xr
                prods = prods.reshape(c, n2)
                prods += Phi_s @ w_h
                prods += b_s
                cells[keys] = prods
            return prods

        if grid1.size > 1 and grid2.size > 1:
            # fast path: both flowrates almost always stay inside one
            # interpolation cell across the Jacobian perturbations
            i0, _, _ = self._cell(x[-2], grid1)
            j0, _, _ = self._cell(x[-1], grid2)
            keys0 = ((i0, j0), (i0 + 1, j0), (i0, j0 + 1), (i0 + 1, j0 + 1))
            lo1, w1 = grid1[i0], grid1[i0 + 1] - grid1[i0]
            lo2, w2 = grid2[j0], grid2[j0 + 1] - grid2[j0]
            hi1 = grid1[i0 + 1]
            hi2 = grid2[j0 + 1]

            def flow(q1, q2):
                if lo1 <= q1 <= hi1 and lo2 <= q2 <= hi2:
                    tx = (q1 - lo1) / w1
                    ty = (q2 - lo2) / w2
                    w = np.array([(1 - tx) * (1 - ty), tx * (1 - ty),
                                  (1 - tx) * ty, tx * ty])
                    return w @ cell_products(keys0)
                corners, _ = self.corner_weights(q1, q2)
                keys = tuple(k for k, _ in corners)
                w = np.array([wgt for _, wgt in corners])
                return w @ cell_products(keys)

            return flow

        def flow(q1, q2):
            corners, _ = self.corner_weights(q1, q2)
            keys = tuple(k for k, _ in corners)
            w = np.array([wgt for _, wgt in corners])
            return w @ cell_products(keys)

        return flow

    def is_clamped(self, q1, q2):
        _, clamped = self.corner_weights(q1, q2)
        return clamped
