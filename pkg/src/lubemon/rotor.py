"""Lateral rotor dynamics by finite elements.

Two-node Timoshenko beam elements with four degrees of freedom per node:
``V`` (translation along X), ``W`` (translation along Y), ``B`` (rotation
about X) and ``Gam`` (rotation about Y), node-major ordering.  Rigid discs
contribute lumped inertia and gyroscopic terms at their node.  Assembly
produces the mass, structural damping, gyroscopic and stiffness matrices of

    M r'' + (C + Omega G) r' + K r = u(t)

plus the gravity load vector (lumped on the vertical translational dofs).
X is horizontal and Y vertical; gravity acts along -Y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DOF_PER_NODE = 4

# dof maps of the two bending planes within the 8-dof element vector
# x-z plane: (V1, Gam1, V2, Gam2); y-z plane: (W1, B1, W2, B2) with the
# rotation entering with opposite sign (B ~ -dW/dz, Gam ~ +dV/dz)
_PLANE_X = ([0, 3, 4, 7], [1.0, 1.0, 1.0, 1.0])
_PLANE_Y = ([1, 2, 5, 6], [1.0, -1.0, 1.0, -1.0])


@dataclass(frozen=True)
class Material:
    young_modulus: float
    poisson_ratio: float
    density: float

    def __post_init__(self):
        if min(self.young_modulus, self.density) <= 0 or not 0 <= self.poisson_ratio < 0.5:
            raise ValueError("invalid material constants")

    @property
    def shear_modulus(self):
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))


@dataclass(frozen=True)
class ShaftElement:
    length: float
    diameter: float
    material: Material

    def __post_init__(self):
        if self.length <= 0 or self.diameter <= 0:
            raise ValueError("element dimensions must be positive")

    @property
    def area(self):
        return math.pi / 4.0 * self.diameter ** 2

    @property
    def second_moment(self):
        return math.pi / 64.0 * self.diameter ** 4

    @property
    def mass(self):
        return self.material.density * self.area * self.length


@dataclass(frozen=True)
class Disc:
    node: int
    width: float
    external_diameter: float
    internal_diameter: float

    def __post_init__(self):
        if not self.external_diameter > self.internal_diameter >= 0:
            raise ValueError("disc external diameter must exceed internal")

    def inertias(self, density):
        """(mass, diametral inertia, polar inertia) of the annular disc."""
        volume = (math.pi / 4.0 * (self.external_diameter ** 2
                                   - self.internal_diameter ** 2) * self.width)
        m = density * volume
        r_sq = (self.external_diameter ** 2 + self.internal_diameter ** 2) / 8.0
        i_p = m * r_sq
        i_d = m * (3.0 * r_sq * 2.0 + self.width ** 2) / 12.0
        return m, i_d, i_p


@dataclass
class RotorModel:
    elements: list[ShaftElement]
    discs: list[Disc]
    bearing_nodes: tuple[int, int]
    unbalance_node: int = 0
    unbalance_moment: float = 0.0     # kg m
    unbalance_phase: float = 0.0      # rad
    rotational_speed: float = 0.0     # rad/s
    gravity: float = 9.81             # m/s^2
    damping_alpha: float = 0.0        # C_struct = alpha M + beta K
    damping_beta: float = 0.0

    def __post_init__(self):
        n = self.n_nodes
        for node in (*self.bearing_nodes, self.unbalance_node,
                     *(d.node for d in self.discs)):
            if not 0 <= node < n:
                raise ValueError(f"node {node} outside 0..{n - 1}")

    @property
    def n_nodes(self):
        return len(self.elements) + 1

    @property
    def n_dofs(self):
        return DOF_PER_NODE * self.n_nodes

    @property
    def material(self):
        return self.elements[0].material

    def total_mass(self):
        rho = self.material.density
        return (sum(e.mass for e in self.elements)
                + sum(d.inertias(rho)[0] for d in self.discs))

    def shaft_diameter_at(self, node):
        """Diameter of the shaft at a node (mean of the adjacent elements)."""
        ds = []
        if node > 0:
            ds.append(self.elements[node - 1].diameter)
        if node < len(self.elements):
            ds.append(self.elements[node].diameter)
        return sum(ds) / len(ds)


@dataclass
class GlobalMatrices:
    M: np.ndarray
    C_struct: np.ndarray
    G: np.ndarray
    K: np.ndarray
    weight: np.ndarray   # gravity load vector, N
    n_nodes: int


def shear_correction(poisson_ratio):
    """Shear correction factor for a solid circular section."""
    return 6.0 * (1.0 + poisson_ratio) / (7.0 + 6.0 * poisson_ratio)


def _plane_matrices(element):
    """4x4 stiffness, translational and rotary mass of one bending plane."""
    E = element.material.young_modulus
    rho = element.material.density
    L = element.length
    A = element.area
    I = element.second_moment
    kappa = shear_correction(element.material.poisson_ratio)
    phi = 12.0 * E * I / (kappa * element.material.shear_modulus * A * L ** 2)

    k = E * I / (L ** 3 * (1.0 + phi))
    K = k * np.array([
        [12.0, 6.0 * L, -12.0, 6.0 * L],
        [6.0 * L, (4.0 + phi) * L ** 2, -6.0 * L, (2.0 - phi) * L ** 2],
        [-12.0, -6.0 * L, 12.0, -6.0 * L],
        [6.0 * L, (2.0 - phi) * L ** 2, -6.0 * L, (4.0 + phi) * L ** 2],
    ])

    m1 = 13.0 / 35.0 + 7.0 * phi / 10.0 + phi ** 2 / 3.0
    m2 = (11.0 / 210.0 + 11.0 * phi / 120.0 + phi ** 2 / 24.0) * L
    m3 = 9.0 / 70.0 + 3.0 * phi / 10.0 + phi ** 2 / 6.0
    m4 = (13.0 / 420.0 + 3.0 * phi / 40.0 + phi ** 2 / 24.0) * L
    m5 = (1.0 / 105.0 + phi / 60.0 + phi ** 2 / 120.0) * L ** 2
    m6 = (1.0 / 140.0 + phi / 60.0 + phi ** 2 / 120.0) * L ** 2
    Mt = rho * A * L / (1.0 + phi) ** 2 * np.array([
        [m1, m2, m3, -m4],
        [m2, m5, m4, -m6],
        [m3, m4, m1, -m2],
        [-m4, -m6, -m2, m5],
    ])

    n1 = 6.0 / 5.0
    n2 = (1.0 / 10.0 - phi / 2.0) * L
    n3 = (2.0 / 15.0 + phi / 6.0 + phi ** 2 / 3.0) * L ** 2
    n4 = (1.0 / 30.0 + phi / 6.0 - phi ** 2 / 6.0) * L ** 2
    Mr = rho * I / (L * (1.0 + phi) ** 2) * np.array([
        [n1, n2, -n1, n2],
        [n2, n3, -n2, -n4],
        [-n1, -n2, n1, -n2],
        [n2, -n4, -n2, n3],
    ])
    return K, Mt, Mr


def _expand_plane(mat4, plane):
    """Place a 4x4 single-plane matrix into the 8-dof element layout."""
    idx, sgn = plane
    out = np.zeros((8, 8))
    for a in range(4):
        for b in range(4):
            out[idx[a], idx[b]] = sgn[a] * sgn[b] * mat4[a, b]
    return out


def beam_element_matrices(element):
    """Mass, stiffness and gyroscopic 8x8 matrices of one shaft element.

    The gyroscopic matrix is returned for unit spin speed (multiply by
    Omega when assembling the damping-side term).
    """
    K4, Mt4, Mr4 = _plane_matrices(element)
    M = (_expand_plane(Mt4 + Mr4, _PLANE_X)
         + _expand_plane(Mt4 + Mr4, _PLANE_Y))
    K = _expand_plane(K4, _PLANE_X) + _expand_plane(K4, _PLANE_Y)

    # polar inertia couples the planes: G = S Mr_x - (S Mr_x)^T pattern with
    # Ip = 2 I for the circular section
    Gx = _expand_plane(Mr4, _PLANE_X)
    Gy = _expand_plane(Mr4, _PLANE_Y)
    # rotate x-plane rows into y-plane rows: build from the plane matrices
    idx_x, sgn_x = _PLANE_X
    idx_y, sgn_y = _PLANE_Y
    G = np.zeros((8, 8))
    for a in range(4):
        for b in range(4):
            val = 2.0 * sgn_x[a] * sgn_y[b] * Mr4[a, b]
            G[idx_x[a], idx_y[b]] += val
            G[idx_y[b], idx_x[a]] -= val
    return M, K, G


def disc_matrices(disc, material):
    """4x4 inertia and unit-speed gyroscopic matrices at the disc node."""
    m, i_d, i_p = disc.inertias(material.density)
    M = np.diag([m, m, i_d, i_d])
    G = np.zeros((4, 4))
    G[2, 3] = i_p
    G[3, 2] = -i_p
    return M, G


def assemble_global(model: RotorModel) -> GlobalMatrices:
    """Assemble the global rotor matrices and the gravity load vector."""
    n = model.n_dofs
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    G = np.zeros((n, n))
    weight = np.zeros(n)

    for i, el in enumerate(model.elements):
        Me, Ke, Ge = beam_element_matrices(el)
        s = DOF_PER_NODE * i
        sl = slice(s, s + 8)
        M[sl, sl] += Me
        K[sl, sl] += Ke
        G[sl, sl] += Ge
        # lumped element weight, half to each end node, W dof
        weight[s + 1] += -0.5 * el.mass * model.gravity
        weight[s + 5] += -0.5 * el.mass * model.gravity

    rho = model.material.density
    for d in model.discs:
        Md, Gd = disc_matrices(d, model.material)
        s = DOF_PER_NODE * d.node
        sl = slice(s, s + 4)
        M[sl, sl] += Md
        G[sl, sl] += Gd
        weight[s + 1] += -d.inertias(rho)[0] * model.gravity

    C = model.damping_alpha * M + model.damping_beta * K
    return GlobalMatrices(M=M, C_struct=C, G=G, K=K, weight=weight,
                          n_nodes=model.n_nodes)


def unbalance_force(moment, phase, speed, time):
    """Rotating unbalance force (X, Y) at one node, N."""
    arg = speed * np.asarray(time, dtype=float) + phase
    amp = moment * speed ** 2
    return amp * np.cos(arg), amp * np.sin(arg)


def g25_unbalance_moment(rotor_mass, service_speed, grade=2.5e-3):
    """Permissible residual unbalance for a balance quality grade.

    ``grade`` is the quality grade velocity in m/s (G2.5 -> 2.5 mm/s);
    ``service_speed`` in rad/s.  Returns kg m.
    """
    if service_speed <= 0:
        raise ValueError("service speed must be positive")
    return rotor_mass * grade / service_speed


def static_bearing_loads(model: RotorModel, matrices: GlobalMatrices | None = None):
    """Vertical reaction force at each bearing from the static gravity solve.

    Both translational dofs of the two bearing nodes are pinned; the
    remaining system is solved for the gravity deflection and the reactions
    recovered from the constrained rows.  Returns (R1, R2) in N, positive
    upward, summing to the total weight.
    """
    if len(model.bearing_nodes) != 2:
        raise ValueError("exactly two bearing nodes required")
    gm = matrices or assemble_global(model)
    n = model.n_dofs
    pinned = []
    for node in model.bearing_nodes:
        pinned += [DOF_PER_NODE * node, DOF_PER_NODE * node + 1]
    free = np.setdiff1d(np.arange(n), pinned)

    Kff = gm.K[np.ix_(free, free)]
    try:
        r_free = np.linalg.solve(Kff, gm.weight[free])
    except np.linalg.LinAlgError as exc:
        raise ValueError("constrained rotor is singular: check the model") from exc
    reactions = gm.K[np.ix_(pinned, free)] @ r_free - gm.weight[pinned]
    # vertical components only (V dofs carry no gravity load)
    return float(reactions[1]), float(reactions[3])
