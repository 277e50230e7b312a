"""Declarative machine and scenario descriptions (INI files).

A machine file bundles everything fixed about the plant: rotor elements
and discs, bearing geometry, lubricant, film mesh, unbalance and speed.
Scenario files describe one simulated experiment: flowrate profiles per
bearing, duration, noise level and seed.  File units follow the tables the
values come from (mm, bar, ml/min); everything is converted to SI here.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .bearing import ML_MIN_PER_M3_S, BearingGeometry, FilmMesh, Lubricant
from .rotor import Disc, Material, RotorModel, ShaftElement

G_GRADES = {"G0.4": 0.4e-3, "G1": 1.0e-3, "G2.5": 2.5e-3, "G6.3": 6.3e-3,
            "G16": 16.0e-3, "G40": 40.0e-3}


class ConfigError(Exception):
    """Malformed or inconsistent configuration file."""


@dataclass
class Machine:
    """Parsed machine description ready for model building."""

    rotor: RotorModel
    bearing_geometry: BearingGeometry
    lubricant: Lubricant
    mesh_shape: tuple[int, int]
    nominal_flow: float          # m^3/s, reference value
    load_split: str              # "equal" | "computed"
    source_path: str = ""

    def film_mesh(self) -> FilmMesh:
        return FilmMesh.build(self.bearing_geometry, *self.mesh_shape)

    def bearing_loads(self):
        """Static load vector applied to the shaft at each bearing, N."""
        from .rotor import assemble_global, static_bearing_loads
        if self.load_split == "computed":
            r1, r2 = static_bearing_loads(self.rotor)
        else:
            w = self.rotor.total_mass() * self.rotor.gravity
            r1 = r2 = 0.5 * w
        return np.array([0.0, -r1]), np.array([0.0, -r2])


def generic_turbine_path() -> Path:
    """Path of the shipped generic-turbine machine file."""
    return Path(resources.files("lubemon.data") / "generic_turbine.cfg")


def _parser(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cp


def _floats(raw: str) -> list[float]:
    try:
        return [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {raw!r}") from exc


def load_machine(path) -> Machine:
    """Parse a machine description file."""
    cp = _parser(path)
    try:
        mat = cp["material"]
        material = Material(
            young_modulus=float(mat["young_modulus_gpa"]) * 1.0e9,
            poisson_ratio=float(mat["poisson_ratio"]),
            density=float(mat["density_kg_m3"]),
        )

        elements = []
        shaft = cp["shaft"]
        for i in range(1, len(shaft) + 1):
            key = f"element_{i}"
            if key not in shaft:
                break
            length_mm, dia_mm = _floats(shaft[key])
            elements.append(ShaftElement(length_mm / 1.0e3, dia_mm / 1.0e3, material))
        if not elements:
            raise ConfigError("no shaft elements defined")

        discs = []
        if cp.has_section("discs"):
            for key, raw in cp["discs"].items():
                vals = _floats(raw)
                node = int(vals[0]) - 1
                width = vals[1] / 1.0e3
                d_ext = vals[2] / 1.0e3
                if len(vals) >= 4:
                    d_int = vals[3] / 1.0e3
                else:
                    d_int = _shaft_diameter(elements, node)
                discs.append(Disc(node, width, d_ext, d_int))

        brg = cp["bearings"]
        bearing_nodes = (int(brg["node_1"]) - 1, int(brg["node_2"]) - 1)
        load_split = brg.get("load_split", "computed").strip().lower()
        if load_split not in ("equal", "computed"):
            raise ConfigError(f"load_split must be equal|computed, got {load_split!r}")

        op = cp["operation"]
        speed = 2.0 * math.pi * float(op["speed_hz"])

        unb = cp["unbalance"]
        unb_node = int(unb["node"]) - 1
        phase = float(unb.get("phase_rad", "0.0"))

        rotor = RotorModel(
            elements=elements,
            discs=discs,
            bearing_nodes=bearing_nodes,
            unbalance_node=unb_node,
            unbalance_moment=0.0,
            unbalance_phase=phase,
            rotational_speed=speed,
            gravity=float(op.get("gravity_m_s2", "9.81")),
        )
        if "moment_kg_m" in unb:
            moment = float(unb["moment_kg_m"])
        else:
            grade = unb.get("grade", "G2.5").strip()
            if grade not in G_GRADES:
                raise ConfigError(f"unknown balance grade {grade!r}")
            from .rotor import g25_unbalance_moment
            moment = g25_unbalance_moment(rotor.total_mass(), speed, G_GRADES[grade])
        rotor.unbalance_moment = moment

        geo = cp["bearing_geometry"]
        geometry = BearingGeometry(
            radius=float(geo["radius_mm"]) / 1.0e3,
            width=float(geo["width_mm"]) / 1.0e3,
            radial_clearance=float(geo["radial_clearance_um"]) / 1.0e6,
            groove_angular_position=math.radians(float(geo.get("groove_position_deg", "0"))),
            groove_circumferential_length=float(geo["groove_length_mm"]) / 1.0e3,
            groove_axial_width=float(geo["groove_width_mm"]) / 1.0e3,
        )

        lub = cp["lubricant"]
        lubricant = Lubricant(
            dynamic_viscosity=float(lub["viscosity_pa_s"]),
            supply_pressure=float(lub.get("supply_pressure_bar", "0")) * 1.0e5,
            cavitation_pressure=float(lub.get("cavitation_pressure_bar", "0")) * 1.0e5,
        )

        fm = cp["film_mesh"] if cp.has_section("film_mesh") else {}
        mesh_shape = (int(fm.get("n_circ", 160)), int(fm.get("n_axial", 40)))

        nominal = float(op["nominal_flow_ml_min"]) / ML_MIN_PER_M3_S
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    return Machine(
        rotor=rotor,
        bearing_geometry=geometry,
        lubricant=lubricant,
        mesh_shape=mesh_shape,
        nominal_flow=nominal,
        load_split=load_split,
        source_path=str(path),
    )


def _shaft_diameter(elements, node):
    ds = []
    if node > 0:
        ds.append(elements[node - 1].diameter)
    if node < len(elements):
        ds.append(elements[node].diameter)
    if not ds:
        raise ConfigError(f"disc node {node + 1} outside the shaft")
    return sum(ds) / len(ds)


@dataclass
class ProfileSpec:
    """One bearing's flowrate profile over the scenario, fractions of nominal."""

    kind: str                      # constant | sigmoid | piecewise
    value: float = 1.0             # constant level
    q_start: float = 1.0
    q_end: float = 1.0
    t_center: float = 10.0
    duration: float = 1.0
    times: tuple = ()
    values: tuple = ()


@dataclass
class ScenarioSpec:
    machine_path: str
    profiles: tuple[ProfileSpec, ProfileSpec]
    duration: float = 10.0
    sample_period: float = 1.0e-3
    discard: float = 5.0
    noise_std: float = 1.0e-6      # m, displacement channels
    seed: int = 0
    velocity_noise: str = "differentiate"   # differentiate | independent

    def __post_init__(self):
        if self.discard >= self.duration:
            raise ConfigError("discard prefix must be shorter than the duration")
        if self.noise_std < 0:
            raise ConfigError("noise level must be non-negative")


def _parse_profile(section) -> ProfileSpec:
    kind = section.get("kind", "constant").strip().lower()
    if kind == "constant":
        return ProfileSpec(kind="constant", value=float(section.get("level", "1.0")))
    if kind == "sigmoid":
        return ProfileSpec(
            kind="sigmoid",
            q_start=float(section["level_start"]),
            q_end=float(section["level_end"]),
            t_center=float(section["t_center_s"]),
            duration=float(section["duration_s"]),
        )
    if kind == "piecewise":
        times = tuple(_floats(section["times_s"]))
        values = tuple(_floats(section["levels"]))
        if len(times) != len(values) or not times:
            raise ConfigError("piecewise profile needs matching times/levels")
        return ProfileSpec(kind="piecewise", times=times, values=values)
    raise ConfigError(f"unknown profile kind {kind!r}")


def load_scenario(path) -> ScenarioSpec:
    """Parse a scenario description file (profile levels relative to nominal)."""
    cp = _parser(path)
    try:
        sc = cp["scenario"]
        machine_rel = sc["machine"]
        machine_path = str((Path(path).parent / machine_rel).resolve())
        profiles = (_parse_profile(cp["flowrate.bearing1"]),
                    _parse_profile(cp["flowrate.bearing2"]))
        spec = ScenarioSpec(
            machine_path=machine_path,
            profiles=profiles,
            duration=float(sc.get("duration_s", "10.0")),
            sample_period=float(sc.get("sample_period_s", "0.001")),
            discard=float(sc.get("discard_s", "5.0")),
            noise_std=float(sc.get("noise_um", "1.0")) * 1.0e-6,
            seed=int(sc.get("seed", "0")),
            velocity_noise=sc.get("velocity_noise", "differentiate").strip(),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if spec.velocity_noise not in ("differentiate", "independent"):
        raise ConfigError(f"velocity_noise must be differentiate|independent")
    return spec


def write_scenario(path, spec: ScenarioSpec):
    """Persist a scenario spec in the file format ``load_scenario`` reads."""
    cp = configparser.ConfigParser()
    cp["scenario"] = {
        "machine": spec.machine_path,
        "duration_s": repr(spec.duration),
        "sample_period_s": repr(spec.sample_period),
        "discard_s": repr(spec.discard),
        "noise_um": repr(spec.noise_std * 1.0e6),
        "seed": str(spec.seed),
        "velocity_noise": spec.velocity_noise,
    }
    for name, prof in zip(("flowrate.bearing1", "flowrate.bearing2"), spec.profiles):
        if prof.kind == "constant":
            cp[name] = {"kind": "constant", "level": repr(prof.value)}
        elif prof.kind == "sigmoid":
            cp[name] = {"kind": "sigmoid", "level_start": repr(prof.q_start),
                        "level_end": repr(prof.q_end), "t_center_s": repr(prof.t_center),
                        "duration_s": repr(prof.duration)}
        else:
            cp[name] = {"kind": "piecewise",
                        "times_s": " ".join(repr(t) for t in prof.times),
                        "levels": " ".join(repr(v) for v in prof.values)}
    with open(path, "w") as f:
        cp.write(f)
