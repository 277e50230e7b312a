import math

import numpy as np
import pytest

from lubemon.bearing import ML_MIN_PER_M3_S
from lubemon.config import (ConfigError, ProfileSpec, ScenarioSpec,
                            load_machine, load_scenario, generic_turbine_path,
                            write_scenario)
from lubemon.scenarios import (add_noise, build_measurements, drop_profiles,
                               error_stats, estimate_velocities,
                               flowrate_profile, load_measurements,
                               save_measurements, sigmoid_profile,
                               simulate_truth)


class TestSigmoidProfile:
    def test_asymptotes_and_midpoint(self):
        q = sigmoid_profile(10.0, 4.0, t_center=10.0, duration=1.0)
        assert q(0.0) == pytest.approx(10.0, rel=1e-6)
        assert q(20.0) == pytest.approx(4.0, rel=1e-6)
        assert q(10.0) == pytest.approx(7.0, rel=1e-12)

    def test_one_percent_points(self):
        q = sigmoid_profile(1.0, 0.0, t_center=10.0, duration=2.0)
        assert q(9.0) == pytest.approx(0.99, rel=1e-9)
        assert q(11.0) == pytest.approx(0.01, abs=1e-9)

    def test_invalid_duration(self):
        with pytest.raises(ValueError):
            sigmoid_profile(1.0, 0.0, 10.0, 0.0)

    def test_vectorized(self):
        q = sigmoid_profile(2.0, 1.0, 5.0, 1.0)
        t = np.linspace(0, 10, 11)
        v = q(t)
        assert v.shape == t.shape
        assert np.all(np.diff(v) <= 0)


class TestProfiles:
    def test_constant(self):
        fn = flowrate_profile(ProfileSpec("constant", value=0.85), 1.0e-5)
        assert fn(3.7) == pytest.approx(0.85e-5)

    def test_piecewise(self):
        spec = ProfileSpec("piecewise", times=(0.0, 1.0, 2.0),
                           values=(1.0, 0.5, 0.5))
        fn = flowrate_profile(spec, 1.0e-5)
        assert fn(0.5) == pytest.approx(0.75e-5)
        assert fn(5.0) == pytest.approx(0.5e-5)

    def test_drop_profiles_kinds(self):
        for kind, expect in (("equal", (0.75, 0.75)), ("bearing1", (0.75, 1.0)),
                             ("bearing2", (1.0, 0.75)), ("clog1", (0.75, 1.25)),
                             ("clog2", (1.25, 0.75))):
            p1, p2 = drop_profiles(kind, "intermediate")
            ends = []
            for p in (p1, p2):
                if p.kind == "constant":
                    ends.append(p.value)
                else:
                    ends.append(p.q_end)
            assert tuple(ends) == expect
        with pytest.raises(ValueError):
            drop_profiles("both", "slow")


class TestNoise:
    def test_zero_sigma_identity(self):
        x = np.random.default_rng(0).normal(size=(100, 4))
        assert np.array_equal(add_noise(x, 0.0, 1), x)

    def test_noise_statistics(self):
        x = np.zeros((10_000, 4))
        sigma = 2.0e-6
        y = add_noise(x, sigma, seed=5)
        measured = y.std()
        assert abs(measured - sigma) / sigma < 3.0 / math.sqrt(y.size)

    def test_seed_determinism(self):
        x = np.zeros((50, 4))
        assert np.array_equal(add_noise(x, 1e-6, 7), add_noise(x, 1e-6, 7))
        assert not np.array_equal(add_noise(x, 1e-6, 7), add_noise(x, 1e-6, 8))


class TestVelocities:
    def test_sine_derivative_amplitude(self):
        dt = 1.0e-3
        w = 2 * math.pi * 75.0
        t = np.arange(0, 0.4, dt)
        x = 1.0e-5 * np.sin(w * t)[:, None]
        v = estimate_velocities(x, dt)
        amp = np.abs(v[50:-50]).max()
        # central difference attenuates by sin(w dt)/(w dt)
        expected = 1.0e-5 * w * math.sin(w * dt) / (w * dt)
        assert amp == pytest.approx(expected, rel=2e-3)

    def test_constant_gives_zero(self):
        v = estimate_velocities(np.full((50, 2), 3.3), 1e-3)
        assert np.allclose(v, 0.0)

    def test_noise_amplification(self):
        dt = 1.0e-3
        sigma = 1.0e-6
        x = add_noise(np.zeros((20_000, 1)), sigma, seed=2)
        v = estimate_velocities(x, dt)
        expected = sigma / (math.sqrt(2.0) * dt)
        assert v[1:-1].std() == pytest.approx(expected, rel=0.05)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            estimate_velocities(np.zeros((2, 1)), 1e-3)


class TestErrorStats:
    def test_exact(self):
        rel, avg, std, mx = error_stats([5.0e-6], [5.0e-6])
        assert avg == 0.0 and mx == 0.0

    def test_reference_arithmetic_case(self):
        rel, avg, _, _ = error_stats([566.5], [596.3])
        assert avg == pytest.approx(5.0, abs=0.003)

    def test_vector(self):
        rel, avg, std, mx = error_stats([1.1, 0.9], [1.0, 1.0])
        assert rel == pytest.approx([10.0, 10.0])
        assert mx == pytest.approx(10.0)


class TestTruthSimulation:
    def test_orbit_at_rotation_frequency(self, turbine_plant, turbine_machine):
        q = turbine_machine.nominal_flow
        prof = (lambda t: np.full_like(np.asarray(t, float), q),
                lambda t: np.full_like(np.asarray(t, float), q))
        truth = simulate_truth(turbine_plant, prof, 3.0, discard=2.0)
        y = truth.channels[:, 1] - truth.channels[:, 1].mean()
        spec = np.abs(np.fft.rfft(y))
        freqs = np.fft.rfftfreq(y.size, turbine_plant.dt)
        assert freqs[np.argmax(spec)] == pytest.approx(75.0, abs=1.0)

    def test_zero_unbalance_collapses_to_static_point(self, turbine_machine,
                                                      turbine_table):
        from lubemon.scenarios import build_plant
        import dataclasses
        rotor = dataclasses.replace(turbine_machine.rotor, unbalance_moment=0.0)
        machine = dataclasses.replace(turbine_machine, rotor=rotor)
        plant = build_plant(machine, (turbine_table, turbine_table))
        q = machine.nominal_flow
        prof = (lambda t: np.full_like(np.asarray(t, float), q),) * 2
        truth = simulate_truth(plant, prof, 1.0, discard=0.5)
        spans = truth.channels[:, :4].max(axis=0) - truth.channels[:, :4].min(axis=0)
        assert spans.max() < 1e-12

    def test_flowrates_recorded(self, turbine_plant, turbine_machine):
        q = turbine_machine.nominal_flow
        prof = (sigmoid_profile(q, 0.8 * q, 1.0, 0.5),
                lambda t: np.full_like(np.asarray(t, float), q))
        truth = simulate_truth(turbine_plant, prof, 2.0, discard=0.0)
        assert truth.flowrates[0, 0] == pytest.approx(q, rel=1e-6)
        assert truth.flowrates[-1, 0] == pytest.approx(0.8 * q, rel=1e-3)
        assert np.allclose(truth.flowrates[:, 1], q)


class TestMeasurementIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        t = np.arange(10) * 1e-3
        Z = rng.normal(size=(10, 8))
        path = tmp_path / "meas.csv"
        save_measurements(path, t, Z)
        t2, Z2 = load_measurements(path)
        assert np.allclose(t, t2)
        assert np.allclose(Z, Z2)

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time_s,disp_b1_x_m\n0.0,1.0\n")
        with pytest.raises(ValueError) as err:
            load_measurements(path)
        assert "disp_b1_y_m" in str(err.value)

    def test_corrupt_row_numbered(self, tmp_path):
        path = tmp_path / "corrupt.csv"
        header = ",".join(["time_s",
                           "disp_b1_x_m", "disp_b1_y_m", "disp_b2_x_m",
                           "disp_b2_y_m", "vel_b1_x_m_s", "vel_b1_y_m_s",
                           "vel_b2_x_m_s", "vel_b2_y_m_s"])
        good = ",".join(["0.001"] + ["0.0"] * 8)
        bad = ",".join(["0.002"] + ["0.0"] * 7 + ["oops"])
        path.write_text(f"{header}\n{good}\n{bad}\n")
        with pytest.raises(ValueError) as err:
            load_measurements(path)
        assert "row 3" in str(err.value)


class TestVelocityModes:
    def test_exact_mode_passes_truth_velocities(self, turbine_plant,
                                                turbine_machine):
        q = turbine_machine.nominal_flow
        prof = (lambda t: np.full_like(np.asarray(t, float), q),) * 2
        truth = simulate_truth(turbine_plant, prof, 1.2, discard=1.0)
        Z = build_measurements(truth, 0.0, 0, turbine_plant.dt,
                               velocity_noise="exact")
        assert np.array_equal(Z, truth.channels)

    def test_differentiate_mode_close_to_truth(self, turbine_plant,
                                               turbine_machine):
        q = turbine_machine.nominal_flow
        prof = (lambda t: np.full_like(np.asarray(t, float), q),) * 2
        truth = simulate_truth(turbine_plant, prof, 1.5, discard=1.0)
        Z = build_measurements(truth, 0.0, 0, turbine_plant.dt)
        v_err = np.abs(Z[5:-5, 4:] - truth.channels[5:-5, 4:]).max()
        v_amp = np.abs(truth.channels[:, 4:]).max()
        assert v_err < 0.05 * v_amp     # O(w^2 dt^2) differentiation bias


class TestPlantMismatch:
    def test_perturbed_table_scales_entries(self, turbine_table):
        from lubemon.scenarios import perturbed_table
        bumped = perturbed_table(turbine_table, 0.02)
        assert np.allclose(bumped.entries[0].stiffness,
                           1.02 * turbine_table.entries[0].stiffness)
        assert np.allclose(bumped.entries[3].damping,
                           1.02 * turbine_table.entries[3].damping)
        # equilibria untouched: only the force sensitivities are perturbed
        assert np.allclose(bumped.entries[0].equilibrium.eccentricity0,
                           turbine_table.entries[0].equilibrium.eccentricity0)

    def test_identification_tolerates_small_mismatch(self, turbine_machine,
                                                     turbine_table, turbine_plant):
        from lubemon.scenarios import (build_plant, perturbed_table,
                                       run_constant_case, simulate_truth,
                                       flowrate_profile)
        from lubemon.config import ProfileSpec
        q_nom = turbine_machine.nominal_flow
        truth_plant = build_plant(turbine_machine,
                                  (perturbed_table(turbine_table, 0.02),) * 2)
        prof = tuple(flowrate_profile(ProfileSpec("constant", value=0.85), q_nom)
                     for _ in range(2))
        truth = simulate_truth(truth_plant, prof, 8.0, discard=5.0)
        res = run_constant_case(turbine_plant, turbine_machine, 0.85, 0.85,
                                1.0e-6, seed=2, truth=truth)
        assert res.run.converged
        # a 2% coefficient mismatch costs accuracy but not validity
        assert res.errors_pct.max() < 10.0


class TestNoiseMonotonicity:
    def test_higher_noise_no_more_accurate(self, turbine_plant, turbine_machine):
        from lubemon.scenarios import run_constant_case
        truth = None
        means = []
        for sigma in (1.0e-6, 2.0e-6):
            errs = []
            for seed in range(3):
                res = run_constant_case(turbine_plant, turbine_machine, 0.85, 0.85,
                                        sigma, seed, truth=truth)
                truth = res.truth
                errs.extend(res.errors_pct.tolist())
            means.append(np.mean(errs))
        assert means[1] >= means[0]


class TestSensitivitySweep:
    def test_orbit_variation_tables(self, turbine_plant, turbine_machine):
        from lubemon.scenarios import sensitivity_sweep
        data = sensitivity_sweep(turbine_machine, turbine_plant,
                                 [1.0, 0.9, 0.8], orbit_seconds=0.5,
                                 settle_seconds=1.0)
        ecc_inc = data["ecc_increment_um"]
        # equal drop: both bearings share load and geometry, so the
        # eccentricity increments coincide
        assert np.allclose(ecc_inc[:, 0], ecc_inc[:, 1], rtol=1e-6)
        assert np.all(ecc_inc > 0)
        # amplitudes respond to starvation in both directions somewhere
        assert data["amplitude_x_m"].max() > 0
        assert data["amp_y_variation_um"].shape == (2, 2)


class TestConfigFiles:
    def test_turbine_machine_parses(self):
        machine = load_machine(generic_turbine_path())
        assert machine.rotor.n_nodes == 21
        assert machine.rotor.bearing_nodes == (5, 19)
        assert machine.rotor.unbalance_node == 12
        assert machine.nominal_flow * ML_MIN_PER_M3_S == pytest.approx(596.3)
        assert machine.bearing_geometry.groove_angular_position == pytest.approx(math.pi)
        assert machine.rotor.unbalance_moment == pytest.approx(3.54e-3, rel=2e-3)
        load1, load2 = machine.bearing_loads()
        assert load1[1] == pytest.approx(-3272.8, rel=1e-4)

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_machine("/nonexistent/machine.cfg")

    def test_scenario_round_trip(self, tmp_path):
        spec = ScenarioSpec(
            machine_path=str(generic_turbine_path()),
            profiles=(ProfileSpec("constant", value=0.9),
                      ProfileSpec("sigmoid", q_start=1.0, q_end=0.75,
                                  t_center=10.0, duration=1.0)),
            duration=20.0, discard=5.0, noise_std=2.0e-6, seed=11)
        path = tmp_path / "scenario.cfg"
        write_scenario(path, spec)
        back = load_scenario(path)
        assert back.duration == spec.duration
        assert back.noise_std == pytest.approx(spec.noise_std)
        assert back.seed == 11
        assert back.profiles[0].kind == "constant"
        assert back.profiles[1].kind == "sigmoid"
        assert back.profiles[1].q_end == pytest.approx(0.75)

    def test_scenario_validation(self, tmp_path):
        with pytest.raises(ConfigError):
            ScenarioSpec(machine_path="x",
                         profiles=(ProfileSpec("constant"), ProfileSpec("constant")),
                         duration=5.0, discard=6.0)
