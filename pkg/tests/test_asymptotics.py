import numpy as np
import pytest

from bohmvel.asymptotics import (
    FIT_LAST_POINT,
    dirac_velocity_distribution,
    estimate_asymptotic_measure,
    estimate_asymptotic_velocity,
    free_velocity_distribution,
    rotating_trajectory_family,
    scattering_velocity_distribution,
    velocity_measure_at,
    verify_distribution_equality,
    weak_convergence_residuals,
)
from bohmvel.core import EmpiricalMeasure, SampledTrajectory
from bohmvel.errors import InvalidInputError, RegularityError
from bohmvel.stats import ks_vs_cdf_1d
from bohmvel.wavefunction import (
    GridSpec,
    PotentialSpec,
    gaussian_packet,
    outgoing_asymptote,
    project_positive_energy,
)

from oracles import free_gaussian_trajectory

CHECKPOINTS = np.array([10.0, 20.0, 40.0])


def straight(v, c=0.0, dim=1):
    t = np.array([0.0, 5.0, 10.0, 20.0, 40.0])
    pts = np.outer(t, np.atleast_1d(v)) + np.atleast_1d(c)
    return SampledTrajectory(t, pts, 1, dim)


class TestAsymptoticVelocity:
    def test_affine_fit_exact_on_lines(self):
        est = estimate_asymptotic_velocity(straight(3.0, c=2.0), CHECKPOINTS, 0.05)
        assert est.v_plus.v[0] == pytest.approx(3.0, abs=1e-12)
        assert est.convergence_residual < 1e-12

    def test_free_gaussian_path_recovers_half(self):
        t = np.concatenate([[0.0], np.geomspace(0.5, 160.0, 500)])
        x = free_gaussian_trajectory(1.0, t)
        traj = SampledTrajectory(t, x[:, None], 1, 1)
        est = estimate_asymptotic_velocity(traj, CHECKPOINTS, 0.05)
        # v_plus = x0 / (2 m sigma0^2) = 0.5; the affine-in-1/t fit sees the
        # residual 1/t^2 curvature, so recovery is at the few-per-mille level.
        assert est.v_plus.v[0] == pytest.approx(0.5, abs=5e-3)
        assert est.convergence_residual < 5e-3
        long = estimate_asymptotic_velocity(traj, 4.0 * CHECKPOINTS, 0.05)
        assert abs(long.v_plus.v[0] - 0.5) < abs(est.v_plus.v[0] - 0.5)

    def test_rotating_trajectory_never_converges(self):
        # Equatorial rotator: the heading turns forever, so the fit
        # residual stays order one and the flag must reject it.
        omega = 1.0
        t = np.array([0.0, 10.0, 20.0, 40.0])
        pts = np.stack([np.cos(omega * t) * t, np.sin(omega * t) * t, np.zeros_like(t)], axis=1)
        traj = SampledTrajectory(t, pts, 1, 3)
        est = estimate_asymptotic_velocity(traj, CHECKPOINTS, 0.1)
        assert est.convergence_residual > 0.5
        assert not est.converged(0.5)
        assert not est.converged(0.1)

    def test_last_point_mode(self):
        est = estimate_asymptotic_velocity(
            straight(1.2, c=4.0), CHECKPOINTS, 0.5, fit_method=FIT_LAST_POINT
        )
        # eta(40) = 1.2 + 4/40
        assert est.v_plus.v[0] == pytest.approx(1.3, abs=1e-12)

    def test_checkpoint_preconditions(self):
        with pytest.raises(InvalidInputError):
            estimate_asymptotic_velocity(straight(1.0), [10.0, 20.0], 0.05)
        with pytest.raises(InvalidInputError):
            estimate_asymptotic_velocity(straight(1.0), [10.0, 20.0, 30.0], 0.05)


class TestAsymptoticMeasure:
    def test_straight_line_ensemble(self):
        vels = np.array([-0.5, 0.1, 0.9])
        measure, report = estimate_asymptotic_measure(
            [straight(v) for v in vels], CHECKPOINTS, 0.05
        )
        assert report.fraction_converged == 1.0
        assert report.verdict
        np.testing.assert_allclose(np.sort(measure.samples[:, 0]), np.sort(vels), atol=1e-12)

    def test_rotating_family_hard_failure(self):
        fam = rotating_trajectory_family(1.0, None, 500, seed=1, dim=2)
        with pytest.raises(RegularityError) as err:
            estimate_asymptotic_measure(fam, CHECKPOINTS, 0.1)
        assert err.value.report.fraction_converged == 0.0

    def test_mixed_ensemble_exclusion_weight(self):
        fam = rotating_trajectory_family(1.0, None, 30, seed=2, dim=2)
        lines = [straight(v, dim=2) for v in np.random.default_rng(3).normal(size=(70, 2))]
        measure, report = estimate_asymptotic_measure(lines + fam, CHECKPOINTS, 0.1)
        assert report.n_converged == 70
        assert report.fraction_converged == pytest.approx(0.7)
        assert not report.verdict


class TestVelocityMeasureAt:
    def test_equals_positions_over_t(self):
        trajs = [straight(v, c=0.3) for v in (0.2, -0.7)]
        m = velocity_measure_at(trajs, 20.0)
        expected = np.array([t.position_at(20.0) / 20.0 for t in trajs])
        np.testing.assert_array_equal(m.samples, expected)

    def test_rotating_family_sphere_marginal(self):
        # Uniform measure on S^2: each Cartesian coordinate is uniform
        # on [-1, 1] (Archimedes), at every time.
        fam = rotating_trajectory_family(1.0, [0.0, 0.0, 1.0], 4000, seed=4, dim=3)
        for t in (5.0, 20.0):
            m = velocity_measure_at(fam, t)
            assert np.abs(np.linalg.norm(m.samples, axis=1) - 1.0).max() < 1e-12
            d = ks_vs_cdf_1d(m.samples[:, 2], m.weights, lambda x: np.clip((x + 1) / 2, 0, 1))
            assert d < 0.03

    def test_straight_lines_stationary(self):
        trajs = [straight(v) for v in np.linspace(-1, 1, 50)]
        m5 = velocity_measure_at(trajs, 5.0)
        m40 = velocity_measure_at(trajs, 40.0)
        # No offsets: S_t equals the limiting measure at every time.
        np.testing.assert_allclose(m5.samples, m40.samples, atol=1e-14)


class TestQuantumDistributions:
    def test_free_gaussian_is_normal(self):
        spec = GridSpec.line(2048, -128.0, 128.0)
        psi = gaussian_packet(spec, 1.0, 0.0, 0.0, 1.0)
        q = free_velocity_distribution(psi)
        assert q.total_mass() == pytest.approx(1.0, abs=1e-9)
        std = np.sqrt(np.trapezoid(q.v**2 * q.density, q.v))
        assert std == pytest.approx(0.5, abs=1e-9)

    def test_mass_scaling(self):
        spec = GridSpec.line(2048, -128.0, 128.0)
        psi = gaussian_packet(spec, 2.0, 0.0, 0.0, 1.0)
        q = free_velocity_distribution(psi)
        std = np.sqrt(np.trapezoid(q.v**2 * q.density, q.v))
        assert std == pytest.approx(0.25, abs=1e-9)

    def test_scattering_reduces_to_free_without_potential(self):
        spec = GridSpec.line(2048, -128.0, 128.0)
        psi = gaussian_packet(spec, 1.0, -20.0, 1.5, 1.0)
        out = outgoing_asymptote(psi, PotentialSpec.none(), [4.0, 8.0], dt=0.01)
        q_scatt = scattering_velocity_distribution(out, 1.0)
        q_free = free_velocity_distribution(psi)
        np.testing.assert_allclose(q_scatt.density, q_free.density, atol=1e-12)
        assert q_scatt.atom_mass == pytest.approx(0.0, abs=1e-12)

    def test_dirac_peak_and_support(self):
        spec = GridSpec.line(2048, -128.0, 128.0)
        psi, _ = project_positive_energy(gaussian_packet(spec, 1.0, 0.0, 0.75, 4.0, kind="dirac"))
        q = dirac_velocity_distribution(psi)
        assert np.all(np.abs(q.v) < 1.0)
        assert q.v[np.argmax(q.density)] == pytest.approx(0.6, abs=0.01)

    def test_dirac_large_mass_concentrates(self):
        spec = GridSpec.line(2048, -128.0, 128.0)
        psi, _ = project_positive_energy(gaussian_packet(spec, 20.0, 0.0, 0.75, 1.0, kind="dirac"))
        q = dirac_velocity_distribution(psi)
        mean_abs = np.trapezoid(np.abs(q.v) * q.density, q.v)
        assert mean_abs < 0.05

    def test_sampler_matches_cdf(self):
        spec = GridSpec.line(2048, -128.0, 128.0)
        psi = gaussian_packet(spec, 1.0, 0.0, 0.0, 1.0)
        q = free_velocity_distribution(psi)
        samples = q.sample(50_000, 123)
        d = ks_vs_cdf_1d(samples[:, 0], np.ones(50_000), q.cdf)
        assert d < 0.01

    def test_atom_sampling(self):
        from bohmvel.asymptotics import VelocityDistribution

        q = VelocityDistribution(np.linspace(0.5, 2.0, 50), np.full(50, 1.0 / 1.5) * 0.7,
                                 atom_mass=0.3)
        s = q.sample(20_000, 9)[:, 0]
        assert (s == 0.0).mean() == pytest.approx(0.3, abs=0.02)
        assert q.total_mass() == pytest.approx(1.0, abs=1e-9)


class TestVerifyDistributionEquality:
    def test_self_consistency(self):
        spec = GridSpec.line(2048, -128.0, 128.0)
        psi = gaussian_packet(spec, 1.0, 0.0, 0.0, 1.0)
        q = free_velocity_distribution(psi)
        s = EmpiricalMeasure.from_samples(q.sample(10_000, 55))
        rep = verify_distribution_equality(s, q, seed=56)
        assert rep["pass"]

    def test_wrong_mass_detected(self):
        spec = GridSpec.line(2048, -128.0, 128.0)
        psi = gaussian_packet(spec, 1.0, 0.0, 0.0, 1.0)
        q_wrong = free_velocity_distribution(psi, mass=2.0)
        s = EmpiricalMeasure.from_samples(free_velocity_distribution(psi).sample(10_000, 57))
        rep = verify_distribution_equality(s, q_wrong, seed=58)
        assert not rep["pass"]


class TestWeakConvergence:
    def test_straight_lines_zero_residual(self):
        trajs = [straight(v) for v in np.linspace(-0.8, 0.8, 40)]
        out = weak_convergence_residuals(trajs, [5.0, 10.0, 20.0], checkpoints=CHECKPOINTS)
        assert out["reference_kind"] == "asymptotic_estimate"
        assert np.max(out["residuals"]) < 1e-12

    def test_rotating_family_dichotomy(self):
        # A direction cloud concentrated near +x, rigidly rotating: the
        # instantaneous velocity measure rotates, so a bump pinned to one
        # spot on the sphere oscillates without decaying, while the
        # rotation-invariant radial probe stays at zero (the headings
        # keep unit norm at every sampled time).
        omega = 1.0
        times = np.concatenate([[0.0], np.linspace(2.5, 40.0, 16)])
        rng = np.random.default_rng(6)
        dirs = rng.normal(size=(800, 3)) * 0.2 + np.array([1.0, 0.0, 0.0])
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        angles = omega * times
        rot = np.stack(
            [
                np.stack([np.cos(angles), -np.sin(angles), np.zeros_like(angles)], axis=1),
                np.stack([np.sin(angles), np.cos(angles), np.zeros_like(angles)], axis=1),
                np.stack([np.zeros_like(angles), np.zeros_like(angles), np.ones_like(angles)], axis=1),
            ],
            axis=1,
        )
        pos = np.einsum("tij,nj->nti", rot, dirs) * times[None, :, None]
        fam = [SampledTrajectory(times, pos[i], 1, 3) for i in range(dirs.shape[0])]
        out = weak_convergence_residuals(fam, times[1:], checkpoints=CHECKPOINTS)
        assert out["reference_kind"] == "final_time"
        names = out["names"]
        res = out["residuals"]
        bump = res[names.index("bump_v0_+1.0")]
        radial = res[names.index("bump_radial_1")]
        assert bump.max() > 0.2
        # No decay: the tail of the curve still swings as high as the head.
        assert bump[-8:].max() > 0.5 * bump.max()
        assert radial.max() < 1e-9

    def test_free_gaussian_residual_decreases(self):
        t = np.concatenate([[0.0], np.geomspace(0.25, 40.0, 200)])
        rng = np.random.default_rng(8)
        trajs = [
            SampledTrajectory(t, free_gaussian_trajectory(x0, t)[:, None], 1, 1)
            for x0 in rng.normal(size=200)
        ]
        out = weak_convergence_residuals(trajs, [2.5, 10.0, 40.0], checkpoints=CHECKPOINTS)
        worst = out["residuals"].max(axis=0)
        assert worst[-1] < worst[0]


class TestRotatingFamily:
    def test_unit_speed_ratio(self):
        fam = rotating_trajectory_family(1.0, [0.0, 0.0, 1.0], 10, seed=7, dim=3)
        for traj in fam:
            eta = velocity_measure_at([traj], 20.0).samples[0]
            assert np.linalg.norm(eta) == pytest.approx(1.0, abs=1e-12)

    def test_full_rotation_period(self):
        omega = 1.0
        t_grid = np.array([0.0, np.pi / omega, 2.0 * np.pi / omega])
        fam = rotating_trajectory_family(omega, [0.0, 0.0, 1.0], 5, seed=8, dim=3, t_grid=t_grid)
        for traj in fam:
            eta_full = traj.position_at(2.0 * np.pi) / (2.0 * np.pi)
            v_hat = traj.points[1] / t_grid[1]  # half turn flips the transverse part
            eta0_dir = traj.points[2] / (2.0 * np.pi)
            np.testing.assert_allclose(eta_full, eta0_dir, atol=1e-12)

    def test_antipodal_half_period_equatorial(self):
        omega = 1.0
        t1 = 10.0
        t2 = t1 + np.pi / omega
        t_grid = np.array([0.0, t1, t2])
        fam = rotating_trajectory_family(omega, [0.0, 0.0, 1.0], 200, seed=9, dim=3, t_grid=t_grid)
        # Pick the most equatorial sample: transverse part has unit norm,
        # so consecutive half-period headings are antipodal in the plane.
        best = min(fam, key=lambda tr: abs(tr.points[1][2] / t1))
        eta1 = best.position_at(t1) / t1
        eta2 = best.position_at(t2) / t2
        perp = np.linalg.norm(eta1[:2] + eta2[:2])
        assert perp < 1e-12
        equatorial_norm = np.linalg.norm(eta1[:2])
        assert np.linalg.norm(eta1 - eta2) == pytest.approx(2.0 * equatorial_norm, abs=1e-12)

    def test_omega_zero_control(self):
        fam = rotating_trajectory_family(0.0, None, 50, seed=10, dim=2)
        _, report = estimate_asymptotic_measure(fam, CHECKPOINTS, 0.1)
        assert report.fraction_converged == 1.0
