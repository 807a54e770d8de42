import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bohmvel.core import PoincareElement, SampledTrajectory, VelocityPoint, validate_worldline
from bohmvel.errors import ConfigurationError, InvalidInputError
from bohmvel.relativity import (
    Reparameterization,
    boost_dirac_state,
    boost_worldline,
    check_boost_velocity_consistency,
    transform_velocity,
    transform_velocity_block,
)
from bohmvel.asymptotics import dirac_velocity_distribution
from bohmvel.stats import ks_two_sample_1d
from bohmvel.wavefunction import (
    GridSpec,
    evolve_dirac,
    gaussian_packet,
    project_positive_energy,
)

from oracles import boost_velocity_1d, random_worldline_polyline


def line_traj(v, dim=1, c=0.0):
    t = np.linspace(0.0, 10.0, 21)
    pts = np.outer(t, np.atleast_1d(v)) + np.atleast_1d(c)
    return SampledTrajectory(t, pts, 1, dim)


class TestBoostWorldline:
    def test_identity_boost(self):
        traj = line_traj(0.8)
        out = boost_worldline(traj, 0.0)
        for s in out.times[1:-1]:
            assert out.position_at(s)[0] == pytest.approx(traj.position_at(s)[0], abs=1e-12)

    def test_straight_line_slope(self):
        out = boost_worldline(line_traj(0.8), 0.5)
        slope = (out.points[-1, 0] - out.points[0, 0]) / (out.times[-1] - out.times[0])
        assert slope == pytest.approx(boost_velocity_1d(0.8, 0.5), abs=1e-12)
        assert slope == pytest.approx(0.5, abs=1e-12)

    def test_static_trajectory(self):
        out = boost_worldline(line_traj(0.0), 0.5)
        mid = out.times.size // 2
        assert out.points[mid, 0] / out.times[mid] == pytest.approx(-0.5, abs=1e-12)

    def test_superluminal_rejected(self):
        # u v > 1 makes the reparameterization non-monotone.
        with pytest.raises(InvalidInputError):
            boost_worldline(line_traj(1.5), 0.8)

    def test_reparameterization_increments(self):
        traj = line_traj(0.9)
        u, gamma = 0.6, 1.0 / np.sqrt(1 - 0.36)
        rep = Reparameterization(
            traj.times, gamma * (traj.times - u * traj.points[:, 0]), u, gamma
        )
        bound = gamma - gamma * abs(u) * 0.9
        assert rep.min_increment_ratio() >= bound - 1e-12

    def test_worldline_preserved(self):
        rng = np.random.default_rng(14)
        times, pts = random_worldline_polyline(rng, dim=3)
        traj = SampledTrajectory(times, pts, 1, 3)
        assert validate_worldline(traj).is_worldline
        out = boost_worldline(traj, 0.6)
        assert validate_worldline(out).is_worldline

    def test_round_trip_exact_on_polylines(self):
        rng = np.random.default_rng(15)
        times, pts = random_worldline_polyline(rng, dim=2)
        traj = SampledTrajectory(times, pts, 1, 2)
        back = boost_worldline(boost_worldline(traj, 0.45), -0.45)
        inside = (times >= back.times[0]) & (times <= back.times[-1])
        for t in times[inside]:
            np.testing.assert_allclose(back.position_at(t), traj.position_at(t), atol=1e-9)

    def test_multi_particle_independent_reparameterization(self):
        # Two particles at different positions: simultaneity mixes their
        # old times, but each straight line boosts to the exact line.
        t = np.linspace(0.0, 10.0, 41)
        pts = np.stack([0.5 * t, -0.2 * t + 3.0], axis=1)
        traj = SampledTrajectory(t, pts, 2, 1)
        out = boost_worldline(traj, 0.3)
        s = out.times
        v1 = boost_velocity_1d(0.5, 0.3)
        v2 = boost_velocity_1d(-0.2, 0.3)
        slope1 = (out.points[-1, 0] - out.points[0, 0]) / (s[-1] - s[0])
        slope2 = (out.points[-1, 1] - out.points[0, 1]) / (s[-1] - s[0])
        assert slope1 == pytest.approx(v1, abs=1e-12)
        assert slope2 == pytest.approx(v2, abs=1e-12)


class TestTransformVelocity:
    def test_comoving_frame(self):
        v = transform_velocity(VelocityPoint(np.array([0.5])), PoincareElement.boost(0.5, 0, 1))
        assert v.v[0] == pytest.approx(0.0, abs=1e-15)

    def test_transverse_boost_value(self):
        g = PoincareElement.boost(0.8, 0, 3)
        v = transform_velocity(VelocityPoint(np.array([0.0, 0.6, 0.0])), g)
        np.testing.assert_allclose(v.v, [-0.8, 0.36, 0.0], atol=1e-12)

    def test_lightlike_preserved(self):
        g = PoincareElement.boost(0.8, 0, 3)
        v = transform_velocity(VelocityPoint(np.array([1.0, 0.0, 0.0])), g)
        assert np.linalg.norm(v.v) == pytest.approx(1.0, abs=1e-12)

    def test_rotation_acts_as_rotation(self):
        g = PoincareElement.plane_rotation(np.pi / 2.0, 2)
        v = transform_velocity(VelocityPoint(np.array([0.3, 0.0])), g)
        np.testing.assert_allclose(v.v, [0.0, 0.3], atol=1e-12)

    def test_translation_acts_trivially(self):
        g = PoincareElement.translation(5.0, [2.0], dim=1)
        v = transform_velocity(VelocityPoint(np.array([0.7])), g)
        assert v.v[0] == pytest.approx(0.7, abs=1e-15)

    def test_multi_particle_blocks(self):
        g = PoincareElement.boost(0.5, 0, 1)
        block = np.array([[0.5, -0.5]])
        out = transform_velocity_block(block, g)
        np.testing.assert_allclose(
            out[0], [0.0, boost_velocity_1d(-0.5, 0.5)], atol=1e-14
        )


@given(
    v=st.floats(-0.95, 0.95),
    u1=st.floats(-0.9, 0.9),
    u2=st.floats(-0.9, 0.9),
)
@settings(max_examples=80, deadline=None)
def test_velocity_group_composition_collinear(v, u1, u2):
    g1 = PoincareElement.boost(u1, 0, 1)
    g2 = PoincareElement.boost(u2, 0, 1)
    vp = VelocityPoint(np.array([v]))
    seq = transform_velocity(transform_velocity(vp, g2), g1)
    comp = transform_velocity(vp, g1.compose(g2))
    np.testing.assert_allclose(seq.v, comp.v, atol=1e-12)


@given(
    vx=st.floats(-0.7, 0.7),
    vy=st.floats(-0.7, 0.7),
    u=st.floats(-0.9, 0.9),
    angle=st.floats(-np.pi, np.pi),
)
@settings(max_examples=80, deadline=None)
def test_velocity_group_composition_boost_rotation(vx, vy, u, angle):
    speed = np.hypot(vx, vy)
    if speed >= 0.999:
        return
    g1 = PoincareElement.boost(u, 0, 2)
    g2 = PoincareElement.plane_rotation(angle, 2)
    vp = VelocityPoint(np.array([vx, vy]))
    seq = transform_velocity(transform_velocity(vp, g2), g1)
    comp = transform_velocity(vp, g1.compose(g2))
    np.testing.assert_allclose(seq.v, comp.v, atol=1e-12)


@given(vx=st.floats(-1.0, 1.0), u=st.floats(-0.95, 0.95))
@settings(max_examples=80, deadline=None)
def test_unit_ball_invariance(vx, u):
    g = PoincareElement.boost(u, 0, 1)
    v = transform_velocity(VelocityPoint(np.array([vx])), g)
    assert abs(v.v[0]) <= 1.0 + 1e-12


class TestBoostVelocityConsistency:
    def test_straight_line_exact_in_range(self):
        t = np.linspace(0.0, 40.0, 81)
        traj = SampledTrajectory(t, (0.6 * t + 1.0)[:, None], 1, 1)
        ok, residual = check_boost_velocity_consistency(
            traj, PoincareElement.boost(0.3, 0, 1), [10.0, 20.0, 40.0], 1e-9
        )
        assert ok
        assert residual < 1e-12

    def test_free_gaussian_path(self):
        from oracles import free_gaussian_trajectory

        t = np.concatenate([[0.0], np.geomspace(0.25, 40.0, 600)])
        x = free_gaussian_trajectory(1.0, t)
        traj = SampledTrajectory(t, x[:, None], 1, 1)
        ok, residual = check_boost_velocity_consistency(
            traj, PoincareElement.boost(0.3, 0, 1), [10.0, 20.0, 40.0], 5e-3
        )
        assert ok
        assert residual < 5e-3

    def test_random_polylines_pass(self):
        rng = np.random.default_rng(16)
        for _ in range(10):
            times, pts = random_worldline_polyline(rng, dim=3)
            traj = SampledTrajectory(times, pts, 1, 3)
            ok, residual = check_boost_velocity_consistency(
                traj, PoincareElement.boost(0.4, 0, 3), [40.0, 80.0, 160.0], 1e-2
            )
            assert ok, residual


@pytest.fixture(scope="module")
def state():
    spec = GridSpec.line(2048, -128.0, 128.0)
    psi, _ = project_positive_energy(gaussian_packet(spec, 1.0, 0.0, 0.0, 4.0, kind="dirac"))
    return psi


class TestBoostDiracState:
    def test_identity(self, state):
        out = boost_dirac_state(state, 0.0)
        np.testing.assert_array_equal(out.amplitudes, state.amplitudes)

    def test_unitary(self, state):
        out = boost_dirac_state(state, 0.35)
        assert out.norm() == pytest.approx(1.0, abs=1e-9)

    def test_drift_matches_velocity_addition(self, state):
        u = 0.3
        out = boost_dirac_state(state, u)
        moved = evolve_dirac(out, 10.0)
        x = state.spec.axis(0)
        dx = state.spec.dx[0]
        drift = (np.sum(x * moved.density()) - np.sum(x * out.density())) * dx / 10.0
        # Exact oracle: the mean of the boosted state's own velocity
        # distribution; for this narrow packet it is close to -u.
        q = dirac_velocity_distribution(out)
        assert drift == pytest.approx(q.mean(), abs=1e-3)
        assert drift == pytest.approx(-u, abs=6e-3)

    def test_distribution_is_velocity_addition_pushforward(self, state):
        u = 0.3
        out = boost_dirac_state(state, u)
        q_base = dirac_velocity_distribution(state)
        q_boost = dirac_velocity_distribution(out)
        n = 100_000
        pushed = boost_velocity_1d(q_base.sample(n, 71)[:, 0], u)
        direct = q_boost.sample(n, 72)[:, 0]
        w = np.full(n, 1.0 / n)
        assert ks_two_sample_1d(pushed, w, direct, w) < 0.01

    def test_negative_energy_component_rejected(self, state):
        spec = state.spec
        raw = gaussian_packet(spec, 1.0, 0.0, 0.0, 4.0, kind="dirac")
        with pytest.raises(InvalidInputError):
            boost_dirac_state(raw, 0.3)

    def test_unrepresentable_boost_rejected(self):
        # A tight grid cannot hold the blue-shifted momentum support.
        spec = GridSpec.line(64, -16.0, 16.0)
        psi, _ = project_positive_energy(gaussian_packet(spec, 1.0, 0.0, 2.2, 1.0, kind="dirac"))
        with pytest.raises(ConfigurationError):
            boost_dirac_state(psi, -0.9)


@given(v=st.floats(-0.99, 0.99), u=st.floats(-0.9, 0.9))
@settings(max_examples=60, deadline=None)
def test_boosted_straight_worldline_stays_worldline(v, u):
    traj = line_traj(v)
    assert validate_worldline(traj).is_worldline
    out = boost_worldline(traj, u)
    assert validate_worldline(out).is_worldline


@pytest.fixture(scope="module")
def small_setup():
    from bohmvel.pipeline import PipelineParams, run_guided_pipeline
    from bohmvel.wavefunction import PotentialSpec

    spec = GridSpec.line(1024, -128.0, 128.0)
    psi, _ = project_positive_energy(gaussian_packet(spec, 1.0, 0.0, 0.75, 1.0, kind="dirac"))
    params = PipelineParams(
        n_trajectories=1500, t_max=40.0, dt=0.05,
        checkpoints=(10.0, 20.0, 40.0), record_times=(0.0, 10.0, 20.0, 40.0), seed=99,
    )
    base = run_guided_pipeline(psi, PotentialSpec.none(), params)
    return psi, params, base


class TestCovarianceMachinery:
    """Small-n sanity runs of the full covariance machinery; the full-scale
    verdicts live in the acceptance suite."""

    def test_identity_sweep_single_zero_entry(self, small_setup):
        from bohmvel.relativity import foliation_sweep

        psi, params, base = small_setup
        sweep = foliation_sweep(
            psi, [PoincareElement.identity(1)], params, base=base, ks_threshold=0.05
        )
        assert sweep["ks_matrix"].shape == (1, 1)
        assert sweep["ks_matrix"][0, 0] == 0.0
        assert sweep["pass"]

    def test_negative_control_untransported_measure_fails(self, small_setup):
        from bohmvel.pipeline import run_guided_pipeline
        from bohmvel.wavefunction import PotentialSpec
        from bohmvel.stats import ks_distance

        psi, params, base = small_setup
        u = 0.3
        boosted = run_guided_pipeline(
            boost_dirac_state(psi, u), PotentialSpec.none(), params.with_run_key(7)
        )
        # Skipping the velocity transport leaves the two ensembles a full
        # velocity-addition shift apart.
        raw_ks = float(np.max(ks_distance(base.s_plus, boosted.s_plus)))
        assert raw_ks > 0.2

    def test_verify_boost_covariance_small(self, small_setup):
        from bohmvel.relativity import verify_boost_covariance

        psi, params, base = small_setup
        rep = verify_boost_covariance(psi, 0.2, params, base=base, run_key=3, ks_threshold=0.08)
        assert rep["pass"]
        assert rep["ks"] < 0.08
