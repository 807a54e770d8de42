"""Asymptotic velocities of trajectory ensembles and of quantum states.

Trajectory side: the finite-time estimates k(t)/t at a geometric ladder
of checkpoints are extrapolated with an affine-in-1/t fit, justified by
the free-dynamics expansion k(t) = v t + c + o(1); the fit residual at
the last two checkpoints is the convergence measure, and trajectories
above tolerance are excluded with recorded weight.

Quantum side: velocity distributions derived from momentum densities,
q(v) = m |psi_hat(m v)|^2 for Schrodinger states (free or via the
outgoing asymptote, with a point mass at v = 0 for the bound part) and
the pushforward of |psi_hat(p)|^2 through v(p) = p / sqrt(p^2 + m^2) for
positive-energy Dirac states.

The rotating family k_v(t) = R(axis, omega t) v t is the stock example
of an ensemble whose instantaneous velocity distribution is stationary
while no single trajectory has a limiting velocity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmpiricalMeasure, SampledTrajectory, VelocityPoint
from .errors import InvalidInputError, RegularityError
from .stats import (
    ks_critical_value,
    ks_two_sample_1d,
    test_function_dictionary,
    test_function_integrals,
    wasserstein1_1d,
    GRID_SLACK,
)
from .wavefunction import (
    KIND_DIRAC,
    KIND_SCHRODINGER,
    GridWavefunction,
    OutgoingAsymptote,
    momentum_density,
)

__all__ = [
    "AsymptoticEstimate",
    "RegularityReport",
    "VelocityDistribution",
    "estimate_asymptotic_velocity",
    "estimate_asymptotic_measure",
    "velocity_measure_at",
    "free_velocity_distribution",
    "scattering_velocity_distribution",
    "dirac_velocity_distribution",
    "verify_distribution_equality",
    "weak_convergence_residuals",
    "rotating_trajectory_family",
    "FIT_AFFINE",
    "FIT_LAST_POINT",
]

FIT_AFFINE = "affine_in_inverse_time"
FIT_LAST_POINT = "last_point"

# The convergence residual is measured at this many trailing checkpoints.
_TAIL_CHECKPOINTS = 2

REGULARITY_FRACTION = 0.999
HARD_FAILURE_FRACTION = 0.5


@dataclass(frozen=True)
class AsymptoticEstimate:
    """Extrapolated limiting velocity of one trajectory."""

    v_plus: VelocityPoint
    convergence_residual: float
    fit_method: str

    def converged(self, tol: float) -> bool:
        return self.convergence_residual <= tol


@dataclass(frozen=True)
class RegularityReport:
    """Ensemble-level convergence bookkeeping for the limiting velocities."""

    fraction_converged: float
    residual_quantiles: dict
    verdict: bool
    n_total: int
    n_converged: int

    def to_dict(self) -> dict:
        return {
            "fraction_converged": self.fraction_converged,
            "residual_quantiles": self.residual_quantiles,
            "verdict": self.verdict,
            "n_total": self.n_total,
            "n_converged": self.n_converged,
        }


def _validate_checkpoints(checkpoints: np.ndarray, fit_method: str) -> None:
    if np.any(checkpoints <= 0) or np.any(np.diff(checkpoints) <= 0):
        raise InvalidInputError("checkpoints must be positive and increasing")
    if fit_method == FIT_AFFINE:
        if checkpoints.size < 3:
            raise InvalidInputError("affine fit needs at least 3 checkpoints")
        if checkpoints[-1] / checkpoints[0] < 4.0 - 1e-9:
            raise InvalidInputError("checkpoints must span a factor >= 4 in time")
    elif fit_method == FIT_LAST_POINT:
        if checkpoints.size < 2:
            raise InvalidInputError("last-point mode needs at least 2 checkpoints")
    else:
        raise InvalidInputError(f"unknown fit method {fit_method!r}")


def _eta_block(trajs, checkpoints: np.ndarray) -> np.ndarray:
    """Stack k(t)/t over the ensemble: shape (n_traj, n_cp, D).

    Fast path when all trajectories share one time grid (the integrator
    output); otherwise interpolates each polyline individually.
    """
    if hasattr(trajs, "positions"):
        times = trajs.times
        pos = trajs.positions[~trajs.diagnostics.failed]
        shared = True
    else:
        trajs = list(trajs)
        times = trajs[0].times
        shared = all(
            t.times.shape == times.shape and np.array_equal(t.times, times) for t in trajs
        )
        pos = np.stack([t.points for t in trajs]) if shared else None
    if shared:
        if checkpoints[0] < times[0] - 1e-12 or checkpoints[-1] > times[-1] + 1e-12:
            raise InvalidInputError("checkpoints outside the recorded time range")
        idx = np.searchsorted(times, checkpoints, side="right") - 1
        idx = np.clip(idx, 0, times.size - 2)
        t0 = times[idx]
        t1 = times[idx + 1]
        w = np.where(t1 > t0, (checkpoints - t0) / (t1 - t0), 0.0)
        interp = (1.0 - w)[None, :, None] * pos[:, idx, :] + w[None, :, None] * pos[:, idx + 1, :]
        return interp / checkpoints[None, :, None]
    rows = []
    for tr in trajs:
        rows.append(np.stack([tr.position_at(c) / c for c in checkpoints]))
    return np.stack(rows)


def _fit_eta(eta: np.ndarray, checkpoints: np.ndarray, fit_method: str):
    """Returns (v_plus (n, D), residual (n,))."""
    if fit_method == FIT_AFFINE:
        design = np.stack([np.ones_like(checkpoints), 1.0 / checkpoints], axis=1)
        pinv = np.linalg.pinv(design)
        coef = np.einsum("kc,ncd->nkd", pinv, eta)
        fit = np.einsum("ck,nkd->ncd", design, coef)
        dev = np.linalg.norm(eta - fit, axis=2)
        v_plus = coef[:, 0, :]
    else:
        v_plus = eta[:, -1, :]
        dev = np.linalg.norm(eta - v_plus[:, None, :], axis=2)
    residual = np.max(dev[:, -_TAIL_CHECKPOINTS:], axis=1)
    return v_plus, residual


def estimate_asymptotic_velocity(
    traj: SampledTrajectory,
    checkpoints,
    tol: float,
    fit_method: str = FIT_AFFINE,
) -> AsymptoticEstimate:
    """Limiting velocity of one trajectory from its checkpoint ladder."""
    checkpoints = np.asarray(checkpoints, dtype=float)
    _validate_checkpoints(checkpoints, fit_method)
    eta = _eta_block([traj], checkpoints)
    v_plus, residual = _fit_eta(eta, checkpoints, fit_method)
    return AsymptoticEstimate(VelocityPoint(v_plus[0]), float(residual[0]), fit_method)


def estimate_asymptotic_measure(
    trajs,
    checkpoints,
    tol: float,
    fit_method: str = FIT_AFFINE,
) -> tuple[EmpiricalMeasure, RegularityReport]:
    """Empirical measure of the converged limiting velocities.

    Non-converged trajectories are excluded with their weight recorded in
    the report; a converged fraction below 0.5 is treated as a broken
    experiment and raises.
    """
    checkpoints = np.asarray(checkpoints, dtype=float)
    _validate_checkpoints(checkpoints, fit_method)
    eta = _eta_block(trajs, checkpoints)
    if eta.shape[0] == 0:
        raise InvalidInputError("empty ensemble")
    v_plus, residual = _fit_eta(eta, checkpoints, fit_method)
    converged = residual <= tol
    n_total = eta.shape[0]
    n_conv = int(converged.sum())
    fraction = n_conv / n_total
    quantiles = {
        "q50": float(np.quantile(residual, 0.5)),
        "q90": float(np.quantile(residual, 0.9)),
        "q99": float(np.quantile(residual, 0.99)),
        "max": float(np.max(residual)),
    }
    report = RegularityReport(
        fraction_converged=fraction,
        residual_quantiles=quantiles,
        verdict=bool(fraction >= REGULARITY_FRACTION),
        n_total=n_total,
        n_converged=n_conv,
    )
    if fraction < HARD_FAILURE_FRACTION:
        raise RegularityError(
            f"only {fraction:.1%} of trajectories have limiting velocities; "
            "the experiment setup is inconsistent with asymptotic regularity",
            report=report,
        )
    measure = EmpiricalMeasure.from_samples(v_plus[converged])
    return measure, report


def velocity_measure_at(trajs, t: float) -> EmpiricalMeasure:
    """Instantaneous empirical measure of k(t)/t over the ensemble.

    By construction this equals the pushforward of the position cloud at
    time t through division by t, sample by sample.
    """
    if t <= 0:
        raise InvalidInputError("velocity measures are defined for t > 0")
    eta = _eta_block(trajs, np.asarray([t], dtype=float))
    return EmpiricalMeasure.from_samples(eta[:, 0, :])


@dataclass(frozen=True)
class VelocityDistribution:
    """1D velocity density on a grid plus an optional point mass at v = 0.

    The continuous part is trapezoid-normalized on its (possibly
    non-uniform) grid; sampling inverts the piecewise-linear CDF, which
    is exactly the distribution that ``cdf`` reports.
    """

    v: np.ndarray
    density: np.ndarray
    atom_mass: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        q = np.asarray(self.density, dtype=float)
        if v.ndim != 1 or v.size < 2 or np.any(np.diff(v) <= 0):
            raise InvalidInputError("v grid must be strictly increasing")
        if q.shape != v.shape or np.any(q < 0):
            raise InvalidInputError("density must be nonnegative on the v grid")
        if not 0.0 <= self.atom_mass <= 1.0:
            raise InvalidInputError("atom mass must lie in [0, 1]")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "density", q)

    @property
    def _node_cdf(self) -> np.ndarray:
        cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (self.density[1:] + self.density[:-1]) * np.diff(self.v))]
        )
        return cdf / cdf[-1]

    def total_mass(self) -> float:
        cont = float(np.trapezoid(self.density, self.v))
        return cont + self.atom_mass

    def continuous_mass(self) -> float:
        return float(np.trapezoid(self.density, self.v))

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cont = np.interp(x, self.v, self._node_cdf, left=0.0, right=1.0)
        scale = 1.0 - self.atom_mass
        return scale * cont + self.atom_mass * (x >= 0.0)

    def mean(self) -> float:
        # The continuous part integrates to 1 - atom_mass; the atom sits at 0.
        return float(np.trapezoid(self.v * self.density, self.v))

    def sample(self, n: int, seed) -> np.ndarray:
        """Inverse-CDF draws, shape (n, 1); deterministic under the seed."""
        rng = np.random.default_rng(seed)
        u = rng.random(n)
        out = np.empty(n)
        cdf = self._node_cdf
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        if self.atom_mass > 0:
            is_atom = rng.random(n) < self.atom_mass
            out[is_atom] = 0.0
            out[~is_atom] = np.interp(u[~is_atom], cdf[keep], self.v[keep])
        else:
            out = np.interp(u, cdf[keep], self.v[keep])
        return out[:, None]

    def as_measure(self, n: int, seed) -> EmpiricalMeasure:
        return EmpiricalMeasure.from_samples(self.sample(n, seed))


def free_velocity_distribution(psi0: GridWavefunction, mass: float | None = None) -> VelocityDistribution:
    """Velocity distribution of a free Schrodinger state: q(v) = m |psi_hat(m v)|^2."""
    if psi0.kind != KIND_SCHRODINGER:
        raise InvalidInputError("free velocity distribution needs a Schrodinger state")
    if psi0.spec.dim != 1:
        raise InvalidInputError("velocity distributions are implemented in 1D")
    m = psi0.mass if mass is None else float(mass)
    p, dens = momentum_density(psi0).axis_1d()
    return VelocityDistribution(p / m, dens * m)


def scattering_velocity_distribution(out: OutgoingAsymptote, mass: float) -> VelocityDistribution:
    """Velocity distribution of the outgoing asymptote, with the remaining
    interaction-region weight as a point mass at v = 0."""
    return VelocityDistribution(out.p / mass, out.density * mass, atom_mass=out.bound_weight)


def dirac_velocity_distribution(psi: GridWavefunction) -> VelocityDistribution:
    """Pushforward of the momentum density through v(p) = p / sqrt(p^2 + m^2).

    The Jacobian dp/dv = E^3 / m^2 is applied analytically; the support
    is strictly inside (-1, 1).
    """
    if psi.kind != KIND_DIRAC:
        raise InvalidInputError("expected a Dirac state")
    if psi.mass <= 0:
        raise InvalidInputError("the velocity map needs m > 0")
    p, dens = momentum_density(psi).axis_1d()
    energy = np.sqrt(p**2 + psi.mass**2)
    v = p / energy
    q = dens * energy**3 / psi.mass**2
    return VelocityDistribution(v, q)


def verify_distribution_equality(
    s_measure: EmpiricalMeasure,
    q_dist: VelocityDistribution,
    n_q: int | None = None,
    seed: int = 0,
    ks_threshold: float | None = None,
    w1_threshold: float | None = None,
    alpha: float = 0.01,
    atom_tolerance: float = 0.01,
    atom_radius: float = 1e-3,
) -> dict:
    """Measure-to-measure test of the trajectory ensemble against the
    quantum velocity distribution, via the latter's sampler.

    Point masses at v = 0 are compared by mass within ``atom_tolerance``
    (the ensemble-side mass is read off a small ball of ``atom_radius``).
    """
    if s_measure.dim != 1:
        raise InvalidInputError("distribution comparison is 1D")
    n_s = s_measure.n_samples
    if n_q is None:
        n_q = min(10 * n_s, 200_000)
    q_measure = q_dist.as_measure(n_q, np.random.SeedSequence(entropy=seed, spawn_key=(17,)))
    ks = ks_two_sample_1d(
        s_measure.samples[:, 0], s_measure.weights, q_measure.samples[:, 0], q_measure.weights
    )
    w1 = wasserstein1_1d(s_measure, q_measure)
    if ks_threshold is None:
        ks_threshold = ks_critical_value(n_s, n_q, alpha) + GRID_SLACK
    if w1_threshold is None:
        sigma = float(np.std(q_measure.samples))
        w1_threshold = 2.58 * sigma * np.sqrt(1.0 / n_s + 1.0 / n_q) + GRID_SLACK
    atom_s = float(s_measure.weights[np.abs(s_measure.samples[:, 0]) <= atom_radius].sum())
    atom_q = q_dist.atom_mass
    atoms_match = abs(atom_s - atom_q) <= atom_tolerance if atom_q > 0 else True
    passed = bool(ks <= ks_threshold and w1 <= w1_threshold and atoms_match)
    return {
        "ks": float(ks),
        "w1": float(w1),
        "pass": passed,
        "ks_threshold": float(ks_threshold),
        "w1_threshold": float(w1_threshold),
        "atom_s": atom_s,
        "atom_q": float(atom_q),
        "n_s": n_s,
        "n_q": n_q,
    }


def weak_convergence_residuals(
    trajs,
    t_list,
    reference: EmpiricalMeasure | None = None,
    checkpoints=None,
    tol: float = 0.05,
    dim: int | None = None,
) -> dict:
    """Residuals |int f dS_t - int f dS_ref| for the fixed test-function
    dictionary, per function and per time.

    The reference is, in order of preference: the given measure, the
    ensemble's extrapolated asymptotic measure (when ``checkpoints`` are
    supplied and enough trajectories converge), or the instantaneous
    measure at the last listed time (flagged in the output, useful for
    non-regular families where no asymptotic measure exists).
    """
    t_list = np.asarray(t_list, dtype=float)
    if t_list.size < 3:
        raise InvalidInputError("need at least 3 monitoring times")
    reference_kind = "given"
    if reference is None:
        if checkpoints is not None:
            try:
                reference, _ = estimate_asymptotic_measure(trajs, checkpoints, tol)
                reference_kind = "asymptotic_estimate"
            except RegularityError:
                reference = None
        if reference is None:
            reference = velocity_measure_at(trajs, float(t_list[-1]))
            reference_kind = "final_time"
    dictionary = test_function_dictionary(reference.dim if dim is None else dim)
    ref_vals = test_function_integrals(reference, dictionary)
    rows = []
    for t in t_list:
        vals = test_function_integrals(velocity_measure_at(trajs, float(t)), dictionary)
        rows.append(np.abs(vals - ref_vals))
    return {
        "times": t_list,
        "names": [name for name, _ in dictionary],
        "residuals": np.stack(rows, axis=1),
        "reference_kind": reference_kind,
    }


def _rodrigues(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotation matrices about ``axis`` for each angle, shape (T, 3, 3)."""
    k = axis / np.linalg.norm(axis)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    eye = np.eye(3)
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    return c * eye + s * kx + (1 - c) * np.outer(k, k)


def rotating_trajectory_family(
    omega: float,
    axis,
    n_samples: int,
    seed: int,
    dim: int = 3,
    t_grid=None,
) -> list[SampledTrajectory]:
    """Trajectories R(axis, omega t) v t with v uniform on the unit sphere.

    Every k(t)/t has unit norm, so the instantaneous velocity measure is
    the uniform sphere measure at all times, yet for omega != 0 no
    trajectory (off the rotation axis) has a limiting velocity. dim=2
    rotates in the plane, where the rotation has no fixed directions and
    the non-convergence is uniform over the family. omega = 0 degenerates
    to straight lines (every trajectory converges), kept as a control.
    """
    if dim not in (2, 3):
        raise InvalidInputError("the rotating family needs dim 2 or 3")
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    if t_grid is None:
        t_grid = np.array([0.0, 2.5, 5.0, 10.0, 20.0, 40.0])
    t_grid = np.asarray(t_grid, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    raw = rng.normal(size=(n_samples, dim))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    angles = omega * t_grid
    if dim == 3:
        rot = _rodrigues(np.asarray(axis, dtype=float), angles)
    else:
        c, s = np.cos(angles), np.sin(angles)
        rot = np.empty((t_grid.size, 2, 2))
        rot[:, 0, 0] = c
        rot[:, 0, 1] = -s
        rot[:, 1, 0] = s
        rot[:, 1, 1] = c
    # positions[n, t, :] = R(omega t) v_n * t
    pos = np.einsum("tij,nj->nti", rot, raw) * t_grid[None, :, None]
    return [SampledTrajectory(t_grid, pos[i], 1, dim) for i in range(n_samples)]
