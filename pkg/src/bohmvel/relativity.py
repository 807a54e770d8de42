"""Poincare action on world lines and velocities, boosts of spinor
states, and the covariance experiments.

A boost of velocity u along an axis maps the graph of a world line k to
the graph of another world line gk through the reparameterization
s(t) = gamma (t - u k_x(t)), which is strictly increasing whenever k is
causal; gk is read off the graph at the new time nodes. Velocities
transform by lifting to future-directed four-vectors (1, v), applying
the Lorentz matrix, and dividing out the time component, which reduces
to the familiar addition law (v - u) / (1 - u v) for collinear motion.

Multi-particle trajectories transform particle by particle, each with
its own reparameterization: simultaneity in the new frame mixes old
times across particles.

Positive-energy Dirac states boost in momentum space: the scalar
amplitude rides along p -> gamma (p - u E(p)) with the covariant
normalization sqrt(E/E') that keeps the map unitary, and the spinor is
re-attached as the positive-energy eigenvector at the new momentum (the
massive 1+1D little group is trivial, so no extra phase appears).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._interp import cubic_interp_uniform
from .core import PoincareElement, SampledTrajectory, VelocityPoint
from .errors import ConfigurationError, InvalidInputError, RegularityError
from .pipeline import PipelineParams, PipelineResult, run_guided_pipeline
from .stats import ks_distance
from .wavefunction import (
    KIND_DIRAC,
    GridWavefunction,
    PotentialSpec,
    amplitudes_from_momentum,
    momentum_amplitudes,
    positive_energy_spinor,
)
from .asymptotics import estimate_asymptotic_velocity

__all__ = [
    "Reparameterization",
    "FoliationLabel",
    "boost_worldline",
    "transform_velocity",
    "transform_velocity_block",
    "check_boost_velocity_consistency",
    "boost_dirac_state",
    "verify_boost_covariance",
    "foliation_sweep",
]


@dataclass(frozen=True)
class Reparameterization:
    """Sampled monotone map s(t) = gamma (t - u k_x(t)) and its inverse.

    Inversion is linear between samples, the exact inverse under the
    polyline trajectory model; increments are bounded below by
    (gamma - gamma |u| max_speed) dt > 0 for causal input.
    """

    t_samples: np.ndarray
    s_samples: np.ndarray
    u: float
    gamma: float

    def __post_init__(self):
        if np.any(np.diff(self.s_samples) <= 0):
            raise InvalidInputError(
                "reparameterization is not increasing; input is not a world line"
            )

    def s_of_t(self, t) -> np.ndarray:
        return np.interp(t, self.t_samples, self.s_samples)

    def t_of_s(self, s) -> np.ndarray:
        return np.interp(s, self.s_samples, self.t_samples)

    def min_increment_ratio(self) -> float:
        return float(np.min(np.diff(self.s_samples) / np.diff(self.t_samples)))


@dataclass(frozen=True)
class FoliationLabel:
    """Names the flat foliation g^{-1} F_0 used by one pipeline run."""

    g: PoincareElement

    @property
    def name(self) -> str:
        return self.g.label()


def _merge_close(values: np.ndarray, tol: float) -> np.ndarray:
    values = np.sort(values)
    keep = np.concatenate([[True], np.diff(values) > tol])
    return values[keep]


def boost_worldline(
    traj: SampledTrajectory,
    u: float,
    axis: int = 0,
    n_uniform: int | None = None,
) -> SampledTrajectory:
    """Image of a sampled world line under a boost of velocity u.

    The output time grid is a uniform backbone over the reachable s-range
    augmented with the images of the input sample times, so polyline
    kinks survive exactly and a reverse boost returns the input to
    floating-point accuracy. The ends of the s-range not reachable from
    every particle's sampled span are trimmed.
    """
    if not -1.0 < u < 1.0:
        raise InvalidInputError("boost speed must satisfy |u| < 1")
    if not 0 <= axis < traj.dim:
        raise InvalidInputError(f"axis {axis} out of range for dim {traj.dim}")
    gamma = 1.0 / np.sqrt(1.0 - u * u)
    times = traj.times
    blocks = traj.points.reshape(times.size, traj.n_particles, traj.dim)
    reparams = [
        Reparameterization(times, gamma * (times - u * blocks[:, i, axis]), u, gamma)
        for i in range(traj.n_particles)
    ]
    s_lo = max(r.s_samples[0] for r in reparams)
    s_hi = min(r.s_samples[-1] for r in reparams)
    if not s_hi > s_lo:
        raise InvalidInputError("boosted sample ranges of the particles do not overlap")
    if n_uniform is None:
        n_uniform = 2 * times.size
    nodes = np.linspace(s_lo, s_hi, n_uniform)
    for r in reparams:
        inside = r.s_samples[(r.s_samples >= s_lo) & (r.s_samples <= s_hi)]
        nodes = np.concatenate([nodes, inside])
    nodes = _merge_close(nodes, 1e-12 * max(1.0, s_hi - s_lo))

    out = np.empty((nodes.size, traj.n_particles, traj.dim))
    for i, r in enumerate(reparams):
        t_back = r.t_of_s(nodes)
        for a in range(traj.dim):
            coord = np.interp(t_back, times, blocks[:, i, a])
            out[:, i, a] = gamma * (coord - u * t_back) if a == axis else coord
    return SampledTrajectory(
        nodes, out.reshape(nodes.size, -1), traj.n_particles, traj.dim
    )


def transform_velocity_block(samples: np.ndarray, g: PoincareElement) -> np.ndarray:
    """Velocity transform applied to (n, N*d) sample blocks, per particle."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    d = g.dim
    if samples.shape[1] % d != 0:
        raise InvalidInputError("sample width is not a multiple of the spatial dimension")
    lam = g.lorentz_matrix()
    out = np.empty_like(samples)
    for i in range(samples.shape[1] // d):
        block = samples[:, i * d : (i + 1) * d]
        four = np.concatenate([np.ones((block.shape[0], 1)), block], axis=1) @ lam.T
        out[:, i * d : (i + 1) * d] = four[:, 1:] / four[:, :1]
    return out


def transform_velocity(v: VelocityPoint, g: PoincareElement) -> VelocityPoint:
    """Relativistic velocity transformation (translations act trivially)."""
    return VelocityPoint(transform_velocity_block(v.v[None, :], g)[0])


def check_boost_velocity_consistency(
    traj: SampledTrajectory,
    g: PoincareElement,
    checkpoints,
    tol: float,
    fit_tol: float = 0.05,
) -> tuple[bool, float]:
    """Does boosting commute with taking the limiting velocity?

    Compares the extrapolated velocity of the boosted trajectory (at the
    images of the checkpoints) against the transformed extrapolated
    velocity of the original. Returns (pass, residual).
    """
    u_vec = g.boost_velocity
    nz = np.flatnonzero(u_vec)
    if nz.size > 1 or not np.allclose(g.rotation, np.eye(g.dim)):
        raise InvalidInputError("consistency check supports single-axis boosts")
    axis = int(nz[0]) if nz.size else 0
    u = float(u_vec[axis]) if nz.size else 0.0
    checkpoints = np.asarray(checkpoints, dtype=float)

    est = estimate_asymptotic_velocity(traj, checkpoints, fit_tol)
    expected = transform_velocity(est.v_plus, g)

    boosted = boost_worldline(traj, u, axis)
    gamma = 1.0 / np.sqrt(1.0 - u * u)
    blocks = traj.points.reshape(traj.times.size, traj.n_particles, traj.dim)
    # Checkpoint ladder in boosted time: anchor the last checkpoint at its
    # image and keep the original geometric ratios (the raw images can
    # compress below the factor-4 span the extrapolation requires).
    s_last = gamma * (
        checkpoints[-1]
        - u * float(np.interp(checkpoints[-1], traj.times, blocks[:, 0, axis]))
    )
    s_check = s_last * checkpoints / checkpoints[-1]
    est_boosted = estimate_asymptotic_velocity(boosted, s_check, fit_tol)

    residual = float(np.linalg.norm(est_boosted.v_plus.v - expected.v))
    return residual <= tol, residual


_NEG_ENERGY_TOL = 1e-6


def boost_dirac_state(psi: GridWavefunction, u: float) -> GridWavefunction:
    """Boost a positive-energy Dirac state by velocity u along x.

    Momentum-space implementation: the scalar positive-energy amplitude
    at p' is sqrt(E(p)/E(p')) times the amplitude at p = gamma (p' + u E(p')),
    re-attached to the positive-energy spinor at p'. The packet's mean
    position is factored out of the amplitude before interpolation so the
    transported phase is handled analytically. Unitary up to interpolation
    error; the result is renormalized and must land within 1e-4 of unit
    norm, otherwise the grid cannot contain the boosted support.
    """
    if psi.kind != KIND_DIRAC:
        raise InvalidInputError("boost_dirac_state needs a Dirac state")
    if not -1.0 < u < 1.0:
        raise InvalidInputError("|u| < 1 required")
    if u == 0.0:
        return psi.with_amplitudes(psi.amplitudes.copy())
    spec = psi.spec
    m = psi.mass
    gamma = 1.0 / np.sqrt(1.0 - u * u)

    p_raw = spec.momentum_axis(0)
    psi_hat = momentum_amplitudes(psi)
    u_spinor = positive_energy_spinor(p_raw, m)
    amp = np.conj(u_spinor[0]) * psi_hat[0] + np.conj(u_spinor[1]) * psi_hat[1]
    dp = spec.momentum_cell_volume
    total = float(np.sum(np.abs(psi_hat) ** 2) * dp)
    kept = float(np.sum(np.abs(amp) ** 2) * dp)
    if total - kept > _NEG_ENERGY_TOL:
        raise InvalidInputError(
            f"state carries negative-energy weight {total - kept:.2e}; project first"
        )

    order = np.argsort(p_raw)
    p_sorted = p_raw[order]
    amp_sorted = amp[order]
    x_ref = float(
        np.sum(spec.axis(0) * psi.density()) * spec.cell_volume
    )
    smooth = amp_sorted * np.exp(1j * p_sorted * x_ref)

    energy_new = np.sqrt(p_sorted**2 + m**2)
    p_src = gamma * (p_sorted + u * energy_new)
    energy_src = np.sqrt(p_src**2 + m**2)
    vals = cubic_interp_uniform(smooth, p_sorted[0], float(p_sorted[1] - p_sorted[0]), p_src)
    vals = np.where((p_src >= p_sorted[0]) & (p_src <= p_sorted[-1]), vals, 0.0)
    amp_new_sorted = np.sqrt(energy_src / energy_new) * vals * np.exp(-1j * p_src * x_ref)

    inv = np.argsort(order)
    amp_new = amp_new_sorted[inv]
    u_new = positive_energy_spinor(p_raw, m)
    psi_hat_new = amp_new[None, :] * u_new
    norm = float(np.sqrt(np.sum(np.abs(psi_hat_new) ** 2) * dp))
    if abs(norm - 1.0) > 1e-4:
        raise ConfigurationError(
            f"boosted support not representable on this grid (norm {norm:.6f})"
        )
    amps = amplitudes_from_momentum(spec, psi_hat_new / norm)
    return psi.with_amplitudes(amps, t=0.0)


def _boost_speed_of(g: PoincareElement) -> float:
    if not np.allclose(g.rotation, np.eye(g.dim)):
        raise InvalidInputError("Dirac covariance runs support pure boosts (1+1D)")
    if g.dim != 1:
        raise InvalidInputError("Dirac covariance runs are 1+1 dimensional")
    return float(g.boost_velocity[0])


def verify_boost_covariance(
    psi: GridWavefunction,
    g: PoincareElement | float,
    params: PipelineParams,
    base: PipelineResult | None = None,
    run_key: int = 1,
    ks_threshold: float = 0.03,
) -> dict:
    """Compare the transported asymptotic measure of psi against the
    asymptotic measure of the boosted state.

    Both pipeline runs must hold their regularity verdicts, otherwise the
    experiment is invalid and a RegularityError propagates. Returns the
    KS distance between the two velocity ensembles and the verdict.
    """
    if not isinstance(g, PoincareElement):
        g = PoincareElement.boost(float(g), 0, 1)
    u = _boost_speed_of(g)
    if base is None:
        base = run_guided_pipeline(psi, PotentialSpec.none(), params)
    if not base.regularity.verdict:
        raise RegularityError("base run failed the regularity verdict", base.regularity)
    transported = base.s_plus.transport(lambda s: transform_velocity_block(s, g))

    psi_boosted = boost_dirac_state(psi, u)
    boosted = run_guided_pipeline(
        psi_boosted, PotentialSpec.none(), params.with_run_key(run_key)
    )
    if not boosted.regularity.verdict:
        raise RegularityError("boosted run failed the regularity verdict", boosted.regularity)

    ks = float(np.max(ks_distance(transported, boosted.s_plus)))
    return {
        "u": u,
        "ks": ks,
        "pass": bool(ks <= ks_threshold),
        "ks_threshold": ks_threshold,
        "base_regularity": base.regularity.to_dict(),
        "boosted_regularity": boosted.regularity.to_dict(),
        "transported_measure": transported,
        "boosted_measure": boosted.s_plus,
    }


def foliation_sweep(
    psi: GridWavefunction,
    g_list: list[PoincareElement],
    params: PipelineParams,
    workers: int = 1,
    ks_threshold: float = 0.03,
    base: PipelineResult | None = None,
) -> dict:
    """Asymptotic measures of the foliations g^{-1} F_0, transported back
    to the lab frame, compared pairwise.

    For each g the pipeline runs on the boosted state and the resulting
    measure is pushed through g^{-1}; foliation independence predicts all
    pairwise KS distances at sampling-noise scale.
    """
    labels = [FoliationLabel(g).name for g in g_list]

    def one(idx_g):
        idx, g = idx_g
        u = _boost_speed_of(g)
        if u == 0.0:
            res = base if base is not None else run_guided_pipeline(
                psi, PotentialSpec.none(), params
            )
        else:
            res = run_guided_pipeline(
                boost_dirac_state(psi, u), PotentialSpec.none(), params.with_run_key(100 + idx)
            )
        if not res.regularity.verdict:
            raise RegularityError(
                f"foliation {labels[idx]} failed the regularity verdict", res.regularity
            )
        g_inv = g.inverse()
        return res.s_plus.transport(lambda s: transform_velocity_block(s, g_inv)), res.regularity

    items = list(enumerate(g_list))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, items))
    else:
        outcomes = [one(it) for it in items]
    measures = [m for m, _ in outcomes]
    reports = [r.to_dict() for _, r in outcomes]

    n = len(measures)
    matrix = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.max(ks_distance(measures[i], measures[j])))
            matrix[i, j] = matrix[j, i] = d
    passed = bool(np.all(matrix <= ks_threshold))
    return {
        "labels": labels,
        "ks_matrix": matrix,
        "pass": passed,
        "ks_threshold": ks_threshold,
        "regularity": reports,
        "measures": measures,
    }
