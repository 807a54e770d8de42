"""End-to-end ensemble pipeline shared by the CLI and the covariance
experiments: sample from |psi_0|^2, integrate the guided ensemble,
extrapolate the asymptotic velocity measure, and keep the regularity
bookkeeping together.

All randomness flows from one root seed through numpy SeedSequence
spawn keys: (run_key, 0) draws the initial configurations, (run_key, 1)
feeds quantum-side samplers. Distinct runs inside one experiment get
distinct run keys, so results are reproducible and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .asymptotics import (
    FIT_AFFINE,
    RegularityReport,
    estimate_asymptotic_measure,
)
from .core import EmpiricalMeasure
from .errors import RegularityError
from .guidance import (
    FAILED_WEIGHT_LIMIT,
    IntegrationResult,
    NodePolicy,
    integrate_ensemble,
    sample_initial,
)
from .wavefunction import GridWavefunction, PotentialSpec

__all__ = ["PipelineParams", "PipelineResult", "run_guided_pipeline", "child_seed"]


def child_seed(root_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(root_seed), spawn_key=tuple(int(k) for k in key))


@dataclass(frozen=True)
class PipelineParams:
    """Knobs of one ensemble run; record times default to a ladder under
    t_max and checkpoints to the geometric tail {t/4, t/2, t}."""

    n_trajectories: int = 10_000
    t_max: float = 40.0
    dt: float = 0.05
    record_times: tuple[float, ...] | None = None
    checkpoints: tuple[float, ...] | None = None
    eta_tol: float = 0.05
    fit_method: str = FIT_AFFINE
    rho_floor: float = 1e-12
    dt_min: float = 1e-4
    node_action: str = "shrink_dt"
    seed: int = 0
    run_key: int = 0

    def __post_init__(self):
        if self.checkpoints is None:
            object.__setattr__(
                self, "checkpoints", (self.t_max / 4.0, self.t_max / 2.0, self.t_max)
            )
        if self.record_times is None:
            ladder = sorted({0.0, self.t_max / 8.0, *self.checkpoints})
            object.__setattr__(self, "record_times", tuple(ladder))
        missing = [c for c in self.checkpoints if c not in self.record_times]
        if missing:
            object.__setattr__(
                self, "record_times", tuple(sorted({*self.record_times, *missing}))
            )

    def with_run_key(self, run_key: int) -> "PipelineParams":
        return replace(self, run_key=run_key)

    def policy(self) -> NodePolicy:
        return NodePolicy(self.rho_floor, self.dt_min, self.node_action)

    def to_dict(self) -> dict:
        return {
            "n_trajectories": self.n_trajectories,
            "t_max": self.t_max,
            "dt": self.dt,
            "record_times": list(self.record_times),
            "checkpoints": list(self.checkpoints),
            "eta_tol": self.eta_tol,
            "fit_method": self.fit_method,
            "rho_floor": self.rho_floor,
            "dt_min": self.dt_min,
            "node_action": self.node_action,
            "seed": self.seed,
            "run_key": self.run_key,
        }


@dataclass
class PipelineResult:
    """One run's asymptotic measure with its provenance."""

    psi0: GridWavefunction
    s_plus: EmpiricalMeasure
    regularity: RegularityReport
    integration: IntegrationResult
    params: PipelineParams

    @property
    def failed_weight(self) -> float:
        return self.integration.diagnostics.failed_weight


def run_guided_pipeline(
    psi0: GridWavefunction,
    potential: PotentialSpec,
    params: PipelineParams,
) -> PipelineResult:
    """Sample, integrate, and extrapolate one ensemble.

    Raises RegularityError when the aborted-trajectory weight exceeds the
    0.1% validity limit; the convergence verdict itself is left to the
    caller (some experiments only need the report).
    """
    starts = sample_initial(
        psi0, params.n_trajectories, child_seed(params.seed, params.run_key, 0)
    )
    integration = integrate_ensemble(
        psi0,
        potential,
        starts,
        np.asarray(params.record_times, dtype=float),
        params.policy(),
        dt=params.dt,
    )
    if integration.diagnostics.failed_weight > FAILED_WEIGHT_LIMIT:
        raise RegularityError(
            f"failed-trajectory weight {integration.diagnostics.failed_weight:.2%} "
            f"exceeds the {FAILED_WEIGHT_LIMIT:.1%} validity limit"
        )
    s_plus, report = estimate_asymptotic_measure(
        integration,
        np.asarray(params.checkpoints, dtype=float),
        params.eta_tol,
        params.fit_method,
    )
    return PipelineResult(psi0, s_plus, report, integration, params)
