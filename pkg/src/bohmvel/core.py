"""Shared domain types for trajectory ensembles and velocity measures.

Conventions used everywhere in this package:

* natural units, hbar = c = 1; masses are order unity,
* a configuration of N particles in d spatial dimensions is a flat real
  vector of length N*d (particle i occupies the slice [i*d, (i+1)*d)),
* trajectories are non-uniform polylines with linear interpolation
  between samples; no higher-order dense output is attempted,
* empirical measures are weighted sample clouds over velocity space.

Everything here is immutable after construction and safe to share
read-only across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import DomainError, InvalidInputError

__all__ = [
    "Configuration",
    "SampledTrajectory",
    "WorldLineFlag",
    "VelocityPoint",
    "EmpiricalMeasure",
    "PoincareElement",
    "EnsembleRun",
    "validate_worldline",
    "velocity_estimate_at",
    "save_trajectories_ndjson",
    "load_trajectories_ndjson",
]


def _finite_array(x, name: str, dtype=float) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class Configuration:
    """A single point in N-particle configuration space."""

    coords: np.ndarray
    n_particles: int
    dim: int

    def __post_init__(self):
        coords = _finite_array(self.coords, "coords")
        if self.n_particles < 1 or self.dim not in (1, 2, 3):
            raise InvalidInputError("need n_particles >= 1 and dim in {1,2,3}")
        if coords.shape != (self.n_particles * self.dim,):
            raise InvalidInputError(
                f"coords has shape {coords.shape}, expected ({self.n_particles * self.dim},)"
            )
        object.__setattr__(self, "coords", coords)
        self.coords.setflags(write=False)

    def particle(self, i: int) -> np.ndarray:
        return self.coords[i * self.dim : (i + 1) * self.dim]

    def to_dict(self) -> dict:
        return {"coords": self.coords.tolist(), "n": self.n_particles, "d": self.dim}

    @classmethod
    def from_dict(cls, d: dict) -> "Configuration":
        return cls(np.asarray(d["coords"], dtype=float), int(d["n"]), int(d["d"]))


@dataclass(frozen=True)
class SampledTrajectory:
    """A time-stamped polyline approximating one trajectory k(t).

    ``points`` has shape (n_samples, n_particles * dim); values between
    samples are defined by linear interpolation.
    """

    times: np.ndarray
    points: np.ndarray
    n_particles: int
    dim: int

    def __post_init__(self):
        times = _finite_array(self.times, "times")
        points = _finite_array(self.points, "points")
        if times.ndim != 1 or times.size < 2:
            raise InvalidInputError("a trajectory needs at least 2 samples")
        if np.any(np.diff(times) <= 0):
            raise InvalidInputError("times must be strictly increasing")
        if points.shape != (times.size, self.n_particles * self.dim):
            raise InvalidInputError(
                f"points has shape {points.shape}, expected "
                f"({times.size}, {self.n_particles * self.dim})"
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", points)
        self.times.setflags(write=False)
        self.points.setflags(write=False)

    @property
    def t_first(self) -> float:
        return float(self.times[0])

    @property
    def t_last(self) -> float:
        return float(self.times[-1])

    def position_at(self, t: float) -> np.ndarray:
        """Linear interpolation of the polyline at time t (in range)."""
        if t < self.times[0] or t > self.times[-1]:
            raise DomainError(f"t={t} outside sampled range [{self.t_first}, {self.t_last}]")
        idx = np.searchsorted(self.times, t, side="right")
        if idx == self.times.size:
            return self.points[-1].copy()
        if idx == 0:
            return self.points[0].copy()
        t0, t1 = self.times[idx - 1], self.times[idx]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self.points[idx - 1] + w * self.points[idx]

    def configuration(self, i: int) -> Configuration:
        return Configuration(self.points[i].copy(), self.n_particles, self.dim)

    def to_record(self) -> dict:
        return {
            "times": self.times.tolist(),
            "points": self.points.tolist(),
            "n": self.n_particles,
            "d": self.dim,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SampledTrajectory":
        return cls(
            np.asarray(rec["times"], dtype=float),
            np.asarray(rec["points"], dtype=float),
            int(rec["n"]),
            int(rec["d"]),
        )


@dataclass(frozen=True)
class WorldLineFlag:
    """Result of a causal-speed check on a sampled trajectory.

    The flag certifies the world-line condition at sampling resolution
    only; between samples the polyline model is linear, so chords of an
    accepted trajectory are sub-luminal as well.
    """

    is_worldline: bool
    max_speed_observed: float

    def to_dict(self) -> dict:
        return {"is_worldline": self.is_worldline, "max_speed_observed": self.max_speed_observed}

    @classmethod
    def from_dict(cls, d: dict) -> "WorldLineFlag":
        return cls(bool(d["is_worldline"]), float(d["max_speed_observed"]))


@dataclass(frozen=True)
class VelocityPoint:
    """A point in velocity space (flat vector of length N*d)."""

    v: np.ndarray

    def __post_init__(self):
        v = _finite_array(self.v, "v")
        object.__setattr__(self, "v", v)
        self.v.setflags(write=False)

    def particle(self, i: int, dim: int) -> np.ndarray:
        return self.v[i * dim : (i + 1) * dim]

    def to_dict(self) -> dict:
        return {"v": self.v.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "VelocityPoint":
        return cls(np.asarray(d["v"], dtype=float))


_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted sample cloud over velocity space.

    samples: (n, D) array; weights: nonnegative, summing to 1.
    """

    samples: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        samples = _finite_array(self.samples, "samples")
        if samples.ndim == 1:
            samples = samples[:, None]
        weights = _finite_array(self.weights, "weights")
        if samples.shape[0] == 0:
            raise InvalidInputError("empirical measure needs at least one sample")
        if weights.shape != (samples.shape[0],):
            raise InvalidInputError("weights must match sample count")
        if np.any(weights < 0):
            raise InvalidInputError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise InvalidInputError(f"weights sum to {weights.sum()}, not 1")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "weights", weights)
        self.samples.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def from_samples(cls, samples, weights=None) -> "EmpiricalMeasure":
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        n = samples.shape[0]
        if weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.asarray(weights, dtype=float)
            total = weights.sum()
            if total <= 0:
                raise InvalidInputError("total weight must be positive")
            weights = weights / total
        return cls(samples, weights)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def transport(self, f: Callable[[np.ndarray], np.ndarray]) -> "EmpiricalMeasure":
        """Pushforward through a map acting on (n, D) sample blocks."""
        return EmpiricalMeasure(np.asarray(f(self.samples), dtype=float), self.weights.copy())

    def axis(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.samples[:, i], self.weights

    def mean(self) -> np.ndarray:
        return self.weights @ self.samples

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            header = ",".join(f"v{i}" for i in range(self.dim)) + ",weight\n"
            fh.write(header)
            for row, w in zip(self.samples, self.weights):
                fh.write(",".join(repr(float(x)) for x in row) + f",{float(w)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "EmpiricalMeasure":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            ncol = len(header)
            rows = [line.strip().split(",") for line in fh if line.strip()]
        data = np.asarray([[float(x) for x in r] for r in rows])
        if data.shape[1] != ncol:
            raise InvalidInputError(f"malformed measure CSV {path}")
        return cls(data[:, :-1], data[:, -1])


def _orthonormality_defect(r: np.ndarray) -> float:
    return float(np.max(np.abs(r.T @ r - np.eye(r.shape[0]))))


@dataclass(frozen=True)
class PoincareElement:
    """A proper orthochronous Poincare transformation in d+1 dimensions.

    Acts on events as x -> Lambda x + a with Lambda = B(u) R, where B is
    the pure boost of velocity ``boost_velocity`` and R the spatial
    rotation; ``a`` is (time_shift, space_shift). Velocities transform
    through Lambda alone (translations act as the identity on them).
    """

    boost_velocity: np.ndarray
    rotation: np.ndarray
    time_shift: float = 0.0
    space_shift: np.ndarray | None = None

    def __post_init__(self):
        u = _finite_array(self.boost_velocity, "boost_velocity")
        r = _finite_array(self.rotation, "rotation")
        d = u.size
        if r.shape != (d, d):
            raise InvalidInputError("rotation shape must match boost dimension")
        if np.linalg.norm(u) >= 1.0:
            raise InvalidInputError("boost speed must satisfy ||u|| < 1")
        if _orthonormality_defect(r) > 1e-12 or abs(np.linalg.det(r) - 1.0) > 1e-12:
            raise InvalidInputError("rotation must be orthonormal with det = 1")
        shift = self.space_shift if self.space_shift is not None else np.zeros(d)
        shift = _finite_array(shift, "space_shift")
        object.__setattr__(self, "boost_velocity", u)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "space_shift", shift)
        for a in (self.boost_velocity, self.rotation, self.space_shift):
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.boost_velocity.size

    @property
    def gamma(self) -> float:
        return 1.0 / np.sqrt(1.0 - float(self.boost_velocity @ self.boost_velocity))

    @classmethod
    def identity(cls, dim: int) -> "PoincareElement":
        return cls(np.zeros(dim), np.eye(dim))

    @classmethod
    def boost(cls, u: float, axis: int = 0, dim: int = 1) -> "PoincareElement":
        vel = np.zeros(dim)
        vel[axis] = u
        return cls(vel, np.eye(dim))

    @classmethod
    def plane_rotation(cls, angle: float, dim: int, axes: tuple[int, int] = (0, 1)) -> "PoincareElement":
        if dim < 2:
            raise InvalidInputError("rotations need dim >= 2")
        i, j = axes
        r = np.eye(dim)
        c, s = np.cos(angle), np.sin(angle)
        r[i, i] = c
        r[j, j] = c
        r[i, j] = -s
        r[j, i] = s
        return cls(np.zeros(dim), r)

    @classmethod
    def translation(cls, time_shift: float, space_shift, dim: int | None = None) -> "PoincareElement":
        shift = np.asarray(space_shift, dtype=float)
        d = shift.size if dim is None else dim
        return cls(np.zeros(d), np.eye(d), float(time_shift), shift)

    def boost_matrix(self) -> np.ndarray:
        """Pure-boost block B(u) of the Lorentz matrix, (d+1)x(d+1)."""
        d = self.dim
        u = self.boost_velocity
        u2 = float(u @ u)
        lam = np.eye(d + 1)
        if u2 == 0.0:
            return lam
        g = self.gamma
        lam[0, 0] = g
        lam[0, 1:] = -g * u
        lam[1:, 0] = -g * u
        lam[1:, 1:] = np.eye(d) + (g - 1.0) * np.outer(u, u) / u2
        return lam

    def lorentz_matrix(self) -> np.ndarray:
        lam = self.boost_matrix()
        rot = np.eye(self.dim + 1)
        rot[1:, 1:] = self.rotation
        return lam @ rot

    def compose(self, other: "PoincareElement") -> "PoincareElement":
        """self after other: (self o other)(x) = self(other(x))."""
        lam = self.lorentz_matrix() @ other.lorentz_matrix()
        a_other = np.concatenate(([other.time_shift], other.space_shift))
        a_self = np.concatenate(([self.time_shift], self.space_shift))
        a = self.lorentz_matrix() @ a_other + a_self
        return PoincareElement._from_lorentz(lam, a)

    def inverse(self) -> "PoincareElement":
        lam_inv = np.linalg.inv(self.lorentz_matrix())
        a = np.concatenate(([self.time_shift], self.space_shift))
        return PoincareElement._from_lorentz(lam_inv, -lam_inv @ a)

    @classmethod
    def _from_lorentz(cls, lam: np.ndarray, a: np.ndarray) -> "PoincareElement":
        # Polar split Lambda = B(u) R with u read off the time column
        # (B(u) carries -gamma u there, hence the sign).
        u = -lam[1:, 0] / lam[0, 0]
        probe = cls(u, np.eye(u.size))
        r_full = np.linalg.inv(probe.boost_matrix()) @ lam
        rot = r_full[1:, 1:]
        # Re-orthonormalize to absorb floating-point drift from the products.
        uu, _, vv = np.linalg.svd(rot)
        rot = uu @ vv
        return cls(u, rot, float(a[0]), a[1:])

    def to_dict(self) -> dict:
        return {
            "boost_velocity": self.boost_velocity.tolist(),
            "rotation": self.rotation.tolist(),
            "time_shift": self.time_shift,
            "space_shift": self.space_shift.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoincareElement":
        return cls(
            np.asarray(d["boost_velocity"], dtype=float),
            np.asarray(d["rotation"], dtype=float),
            float(d.get("time_shift", 0.0)),
            np.asarray(d.get("space_shift", np.zeros(len(d["boost_velocity"]))), dtype=float),
        )

    def label(self) -> str:
        parts = []
        if np.any(self.boost_velocity != 0):
            parts.append("boost_" + "_".join(f"{x:g}" for x in self.boost_velocity))
        if not np.allclose(self.rotation, np.eye(self.dim)):
            parts.append("rot")
        if self.time_shift != 0 or np.any(self.space_shift != 0):
            parts.append("shift")
        return "+".join(parts) if parts else "id"


def default_worldline_eps(times: np.ndarray) -> float:
    """Default tolerance for the causal check, relative to the time span.

    The checked quantity (t-s)^2 - |dk|^2 has units of time^2, so the
    tolerance scales with span^2 (floored at 1 to keep short fixtures
    meaningful).
    """
    span = float(times[-1] - times[0])
    return 1e-9 * max(1.0, span) ** 2


def validate_worldline(
    traj: SampledTrajectory,
    eps: float | None = None,
    mode: str = "exact",
) -> WorldLineFlag:
    """Check the causal condition (t-s)^2 - |k_i(t)-k_i(s)|^2 >= -eps.

    mode="exact" tests all O(n^2) sample pairs per particle; mode="fast"
    tests adjacent pairs only (sufficient for convex speed profiles and
    cheap for long records). Both report the max adjacent-pair speed.
    """
    if mode not in ("exact", "fast"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    times = traj.times
    if times.size < 2:
        raise InvalidInputError("need at least 2 samples")
    if eps is None:
        eps = default_worldline_eps(times)

    blocks = traj.points.reshape(times.size, traj.n_particles, traj.dim)
    dt_adj = np.diff(times)[:, None]
    step = np.linalg.norm(np.diff(blocks, axis=0), axis=2)
    max_speed = float(np.max(step / dt_adj))

    ok = True
    if mode == "fast":
        ok = bool(np.all(dt_adj**2 - step**2 >= -eps))
    else:
        # Chunk the pairwise check to bound peak memory on long records.
        chunk = max(1, int(2**22 // max(1, times.size)))
        for start in range(0, times.size, chunk):
            stop = min(start + chunk, times.size)
            dts = times[start:stop, None] - times[None, :]
            diffs = blocks[start:stop, None, :, :] - blocks[None, :, :, :]
            gap = dts[:, :, None] ** 2 - np.sum(diffs**2, axis=3)
            if not np.all(gap >= -eps):
                ok = False
                break
    return WorldLineFlag(ok, max_speed)


def velocity_estimate_at(traj: SampledTrajectory, t: float) -> VelocityPoint:
    """Finite-time asymptotic-velocity estimate k(t)/t, for t > 0."""
    if t <= 0:
        raise DomainError("velocity estimate k(t)/t requires t > 0")
    return VelocityPoint(traj.position_at(t) / t)


def save_trajectories_ndjson(trajs: Iterable[SampledTrajectory], path) -> None:
    with open(path, "w") as fh:
        for traj in trajs:
            fh.write(json.dumps(traj.to_record(), sort_keys=True) + "\n")


def load_trajectories_ndjson(path) -> list[SampledTrajectory]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(SampledTrajectory.from_record(json.loads(line)))
    return out


@dataclass
class EnsembleRun:
    """Full record of one experiment, reproducible from (config, seed)."""

    config: dict
    seed: int
    trajectories: list[SampledTrajectory] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    measures: dict[str, EmpiricalMeasure] = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        import hashlib

        blob = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def save(self, out_dir) -> None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            json.dump(self.config, fh, sort_keys=True, indent=2)
        save_trajectories_ndjson(self.trajectories, os.path.join(out_dir, "trajectories.ndjson"))
        for name, measure in self.measures.items():
            measure.to_csv(os.path.join(out_dir, f"{name}.csv"))
        manifest = {
            "config_hash": self.config_hash(),
            "seed": self.seed,
            "n_trajectories": len(self.trajectories),
            "measures": sorted(self.measures),
            "diagnostics": _jsonable(self.diagnostics),
            "reports": _jsonable(self.reports),
        }
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)

    @classmethod
    def load(cls, out_dir) -> "EnsembleRun":
        import os

        with open(os.path.join(out_dir, "config.json")) as fh:
            config = json.load(fh)
        with open(os.path.join(out_dir, "manifest.json")) as fh:
            manifest = json.load(fh)
        trajs = load_trajectories_ndjson(os.path.join(out_dir, "trajectories.ndjson"))
        measures = {
            name: EmpiricalMeasure.from_csv(os.path.join(out_dir, f"{name}.csv"))
            for name in manifest["measures"]
        }
        return cls(
            config=config,
            seed=manifest["seed"],
            trajectories=trajs,
            diagnostics=manifest.get("diagnostics", {}),
            measures=measures,
            reports=manifest.get("reports", {}),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
