"""1D advection-diffusion-reaction on a periodic grid.

The ground truth is the exact Fourier-space propagator of

    u_t + v u_x = D u_xx - lam u

so there is no time-stepping error.  Fields are plain 1-D float64 arrays
(or stacks of them, grid axis last).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterator

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class Grid:
    n_points: int
    domain_length: float = 1.0

    def __post_init__(self):
        if self.n_points < 4 or self.n_points % 2:
            raise ValueError(f"grid size must be even and >= 4, got {self.n_points}")
        if self.domain_length <= 0:
            raise ValueError("domain_length must be positive")

    @property
    def spacing(self) -> float:
        return self.domain_length / self.n_points

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1] != self.n_points:
            raise ValueError(f"field length {u.shape[-1]} does not match grid size {self.n_points}")
        return u


@dataclass(frozen=True)
class AdrParams:
    diffusion: float
    velocity: float
    reaction: float
    horizon: float = 0.25

    def __post_init__(self):
        if self.diffusion < 0 or self.reaction < 0:
            raise ValueError("diffusion and reaction must be nonnegative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


@dataclass(frozen=True)
class ParamRanges:
    """Closed ranges for the per-sample (D, v, lam) draw; T is fixed."""
    diffusion: tuple[float, float] = (0.01, 0.1)
    velocity: tuple[float, float] = (-1.0, 1.0)
    reaction: tuple[float, float] = (0.05, 0.5)
    horizon: float = 0.25

    def __post_init__(self):
        for name in ("diffusion", "velocity", "reaction"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"empty range for {name}: [{lo}, {hi}]")
        if self.diffusion[0] < 0 or self.reaction[0] < 0:
            raise ValueError("diffusion and reaction ranges must be nonnegative")

    def draw(self, rng: np.random.Generator) -> AdrParams:
        return AdrParams(
            diffusion=float(rng.uniform(*self.diffusion)),
            velocity=float(rng.uniform(*self.velocity)),
            reaction=float(rng.uniform(*self.reaction)),
            horizon=self.horizon,
        )


def _decimal(x) -> Fraction:
    # decimal intent: 0.1 means 1/10, not the nearest binary64
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


class ConstraintSet:
    """Admissible inputs: a box plus a bound on every cyclic adjacent difference.

    Bounds are held as exact rationals (the SMT encoding uses them verbatim)
    and mirrored as floats for numeric checks.
    """

    def __init__(self, lower, upper, slope_bound):
        self.lower_q = _decimal(lower)
        self.upper_q = _decimal(upper)
        self.slope_q = _decimal(slope_bound)
        if not self.lower_q < self.upper_q:
            raise ValueError("lower must be < upper")
        if self.slope_q < 0:
            raise ValueError("slope_bound must be nonnegative")

    @classmethod
    def for_mass(cls, n: int) -> "ConstraintSet":
        return cls(Fraction(0), Fraction(5), Fraction(15, n))

    @classmethod
    def for_positivity(cls, n: int) -> "ConstraintSet":
        return cls(Fraction(1, 10), Fraction(5), Fraction(15, n))

    lower = property(lambda self: float(self.lower_q))
    upper = property(lambda self: float(self.upper_q))
    slope_bound = property(lambda self: float(self.slope_q))

    def __eq__(self, other):
        return isinstance(other, ConstraintSet) and (
            (self.lower_q, self.upper_q, self.slope_q) == (other.lower_q, other.upper_q, other.slope_q)
        )

    def __hash__(self):
        return hash((self.lower_q, self.upper_q, self.slope_q))

    def __repr__(self):
        return f"ConstraintSet(lower={self.lower_q}, upper={self.upper_q}, slope_bound={self.slope_q})"

    def contains(self, u, tol: float = 0.0) -> bool:
        """Float check of every inequality; ``tol`` loosens each one additively."""
        u = np.asarray(u, dtype=np.float64)
        return bool(
            _kernels.feasible_batch(u, self.lower - tol, self.upper + tol, self.slope_bound + tol).all()
        )

    def contains_exact(self, values) -> bool:
        """Exact rational check (for decoded solver models)."""
        q = [Fraction(v) for v in values]
        n = len(q)
        for i in range(n):
            if not self.lower_q <= q[i] <= self.upper_q:
                return False
            if abs(q[(i + 1) % n] - q[i]) > self.slope_q:
                return False
        return True

    def to_dict(self) -> dict:
        return {"lower": str(self.lower_q), "upper": str(self.upper_q), "slope_bound": str(self.slope_q)}

    @classmethod
    def from_dict(cls, d) -> "ConstraintSet":
        return cls(Fraction(d["lower"]), Fraction(d["upper"]), Fraction(d["slope_bound"]))


def wavenumbers(grid: Grid) -> np.ndarray:
    k = np.arange(grid.n_points // 2 + 1)
    return 2.0 * np.pi * k / grid.domain_length


def propagator_symbol(grid: Grid, p: AdrParams) -> np.ndarray:
    """Complex multiplier applied to each nonnegative rfft mode."""
    xi = wavenumbers(grid)
    # the Nyquist mode of a real grid function carries no phase; dropping the
    # advection phase there keeps the propagator a real semigroup
    xi_odd = xi.copy()
    xi_odd[-1] = 0.0
    return np.exp((-p.diffusion * xi**2 - 1j * p.velocity * xi_odd - p.reaction) * p.horizon)


def adr_propagate(u0, p: AdrParams, grid: Grid | None = None) -> np.ndarray:
    """Advance ``u0`` (grid axis last) by ``p.horizon`` under the exact propagator."""
    u0 = np.asarray(u0, dtype=np.float64)
    if grid is None:
        grid = Grid(u0.shape[-1])
    u0 = grid.check(u0)
    spec = np.fft.rfft(u0, axis=-1) * propagator_symbol(grid, p)
    return np.fft.irfft(spec, n=grid.n_points, axis=-1)


def mass(u) -> float | np.ndarray:
    """Discrete mass (1/N) * sum(u) along the grid axis."""
    return np.mean(np.asarray(u, dtype=np.float64), axis=-1)


def random_initial_condition(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    """Truncated random Fourier series (modes <= N/4, amplitude ~ 1/(1+k)) rescaled into [0.2, 2.0]."""
    n = grid.n_points
    x = np.arange(n) / n
    kmax = max(1, n // 4)
    u = np.zeros(n)
    for k in range(1, kmax + 1):
        a, b = rng.standard_normal(2) / (1.0 + k)
        u += a * np.cos(2 * np.pi * k * x) + b * np.sin(2 * np.pi * k * x)
    lo = rng.uniform(0.2, 1.0)
    hi = rng.uniform(lo + 0.2, 2.0)
    span = u.max() - u.min()
    if span < 1e-12:
        return np.full(n, 0.5 * (lo + hi))
    return lo + (u - u.min()) * (hi - lo) / span


@dataclass
class Dataset:
    grid: Grid
    seed: int
    ranges: ParamRanges
    inputs: np.ndarray   # (n_samples, N)
    targets: np.ndarray  # (n_samples, N)
    params: list[AdrParams]

    def __len__(self):
        return len(self.inputs)

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return iter(zip(self.inputs, self.targets))

    def to_json(self) -> str:
        doc = {
            "format": "fnosmt-dataset",
            "version": 1,
            "grid": asdict(self.grid),
            "seed": self.seed,
            "ranges": asdict(self.ranges),
            "params": [asdict(p) for p in self.params],
            "inputs": self.inputs.tolist(),
            "targets": self.targets.tolist(),
        }
        return json.dumps(doc)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Dataset":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != "fnosmt-dataset":
            raise ValueError(f"{path}: not a dataset file")
        r = doc["ranges"]
        ranges = ParamRanges(tuple(r["diffusion"]), tuple(r["velocity"]), tuple(r["reaction"]), r["horizon"])
        grid = Grid(**doc["grid"])
        inputs = np.array(doc["inputs"], dtype=np.float64).reshape(-1, grid.n_points)
        targets = np.array(doc["targets"], dtype=np.float64).reshape(-1, grid.n_points)
        if inputs.shape != targets.shape:
            raise ValueError(f"{path}: inputs/targets shape mismatch")
        return cls(grid, doc["seed"], ranges, inputs, targets, [AdrParams(**p) for p in doc["params"]])


def gen_dataset(n_samples: int, grid: Grid, ranges: ParamRanges | None = None, seed: int = 0) -> Dataset:
    """Pairs (u0, u(T)) where every u0 gets its own independent (D, v, lam) draw."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    ranges = ranges or ParamRanges()
    rng = np.random.default_rng(seed)
    inputs = np.empty((n_samples, grid.n_points))
    targets = np.empty_like(inputs)
    params = []
    for s in range(n_samples):
        u0 = random_initial_condition(grid, rng)
        p = ranges.draw(rng)
        inputs[s] = u0
        targets[s] = adr_propagate(u0, p, grid)
        params.append(p)
    return Dataset(grid, seed, ranges, inputs, targets, params)


def _random_smooth(n: int, c: ConstraintSet, rng: np.random.Generator, size: int) -> np.ndarray:
    x = np.arange(n) / n
    lo, hi, s = c.lower, c.upper, c.slope_bound
    centre = rng.uniform(lo, hi, size=size)
    U = np.repeat(centre[:, None], n, axis=1)
    kmax = min(3, n // 2)
    for k in range(1, kmax + 1):
        # amplitude keeping the mode's own adjacent differences under the bound
        amax = s / (2.0 * math.sin(math.pi * k / n)) / kmax
        amp = rng.uniform(0.0, amax, size=size)
        phase = rng.uniform(0.0, 2 * np.pi, size=size)
        U += amp[:, None] * np.cos(2 * np.pi * k * x[None, :] + phase[:, None])
    return U


def sample_admissible(c: ConstraintSet, grid: Grid, seed=None, size: int | None = None) -> np.ndarray:
    """Random smooth field(s) satisfying every inequality of ``c`` exactly (float compare).

    ``seed`` may be an int or a ``numpy.random.Generator``.  With ``size`` a
    stack of ``size`` fields is returned.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = 1 if size is None else size
    U = _random_smooth(grid.n_points, c, rng, m)
    U = _kernels.project_batch(U, c.lower, c.upper, c.slope_bound)
    return U[0] if size is None else U
