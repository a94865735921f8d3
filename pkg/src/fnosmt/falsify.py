"""Baseline violation search on the original model: Monte Carlo and projected FD ascent."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .fno import FnoParams, forward
from .pde import ConstraintSet, Grid, sample_admissible
from .plcompile import PlnNet, eval_pln
from .properties import PropertyQuery, severity

FD_STEP = 1e-4
ASCENT_STEP = 0.05
PROJECTION_PASSES = 50


@dataclass
class FalsifyResult:
    witness: np.ndarray
    severity: float
    method: str
    evaluations: int = 0
    steps: int = 0
    wall_time: float = 0.0
    history: list = field(default_factory=list, repr=False)  # every scored severity


def as_callable(model):
    if isinstance(model, FnoParams):
        return lambda u: forward(model, u)
    if isinstance(model, PlnNet):
        return lambda u: eval_pln(model, u)
    return model


def project_feasible(u, c: ConstraintSet, max_passes: int = PROJECTION_PASSES) -> np.ndarray:
    """Map ``u`` into the admissible set (unchanged if already feasible).

    Alternates box clipping with midpoint-preserving shrinking of violating
    cyclic neighbour pairs; falls back to the constant field clamp(mean(u)).
    """
    return _kernels.project_batch(u, c.lower, c.upper, c.slope_bound, max_passes)


def mc_falsify(model, c: ConstraintSet, q: PropertyQuery, n: int = 5000, seed=0, grid: Grid | None = None):
    if n < 1:
        raise ValueError("n must be >= 1")
    f = as_callable(model)
    t0 = time.perf_counter()
    grid = grid or Grid(_input_dim(model))
    U = sample_admissible(c, grid, seed, size=n)
    sev = severity(q, U, f(U))
    k = int(np.argmax(sev))
    return FalsifyResult(U[k].copy(), float(sev[k]), "mc", evaluations=n, wall_time=time.perf_counter() - t0,
                         history=sev.tolist())


def grad_falsify(model, c: ConstraintSet, q: PropertyQuery, restarts: int = 10, steps: int = 100, seed=0,
                 grid: Grid | None = None, fd_step: float = FD_STEP, step_size: float = ASCENT_STEP):
    """Projected ascent on the severity with a central finite-difference gradient.

    The ascent direction is the gradient scaled to unit max-norm; a step that
    lowers the severity is rejected and halves the step size.  Each step costs
    2N + 1 model evaluations.
    """
    if restarts < 1 or steps < 1:
        raise ValueError("restarts and steps must be >= 1")
    f = as_callable(model)
    grid = grid or Grid(_input_dim(model))
    n = grid.n_points
    t0 = time.perf_counter()
    E = np.eye(n) * fd_step
    best_u, best_s = None, -np.inf
    evals = done = 0
    history = []
    for child in np.random.SeedSequence(seed).spawn(restarts):
        u = sample_admissible(c, grid, np.random.default_rng(child))
        s = float(severity(q, u, f(u)))
        evals += 1
        history.append(s)
        if s > best_s:
            best_u, best_s = u.copy(), s
        alpha = step_size
        for _ in range(steps):
            probes = np.vstack([u + E, u - E])
            ps = severity(q, probes, f(probes))
            g = (ps[:n] - ps[n:]) / (2.0 * fd_step)
            gmax = np.max(np.abs(g))
            direction = g / gmax if gmax > 0 else g
            cand = project_feasible(u + alpha * direction, c)
            sc = float(severity(q, cand, f(cand)))
            evals += 2 * n + 1
            done += 1
            history.append(sc)
            if sc > best_s:
                best_u, best_s = cand.copy(), sc
            if sc >= s:
                u, s = cand, sc
            else:
                alpha *= 0.5
    return FalsifyResult(best_u, best_s, "grad", evaluations=evals, steps=done,
                         wall_time=time.perf_counter() - t0, history=history)


def _input_dim(model) -> int:
    if isinstance(model, FnoParams):
        return model.spec.grid_size
    if isinstance(model, PlnNet):
        return model.input_dim
    raise ValueError("pass grid= when the model is a bare callable")
