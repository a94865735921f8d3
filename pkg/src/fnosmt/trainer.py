"""Random-feature regression: frozen random hidden layers, least-squares projection."""
from __future__ import annotations

import logging

import numpy as np

from .fno import FnoParams, FnoSpec, HiddenLayer, hidden_states

log = logging.getLogger(__name__)


def init_random(spec: FnoSpec) -> FnoParams:
    rng = np.random.default_rng(spec.seed)
    H, K = spec.hidden_width, spec.modes_kept
    lift_w = rng.standard_normal(H) / np.sqrt(H)
    layers = []
    for act in spec.activations:
        R = (rng.standard_normal((H, H, K)) + 1j * rng.standard_normal((H, H, K))) / H
        W = rng.standard_normal((H, H)) / np.sqrt(H)
        layers.append(HiddenLayer(R, W, np.zeros(H), act))
    return FnoParams(spec, lift_w, np.zeros(H), tuple(layers), np.zeros(H), 0.0)


def features(params: FnoParams, inputs) -> np.ndarray:
    """Design matrix: one row [h_i1 .. h_iH, 1] per grid point per sample."""
    h = hidden_states(params, np.atleast_2d(inputs))[-1]
    h = h.reshape(-1, params.spec.hidden_width)
    return np.hstack([h, np.ones((h.shape[0], 1))])


def fit_projection(params: FnoParams, dataset) -> FnoParams:
    """Least-squares fit of the projection weight and bias; hidden weights untouched.

    ``dataset`` is anything iterable over (input, target) pairs, or a
    ``pde.Dataset``.  Uses an SVD-based minimum-norm solve, so rank-deficient
    feature matrices are handled without failing.
    """
    X, Y = _stack(dataset)
    A = features(params, X)
    y = Y.reshape(-1)
    coef, _, rank, sv = np.linalg.lstsq(A, y, rcond=None)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if rank < A.shape[1]:
        log.warning("%s: rank-deficient features (rank %d of %d); minimum-norm solution used",
                    params.name, rank, A.shape[1])
    log.debug("%s: feature condition number %.3g", params.name, cond)
    out = params.with_projection(coef[:-1], coef[-1])
    out.extra["fit_condition"] = float(cond)
    out.extra["fit_rank"] = int(rank)
    return out


def evaluate_mse(model, holdout) -> float:
    """Mean squared error over every grid point of every holdout pair.

    ``model`` is an ``FnoParams`` or any callable mapping a (B, N) batch to outputs.
    """
    X, Y = _stack(holdout)
    if len(X) == 0:
        raise ValueError("empty holdout set")
    if isinstance(model, FnoParams):
        from .fno import forward
        pred = forward(model, X)
    else:
        pred = model(X)
    return float(np.mean((pred - Y) ** 2))


def _stack(pairs):
    if hasattr(pairs, "inputs") and hasattr(pairs, "targets"):
        return np.asarray(pairs.inputs), np.asarray(pairs.targets)
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty dataset")
    X = np.array([p[0] for p in pairs], dtype=np.float64)
    Y = np.array([p[1] for p in pairs], dtype=np.float64)
    return X, Y
