"""Compile an FNO into a stack of dense affine layers with ReLU/identity activations.

Hidden states are vectorized grid-index-fastest: entry ``j*N + i`` holds
channel ``j`` at grid point ``i``.  With that order every pointwise channel
map is ``kron(W, I_N)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np

from .fno import FnoParams, hidden_states, spectral_conv
from .fno import _dec, _enc


@dataclass(frozen=True, eq=False)
class AffineLayer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError(f"bad affine layer shapes: weight {w.shape}, bias {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("affine layer has non-finite entries")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def shape(self):
        return self.weight.shape

    @cached_property
    def rational_rows(self):
        """Per output row: (list of (col, Fraction) for nonzero weights, Fraction bias)."""
        rows = []
        for r in range(self.weight.shape[0]):
            cols = np.flatnonzero(self.weight[r])
            rows.append(([(int(c), Fraction(float(self.weight[r, c]))) for c in cols], Fraction(float(self.bias[r]))))
        return rows


@dataclass(frozen=True, eq=False)
class PlnNet:
    layers: tuple[AffineLayer, ...]
    provenance: str = "exact"          # "exact" | "frozen"
    reference: np.ndarray | None = None  # u_ref for frozen nets
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("empty network")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.shape[1] != a.shape[0]:
                raise ValueError(f"layer dims do not chain: {a.shape} -> {b.shape}")
        if self.provenance not in ("exact", "frozen"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance == "frozen" and self.reference is None:
            raise ValueError("frozen net needs its reference input")

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].shape[0]

    @property
    def relu_count(self) -> int:
        return sum(l.shape[0] for l in self.layers if l.activation == "relu")


# ----------------------------------------------------------------- builders

def vec(h) -> np.ndarray:
    """(..., N, H) -> (..., N*H), grid index fastest."""
    h = np.asarray(h)
    return np.swapaxes(h, -1, -2).reshape(h.shape[:-2] + (-1,))


def unvec(x, n: int) -> np.ndarray:
    x = np.asarray(x)
    return np.swapaxes(x.reshape(x.shape[:-1] + (-1, n)), -1, -2)


def build_spectral_matrix(R, n: int, order=None) -> np.ndarray:
    """Dense real NH x NH matrix of ``spectral_conv(R, .)``, probed column by column.

    ``order`` optionally permutes the order in which basis vectors are probed;
    the result does not depend on it.
    """
    R = np.asarray(R)
    H = R.shape[0]
    dim = n * H
    order = np.arange(dim) if order is None else np.asarray(order)
    basis = np.zeros((dim, dim))
    basis[np.arange(dim), order] = 1.0
    probes = spectral_conv(R, unvec(basis, n))  # (dim, N, H)
    W = np.empty((dim, dim))
    W[:, order] = vec(probes).T
    return W


def _lift_layer(params: FnoParams, n: int) -> AffineLayer:
    w = np.kron(params.lift_weight[:, None], np.eye(n))
    return AffineLayer(w, np.repeat(params.lift_bias, n), "linear")


def _proj_layer(params: FnoParams, n: int) -> AffineLayer:
    w = np.kron(params.proj_weight[None, :], np.eye(n))
    return AffineLayer(w, np.full(n, params.proj_bias), "linear")


def compile_exact(params: FnoParams) -> PlnNet:
    n = params.spec.grid_size
    layers = [_lift_layer(params, n)]
    for layer in params.layers:
        W = build_spectral_matrix(layer.spectral, n) + np.kron(layer.bypass, np.eye(n))
        layers.append(AffineLayer(W, np.repeat(layer.bias, n), layer.activation))
    layers.append(_proj_layer(params, n))
    return PlnNet(tuple(layers), "exact", None, params.name)


def compile_frozen(params: FnoParams, u_ref) -> PlnNet:
    """Replace every spectral path by its value along the trajectory of ``u_ref``."""
    n = params.spec.grid_size
    u_ref = np.asarray(u_ref, dtype=np.float64)
    if u_ref.shape != (n,):
        raise ValueError(f"reference field must have length {n}")
    hs = hidden_states(params, u_ref)
    layers = [_lift_layer(params, n)]
    for layer, h_prev in zip(params.layers, hs[:-1]):
        c = vec(spectral_conv(layer.spectral, h_prev))
        layers.append(AffineLayer(np.kron(layer.bypass, np.eye(n)), np.repeat(layer.bias, n) + c, layer.activation))
    layers.append(_proj_layer(params, n))
    return PlnNet(tuple(layers), "frozen", u_ref.copy(), params.name)


# --------------------------------------------------------------- evaluation

def eval_pln(net: PlnNet, u) -> np.ndarray:
    x = np.asarray(u, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"input length {x.shape[-1]} != net input dim {net.input_dim}")
    for layer in net.layers:
        x = x @ layer.weight.T + layer.bias
        if layer.activation == "relu":
            x = np.maximum(x, 0.0)
    return x


def eval_pln_exact(net: PlnNet, u) -> list[Fraction]:
    """Evaluate in exact rational arithmetic with the exactly-rationalized weights."""
    x = [Fraction(v) for v in u]
    if len(x) != net.input_dim:
        raise ValueError(f"input length {len(x)} != net input dim {net.input_dim}")
    for layer in net.layers:
        nxt = []
        for terms, b in layer.rational_rows:
            z = b + sum((c * x[j] for j, c in terms), Fraction(0))
            if layer.activation == "relu" and z < 0:
                z = Fraction(0)
            nxt.append(z)
        x = nxt
    return x


def collapse_affine(net: PlnNet) -> tuple[np.ndarray, np.ndarray]:
    """For an all-linear net, the single affine map ``u -> A u + d`` it computes."""
    if net.relu_count:
        raise ValueError("network has ReLU layers; it is not a single affine map")
    A = np.eye(net.input_dim)
    d = np.zeros(net.input_dim)
    for layer in net.layers:
        A = layer.weight @ A
        d = layer.weight @ d + layer.bias
    return A, d


def hidden_nonzeros(net: PlnNet) -> list[int]:
    """Weight nonzeros of every hidden (non-lifting, non-projection) layer."""
    return [int(np.count_nonzero(l.weight)) for l in net.layers[1:-1]]


# ------------------------------------------------------------ serialization

def net_to_dict(net: PlnNet) -> dict:
    prov = {"kind": net.provenance}
    if net.reference is not None:
        prov["reference"] = _enc(net.reference)
    return {
        "format": "fnosmt-pln",
        "version": 1,
        "name": net.name,
        "provenance": prov,
        "layers": [{"weight": _enc(l.weight), "bias": _enc(l.bias), "activation": l.activation} for l in net.layers],
    }


def net_from_dict(doc) -> PlnNet:
    if doc.get("format") != "fnosmt-pln":
        raise ValueError("not an fnosmt compiled-network file")
    layers = tuple(
        AffineLayer(_dec(l["weight"], f"layers[{i}].weight"), _dec(l["bias"], f"layers[{i}].bias"), l["activation"])
        for i, l in enumerate(doc["layers"])
    )
    prov = doc["provenance"]
    ref = _dec(prov["reference"], "reference") if "reference" in prov else None
    return PlnNet(layers, prov["kind"], ref, doc.get("name", ""))


def save_net(net: PlnNet, path) -> None:
    Path(path).write_text(json.dumps(net_to_dict(net)))


def load_net(path) -> PlnNet:
    return net_from_dict(json.loads(Path(path).read_text()))
