"""Small 1D Fourier neural operator: lift -> [spectral conv + bypass + bias -> act] * L -> project."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


ACTIVATIONS = ("relu", "linear")


def default_modes(n: int) -> int:
    return n // 2 + 1 if n <= 16 else n // 4


@dataclass(frozen=True)
class FnoSpec:
    grid_size: int
    hidden_width: int = 2
    depth: int = 1
    modes_kept: int | None = None
    activations: tuple[str, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.modes_kept is None:
            object.__setattr__(self, "modes_kept", default_modes(self.grid_size))
        if self.activations is None:
            # L=1: purely linear; deeper nets put ReLU on every layer but the last
            acts = ("relu",) * (self.depth - 1) + ("linear",)
            object.__setattr__(self, "activations", acts)
        object.__setattr__(self, "activations", tuple(self.activations))
        if self.depth < 1 or self.hidden_width < 1:
            raise ValueError("depth and hidden_width must be >= 1")
        if not 1 <= self.modes_kept <= self.grid_size // 2 + 1:
            raise ValueError(f"modes_kept must be in [1, N/2+1], got {self.modes_kept}")
        if len(self.activations) != self.depth:
            raise ValueError("need one activation flag per hidden layer")
        bad = set(self.activations) - set(ACTIVATIONS)
        if bad:
            raise ValueError(f"unknown activation(s): {sorted(bad)}")

    @property
    def name(self) -> str:
        h = "" if self.hidden_width == 2 else f"-H{self.hidden_width}"
        return f"L{self.depth}-N{self.grid_size}{h}-s{self.seed}"

    def count_params(self) -> int:
        H, K = self.hidden_width, self.modes_kept
        per_layer = 2 * H * H * K + H * H + H
        return 2 * H + self.depth * per_layer + H + 1

    def to_dict(self) -> dict:
        return {
            "grid_size": self.grid_size,
            "hidden_width": self.hidden_width,
            "depth": self.depth,
            "modes_kept": self.modes_kept,
            "activations": list(self.activations),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "FnoSpec":
        return cls(d["grid_size"], d["hidden_width"], d["depth"], d["modes_kept"], tuple(d["activations"]), d["seed"])


def _frozen_array(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HiddenLayer:
    spectral: np.ndarray  # complex (H_in, H_out, K)
    bypass: np.ndarray    # real (H_out, H_in); z_ij += sum_m bypass[j, m] h_im
    bias: np.ndarray      # real (H_out,)
    activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "spectral", _frozen_array(self.spectral, np.complex128))
        object.__setattr__(self, "bypass", _frozen_array(self.bypass, np.float64))
        object.__setattr__(self, "bias", _frozen_array(self.bias, np.float64))


@dataclass(frozen=True)
class FnoParams:
    spec: FnoSpec
    lift_weight: np.ndarray   # (H,)
    lift_bias: np.ndarray     # (H,)
    layers: tuple[HiddenLayer, ...]
    proj_weight: np.ndarray   # (H,)
    proj_bias: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lift_weight", _frozen_array(self.lift_weight, np.float64))
        object.__setattr__(self, "lift_bias", _frozen_array(self.lift_bias, np.float64))
        object.__setattr__(self, "proj_weight", _frozen_array(self.proj_weight, np.float64))
        object.__setattr__(self, "proj_bias", float(self.proj_bias))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.validate()

    @property
    def name(self) -> str:
        if "planted" in self.extra:
            return f"planted-{self.extra['planted']}-N{self.spec.grid_size}"
        return self.spec.name

    def validate(self) -> None:
        s = self.spec
        H, K = s.hidden_width, s.modes_kept
        expect = {
            "lift_weight": (self.lift_weight, (H,)),
            "lift_bias": (self.lift_bias, (H,)),
            "proj_weight": (self.proj_weight, (H,)),
        }
        if len(self.layers) != s.depth:
            raise ValueError(f"expected {s.depth} hidden layers, got {len(self.layers)}")
        for i, layer in enumerate(self.layers):
            expect[f"layers[{i}].spectral"] = (layer.spectral, (H, H, K))
            expect[f"layers[{i}].bypass"] = (layer.bypass, (H, H))
            expect[f"layers[{i}].bias"] = (layer.bias, (H,))
            if layer.activation != s.activations[i]:
                raise ValueError(f"layer {i} activation {layer.activation!r} != spec {s.activations[i]!r}")
        for key, (arr, shape) in expect.items():
            if arr.shape != shape:
                raise ValueError(f"{key}: shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{key}: non-finite entries")
        if not np.isfinite(self.proj_bias):
            raise ValueError("proj_bias: non-finite")

    def with_projection(self, weight, bias) -> "FnoParams":
        return replace(self, proj_weight=weight, proj_bias=float(bias), extra=dict(self.extra))


def spectral_conv(R, h):
    """rfft along the grid axis, per-mode channel mixing, truncation, irfft.

    ``h`` has shape (..., N, H_in); ``R`` has shape (H_in, H_out, K).  Modes
    at index >= K are zeroed.  irfft discards the imaginary parts of the DC
    and Nyquist coefficients, which fixes the real-output convention.
    """
    R = np.asarray(R)
    h = np.asarray(h, dtype=np.float64)
    n = h.shape[-2]
    K = R.shape[2]
    if R.shape[0] != h.shape[-1] or K > n // 2 + 1:
        raise ValueError(f"shape mismatch: R {R.shape}, h {h.shape}")
    hat = np.fft.rfft(h, axis=-2)
    out = np.zeros(hat.shape[:-1] + (R.shape[1],), dtype=np.complex128)
    out[..., :K, :] = np.einsum("...ki,iok->...ko", hat[..., :K, :], R)
    return np.fft.irfft(out, n=n, axis=-2)


def _act(z, activation):
    return np.maximum(z, 0.0) if activation == "relu" else z


def lift(params: FnoParams, u):
    return u[..., :, None] * params.lift_weight + params.lift_bias


def hidden_step(layer: HiddenLayer, h):
    z = spectral_conv(layer.spectral, h) + h @ layer.bypass.T + layer.bias
    return _act(z, layer.activation)


def hidden_states(params: FnoParams, u):
    """Hidden states [h0, h1, ..., hL], each (..., N, H)."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != params.spec.grid_size:
        raise ValueError(f"input length {u.shape[-1]} != grid size {params.spec.grid_size}")
    hs = [lift(params, u)]
    for layer in params.layers:
        hs.append(hidden_step(layer, hs[-1]))
    return hs


def forward(params: FnoParams, u):
    """Evaluate the FNO on one field (N,) or a batch (B, N)."""
    h = hidden_states(params, u)[-1]
    return h @ params.proj_weight + params.proj_bias


# ----------------------------------------------------------- planted models

def planted(kind: str, n: int = 8, hidden_width: int = 2) -> FnoParams:
    """Hand-built models with known behaviour: identity, doubling, negation."""
    gain = {"identity": 1.0, "doubling": 2.0, "negation": -1.0}[kind]
    H = hidden_width
    spec = FnoSpec(n, H, 1, seed=0)
    e0 = np.zeros(H)
    e0[0] = 1.0
    layer = HiddenLayer(np.zeros((H, H, spec.modes_kept)), np.eye(H), np.zeros(H), "linear")
    return FnoParams(spec, e0, np.zeros(H), (layer,), gain * e0, 0.0, extra={"planted": kind})


# ------------------------------------------------------------ serialization

def _enc(a) -> dict:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return {"shape": list(a.shape), "real": [float(x).hex() for x in a.real.ravel()],
                "imag": [float(x).hex() for x in a.imag.ravel()]}
    return {"shape": list(a.shape), "data": [float(x).hex() for x in a.ravel()]}


def _dec(d, what) -> np.ndarray:
    try:
        shape = tuple(d["shape"])
        size = int(np.prod(shape))
        if "real" in d:
            re = [float.fromhex(x) for x in d["real"]]
            im = [float.fromhex(x) for x in d["imag"]]
            if len(re) != size or len(im) != size:
                raise ValueError(f"{what}: {len(re)} values for shape {shape}")
            return (np.array(re) + 1j * np.array(im)).reshape(shape)
        vals = [float.fromhex(x) for x in d["data"]]
        if len(vals) != size:
            raise ValueError(f"{what}: {len(vals)} values for shape {shape}")
        return np.array(vals, dtype=np.float64).reshape(shape)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{what}: malformed tensor ({exc})") from exc


def model_to_dict(params: FnoParams) -> dict:
    return {
        "format": "fnosmt-model",
        "version": 1,
        "name": params.name,
        "spec": params.spec.to_dict(),
        "lift_weight": _enc(params.lift_weight),
        "lift_bias": _enc(params.lift_bias),
        "layers": [
            {"spectral": _enc(l.spectral), "bypass": _enc(l.bypass), "bias": _enc(l.bias), "activation": l.activation}
            for l in params.layers
        ],
        "proj_weight": _enc(params.proj_weight),
        "proj_bias": float(params.proj_bias).hex(),
        "extra": params.extra,
    }


def model_from_dict(doc) -> FnoParams:
    if doc.get("format") != "fnosmt-model":
        raise ValueError("not an fnosmt model file")
    try:
        spec = FnoSpec.from_dict(doc["spec"])
        layers = tuple(
            HiddenLayer(_dec(l["spectral"], f"layers[{i}].spectral"), _dec(l["bypass"], f"layers[{i}].bypass"),
                        _dec(l["bias"], f"layers[{i}].bias"), l["activation"])
            for i, l in enumerate(doc["layers"])
        )
        return FnoParams(spec, _dec(doc["lift_weight"], "lift_weight"), _dec(doc["lift_bias"], "lift_bias"),
                         layers, _dec(doc["proj_weight"], "proj_weight"), float.fromhex(doc["proj_bias"]),
                         extra=doc.get("extra", {}))
    except KeyError as exc:
        raise ValueError(f"malformed model file: missing {exc}") from exc


def save_model(params: FnoParams, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(params), indent=1))


def load_model(path) -> FnoParams:
    return model_from_dict(json.loads(Path(path).read_text()))
