"""Exact SMT (QF_LRA) verification of small 1D Fourier neural operators for ADR equations."""

__version__ = "0.1.0"

from .fno import FnoParams, FnoSpec, forward, load_model, save_model
from .pde import ConstraintSet, Grid
from .plcompile import PlnNet, compile_exact, compile_frozen, eval_pln
from .properties import PropertyQuery

__all__ = [
    "ConstraintSet",
    "FnoParams",
    "FnoSpec",
    "Grid",
    "PlnNet",
    "PropertyQuery",
    "compile_exact",
    "compile_frozen",
    "eval_pln",
    "forward",
    "load_model",
    "save_model",
]
