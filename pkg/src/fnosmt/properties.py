"""The two physical properties and how violations are measured."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .pde import ConstraintSet, _decimal

MASS = "mass"
POSITIVITY = "positivity"


@dataclass(frozen=True)
class PropertyQuery:
    """``mass``: M(f(u)) <= M(u) + epsilon.  ``positivity``: min_i f(u)_i >= 0 for u >= lower."""
    kind: str
    epsilon: float = 0.05
    lower: float = 0.1

    def __post_init__(self):
        if self.kind not in (MASS, POSITIVITY):
            raise ValueError(f"unknown property {self.kind!r}")
        if self.epsilon < 0 or self.lower < 0:
            raise ValueError("epsilon and lower must be nonnegative")

    @classmethod
    def mass(cls, epsilon=0.05):
        return cls(MASS, epsilon=epsilon)

    @classmethod
    def positivity(cls, lower=0.1):
        return cls(POSITIVITY, lower=lower)

    @property
    def epsilon_q(self) -> Fraction:
        return _decimal(self.epsilon)

    @property
    def offset_q(self) -> Fraction:
        return self.epsilon_q if self.kind == MASS else Fraction(0)

    @property
    def offset(self) -> float:
        """Severity at which a violation starts (``severity > offset`` violates)."""
        return self.epsilon if self.kind == MASS else 0.0

    def constraints(self, n: int) -> ConstraintSet:
        if self.kind == MASS:
            return ConstraintSet.for_mass(n)
        return ConstraintSet(self.lower, Fraction(5), Fraction(15, n))


def severity(q: PropertyQuery, u, out):
    """Mass gap M(out) - M(u), or -min(out) for positivity; vectorized over a leading batch axis."""
    u = np.asarray(u, dtype=np.float64)
    out = np.asarray(out, dtype=np.float64)
    if q.kind == MASS:
        return out.mean(axis=-1) - u.mean(axis=-1)
    return -out.min(axis=-1)


def severity_exact(q: PropertyQuery, u, out) -> Fraction:
    u = [Fraction(x) for x in u]
    out = [Fraction(x) for x in out]
    if q.kind == MASS:
        return (sum(out) - sum(u)) / len(u)
    return -min(out)


def violates(q: PropertyQuery, sev) -> bool:
    return bool(sev > q.offset)
