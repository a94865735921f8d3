"""QF_LRA SMT-LIB2 emission for compiled networks and property queries.

All weights are converted to the exact rational value of their binary64
representation, so a solver verdict is a statement about the compiled
real-valued network with exactly those weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .pde import ConstraintSet, _decimal
from .plcompile import PlnNet
from .properties import MASS, PropertyQuery


def rationalize(x: float) -> Fraction:
    """Exact value of a binary64 number as p/q with q a power of two."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot rationalize non-finite value {x!r}")
    p, q = x.as_integer_ratio()
    return Fraction(p, q)


def num(q) -> str:
    """SMT-LIB literal for a rational (QF_LRA has no negative literals)."""
    q = Fraction(q)
    a = abs(q)
    s = str(a.numerator) if a.denominator == 1 else f"(/ {a.numerator} {a.denominator})"
    return f"(- {s})" if q < 0 else s


def in_var(i: int) -> str:
    return f"in_{i}"


def out_var(i: int) -> str:
    return f"out_{i}"


def _sum(terms: list[str]) -> str:
    if not terms:
        return "0"
    if len(terms) == 1:
        return terms[0]
    return "(+ " + " ".join(terms) + ")"


def _monomial(c: Fraction, x: str) -> str:
    if c == 1:
        return x
    if c == -1:
        return f"(- {x})"
    return f"(* {num(c)} {x})"


def encode_constraints(c: ConstraintSet, n: int) -> list[str]:
    """4N assertions: box bounds, then both directions of every cyclic difference."""
    lines = []
    for i in range(n):
        lines.append(f"(assert (>= {in_var(i)} {num(c.lower_q)}))")
        lines.append(f"(assert (<= {in_var(i)} {num(c.upper_q)}))")
    for i in range(n):
        d = f"(- {in_var((i + 1) % n)} {in_var(i)})"
        lines.append(f"(assert (<= {d} {num(c.slope_q)}))")
        lines.append(f"(assert (>= {d} {num(-c.slope_q)}))")
    return lines


@dataclass
class NetEncoding:
    declarations: list[str]
    assertions: list[str]
    monomials: list[int]  # per layer, constants included

    @property
    def hidden_monomials(self) -> int:
        return sum(self.monomials[1:-1])


RELU_ENCODINGS = ("graph", "ite")


def relu_assertions(h: str, z: str, form: str = "graph") -> list[str]:
    """h = max(z, 0), either as its graph (three linear facts) or as an ite term.

    Both define the same relation over the reals; the graph form lets the
    arithmetic solver propagate the two bounds before case splitting, which
    is much faster on z3.
    """
    if form == "ite":
        return [f"(assert (= {h} (ite (>= {z} 0) {z} 0)))"]
    if form != "graph":
        raise ValueError(f"unknown ReLU encoding {form!r}")
    return [f"(assert (>= {h} 0))", f"(assert (>= {h} {z}))", f"(assert (or (= {h} 0) (= {h} {z})))"]


def encode_net(net: PlnNet, relu: str = "graph") -> NetEncoding:
    """One variable per pre-activation (z_l_j) and per ReLU output (h_l_j).

    Linear coordinates alias their pre-activation.  The last layer's outputs
    are named out_0..out_{N-1}.  Exact-zero coefficients are skipped.
    """
    decls, asserts, counts = [], [], []
    prev = [in_var(i) for i in range(net.input_dim)]
    last = len(net.layers) - 1
    for ell, layer in enumerate(net.layers):
        cur = []
        count = 0
        for r, (terms, b) in enumerate(layer.rational_rows):
            mono = [_monomial(c, prev[j]) for j, c in terms]
            if b != 0:
                mono.append(num(b))
            count += len(mono)
            expr = _sum(mono)
            is_relu = layer.activation == "relu"
            z = out_var(r) if ell == last and not is_relu else f"z_{ell}_{r}"
            decls.append(f"(declare-fun {z} () Real)")
            asserts.append(f"(assert (= {z} {expr}))")
            if is_relu:
                h = out_var(r) if ell == last else f"h_{ell}_{r}"
                decls.append(f"(declare-fun {h} () Real)")
                asserts.extend(relu_assertions(h, z, relu))
                cur.append(h)
            else:
                cur.append(z)
        counts.append(count)
        prev = cur
    return NetEncoding(decls, asserts, counts)


@dataclass
class SmtScript:
    text: str
    var_map: list[str]
    provenance: str
    query: PropertyQuery
    threshold: Fraction = Fraction(0)
    stats: dict = field(default_factory=dict)


def property_assertion(q: PropertyQuery, n: int, threshold: Fraction = Fraction(0)) -> str:
    """Negation of the property, strengthened by ``threshold`` (severity must exceed offset + threshold)."""
    t = Fraction(threshold)
    if q.kind == MASS:
        gap = f"(- {_sum([out_var(i) for i in range(n)])} {_sum([in_var(i) for i in range(n)])})"
        return f"(assert (> {gap} {num(n * (q.epsilon_q + t))}))"
    viol = " ".join(f"(< {out_var(i)} {num(-t)})" for i in range(n))
    return f"(assert (or {viol}))"


def encode_query(net: PlnNet, c: ConstraintSet, q: PropertyQuery, threshold=0, encoding=None,
                 relu: str = "graph") -> SmtScript:
    if net.input_dim != net.output_dim:
        raise ValueError("property queries need a field-to-field network")
    n = net.input_dim
    t = _decimal(threshold) if not isinstance(threshold, Fraction) else threshold
    enc = encoding or encode_net(net, relu)
    var_map = [in_var(i) for i in range(n)]
    lines = [
        f"; {net.name or 'net'} {q.kind} {net.provenance} threshold={t}",
        "(set-option :produce-models true)",
        "(set-logic QF_LRA)",
    ]
    lines += [f"(declare-fun {v} () Real)" for v in var_map]
    lines += enc.declarations
    lines += encode_constraints(c, n)
    lines += enc.assertions
    lines.append(property_assertion(q, n, t))
    lines.append("(check-sat)")
    lines.append("(get-value (" + " ".join(var_map) + "))")
    stats = {
        "monomials_total": sum(enc.monomials),
        "monomials_hidden": enc.hidden_monomials,
        "relus": net.relu_count,
        "assertions": sum(1 for l in lines if l.startswith("(assert")),
    }
    return SmtScript("\n".join(lines) + "\n", var_map, net.provenance, q, t, stats)


def script_filename(model: str, prop: str, encoding: str, threshold) -> str:
    t = float(threshold)
    return f"{model}-{prop}-{encoding}-{t:.10g}.smt2"
