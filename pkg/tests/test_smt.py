import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from conftest import needs_z3
from fnosmt.fno import FnoParams, FnoSpec, HiddenLayer
from fnosmt.pde import ConstraintSet
from fnosmt.plcompile import AffineLayer, PlnNet, compile_exact, compile_frozen, eval_pln_exact
from fnosmt.properties import PropertyQuery
from fnosmt.smt import encode_constraints, encode_net, encode_query, num, rationalize, script_filename
from fnosmt.solver import parse_rational, parse_sexprs, run_solver
from fnosmt.trainer import init_random


def test_rationalize_examples():
    assert rationalize(0.5) == Fraction(1, 2)
    assert rationalize(0.1) == Fraction(3602879701896397, 36028797018963968)
    assert rationalize(-3.0) == Fraction(-3, 1)
    for bad in (float("nan"), float("inf")):
        with pytest.raises(ValueError):
            rationalize(bad)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_rationalize_exact(x):
    q = rationalize(x)
    assert float(q) == x
    assert q.denominator & (q.denominator - 1) == 0


@given(st.fractions())
def test_num_roundtrip(q):
    assert parse_rational(num(q)) == q


def test_constraints_block():
    c = ConstraintSet.for_positivity(8)
    lines = encode_constraints(c, 8)
    assert len(lines) == 32
    for i in range(8):
        assert f"(assert (>= in_{i} (/ 1 10)))" in lines
    assert "(assert (<= (- in_0 in_7) (/ 15 8)))" in lines
    assert "(assert (>= (- in_0 in_7) (- (/ 15 8))))" in lines
    assert c.slope_q == Fraction(15, 8)


def _linear_net(spec_seed=1, n=8, h=2):
    return init_random(FnoSpec(n, h, 1, seed=spec_seed))


def test_monomials_per_equality():
    p = _linear_net()
    ex = encode_net(compile_exact(p))
    # hidden layer: (NH)^2 weights, zero bias at init
    assert ex.monomials[1] == 16 * 16
    fr_net = compile_frozen(p, np.linspace(1, 2, 8))
    fr = encode_net(fr_net)
    rows = fr_net.layers[1].rational_rows
    assert all(len(terms) + (b != 0) == 3 for terms, b in rows)
    assert fr.monomials[1] == 16 * 3


@pytest.mark.parametrize("depth", [1, 2])
@pytest.mark.parametrize("h", [2, 4])
def test_monomial_scaling(depth, h):
    def counts(n):
        p = init_random(FnoSpec(n, h, depth, seed=9))
        return (encode_net(compile_exact(p)).hidden_monomials,
                encode_net(compile_frozen(p, np.linspace(1, 2, n))).hidden_monomials)

    (e8, f8), (e16, f16) = counts(8), counts(16)
    assert abs(e16 / e8 / 4 - 1) <= 0.10
    assert abs(f16 / f8 / 2 - 1) <= 0.10


def test_zero_weights_give_bias_outputs():
    net = PlnNet((AffineLayer(np.zeros((4, 4)), np.array([0.5, -1.0, 0.0, 2.0])),))
    enc = encode_net(net)
    assert "(assert (= out_0 (/ 1 2)))" in enc.assertions
    assert "(assert (= out_1 (- 1)))" in enc.assertions
    assert "(assert (= out_2 0))" in enc.assertions


def test_relu_forms():
    p = init_random(FnoSpec(8, 2, 2, seed=1))
    net = compile_exact(p)
    g = encode_net(net, "graph")
    i = encode_net(net, "ite")
    assert sum("ite" in a for a in i.assertions) == 16
    assert sum(a.startswith("(assert (or") for a in g.assertions) == 16
    with pytest.raises(ValueError):
        encode_net(net, "bigm")


def test_query_layout(model_l2):
    q = PropertyQuery.mass()
    s = encode_query(compile_exact(model_l2), q.constraints(8), q)
    lines = s.text.splitlines()
    assert "(set-logic QF_LRA)" in lines
    assert lines[-2] == "(check-sat)" and lines[-1].startswith("(get-value (in_0")
    declared = [l.split()[1] for l in lines if l.startswith("(declare-fun")]
    assert len(declared) == len(set(declared))
    assert set(s.var_map) <= set(declared)
    assert "(assert (> (- (+ out_0" in s.text and "(/ 2 5)))" in s.text  # N*eps = 8/20
    pos = encode_query(compile_exact(model_l2), PropertyQuery.positivity().constraints(8), PropertyQuery.positivity(),
                       threshold=Fraction(1, 4))
    assert "(< out_3 (- (/ 1 4)))" in pos.text
    assert script_filename("L1-N8-s42", "mass", "exact", Fraction(1, 4)) == "L1-N8-s42-mass-exact-0.25.smt2"


def _eval_term(t, env):
    if isinstance(t, str):
        return env[t] if t in env else parse_rational(t)
    op, args = t[0], [_eval_term(a, env) for a in t[1:]]
    if op == "+":
        return sum(args, Fraction(0))
    if op == "-":
        return -args[0] if len(args) == 1 else args[0] - sum(args[1:], Fraction(0))
    if op == "*":
        out = Fraction(1)
        for a in args:
            out *= a
        return out
    if op == "/":
        return args[0] / args[1]
    raise ValueError(op)


def _replay(script_text, inputs):
    """Evaluate the network equalities of a script at a rational input point."""
    env = {f"in_{i}": x for i, x in enumerate(inputs)}
    for form in parse_sexprs(script_text):
        if not (isinstance(form, list) and form and form[0] == "assert"):
            continue
        body = form[1]
        if body[0] == "=" and isinstance(body[1], str) and body[1] not in env:
            env[body[1]] = _eval_term(body[2], env)
        elif body[0] == "or" and body[1][0] == "=" and body[1][2] == "0":
            h, z = body[2][1], body[2][2]
            env[h] = max(env[z], Fraction(0))
    return env


@pytest.mark.parametrize("which", ["model_l1", "model_l2"])
def test_encoding_exactness(which, request, rng):
    m = request.getfixturevalue(which)
    net = compile_exact(m)
    q = PropertyQuery.mass()
    text = encode_query(net, q.constraints(8), q).text
    for _ in range(3):
        u = [Fraction(int(k), 16) for k in rng.integers(0, 80, size=8)]
        env = _replay(text, u)
        assert [env[f"out_{i}"] for i in range(8)] == eval_pln_exact(net, u)


# ---- brute force over activation patterns on a tiny N=4 net ----

def _tiny_relu_model(seed):
    r = np.random.default_rng(seed)
    spec = FnoSpec(4, 1, 2, seed=seed)
    K = spec.modes_kept
    layers = tuple(
        HiddenLayer(r.normal(size=(1, 1, K)) + 1j * r.normal(size=(1, 1, K)), r.normal(size=(1, 1)),
                    r.normal(size=1) * 0.5, act)
        for act in spec.activations
    )
    return FnoParams(spec, r.normal(size=1), r.normal(size=1) * 0.5, layers, r.normal(size=1), float(r.normal()))


def _lp_max_severity(net, c, q):
    """Exact-semantics optimum by enumerating ReLU patterns (each pattern is an LP)."""
    n = net.input_dim
    lift, hid, mid, proj = net.layers
    A_box = []
    b_box = []
    for i in range(n):
        e = np.zeros(n)
        j = (i + 1) % n
        e[j], e[i] = 1.0, -1.0
        A_box += [e, -e]
        b_box += [c.slope_bound, c.slope_bound]
    W1 = hid.weight @ lift.weight
    b1 = hid.weight @ lift.bias + hid.bias
    best = -np.inf
    for pattern in itertools.product([0, 1], repeat=W1.shape[0]):
        D = np.diag(pattern).astype(float)
        A_ub = list(A_box)
        b_ub = list(b_box)
        for r, on in enumerate(pattern):
            # on: z >= 0  <=>  -W1 u <= b1;  off: z <= 0
            A_ub.append(-W1[r] if on else W1[r])
            b_ub.append(b1[r] if on else -b1[r])
        Wout = proj.weight @ mid.weight @ D
        M = Wout @ W1
        d = Wout @ b1 + proj.weight @ mid.bias + proj.bias
        objectives = [(M.sum(0) / n - 1.0 / n, d.sum() / n)] if q.kind == "mass" else [(-M[i], -d[i]) for i in range(n)]
        for obj, const in objectives:
            res = linprog(-obj, A_ub=np.array(A_ub), b_ub=np.array(b_ub), bounds=[(c.lower, c.upper)] * n,
                          method="highs")
            if res.status == 0:
                best = max(best, -res.fun + const)
    return best


@needs_z3
@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("kind", ["mass", "positivity"])
def test_negation_matches_bruteforce(seed, kind):
    m = _tiny_relu_model(seed)
    net = compile_exact(m)
    q = PropertyQuery(kind, epsilon=0.05)
    c = q.constraints(4)
    opt = _lp_max_severity(net, c, q)
    enc = encode_net(net)
    gap = opt - q.offset
    cases = [(gap - 1e-4, "sat"), (gap + 1e-4, "unsat")] if gap > 1e-4 else [(0.0, "unsat")]
    for t, expect in cases:
        script = encode_query(net, c, q, Fraction(t).limit_denominator(10**9), encoding=enc)
        assert run_solver(script, timeout=60).status == expect, (kind, seed, opt, t)


@needs_z3
def test_scripts_parse_without_warnings(model_l2):
    for kind in ("mass", "positivity"):
        q = PropertyQuery(kind)
        for net in (compile_exact(model_l2), compile_frozen(model_l2, np.ones(8))):
            text = encode_query(net, q.constraints(8), q).text
            out = run_solver(text.replace("(check-sat)", "").replace(text.splitlines()[-1], ""), timeout=30)
            assert "error" not in out.raw.lower() and "warning" not in out.raw.lower()
