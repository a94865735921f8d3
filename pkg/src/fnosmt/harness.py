"""Train -> compile -> encode -> solve -> validate pipeline and experiment runner."""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from .falsify import grad_falsify, mc_falsify
from .fno import FnoParams, FnoSpec, forward, save_model
from .pde import ConstraintSet, Dataset, Grid, ParamRanges, gen_dataset
from .plcompile import PlnNet, compile_exact, compile_frozen, eval_pln_exact, save_net
from .properties import MASS, POSITIVITY, PropertyQuery, severity, severity_exact, violates
from .smt import encode_net, encode_query, script_filename
from .solver import DEFAULT_SOLVER_CMD, SolverError, check_solver, decode_counterexample, run_solver
from .trainer import evaluate_mse, fit_projection, init_random

log = logging.getLogger(__name__)

SOUND = "SoundForOriginal"
FROZEN_ONLY = "FrozenSurrogateOnly"
AUDIT_TOL = 1e-6


# ------------------------------------------------------------------ verdicts

@dataclass
class Verdict:
    kind: str                       # proof | counterexample | timeout | unknown | error
    soundness: str
    solve_time: float
    witness: np.ndarray | None = None
    exact_field: list | None = None
    severity: float | None = None   # re-measured on the original model
    encoded_severity: Fraction | None = None  # exact, on the compiled net
    confirmed: bool | None = None
    search_time: float = 0.0
    queries: int = 1
    thresholds: list = field(default_factory=list)  # (threshold, status) in query order
    budget_exhausted: bool = False
    raw: str = ""


def validate_ce(model: FnoParams, u, q: PropertyQuery) -> tuple[float, bool]:
    """Severity of ``u`` on the original FFT-path model and whether it violates ``q``."""
    u = np.asarray(u, dtype=np.float64)
    s = float(severity(q, u, forward(model, u)))
    return s, violates(q, s)


def verify(model: FnoParams, net: PlnNet, q: PropertyQuery, c: ConstraintSet | None = None, threshold=Fraction(0),
           solver_cmd: str = DEFAULT_SOLVER_CMD, timeout: float = 600.0, artifacts: Path | None = None,
           encoding=None, relu: str = "graph") -> Verdict:
    """One solver query; SAT models are decoded, audited exactly, and re-measured on ``model``."""
    n = net.input_dim
    c = c or q.constraints(n)
    script = encode_query(net, c, q, threshold, encoding=encoding, relu=relu)
    keep = None
    if artifacts is not None:
        keep = Path(artifacts) / "smt" / script_filename(net.name or "net", q.kind, net.provenance, threshold)
    out = run_solver(script, solver_cmd, timeout, keep_file=keep)
    if artifacts is not None:
        tr = Path(artifacts) / "transcripts" / (keep.stem + ".txt")
        tr.parent.mkdir(parents=True, exist_ok=True)
        tr.write_text(out.raw)
    frozen = net.provenance == "frozen"
    scope = FROZEN_ONLY if frozen else SOUND
    if out.status == "unsat":
        return Verdict("proof", scope, out.wall_time, raw=out.raw, thresholds=[(script.threshold, "unsat")])
    if out.status != "sat":
        return Verdict(out.status, scope, out.wall_time, raw=out.raw, thresholds=[(script.threshold, out.status)])
    u, exact = decode_counterexample(out, script.var_map)
    if not c.contains_exact(exact):
        raise SolverError("solver model violates the input constraints", out.raw)
    enc_sev = severity_exact(q, exact, eval_pln_exact(net, exact))
    if not enc_sev > q.offset_q + script.threshold:
        raise SolverError(f"solver model does not violate the encoded property (severity {float(enc_sev)})", out.raw)
    sev, viol = validate_ce(model, u, q)
    if frozen:
        confirmed = viol
        scope = SOUND if confirmed else FROZEN_ONLY
    else:
        confirmed = None
        if abs(sev - float(enc_sev)) >= AUDIT_TOL:
            raise SolverError(f"exact-encoding CE gap {abs(sev - float(enc_sev)):.3g} exceeds {AUDIT_TOL}", out.raw)
    return Verdict("counterexample", scope, out.wall_time, u, exact, sev, enc_sev, confirmed,
                   thresholds=[(script.threshold, "sat")], raw=out.raw)


def maximize_severity(model: FnoParams, net: PlnNet, q: PropertyQuery, c: ConstraintSet | None = None,
                      solver_cmd: str = DEFAULT_SOLVER_CMD, timeout: float = 600.0, budget: float = 600.0,
                      tol: float = 1e-3, cap: float = 64.0, artifacts: Path | None = None,
                      relu: str = "graph") -> Verdict:
    """Threshold search for the worst counterexample the encoding admits.

    A SAT answer at threshold t (severity > offset + t) raises the floor to
    the witness's own level; UNSAT lowers the ceiling.  After every SAT the
    next query probes just above the new floor (solver witnesses often sit
    at the optimum already); otherwise the ceiling starts at max(1, 2*floor)
    and doubles while SAT up to ``cap``, then bisection.  Stops when
    ceiling - floor < ``tol`` or the time budget is spent; the returned CE
    is the last SAT witness.
    """
    c = c or q.constraints(net.input_dim)
    enc = encode_net(net, relu)
    t0 = time.perf_counter()
    first = verify(model, net, q, c, Fraction(0), solver_cmd, timeout, artifacts, enc)
    if first.kind != "counterexample":
        return first
    best = first
    history = list(first.thresholds)
    queries = 1
    offset = q.offset_q
    lo = best.encoded_severity - offset
    hi = None
    exhausted = False

    def ask(t):
        remaining = budget - (time.perf_counter() - t0)
        if remaining <= 0:
            return None
        return verify(model, net, q, c, t, solver_cmd, min(timeout, remaining), artifacts, enc)

    step = Fraction(str(tol)) * Fraction(99, 100)
    probe = True
    while hi is None or hi - lo >= Fraction(str(tol)):
        if probe:
            t = lo + step
        elif hi is None:
            t = max(Fraction(1), 2 * lo)
            if t > cap:
                hi = Fraction(cap)
                continue
        else:
            t = _midpoint(lo, hi)
        if hi is not None and not lo < t < hi:
            break
        r = ask(t)
        if r is None:
            exhausted = True
            break
        queries += 1
        history.extend(r.thresholds)
        if r.kind == "counterexample":
            best = r
            lo = max(t, r.encoded_severity - offset)
            # alternate: a SAT probe is followed by a jump/bisection step
            probe = not probe
        elif r.kind == "proof":
            hi = t
            probe = False
        else:
            exhausted = True
            break
    best.search_time = time.perf_counter() - t0
    best.solve_time = first.solve_time
    best.queries = queries
    best.thresholds = history
    best.budget_exhausted = exhausted
    return best


def _midpoint(lo: Fraction, hi: Fraction) -> Fraction:
    mid = (lo + hi) / 2
    short = mid.limit_denominator(10**9)
    return short if lo < short < hi else mid


# --------------------------------------------------------------- experiment

@dataclass
class ResultRow:
    model: str
    N: int
    H: int
    L: int
    property: str
    method: str          # z3-exact | z3-frozen | grad | mc
    verdict: str         # proof | counterexample | timeout | unknown | error | none
    soundness: str = ""
    severity: float | None = None
    time_s: float = 0.0
    confirmed: bool | None = None
    search_time_s: float = 0.0
    queries: int = 0
    evaluations: int = 0
    encoded_severity: float | None = None
    note: str = ""

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def key(self):
        return (self.property, self.model, self.method)


@dataclass
class TrainRow:
    model: str
    seed: int
    N: int
    H: int
    L: int
    params: int
    train_mse: float
    test_mse: float


def paper_models() -> list[FnoSpec]:
    """Ten exact-track models: L=1 at N in {8,16,32}, L=2 at N in {8,16}, seeds 42 and 123."""
    specs = [FnoSpec(n, 2, 1, seed=s) for n in (8, 16, 32) for s in (42, 123)]
    specs += [FnoSpec(n, 2, 2, seed=s) for n in (8, 16) for s in (42, 123)]
    return specs


def frozen_models() -> list[FnoSpec]:
    specs = [FnoSpec(n, h, 1, seed=7) for n in (32, 64) for h in (2, 4, 8)]
    specs += [FnoSpec(n, 4, 2, seed=7) for n in (32, 64)]
    return specs


def _spec(m) -> FnoSpec:
    if isinstance(m, FnoSpec):
        return m
    m = dict(m)
    if m.get("activations") is not None:
        m["activations"] = tuple(m["activations"])
    return FnoSpec(**m)


@dataclass
class ExperimentConfig:
    models: list[FnoSpec] = field(default_factory=paper_models)
    frozen: list[FnoSpec] = field(default_factory=frozen_models)
    properties: tuple[str, ...] = (MASS, POSITIVITY)
    epsilon: float = 0.05
    lower: float = 0.1
    n_train: int = 500
    n_test: int = 200
    solver_cmd: str = DEFAULT_SOLVER_CMD
    timeout: float = 600.0
    maximize: bool = True
    maximize_budget: float = 300.0
    relu_encoding: str = "graph"
    mc_samples: int = 5000
    grad_restarts: int = 10
    grad_steps: int = 100
    falsifiers: tuple[str, ...] = ("mc", "grad")
    output_dir: str = "results"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        self.models = [_spec(m) for m in self.models]
        self.frozen = [_spec(m) for m in self.frozen]
        self.properties = tuple(self.properties)
        self.falsifiers = tuple(self.falsifiers)

    def query(self, prop: str) -> PropertyQuery:
        return PropertyQuery(prop, epsilon=self.epsilon, lower=self.lower)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["models"] = [m.to_dict() for m in self.models]
        d["frozen"] = [m.to_dict() for m in self.frozen]
        return d

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _data_seed(global_seed: int, n: int, split: str) -> int:
    return int(np.random.SeedSequence([global_seed, n, {"train": 0, "test": 1}[split]]).generate_state(1)[0])


def datasets_for(cfg: ExperimentConfig, n: int) -> tuple[Dataset, Dataset]:
    grid = Grid(n)
    train = gen_dataset(cfg.n_train, grid, ParamRanges(), _data_seed(cfg.seed, n, "train"))
    test = gen_dataset(cfg.n_test, grid, ParamRanges(), _data_seed(cfg.seed, n, "test"))
    return train, test


def train_model(spec: FnoSpec, train: Dataset, test: Dataset) -> tuple[FnoParams, TrainRow]:
    params = fit_projection(init_random(spec), train)
    row = TrainRow(params.name, spec.seed, spec.grid_size, spec.hidden_width, spec.depth, spec.count_params(),
                   evaluate_mse(params, train), evaluate_mse(params, test))
    return params, row


def _z3_row(params: FnoParams, method: str, prop: str, v: Verdict) -> ResultRow:
    s = params.spec
    note = ""
    if v.kind == "proof":
        note = ("certifies the rationalized-weight real-valued compiled model" if v.soundness == SOUND
                else "certifies frozen surrogate only, not original model")
    if v.budget_exhausted:
        note = (note + "; " if note else "") + "severity search stopped on budget"
    return ResultRow(params.name, s.grid_size, s.hidden_width, s.depth, prop, method, v.kind, v.soundness,
                     v.severity, v.solve_time, v.confirmed, v.search_time, v.queries, 0,
                     None if v.encoded_severity is None else float(v.encoded_severity), note)


def _falsify_row(params: FnoParams, prop: str, method: str, res, violating: bool) -> ResultRow:
    s = params.spec
    kind = "counterexample" if violating else "none"
    return ResultRow(params.name, s.grid_size, s.hidden_width, s.depth, prop, method, kind, SOUND,
                     res.severity, res.wall_time, None, 0.0, 0, res.evaluations)


class Experiment:
    """Holds trained models, compiled nets, and result rows for one config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.models: dict[str, FnoParams] = {}
        self.references: dict[str, np.ndarray] = {}
        self.train_rows: list[TrainRow] = []
        self.rows: list[ResultRow] = []

    # -- phases
    def train(self) -> None:
        specs = list(self.cfg.models) + list(self.cfg.frozen)
        cache = {}
        (self.out / "models").mkdir(parents=True, exist_ok=True)
        for spec in specs:
            n = spec.grid_size
            if n not in cache:
                cache[n] = datasets_for(self.cfg, n)
            train, test = cache[n]
            params, row = train_model(spec, train, test)
            self.models[params.name] = params
            self.references[params.name] = train.inputs.mean(axis=0)
            self.train_rows.append(row)
            save_model(params, self.out / "models" / f"{params.name}.json")
            log.info("trained %s: train MSE %.3g, test MSE %.3g", params.name, row.train_mse, row.test_mse)

    def _solve(self, params: FnoParams, net: PlnNet, method: str, prop: str) -> ResultRow:
        q = self.cfg.query(prop)
        c = q.constraints(net.input_dim)
        kw = dict(solver_cmd=self.cfg.solver_cmd, timeout=self.cfg.timeout, artifacts=self.out,
                  relu=self.cfg.relu_encoding)
        try:
            if self.cfg.maximize:
                v = maximize_severity(params, net, q, c, budget=self.cfg.maximize_budget, **kw)
            else:
                v = verify(params, net, q, c, **kw)
        except SolverError as exc:
            log.error("%s %s %s failed: %s", params.name, prop, method, exc)
            s = params.spec
            return ResultRow(params.name, s.grid_size, s.hidden_width, s.depth, prop, method, "error",
                             note=str(exc))
        if v.witness is not None:
            ce = self.out / "counterexamples" / f"{params.name}-{prop}-{method}.json"
            ce.parent.mkdir(parents=True, exist_ok=True)
            ce.write_text(json.dumps({"field": v.witness.tolist(), "exact": [str(x) for x in v.exact_field],
                                      "severity": v.severity, "encoded_severity": str(v.encoded_severity),
                                      "confirmed": v.confirmed}))
        return _z3_row(params, method, prop, v)

    def _falsify(self, params: FnoParams, method: str, prop: str) -> ResultRow:
        q = self.cfg.query(prop)
        c = q.constraints(params.spec.grid_size)
        seed = [self.cfg.seed, params.spec.grid_size, params.spec.seed, int(prop == MASS)]
        if method == "mc":
            res = mc_falsify(params, c, q, self.cfg.mc_samples, seed)
        else:
            res = grad_falsify(params, c, q, self.cfg.grad_restarts, self.cfg.grad_steps, seed)
        return _falsify_row(params, prop, method, res, violates(q, res.severity))

    def jobs(self):
        out = []
        (self.out / "compiled").mkdir(parents=True, exist_ok=True)
        for spec in self.cfg.models:
            params = self.models[spec.name]
            net = compile_exact(params)
            save_net(net, self.out / "compiled" / f"{params.name}-exact.json")
            for prop in self.cfg.properties:
                out.append((self._solve, (params, net, "z3-exact", prop)))
                for m in self.cfg.falsifiers:
                    out.append((self._falsify, (params, m, prop)))
        for spec in self.cfg.frozen:
            params = self.models[spec.name]
            net = compile_frozen(params, self.references[params.name])
            save_net(net, self.out / "compiled" / f"{params.name}-frozen.json")
            for prop in self.cfg.properties:
                out.append((self._solve, (params, net, "z3-frozen", prop)))
                for m in self.cfg.falsifiers:
                    out.append((self._falsify, (params, m, prop)))
        return out

    def run(self) -> list[ResultRow]:
        check_solver(self.cfg.solver_cmd)
        if not self.models:
            self.train()
        jobs = self.jobs()
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(self.cfg.workers) as pool:
                rows = list(pool.map(lambda j: j[0](*j[1]), jobs))
        else:
            rows = [fn(*args) for fn, args in jobs]
        self.rows = sorted(rows, key=ResultRow.key)
        return self.rows


def run_experiment(cfg: ExperimentConfig) -> Experiment:
    """Run the whole matrix and write results.csv, training.csv, summary.txt and plots."""
    from . import report

    exp = Experiment(cfg)
    exp.run()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1))
    report.write_rows(exp.rows, out / "results.csv")
    report.write_train_rows(exp.train_rows, out / "training.csv")
    (out / "summary.txt").write_text(report.render_summary(exp.rows))
    report.make_plots(exp.rows, exp.train_rows, out / "plots")
    return exp
