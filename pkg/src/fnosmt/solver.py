"""Run an SMT-LIB2 solver as a subprocess and decode its answers."""
from __future__ import annotations

import math
import os
import re
import shlex
import shutil
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

DEFAULT_SOLVER_CMD = "z3 -smt2 {file}"
DEFAULT_TIMEOUT = 600.0

STATUSES = ("sat", "unsat", "unknown", "timeout")


class SolverError(RuntimeError):
    """Solver missing, crashed, or answered something we cannot use."""

    def __init__(self, msg, raw=""):
        super().__init__(msg)
        self.raw = raw


# ------------------------------------------------------------- s-expressions

_TOKEN = re.compile(r'\s+|;[^\n]*|(\()|(\))|("(?:[^"]|"")*")|(\|[^|]*\|)|([^\s()";|]+)')


def tokenize(text: str):
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # stray quote or bar: skip the character
            pos += 1
            continue
        pos = m.end()
        lp, rp, s, q, atom = m.groups()
        if lp:
            yield "("
        elif rp:
            yield ")"
        elif s:
            yield s
        elif q:
            yield q[1:-1]
        elif atom:
            yield atom


def parse_sexprs(text: str) -> list:
    """All top-level s-expressions in ``text``; lists become Python lists, atoms strings.

    Unbalanced closing parens are ignored and an unterminated trailing list is
    returned as far as it got, so truncated transcripts still parse.
    """
    stack = [[]]
    for tok in tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) > 1:
                done = stack.pop()
                stack[-1].append(done)
        else:
            stack[-1].append(tok)
    while len(stack) > 1:
        done = stack.pop()
        stack[-1].append(done)
    return stack[0]


_DECIMAL = re.compile(r"^[0-9]+(\.[0-9]*)?$")


def parse_rational(term) -> Fraction:
    """Exact value of an SMT-LIB real term: numeral, decimal, (/ p q), (- t), nested."""
    if isinstance(term, str):
        term = term.strip()
        if term.startswith("(") or " " in term:
            parsed = parse_sexprs(term)
            if len(parsed) != 1:
                raise ValueError(f"malformed rational term: {term!r}")
            return parse_rational(parsed[0])
        if _DECIMAL.match(term):
            return Fraction(term)
        raise ValueError(f"malformed rational term: {term!r}")
    if isinstance(term, list) and term:
        op, args = term[0], term[1:]
        if op == "-" and len(args) == 1:
            return -parse_rational(args[0])
        if op == "-" and len(args) > 1:
            return parse_rational(args[0]) - sum((parse_rational(a) for a in args[1:]), Fraction(0))
        if op == "/" and len(args) == 2:
            den = parse_rational(args[1])
            if den == 0:
                raise ValueError("division by zero in rational term")
            return parse_rational(args[0]) / den
        if op == "+" and args:
            return sum((parse_rational(a) for a in args), Fraction(0))
    raise ValueError(f"malformed rational term: {term!r}")


def _collect_assignments(form, out: dict) -> None:
    """Pull name -> value pairs from get-value or get-model style responses."""
    if not isinstance(form, list):
        return
    if len(form) == 5 and form[0] == "define-fun" and form[2] == []:
        try:
            out[form[1]] = parse_rational(form[4])
        except ValueError:
            pass
        return
    if len(form) == 2 and isinstance(form[0], str) and form[0] not in ("error", "model", "-", "/", "+"):
        try:
            out[form[0]] = parse_rational(form[1])
            return
        except ValueError:
            pass
    for sub in form:
        if isinstance(sub, list):
            _collect_assignments(sub, out)


def parse_solver_output(raw: str) -> tuple[str | None, dict[str, Fraction]]:
    """First status token and any variable assignments in a solver transcript."""
    status = None
    model: dict[str, Fraction] = {}
    for form in parse_sexprs(raw):
        if isinstance(form, str):
            if status is None and form in STATUSES:
                status = form
            continue
        if form and form[0] == "error":
            continue
        _collect_assignments(form, model)
    return status, model


# ------------------------------------------------------------------ running

@dataclass
class SolverOutcome:
    status: str  # sat | unsat | unknown | timeout | error
    model: dict[str, Fraction] | None = None
    wall_time: float = 0.0
    raw: str = ""
    returncode: int | None = None
    extra: dict = field(default_factory=dict)


def solver_argv(template: str, path, timeout: float) -> list[str]:
    secs = max(1, math.ceil(timeout)) if timeout and math.isfinite(timeout) else 0
    return [a.format(file=str(path), timeout=secs, timeout_ms=int(secs * 1000)) for a in shlex.split(template)]


def check_solver(template: str = DEFAULT_SOLVER_CMD) -> str:
    """Resolve the solver executable or raise ``SolverError`` with a hint."""
    exe = shlex.split(template)[0]
    found = shutil.which(exe)
    if found is None:
        raise SolverError(
            f"SMT solver {exe!r} not found on PATH; install one (e.g. `pip install z3-solver`) "
            f"or pass --solver-cmd with a template such as 'z3 -smt2 {{file}}'"
        )
    return found


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass
    proc.wait()


def run_solver(script, solver_cmd: str = DEFAULT_SOLVER_CMD, timeout: float = DEFAULT_TIMEOUT,
               workdir=None, keep_file=None) -> SolverOutcome:
    """Write ``script`` (an ``SmtScript`` or SMT-LIB text) to a file and run the solver on it.

    The wall-clock ``timeout`` is enforced by killing the solver's whole
    process group.  ``keep_file`` optionally names where to leave the script.
    """
    text = script if isinstance(script, str) else script.text
    argv0 = shlex.split(solver_cmd)[0]
    if shutil.which(argv0) is None:
        check_solver(solver_cmd)
    tmpdir = None
    if keep_file is not None:
        path = Path(keep_file)
        path.parent.mkdir(parents=True, exist_ok=True)
    else:
        tmpdir = tempfile.TemporaryDirectory(dir=workdir)
        path = Path(tmpdir.name) / "query.smt2"
    path.write_text(text)
    argv = solver_argv(solver_cmd, path, timeout)
    start = time.perf_counter()
    try:
        proc = subprocess.Popen(argv, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
                                start_new_session=True)
    except OSError as exc:
        raise SolverError(f"failed to start solver {argv!r}: {exc}") from exc
    try:
        raw, _ = proc.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        _kill_group(proc)
        try:
            raw = proc.stdout.read() if proc.stdout else ""
        except ValueError:
            raw = ""
        return SolverOutcome("timeout", None, time.perf_counter() - start, raw or "", proc.returncode)
    finally:
        if tmpdir is not None:
            tmpdir.cleanup()
    elapsed = time.perf_counter() - start
    status, model = parse_solver_output(raw)
    if status is None:
        return SolverOutcome("error", None, elapsed, raw, proc.returncode)
    if status == "sat":
        return SolverOutcome("sat", model, elapsed, raw, proc.returncode)
    return SolverOutcome(status, None, elapsed, raw, proc.returncode)


def decode_counterexample(outcome: SolverOutcome, var_map) -> tuple[np.ndarray, list[Fraction]]:
    """Input field from a SAT model: (binary64 rendering, exact rationals), in var_map order."""
    if outcome.status != "sat" or outcome.model is None:
        raise SolverError(f"no model to decode (status {outcome.status})", outcome.raw)
    missing = [v for v in var_map if v not in outcome.model]
    if missing:
        raise SolverError(f"solver model lacks {len(missing)} input variable(s), e.g. {missing[0]}", outcome.raw)
    exact = [outcome.model[v] for v in var_map]
    return np.array([float(q) for q in exact]), exact
