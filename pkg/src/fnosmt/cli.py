"""Command line entry point: ``fnosmt <subcommand>``."""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import report
from .falsify import grad_falsify, mc_falsify
from .fno import FnoSpec, load_model, save_model
from .harness import (ExperimentConfig, _falsify_row, _z3_row, datasets_for, maximize_severity,
                      run_experiment, train_model, verify)
from .pde import Dataset, Grid, ParamRanges, gen_dataset
from .plcompile import compile_exact, compile_frozen, load_net, save_net
from .properties import PropertyQuery, violates
from .solver import DEFAULT_SOLVER_CMD, SolverError, check_solver


def _append_rows(path, rows):
    path = Path(path)
    old = report.read_rows(path) if path.exists() else []
    report.write_rows(old + list(rows), path)


def _reference(params, data):
    if data:
        return Dataset.load(data).inputs.mean(axis=0)
    train, _ = datasets_for(ExperimentConfig(n_test=1), params.spec.grid_size)
    return train.inputs.mean(axis=0)


def _net(params, encoding, data, compiled):
    if compiled:
        return load_net(compiled)
    if encoding == "exact":
        return compile_exact(params)
    return compile_frozen(params, _reference(params, data))


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug).")
def main(verbose):
    """Compile small Fourier neural operators to QF_LRA and check physical properties."""
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command("gen-data")
@click.option("--n", "n", type=int, required=True, help="Grid size N.")
@click.option("--samples", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen_data_cmd(n, samples, seed, out):
    """Generate (u0, u(T)) pairs from the exact ADR propagator."""
    ds = gen_dataset(samples, Grid(n), ParamRanges(), seed)
    ds.save(out)
    click.echo(f"wrote {len(ds)} pairs to {out}")


@main.command("train")
@click.option("--n", "n", type=int, required=True)
@click.option("--hidden", type=int, default=2, show_default=True)
@click.option("--depth", type=int, default=1, show_default=True)
@click.option("--modes", type=int, default=None, help="Retained Fourier modes (default N/2+1 if N<=16 else N/4).")
@click.option("--seed", type=int, required=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), help="Training dataset (default: generated).")
@click.option("--test-data", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default="models", show_default=True)
@click.option("--training-csv", type=click.Path(dir_okay=False))
def train_cmd(n, hidden, depth, modes, seed, data, test_data, out, training_csv):
    """Random-feature fit: frozen random hidden layers, least-squares projection."""
    spec = FnoSpec(n, hidden, depth, modes, seed=seed)
    default_train, default_test = datasets_for(ExperimentConfig(), n)
    train = Dataset.load(data) if data else default_train
    test = Dataset.load(test_data) if test_data else default_test
    params, row = train_model(spec, train, test)
    Path(out).mkdir(parents=True, exist_ok=True)
    path = Path(out) / f"{params.name}.json"
    save_model(params, path)
    if training_csv:
        old = report.read_train_rows(training_csv) if Path(training_csv).exists() else []
        report.write_train_rows(old + [row], training_csv)
    click.echo(f"{params.name}: {row.params} params, train MSE {row.train_mse:.4g}, test MSE {row.test_mse:.4g} "
               f"-> {path}")


@main.command("compile")
@click.option("--model", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--encoding", type=click.Choice(["exact", "frozen"]), default="exact", show_default=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False),
              help="Dataset whose mean field is the frozen reference input.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def compile_cmd(model, encoding, data, out):
    """Compile a model file into a dense piecewise-linear network file."""
    params = load_model(model)
    net = _net(params, encoding, data, None)
    save_net(net, out)
    shapes = " -> ".join(f"{l.shape[1]}x{l.shape[0]}{'/relu' if l.activation == 'relu' else ''}" for l in net.layers)
    click.echo(f"{params.name} [{encoding}]: {shapes} -> {out}")


@main.command("verify")
@click.option("--model", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--property", "prop", type=click.Choice(["mass", "positivity"]), required=True)
@click.option("--encoding", type=click.Choice(["exact", "frozen"]), default="exact", show_default=True)
@click.option("--compiled", type=click.Path(exists=True, dir_okay=False), help="Use a precompiled network file.")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), help="Dataset for the frozen reference.")
@click.option("--epsilon", type=float, default=0.05, show_default=True)
@click.option("--lower", type=float, default=0.1, show_default=True, help="Input lower bound for positivity.")
@click.option("--timeout", type=float, default=600.0, show_default=True)
@click.option("--solver-cmd", default=DEFAULT_SOLVER_CMD, show_default=True,
              help="Command template; {file} and {timeout} are substituted.")
@click.option("--maximize/--no-maximize", default=False, show_default=True,
              help="Threshold-search for the most severe counterexample.")
@click.option("--budget", type=float, default=300.0, show_default=True, help="Time budget for --maximize.")
@click.option("--relu-encoding", type=click.Choice(["graph", "ite"]), default="graph", show_default=True)
@click.option("--artifacts", type=click.Path(file_okay=False), help="Keep scripts and transcripts here.")
@click.option("--results", type=click.Path(dir_okay=False), help="Append the result row to this CSV.")
def verify_cmd(model, prop, encoding, compiled, data, epsilon, lower, timeout, solver_cmd, maximize, budget,
               relu_encoding, artifacts, results):
    """Ask the SMT solver for a violation of one property."""
    try:
        check_solver(solver_cmd)
    except SolverError as exc:
        raise click.ClickException(str(exc))
    params = load_model(model)
    net = _net(params, encoding, data, compiled)
    q = PropertyQuery(prop, epsilon=epsilon, lower=lower)
    art = Path(artifacts) if artifacts else None
    try:
        if maximize:
            v = maximize_severity(params, net, q, solver_cmd=solver_cmd, timeout=timeout, budget=budget,
                                  artifacts=art, relu=relu_encoding)
        else:
            v = verify(params, net, q, solver_cmd=solver_cmd, timeout=timeout, artifacts=art, relu=relu_encoding)
    except SolverError as exc:
        raise click.ClickException(f"{exc}\n--- solver output ---\n{exc.raw}")
    row = _z3_row(params, f"z3-{net.provenance}", prop, v)
    msg = f"{params.name} {prop} [{net.provenance}]: {v.kind} ({v.soundness}) in {v.solve_time:.3f}s"
    if v.severity is not None:
        msg += f", severity {v.severity:.6g} on original"
        if v.confirmed is not None:
            msg += " (confirmed)" if v.confirmed else " (NOT confirmed on original)"
        msg += "\n  input: " + np.array2string(v.witness, precision=5, max_line_width=120)
    if row.note:
        msg += f"\n  note: {row.note}"
    click.echo(msg)
    if results:
        _append_rows(results, [row])


@main.command("falsify")
@click.option("--model", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--property", "prop", type=click.Choice(["mass", "positivity"]), required=True)
@click.option("--method", type=click.Choice(["mc", "grad"]), required=True)
@click.option("--epsilon", type=float, default=0.05, show_default=True)
@click.option("--lower", type=float, default=0.1, show_default=True)
@click.option("--samples", type=int, default=5000, show_default=True, help="MC sample count.")
@click.option("--restarts", type=int, default=10, show_default=True)
@click.option("--steps", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--results", type=click.Path(dir_okay=False), help="Append the result row to this CSV.")
def falsify_cmd(model, prop, method, epsilon, lower, samples, restarts, steps, seed, results):
    """Search for a violation on the original model without a solver."""
    params = load_model(model)
    q = PropertyQuery(prop, epsilon=epsilon, lower=lower)
    c = q.constraints(params.spec.grid_size)
    if method == "mc":
        res = mc_falsify(params, c, q, samples, seed)
    else:
        res = grad_falsify(params, c, q, restarts, steps, seed)
    bad = violates(q, res.severity)
    click.echo(f"{params.name} {prop} [{method}]: best severity {res.severity:.6g} "
               f"({'violation' if bad else 'no violation'}), {res.evaluations} evaluations, {res.wall_time:.2f}s")
    if results:
        _append_rows(results, [_falsify_row(params, prop, method, res, bad)])


@main.command("run-all")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON experiment config (default: the built-in 10-model matrix plus frozen track).")
@click.option("--output", type=click.Path(file_okay=False), help="Override the config's output directory.")
@click.option("--dump-config", is_flag=True, help="Print the effective config as JSON and exit.")
def run_all_cmd(config_path, output, dump_config):
    """Train, compile, verify and falsify the whole model matrix; write CSV, summary and plots."""
    try:
        cfg = ExperimentConfig.load(config_path) if config_path else ExperimentConfig()
    except (ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
        click.echo(f"error: bad config: {exc}", err=True)
        sys.exit(2)
    if output:
        cfg.output_dir = output
    if dump_config:
        click.echo(json.dumps(cfg.to_dict(), indent=1))
        return
    try:
        check_solver(cfg.solver_cmd)
    except SolverError as exc:
        raise click.ClickException(str(exc))
    exp = run_experiment(cfg)
    click.echo(report.render_summary(exp.rows))
    click.echo(f"results in {cfg.output_dir}/")


@main.command("report")
@click.option("--results", "results_dir", type=click.Path(exists=True, file_okay=False), required=True)
def report_cmd(results_dir):
    """Rebuild summary.txt and plots from a results directory."""
    d = Path(results_dir)
    rows = report.read_rows(d / "results.csv") if (d / "results.csv").exists() else []
    train = report.read_train_rows(d / "training.csv") if (d / "training.csv").exists() else []
    text = report.render_summary(rows)
    (d / "summary.txt").write_text(text)
    plots = report.make_plots(rows, train, d / "plots")
    click.echo(text)
    for p in plots:
        click.echo(f"plot: {p}")


if __name__ == "__main__":
    main()
