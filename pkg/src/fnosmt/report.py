"""CSV output, the verdict-count summary table, and plots."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import asdict, fields
from pathlib import Path

from .harness import ResultRow, TrainRow
from .properties import MASS, POSITIVITY

VERDICT_COLUMNS = ("Proof", "CE", "UC", "TO")


def write_rows(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ResultRow.header())
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in asdict(r).items()})


def write_train_rows(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=[f.name for f in fields(TrainRow)])
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


def _cast(f, v):
    if v == "":
        return None if f.default is None else f.default
    if f.name in ("N", "H", "L", "queries", "evaluations", "seed", "params"):
        return int(v)
    if f.name in ("severity", "time_s", "search_time_s", "encoded_severity", "train_mse", "test_mse"):
        return float(v)
    if f.name == "confirmed":
        return v == "True"
    return v


def read_rows(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        fs = {f.name: f for f in fields(ResultRow)}
        return [ResultRow(**{k: _cast(fs[k], v) for k, v in rec.items()}) for rec in csv.DictReader(fh)]


def read_train_rows(path) -> list[TrainRow]:
    with open(path, newline="") as fh:
        fs = {f.name: f for f in fields(TrainRow)}
        return [TrainRow(**{k: _cast(fs[k], v) for k, v in rec.items()}) for rec in csv.DictReader(fh)]


def verdict_column(row: ResultRow) -> str | None:
    if row.verdict == "proof":
        return "Proof"
    if row.verdict == "counterexample":
        if row.method == "z3-frozen" and not row.confirmed:
            return "UC"
        return "CE"
    if row.verdict in ("timeout", "unknown"):
        return "TO"
    return None


def encoding_group(row: ResultRow) -> str | None:
    if row.method == "z3-exact":
        return f"Exact, L={row.L}"
    if row.method == "z3-frozen":
        return "Frozen"
    return None


def summary_counts(rows) -> dict:
    """{(encoding group, property): {Proof, CE, UC, TO, ERR}} over solver rows."""
    table = defaultdict(lambda: dict.fromkeys(VERDICT_COLUMNS + ("ERR",), 0))
    for r in rows:
        g = encoding_group(r)
        if g is None:
            continue
        col = verdict_column(r) or "ERR"
        table[(g, r.property)][col] += 1
    return dict(table)


def severity_comparison(rows) -> dict:
    """{(property, model): {method: severity}} using each method's best severity."""
    out = defaultdict(dict)
    for r in rows:
        if r.severity is None:
            continue
        method = "z3" if r.method.startswith("z3") else r.method
        out[(r.property, r.model)][method] = r.severity
    return dict(out)


def z3_wins(rows, prop: str = MASS) -> tuple[int, int]:
    """Models where the solver's CE is at least as severe as both falsifiers', out of models compared."""
    wins = total = 0
    for (p, _model), sev in severity_comparison(
            [r for r in rows if r.method in ("z3-exact", "grad", "mc")]).items():
        if p != prop or "z3" not in sev or len(sev) < 2:
            continue
        total += 1
        if all(sev["z3"] >= v for k, v in sev.items() if k != "z3"):
            wins += 1
    return wins, total


def render_summary(rows) -> str:
    counts = summary_counts(rows)
    order = sorted(counts, key=lambda k: (k[0].startswith("Frozen"), k[0], k[1]))
    show_err = any(c["ERR"] for c in counts.values())
    cols = VERDICT_COLUMNS + (("ERR",) if show_err else ())
    lines = [f"{'Encoding':<14}{'Property':<12}" + "".join(f"{c:>7}" for c in cols)]
    for key in order:
        c = counts[key]
        lines.append(f"{key[0]:<14}{key[1]:<12}" + "".join(f"{c[k]:>7}" for k in cols))
    if any(r.method == "z3-frozen" and r.verdict == "proof" for r in rows):
        lines.append("Frozen Proof rows certify the frozen surrogate only, not the original model.")
    w, t = z3_wins(rows, MASS)
    if t:
        lines.append(f"Mass: exact-encoding CE most severe on {w} of {t} models.")
    lines.append("")
    lines.append(f"{'Model':<16}{'Property':<12}{'Method':<11}{'Verdict':<16}{'Severity':>10}{'Time[s]':>10}")
    for r in rows:
        sev = "" if r.severity is None else f"{r.severity:.4f}"
        verdict = r.verdict + ("" if r.confirmed is None else (" (conf)" if r.confirmed else " (unconf)"))
        lines.append(f"{r.model:<16}{r.property:<12}{r.method:<11}{verdict:<16}{sev:>10}{r.time_s:>10.3f}")
    return "\n".join(lines) + "\n"


def make_plots(rows, train_rows, outdir) -> list[Path]:
    """Severity bars, solve-time-vs-N lines, and MSE bars; nothing is drawn for empty input."""
    rows = list(rows)
    train_rows = list(train_rows)
    if not rows and not train_rows:
        return []
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    sev = severity_comparison([r for r in rows if r.method in ("z3-exact", "grad", "mc")])
    for prop in (MASS, POSITIVITY):
        models = sorted(m for p, m in sev if p == prop)
        if not models:
            continue
        fig, ax = plt.subplots(figsize=(max(6, len(models) * 0.9), 3.5))
        width = 0.27
        for k, method in enumerate(("z3", "grad", "mc")):
            vals = [sev[(prop, m)].get(method, float("nan")) for m in models]
            ax.bar([i + (k - 1) * width for i in range(len(models))], vals, width, label=method)
        ax.set_xticks(range(len(models)))
        ax.set_xticklabels(models, rotation=45, ha="right", fontsize=7)
        ax.set_ylabel("mass gap" if prop == MASS else "-min output")
        ax.set_title(f"{prop}: worst violation found")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = outdir / f"severity_{prop}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    exact = [r for r in rows if r.method == "z3-exact"]
    if exact:
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.2), sharey=True)
        for ax, prop in zip(axes, (MASS, POSITIVITY)):
            for depth in sorted({r.L for r in exact}):
                pts = defaultdict(list)
                for r in exact:
                    if r.property == prop and r.L == depth:
                        pts[r.N].append(r.time_s)
                ns = sorted(pts)
                ax.plot(ns, [max(pts[n]) for n in ns], marker="o", label=f"L={depth}")
            ax.set_xscale("log", base=2)
            ax.set_yscale("log")
            ax.set_xlabel("N")
            ax.set_title(prop)
            ax.legend(fontsize=7)
        axes[0].set_ylabel("solve time [s]")
        fig.tight_layout()
        path = outdir / "solve_time.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    if train_rows:
        fig, ax = plt.subplots(figsize=(max(6, len(train_rows) * 0.6), 3.2))
        ax.bar(range(len(train_rows)), [r.test_mse for r in train_rows])
        ax.set_xticks(range(len(train_rows)))
        ax.set_xticklabels([r.model for r in train_rows], rotation=45, ha="right", fontsize=7)
        ax.set_ylabel("test MSE")
        fig.tight_layout()
        path = outdir / "mse.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
