"""Batch experiments: moment tables, stabilization, Monte Carlo comparison.

Numbers in CSV and markdown tables carry 6 significant digits, formatted
with ``format(x, ".6g")`` (correct rounding of the binary value, ties to
even). Full-precision values go to ``manifest.json``.
"""
from __future__ import annotations

import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, build_model, model_summary
from .distributions import GENERATOR_ID, HypothesisError, validate
from .moments import moment_table, stabilization_check
from .oracles import McReport, mc_estimate, mc_ode_estimate

RATIO_FLAG = 4.0
QUANTITIES = ("expectation", "variance")
_CELL_ATTR = {"expectation": "mean", "variance": "variance"}
_MC_ATTR = {"expectation": ("mean", "se_mean"), "variance": ("variance", "se_variance")}


def fmt(x: float) -> str:
    if x == 0:
        x = 0.0  # no "-0"
    return format(float(x), ".6g")


def column_names(M_list) -> list[str]:
    return [f"M{M}" for M in M_list]


@dataclass
class RunResult:
    config: ExperimentConfig
    table: object
    mc: McReport = None
    stabilization: dict = field(default_factory=dict)
    wall_times: dict = field(default_factory=dict)
    written: list = field(default_factory=list)

    def rows(self, quantity: str) -> list[list[str]]:
        cfg = self.config
        header = ["t"] + column_names(cfg.M_list) + (["MC"] if self.mc is not None else [])
        attr = _CELL_ATTR[quantity]
        out = [header]
        for i, t in enumerate(cfg.t_grid):
            row = [fmt(t)] + [fmt(getattr(self.table.cell(float(t), M), attr)) for M in cfg.M_list]
            if self.mc is not None:
                row.append(fmt(getattr(self.mc, _MC_ATTR[quantity][0])[i]))
            out.append(row)
        return out


def _csv(rows) -> str:
    return "".join(",".join(r) + "\n" for r in rows)


def _markdown(rows, flagged=frozenset(), title=None) -> str:
    header, body = rows[0], rows[1:]
    lines = [f"### {title}", ""] if title else []
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for r in body:
        cells = [c + ("*" if (r[0], h) in flagged else "") for c, h in zip(r, header)]
        lines.append("| " + " | ".join(cells) + " |")
    if flagged:
        lines += ["", "\\* quadrature did not converge under refinement for this cell"]
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str, written: list) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    written.append(str(path))


def _run_mc(cfg: ExperimentConfig, model, workers: int) -> McReport:
    mc = cfg.mc
    if mc.evaluator == "ode":
        return mc_ode_estimate(
            model, cfg.t_grid, mc.n, rel_tol=mc.rel_tol, seed=mc.seed, workers=workers,
            override_unbounded=cfg.override_unbounded,
        )
    return mc_estimate(
        model, cfg.t_grid, mc.n, M_eval=mc.M_eval, seed=mc.seed, workers=workers,
        override_unbounded=cfg.override_unbounded,
    )


def compute(cfg: ExperimentConfig, workers: int = 1, with_mc: bool = None) -> RunResult:
    """Everything ``run`` writes, without touching the file system."""
    model = build_model(cfg.model, cfg.tolerances)
    diag = validate(model)
    if not diag.passed and not cfg.override_unbounded:
        raise HypothesisError("; ".join(diag.messages))
    times = {}

    start = time.perf_counter()
    table = moment_table(model, cfg.t_grid, cfg.M_list, override_unbounded=cfg.override_unbounded)
    times["moments"] = time.perf_counter() - start

    start = time.perf_counter()
    schedule = sorted(cfg.M_list)
    stab = {}
    for t in cfg.t_grid:
        stab[fmt(t)] = stabilization_check(
            model, t, schedule, cfg.tolerances.stabilization, cfg.override_unbounded
        )
    times["stabilization"] = time.perf_counter() - start

    report = None
    if cfg.mc.enabled if with_mc is None else with_mc:
        start = time.perf_counter()
        report = _run_mc(cfg, model, workers)
        times["monte_carlo"] = time.perf_counter() - start

    return RunResult(config=cfg, table=table, mc=report, stabilization=stab, wall_times=times)


def _manifest(result: RunResult, model) -> dict:
    cfg, table = result.config, result.table
    unconverged = [{"t": t, "M": M} for t, M in table.unconverged()]
    return {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "generator": GENERATOR_ID,
        "seed": cfg.mc.seed,
        "number_format": "6 significant digits, format(x, '.6g'), round-half-even on the binary value",
        "config": cfg.to_dict(),
        "model": model_summary(model),
        "validation": validate(model).to_dict(),
        "t_grid": [float(t) for t in cfg.t_grid],
        "M_list": list(cfg.M_list),
        "expectation": table.grid("mean").tolist(),
        "variance": table.grid("variance").tolist(),
        "second_moment": table.grid("second_moment").tolist(),
        "cell_diagnostics": [
            {"t": t, "M": M, **table.cell(t, M).diagnostics} for t in table.t_grid for M in table.M_list
        ],
        "unconverged_cells": unconverged,
        "stabilization": {
            "schedule": sorted(cfg.M_list),
            "tolerance": cfg.tolerances.stabilization,
            "stabilized_at": result.stabilization,
        },
        "monte_carlo": result.mc.to_dict() if result.mc is not None else None,
        "wall_times_s": result.wall_times,
    }


def _stabilization_rows(result: RunResult) -> list[list[str]]:
    rows = [["t", "stabilized_M"]]
    for t, M in result.stabilization.items():
        rows.append([t, "not stabilized" if M is None else str(M)])
    return rows


def run(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> RunResult:
    """Write expectation/variance tables, the stabilization report and a manifest."""
    result = compute(cfg, workers=workers)
    out = Path(out_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg.model, cfg.tolerances)
    flagged = {(fmt(t), f"M{M}") for t, M in result.table.unconverged()}
    written = result.written

    for q in QUANTITIES:
        rows = result.rows(q)
        if "csv" in cfg.output.formats:
            _write(out / f"{q}.csv", _csv(rows), written)
        if "markdown" in cfg.output.formats:
            _write(out / f"{q}.md", _markdown(rows, flagged, title=f"{q} ({cfg.name})"), written)
    stab = _stabilization_rows(result)
    if "csv" in cfg.output.formats:
        _write(out / "stabilization.csv", _csv(stab), written)
    if "markdown" in cfg.output.formats:
        title = f"stabilization at tol {cfg.tolerances.stabilization:g} ({cfg.name})"
        _write(out / "stabilization.md", _markdown(stab, title=title), written)
    manifest = _manifest(result, model)
    _write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n", written)
    return result


@dataclass
class Comparison:
    rows: list  # dicts, one per (quantity, t)
    notes: list
    flagged: int

    def to_markdown(self, title: str = "") -> str:
        head = ["quantity", "t", "engine", "MC", "MC_SE", "ratio", "flag"]
        lines = [f"### comparison {title}".rstrip(), "", "| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for r in self.rows:
            lines.append(
                f"| {r['quantity']} | {fmt(r['t'])} | {fmt(r['engine'])} | {fmt(r['mc'])} | "
                f"{fmt(r['se'])} | {r['ratio']:.2f} | {'FLAG' if r['flag'] else ''} |"
            )
        if self.notes:
            lines += ["", "Notes:", ""] + [f"- {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = [["quantity", "t", "engine", "mc", "mc_se", "ratio", "flag"]]
        for r in self.rows:
            rows.append([r["quantity"], fmt(r["t"]), fmt(r["engine"]), fmt(r["mc"]), fmt(r["se"]),
                         f"{r['ratio']:.2f}", "1" if r["flag"] else "0"])
        return _csv(rows)


def _ratio(diff, se):
    if se > 0:
        return abs(diff) / se
    return 0.0 if diff == 0 else float("inf")


def comparison(result: RunResult) -> Comparison:
    cfg = result.config
    M_top = max(cfg.M_list)
    rows, notes = [], []
    for q in QUANTITIES:
        est_attr, se_attr = _MC_ATTR[q]
        for i, t in enumerate(cfg.t_grid):
            eng = getattr(result.table.cell(float(t), M_top), _CELL_ATTR[q])
            mc = float(getattr(result.mc, est_attr)[i])
            se = float(getattr(result.mc, se_attr)[i])
            ratio = _ratio(eng - mc, se)
            rows.append({"quantity": q, "t": float(t), "engine": eng, "mc": mc, "se": se,
                         "ratio": ratio, "flag": ratio > RATIO_FLAG})

    ref = cfg.reference or {}
    label = ref.get("label", "reference")
    for q in QUANTITIES:
        columns = ref.get(q, {})
        est_attr, se_attr = _MC_ATTR[q]
        for col, values in columns.items():
            for i, t in enumerate(cfg.t_grid):
                if i >= len(values) or values[i] is None:
                    continue
                # lower orders are not estimates of the limit, so MC errors do not apply
                if col == f"M{M_top}":
                    ours = getattr(result.table.cell(float(t), M_top), _CELL_ATTR[q])
                    what = f"engine {col}"
                elif col == "MC":
                    ours = float(getattr(result.mc, est_attr)[i])
                    what = "own MC"
                else:
                    continue
                se = float(getattr(result.mc, se_attr)[i])
                r = _ratio(values[i] - ours, se)
                rel = abs(values[i] - ours) / abs(ours) if ours else float("inf")
                if r > RATIO_FLAG:
                    notes.append(
                        f"{q} t={fmt(t)}: {label} {col} value {fmt(values[i])} vs {what} {fmt(ours)} "
                        f"(relative difference {rel:.3%}, {r:.1f} MC standard errors)"
                    )
    return Comparison(rows=rows, notes=notes, flagged=sum(r["flag"] for r in rows))


def compare(cfg: ExperimentConfig, out_dir=None, workers: int = 1, write: bool = True) -> Comparison:
    if not cfg.mc.enabled:
        raise ValueError("compare needs Monte Carlo: set mc.enabled to true in the config")
    result = compute(cfg, workers=workers)
    comp = comparison(result)
    if write:
        out = Path(out_dir or cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "comparison.md", comp.to_markdown(f"({cfg.name})"), result.written)
        _write(out / "comparison.csv", comp.to_csv(), result.written)
    return comp


def validation_lines(cfg: ExperimentConfig) -> tuple[bool, list[str]]:
    model = build_model(cfg.model, cfg.tolerances)
    diag = validate(model)
    lines = [f"A-support bound: {diag.support_bound}, {'PASS' if diag.passed else 'FAIL'}"]
    lines.append(f"A nonnegative: {'yes' if diag.a_nonnegative else 'no'}")
    lines.append(f"total probability: {diag.normalization!r}")
    lines += diag.messages
    if not diag.passed:
        lines.append("hypotheses violated: run/compare refuse without --override-unbounded")
    return diag.passed, lines
