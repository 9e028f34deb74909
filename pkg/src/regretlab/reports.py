"""Delimited outputs and rendered figures for runs and scenario reports.

Figures are rendered headless to PNG files next to the CSV series they
visualize; nothing here opens a window.
"""

from __future__ import annotations

import json
import os
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .engine import regret_series
from .scenarios import ScenarioResult

SUMMARY_HEADER = "seed,n_stages,final_avg_payoff,final_regret,tail_max_regret"


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_run_summary(trajs: list, path: str) -> None:
    """One row per seed: the scalar endpoints of each run."""
    with open(path, "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for t in trajs:
            fh.write(",".join([
                str(t.seed),
                str(t.n_stages),
                repr(float(t.final_avg_payoff)),
                repr(float(t.final_regret)),
                repr(float(t.tail_max_regret)),
            ]) + "\n")


def write_scenario_report(result: ScenarioResult, out_dir: str) -> str:
    """report.txt with pass/fail lines plus report.json with raw metrics."""
    ensure_dir(out_dir)
    txt_path = os.path.join(out_dir, "report.txt")
    with open(txt_path, "w") as fh:
        fh.write("\n".join(result.report_lines()) + "\n")
    payload = {
        "scenario": result.name,
        "passed": result.passed,
        "checks": [
            {"label": label, "ok": ok, "detail": detail}
            for label, ok, detail in result.checks
        ],
        "metrics": result.metrics,
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return txt_path


def render_regret_figure(trajs: list, path: str, every: int = 1,
                         reference: Optional[float] = None) -> str:
    """Regret vs stage, one line per seed, log-x."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for t in trajs:
        series = regret_series(t, every=every)
        ax.plot(series.stages, series.values, lw=0.9, alpha=0.55)
    if reference is not None:
        ax.axhline(reference, color="black", ls="--", lw=1.0,
                   label=f"limit {reference:.4f}")
        ax.legend(loc="best", frameon=False)
    ax.set_xscale("log")
    ax.set_xlabel("stage n")
    ax.set_ylabel("regret e_n")
    ax.set_title(f"{len(trajs)} run(s), N = {trajs[0].n_stages:,}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_tail_figure(tails: dict, threshold: float, path: str) -> str:
    """One boxplot of tail regret per sweep cell, with the threshold line."""
    labels = list(tails)
    data = [np.asarray(tails[k], dtype=float) for k in labels]
    fig, ax = plt.subplots(figsize=(max(7.0, 0.45 * len(labels)), 4.6))
    ax.boxplot(data, whis=(0, 100))
    ax.axhline(threshold, color="red", ls="--", lw=1.0, label=f"threshold {threshold}")
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("tail max regret")
    ax.legend(loc="best", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_certificate_figure(report, path: str) -> str:
    """Observed gap against the replayed recursion bound on the ladder."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(report.s_values, report.phi_observed, lw=1.2, label="observed gap")
    ax.plot(report.s_values, report.bound, lw=1.2, ls="--", label="recursion bound")
    ax.axhline(report.tol, color="gray", lw=0.8, ls=":", label=f"tolerance {report.tol}")
    ax.set_xlabel("interpolated time s")
    ax.set_ylabel("value gap")
    ax.set_yscale("symlog", linthresh=1e-4)
    ax.legend(loc="best", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def write_trajectories(trajs: list, out_dir: str, label: str) -> list:
    paths = []
    ensure_dir(out_dir)
    for t in trajs:
        p = os.path.join(out_dir, f"{label}_seed{t.seed}.csv")
        t.to_csv(p)
        paths.append(p)
    return paths
