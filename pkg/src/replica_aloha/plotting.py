"""Optional matplotlib renderers for sweep results and bound curves.

The CSV files are the canonical output; these helpers draw quick-look
figures next to them when asked (simulate --plot, or the plot subcommand).
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .sweep import read_results_csv  # noqa: E402

_ALGO_STYLE = {
    "h1": dict(color="tab:blue", marker="o", linestyle="--"),
    "hk": dict(color="tab:blue", marker="s", linestyle="-"),
    "a1": dict(color="tab:red", marker="^", linestyle="--"),
    "ak": dict(color="tab:red", marker="v", linestyle="-"),
    "ak_mod": dict(color="tab:green", marker="d", linestyle="-"),
}


def render_backlog_figures(results_csv: str | Path, out_dir: str | Path) -> list[Path]:
    """One backlog-vs-load figure per (M, gamma) cell of a results CSV."""
    rows = read_results_csv(results_csv)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells: dict[tuple[int, float], list[dict]] = defaultdict(list)
    for row in rows:
        cells[(row["M"], row["gamma"])].append(row)
    written = []
    for (m, gamma), cell in sorted(cells.items()):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        by_algo: dict[str, list[dict]] = defaultdict(list)
        for row in cell:
            by_algo[row["algorithm"]].append(row)
        for algo, algo_rows in sorted(by_algo.items()):
            algo_rows.sort(key=lambda r: r["lambda"])
            lams = [r["lambda"] for r in algo_rows]
            backlog = [r["mean_backlog_per_channel"] for r in algo_rows]
            ci = [r["ci95"] for r in algo_rows]
            style = _ALGO_STYLE.get(algo, {})
            ax.errorbar(lams, backlog, yerr=ci, label=algo, capsize=2, **style)
            bounds = [
                (r["lambda"], r["bound_eta_star"])
                for r in algo_rows
                if r["bound_eta_star"] is not None
            ]
            if bounds and algo in ("h1", "hk"):
                ax.plot(
                    [b[0] for b in bounds],
                    [b[1] for b in bounds],
                    color="black",
                    linestyle=":" if algo == "h1" else "-.",
                    linewidth=1.0,
                    label=f"{algo} limit",
                )
        ax.set_xlabel("offered load per channel")
        ax.set_ylabel("mean backlog per channel")
        ax.set_title(f"M = {m}, erasure prob = {gamma:g}")
        ax.set_yscale("log")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"backlog_M{m}_gamma{gamma:g}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def render_bounds_figure(bounds_csv: str | Path, out_path: str | Path) -> Path:
    """Limiting-intensity curves from a bounds CSV (one line per gamma,
    single-replica dashed vs. best-replica solid, plus the chosen replica
    count in a lower panel)."""
    by_gamma: dict[float, list[dict]] = defaultdict(list)
    with open(bounds_csv, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        for record in csv.DictReader(fh):
            by_gamma[float(record["gamma"])].append(record)
    fig, (ax_eta, ax_k) = plt.subplots(
        2, 1, figsize=(6.0, 6.0), sharex=True,
        gridspec_kw={"height_ratios": [3, 1]},
    )
    for gamma, records in sorted(by_gamma.items()):
        records.sort(key=lambda r: float(r["lambda"]))
        lams = [float(r["lambda"]) for r in records]
        h1 = [float(r["h1_eta_star"]) if r["h1_eta_star"] else None for r in records]
        hk = [float(r["hk_eta_star"]) if r["hk_eta_star"] else None for r in records]
        ks = [int(r["hk_k_star"]) if r["hk_k_star"] else None for r in records]
        ax_eta.plot(lams, h1, linestyle="--", label=f"single, gamma={gamma:g}")
        ax_eta.plot(lams, hk, linestyle="-", label=f"replicated, gamma={gamma:g}")
        ax_k.plot(lams, ks, drawstyle="steps-mid", label=f"gamma={gamma:g}")
    ax_eta.set_ylabel("limiting backlog per channel")
    ax_eta.set_yscale("log")
    ax_eta.grid(True, which="both", alpha=0.3)
    ax_eta.legend(fontsize=7)
    ax_k.set_xlabel("offered load per channel")
    ax_k.set_ylabel("best K")
    ax_k.grid(True, alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
