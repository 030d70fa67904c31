"""Figures for sweep tables and detection reports.

Rendering is headless (Agg) and writes PNG files; the CSV/JSON outputs stay
the machine-readable contract and these are for eyeballing.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.fontsize": 8,
    "legend.frameon": False,
}
ALPHA_STYLES = {0.01: "-", 0.05: "--"}


def _group(rows: Sequence[dict[str, Any]], keys: Sequence[str]) -> dict[tuple, list[dict[str, Any]]]:
    out: dict[tuple, list[dict[str, Any]]] = defaultdict(list)
    for row in rows:
        out[tuple(row[k] for k in keys)].append(row)
    return out


def tpr_vs_rho(rows: Sequence[dict[str, Any]], path: str | Path) -> Path | None:
    """TPR against deletion fraction; colour = method/m, line style = alpha."""
    groups = _group(rows, ("method", "m", "gamma"))
    if all(len({r["rho"] for r in g}) < 2 for g in groups.values()):
        return None
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for (method, m, gamma), group in sorted(groups.items()):
            group = sorted(group, key=lambda r: r["rho"])
            rho = [100 * r["rho"] for r in group]
            line = None
            for alpha, ls in ALPHA_STYLES.items():
                label = f"{method} m={m} γ={gamma} α={alpha}"
                kw = {"color": line.get_color()} if line is not None else {}
                (line,) = ax.plot(rho, [r[f"tpr_{alpha}"] for r in group], ls, marker="o", ms=3,
                                  label=label, **kw)
        ax.set_xlabel("deletion rate (%)")
        ax.set_ylabel("TPR")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc="lower left")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return Path(path)


def z_vs_gamma(rows: Sequence[dict[str, Any]], path: str | Path) -> Path | None:
    """Mean reference z against bias strength, one line per (method, m, rho)."""
    groups = _group(rows, ("method", "m", "rho"))
    if all(len({r["gamma"] for r in g}) < 2 for g in groups.values()):
        return None
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for (method, m, rho), group in sorted(groups.items()):
            group = sorted(group, key=lambda r: r["gamma"])
            ax.plot([r["gamma"] for r in group], [r["mean_z"] for r in group], marker="o", ms=3,
                    label=f"{method} m={m} ρ={rho}")
        for level in (1.645, 2.326):
            ax.axhline(level, color="0.5", ls=":", lw=0.8)
        ax.set_xlabel("γ")
        ax.set_ylabel("mean z")
        ax.legend(loc="upper left")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return Path(path)


def sweep_figures(rows: Sequence[dict[str, Any]], csv_path: str | Path) -> list[Path]:
    """Render every figure that the grid supports next to ``csv_path``."""
    base = Path(csv_path)
    stem = base.with_suffix("")
    made = [
        tpr_vs_rho(rows, f"{stem}_tpr_vs_rho.png"),
        z_vs_gamma(rows, f"{stem}_z_vs_gamma.png"),
    ]
    return [p for p in made if p is not None]


def null_histogram(null_scores: Sequence[float], s_true: float, p_value: float, path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(null_scores, bins="auto", color="0.7", edgecolor="0.4", label="wrong-key scores")
        ax.axvline(s_true, color="C3", lw=2, label=f"true key (p={p_value:.4g})")
        ax.set_xlabel("sliding-window score")
        ax.set_ylabel("count")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return Path(path)
