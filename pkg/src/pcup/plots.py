"""Figure rendering for CLI reports.

Every report-producing subcommand drops a PNG next to its delimited
output so results can be eyeballed without extra tooling. Rendering is
headless (Agg) and all functions take plain sequences, not library types.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .errors import EmptyInput


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def loss_curve(losses, path, title: str = "training loss"):
    """Per-epoch loss line plot; log-scaled y when losses stay positive."""
    losses = list(losses)
    if not losses:
        raise EmptyInput("no losses to plot")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(losses)), losses, marker="o", markersize=3)
    if min(losses) > 0:
        ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("attribute MAE")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def complexity_scatter(rows, path, title: str = "dataset complexity"):
    """Scatter of per-entry (geometry, attribute) complexity, sized by points.

    rows: sequence of (id, point_count, g_c, a_c).
    """
    rows = list(rows)
    if not rows:
        raise EmptyInput("no entries to plot")
    counts = [r[1] for r in rows]
    top = max(counts) or 1
    sizes = [20 + 180 * c / top for c in counts]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter([r[2] for r in rows], [r[3] for r in rows], s=sizes, alpha=0.7)
    for name, _, gc, ac in rows:
        ax.annotate(str(name), (gc, ac), fontsize=7,
                    textcoords="offset points", xytext=(4, 4))
    ax.set_xlabel("geometry complexity")
    ax.set_ylabel("attribute complexity")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def psnr_bars(report_dict, path, title: str = "evaluation"):
    """Bar chart of the PSNR entries of one metric report dict."""
    keys = [k for k in ("psnr_y", "psnr_r", "psnr_g", "psnr_b") if k in report_dict]
    if not keys:
        raise EmptyInput("report has no PSNR entries")
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(keys, [report_dict[k] for k in keys], color=["0.3", "tab:red", "tab:green", "tab:blue"])
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    _save(fig, path)


def sweep_lines(rows, path, title: str = "k sweep"):
    """PSNR against the swept parameter value.

    rows: sequence of (parameter name, value, psnr_y); one line per
    parameter name.
    """
    rows = list(rows)
    if not rows:
        raise EmptyInput("no sweep rows to plot")
    by_name: dict[str, list[tuple[float, float]]] = {}
    for name, value, psnr in rows:
        by_name.setdefault(str(name), []).append((float(value), float(psnr)))
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, pts in by_name.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
    ax.set_xlabel("k")
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    _save(fig, path)
