"""Matplotlib chart rendering for report bundles.

Every chart is written as both SVG and PNG. Output is reproducible:
the Agg backend, a fixed svg.hashsalt, and stripped date metadata keep
bytes identical across runs for identical inputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "spatialeval"

_FIGSIZE = (7.0, 4.5)
_DPI = 144


def _save(fig, out_base: Path) -> list[Path]:
    out_base.parent.mkdir(parents=True, exist_ok=True)
    svg = out_base.with_suffix(".svg")
    png = out_base.with_suffix(".png")
    fig.savefig(svg, format="svg", metadata={"Date": None})
    fig.savefig(png, format="png", dpi=_DPI)
    plt.close(fig)
    return [svg, png]


def render_risk_coverage(points: list[dict], out_base: Path,
                         selected_tau: float | None = None) -> list[Path]:
    """Step curve of risk against coverage, one vertex per swept threshold.

    `points` come from an audit analysis: dicts with tau, coverage, risk
    (risk may be None where no covered sample has a decided human label).
    """
    scored = [(p["coverage"]["value"], p["risk"]["value"], p["tau"])
              for p in points if p["risk"] is not None]
    scored.sort(key=lambda t: t[0])
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    if scored:
        xs = [s[0] for s in scored]
        ys = [s[1] for s in scored]
        ax.step(xs, ys, where="post", marker="o", markersize=3.5,
                color="#1f77b4")
    if selected_tau is not None:
        match = [s for s in scored if s[2] == selected_tau]
        if match:
            ax.axvline(match[0][0], color="#d62728", linestyle="--",
                       linewidth=1.0,
                       label=f"selected threshold {selected_tau}")
            ax.legend(loc="best", fontsize=8)
    ax.set_xlabel("Coverage (fraction of audited samples)")
    ax.set_ylabel("Risk (1 - accuracy on covered, human-decided)")
    ax.set_title("Risk vs coverage under confidence thresholding")
    ax.set_xlim(0.0, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    return _save(fig, out_base)


def render_coverage_vs_conditional(rows: list[tuple[str, float, float | None]],
                                   out_base: Path) -> list[Path]:
    """Scatter of coverage against PASS-given-decided, one point per method."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for name, coverage, cond in rows:
        if cond is None:
            continue
        ax.scatter([coverage * 100], [cond * 100], s=60, zorder=3)
        ax.annotate(name, (coverage * 100, cond * 100),
                    textcoords="offset points", xytext=(6, 6), fontsize=8)
    ax.set_xlabel("Coverage (%)")
    ax.set_ylabel("PASS | Decided (%)")
    ax.set_title("Decidability vs conditional correctness")
    ax.set_xlim(0, 102)
    ax.set_ylim(0, 102)
    ax.grid(True, alpha=0.3)
    return _save(fig, out_base)


def render_pass_rates(rows: list[tuple[str, float, float]],
                      out_base: Path) -> list[Path]:
    """Grouped bars: overall PASS rate next to coverage, per method."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    xs = range(len(rows))
    width = 0.38
    ax.bar([x - width / 2 for x in xs], [r[1] * 100 for r in rows],
           width=width, label="PASS", color="#2ca02c")
    ax.bar([x + width / 2 for x in xs], [r[2] * 100 for r in rows],
           width=width, label="Coverage", color="#9edae5")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([r[0] for r in rows], fontsize=9)
    ax.set_ylabel("Percent of images")
    ax.set_title("PASS rate and coverage by method")
    ax.set_ylim(0, 102)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, out_base)


def render_confidence_hist(per_method: dict[str, list[float]],
                           out_base: Path, bins: int = 20) -> list[Path]:
    """Overlaid step histograms of overall confidence, one per method."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    edges = [i / bins for i in range(bins + 1)]
    for name in sorted(per_method):
        ax.hist(per_method[name], bins=edges, histtype="step", linewidth=1.5,
                label=name)
    ax.set_xlabel("Overall confidence")
    ax.set_ylabel("Samples")
    ax.set_title("Confidence distribution by method")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, out_base)
