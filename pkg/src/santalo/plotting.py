"""Figure rendering for experiment outputs: slack distributions for
verifier corpora and value/convergence curves for iteration traces,
written next to the delimited report files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_slack_figure", "render_trace_figure"]


def render_slack_figure(reports, path: str) -> str:
    """Histogram of signed slacks with the zero line marked; negative
    bars are the findings to look at."""
    slacks = np.asarray([r["slack"] for r in reports], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(slacks, bins=min(30, max(5, slacks.size)), color="#4878cf",
            edgecolor="white")
    ax.axvline(0.0, color="#d1495b", linestyle="--", linewidth=1)
    ax.set_xlabel("slack (rhs - lhs)")
    ax.set_ylabel("instances")
    ids = {r["inequality_id"] for r in reports}
    ax.set_title(", ".join(sorted(ids)))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_trace_figure(rows, path: str, ceiling: float | None = None) -> str:
    """Two-panel iteration plot: the product value against its ceiling,
    and the distance to the quadratic on a log scale."""
    steps = [r["step"] for r in rows]
    bs = [r["bs"] for r in rows]
    jsq = [r["j_sq"] for r in rows]
    delta = [r["delta_quad"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.plot(steps, bs, "o-", label="product value")
    ax1.plot(steps, jsq, "s--", label="squared surface integral")
    if ceiling is not None:
        ax1.axhline(ceiling, color="#d1495b", linestyle=":",
                    label="ceiling")
    ax1.set_xlabel("step")
    ax1.legend()
    ax2.semilogy(steps, np.maximum(delta, 1e-16), "o-", color="#667788")
    ax2.set_xlabel("step")
    ax2.set_ylabel("distance to best-fit quadratic")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
