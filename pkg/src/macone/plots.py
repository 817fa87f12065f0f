"""Figure rendering for the refinement study and solver traces.

Figures are written next to the delimited output files; the CSV and JSONL
stay the machine-readable source of truth.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_convergence(rows, path) -> Path | None:
    """Log-log max error vs h with a slope-one reference line."""
    pts = [(r.h, r.max_error) for r in rows
           if math.isfinite(r.max_error) and r.max_error > 0.0]
    if not pts:
        return None
    hs = [p[0] for p in pts]
    errs = [p[1] for p in pts]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(hs, errs, "o-", color="tab:blue", label="max nodal error")
    if len(hs) >= 2:
        ref = [errs[-1] * h / hs[-1] for h in hs]
        ax.loglog(hs, ref, "k--", linewidth=1.0, label="slope 1")
    ax.set_xlabel("h")
    ax.set_ylabel("max error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_trace(trace, path) -> Path | None:
    """Residual norm per iteration on a log scale, with damping exponents."""
    if not trace.iterations:
        return None
    ks = [rec.k for rec in trace.iterations]
    norms = [rec.residual_norm for rec in trace.iterations]
    ks.append(trace.iterations[-1].k + 1)
    norms.append(trace.final_residual)
    iks = [rec.i_k for rec in trace.iterations]
    fig, (ax, ax2) = plt.subplots(
        2, 1, figsize=(5.0, 5.0), sharex=True,
        gridspec_kw={"height_ratios": [3, 1]})
    ax.semilogy(ks, norms, "o-", color="tab:blue")
    ax.set_ylabel("residual norm")
    ax.grid(True, which="both", alpha=0.3)
    ax2.step(ks[:-1], iks, where="mid", color="tab:orange")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("i_k")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
