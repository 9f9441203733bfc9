"""Matplotlib renderings of benchmark CSV output.

The benchmark module emits plain CSV; these helpers turn a set of error
records into the two standard diagnostic plots: log-log convergence of
the relative errors against resolution, and the per-step residual
history of a run.
"""

from __future__ import annotations

import csv
import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["read_error_csv", "convergence_figure", "history_figure"]


def read_error_csv(path_or_text):
    """Parse an error CSV (header per the benchmark schema) into dicts.

    Numeric fields are converted to float; empty fields become None.
    """
    if "\n" in str(path_or_text):
        f = io.StringIO(path_or_text)
    else:
        f = open(path_or_text)
    with f:
        rows = []
        for row in csv.DictReader(f):
            out = {}
            for k, v in row.items():
                if k == "scenario":
                    out[k] = v
                else:
                    out[k] = float(v) if v not in ("", None) else None
            rows.append(out)
    return rows


def convergence_figure(records, path, x_key="h"):
    """Log-log plot of the relative errors against `x_key` (h or dt)."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for key, marker, label in (("eps_v", "o", r"$\epsilon_2(v)$"),
                               ("eps_p", "s", r"$\epsilon_2(p)$"),
                               ("eps_x", "^", r"$\epsilon_x$")):
        pts = [(r[x_key], r[key]) for r in records
               if r.get(key) is not None and r.get(x_key) is not None]
        if not pts:
            continue
        pts.sort()
        ax.loglog([p[0] for p in pts], [p[1] for p in pts],
                  marker=marker, label=label)
    ax.set_xlabel(x_key)
    ax.set_ylabel("relative error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def history_figure(times, series, path):
    """Semilog plot of per-step series (dict name -> values) against time."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for name, values in series.items():
        ax.semilogy(times, values, label=name)
    ax.set_xlabel("t")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
