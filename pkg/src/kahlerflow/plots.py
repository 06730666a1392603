"""SVG line plots of monitor series.  Pure file emission, no display."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot(series, path, loglog: bool = False, xlabel: str = "t") -> None:
    """Write a line plot of named series to an SVG file.

    ``series`` is a list of (name, x, y) triples; empty input is an error and
    no file is written.
    """
    series = [(str(n), np.asarray(x), np.asarray(y)) for n, x, y in series]
    series = [(n, x, y) for n, x, y in series if x.size and y.size]
    if not series:
        raise ValueError("nothing to plot")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, x, y in series:
        if loglog:
            ax.loglog(x, np.abs(y), label=name)
        else:
            ax.plot(x, y, label=name)
    ax.set_xlabel(xlabel)
    ax.grid(True, alpha=0.4)
    if len(series) == 1:
        ax.set_ylabel(series[0][0])
    else:
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
