"""Figures written next to the plot-data files (Agg backend, no display)."""
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def write_xy(path, x, ys, header):
    """Plot-data file: one x column and one column per series."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(x, *ys):
            w.writerow([repr(float(v)) for v in row])


def loglog_figure(path, x, y, fit=None, xlabel="", ylabel="", title=""):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(x, y, "o-", label="measured")
    if fit is not None:
        xs = np.array([min(x), max(x)])
        ax.loglog(xs, np.exp(fit.intercept) * xs ** fit.slope, "--",
                  label=f"slope {fit.slope:.2f}")
        ax.legend()
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def curve_figure(path, x, series, xlabel="", ylabel="", title=""):
    """``series`` maps labels to y arrays."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, y in series.items():
        ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def profile_figure(path, grid, snapshots, times, obstacle=None, title=""):
    """Snapshots of a 1-D field, or the final snapshot of a 2-D field."""
    fig, ax = plt.subplots(figsize=(5, 4))
    if grid.d == 1:
        x = grid.coordinates()[0]
        for u, t in zip(snapshots, times):
            ax.plot(x, u, label=f"t={t:.3g}")
        if obstacle is not None:
            ax.plot(x, np.full_like(x, obstacle[-1]), "k--", label="S(T)")
        ax.set_xlabel("x")
        ax.legend(fontsize=7)
    else:
        im = ax.imshow(snapshots[-1].T, origin="lower", extent=(0, 1, 0, 1))
        fig.colorbar(im, ax=ax)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
