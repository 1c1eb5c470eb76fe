"""
PNG figures rendered from the CSV tables a subcommand has written.  Every plot is a
pure function of the files on disk.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return rows


def col(rows, name, cast=float):
    out = []
    for r in rows:
        v = r.get(name, "")
        out.append(cast(v) if v not in ("", None) else np.nan)
    return np.array(out)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=90, metadata={"Software": None})
    plt.close(fig)


def _semilogy(ax, x, y, label=None, marker="o"):
    y = np.abs(y)
    ok = y > 0
    ax.semilogy(x[ok], y[ok], marker=marker, ms=3, lw=1, label=label)


def plot_spectrum(d):
    rows = read_csv(os.path.join(d, "eigenvalues.csv"))
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    t = np.linspace(0, 2 * np.pi, 400)
    ax.plot(np.cos(t), np.sin(t), "k-", lw=0.6)
    for N in sorted(set(col(rows, "N", int))):
        sel = [r for r in rows if int(r["N"]) == N]
        ax.plot(col(sel, "re"), col(sel, "im"), "o", ms=4, label=f"N={N}")
    ax.set_aspect("equal")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.legend(fontsize=8)
    _save(fig, os.path.join(d, "eigenvalues.png"))


def plot_series(d, csv_name, x, ys, png, logy=True, logx=False, group=None, xlabel=None):
    path = os.path.join(d, csv_name)
    if not os.path.exists(path):
        return
    rows = read_csv(path)
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(5, 3.6))
    groups = [None] if group is None else sorted(set(r[group] for r in rows))
    for g in groups:
        sel = rows if g is None else [r for r in rows if r[group] == g]
        xs = col(sel, x)
        for y in ys:
            lab = y if g is None else f"{g}" if len(ys) == 1 else f"{g}:{y}"
            if logy:
                _semilogy(ax, xs, col(sel, y), lab)
            else:
                ax.plot(xs, col(sel, y), "o-", ms=3, lw=1, label=lab)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel or x)
    ax.legend(fontsize=7)
    _save(fig, os.path.join(d, png))


def render(name, d):
    if name == "spectrum":
        plot_spectrum(d)
    elif name == "correlations":
        plot_series(d, "correlations.csv", "n", ["C_n", "noise"], "correlations.png")
    elif name == "birkhoff":
        plot_series(d, "birkhoff.csv", "n", ["variance"], "birkhoff.png", logx=True)
    elif name == "stable-limit":
        plot_series(d, "convergence.csv", "generation", ["sup_slope_change"], "convergence.png")
    elif name == "evolve-foliation":
        plot_series(d, "oracle.csv", "n", ["F_error", "dsF_error", "H_relative_error"], "oracle.png")
    elif name == "contraction":
        plot_series(d, "contraction.csv", "n", ["max_deriv_ratio", "max_order0_ratio"], "contraction.png")
    elif name == "mollify":
        plot_series(d, "mollify.csv", "eps", ["err_qm1", "eps_norm_qp1"], "mollify.png", logx=True)
    elif name == "ly":
        plot_series(d, "ly.csv", "n", ["norm_minus_1q"], "ly.png", group="h")
