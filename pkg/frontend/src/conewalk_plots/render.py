"""Render one CSV into one figure.

Each figure kind declares the CSV header it consumes; a mismatch fails
with the name of the missing column before anything is written.  The
rendering is deterministic: fixed figure geometry, the Agg backend, and
no timestamp metadata in the output file.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["FigureSpec", "PlotError", "render", "FIGURE_KINDS"]

FIGURE_KINDS = {
    "survival_loglog": ("n", "estimate", "ci_half", "reps", "seed"),
    "en_curves": ("n", "estimate", "ci_half", "reps", "seed", "R"),
    "endpoint_heatmap": ("bin_id", "z1_lo", "z1_hi", "z2_lo", "z2_hi",
                         "count", "expected"),
    "drift_margin": ("x", "delta", "neg_beta", "margin"),
    "gamma_report": ("t", "gamma", "ell_bar", "ratio"),
    "potential_ratio": ("d_y", "I1", "I2", "I3", "I4", "u_y", "ratio"),
}

FIGSIZE = (6.4, 4.8)
DPI = 120


class PlotError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    input_csv: str
    figure_kind: str
    out_path: str


def _read_csv(path: str, required) -> dict:
    if not os.path.exists(path):
        raise PlotError(f"input file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise PlotError(f"missing column {col!r} in {path} "
                                f"(found {header})")
        rows = list(reader)
    if not rows:
        raise PlotError(f"no data rows in {path}")
    cols = {}
    for col in required:
        vals = []
        for row in rows:
            cell = row[col]
            vals.append(float(cell) if cell not in ("", None) else math.nan)
        cols[col] = np.array(vals)
    return cols


def _exponent_from_config(csv_path: str) -> float | None:
    """Homogeneity degree p of the cone named in the config echo next to
    the CSV, from the closed forms of the supported cone grammar."""
    echo = os.path.join(os.path.dirname(os.path.abspath(csv_path)), "config.txt")
    if not os.path.exists(echo):
        return None
    cone = None
    with open(echo, encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.partition("=")
            if key.strip() == "cone":
                cone = value.strip()
    if cone is None:
        return None
    parts = cone.split(":")
    if parts[0] in ("halfline", "halfspace"):
        return 1.0
    if parts[0] == "orthant":
        return float(parts[1])
    if parts[0] == "wedge":
        return math.pi / float(parts[1])
    if parts[0] == "weyl_d2":
        return 2.0
    return None


def _fig():
    return plt.subplots(figsize=FIGSIZE, dpi=DPI)


def _save(fig, out_path: str):
    fig.tight_layout()
    fig.savefig(out_path, metadata={"Software": None})
    plt.close(fig)


def _render_survival(cols, spec: FigureSpec):
    fig, ax = _fig()
    n = cols["n"]
    est = cols["estimate"]
    ax.errorbar(n, est, yerr=cols["ci_half"], fmt="o-", ms=3, lw=1,
                capsize=2, label="survival estimate")
    p = _exponent_from_config(spec.input_csv)
    if p is not None:
        pos = (n > 0) & (est > 0)
        if np.any(pos):
            n0, e0 = n[pos][0], est[pos][0]
            ref = e0 * (n[pos] / n0) ** (-p / 2.0)
            ax.plot(n[pos], ref, "k--", lw=1,
                    label=f"reference slope -{p / 2.0:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("P(tau > n)")
    ax.legend()
    _save(fig, spec.out_path)


def _render_en(cols, spec: FigureSpec):
    fig, ax = _fig()
    ax.errorbar(cols["n"], cols["estimate"], yerr=cols["ci_half"], fmt="o-",
                ms=3, lw=1, capsize=2, label="E_n")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("E[u(x + S(n)); tau > n]")
    ax.legend()
    _save(fig, spec.out_path)


def _render_heatmap(cols, spec: FigureSpec):
    lo1 = np.unique(cols["z1_lo"])
    lo2 = np.unique(cols["z2_lo"])
    edges1 = np.append(lo1, cols["z1_hi"].max())
    edges2 = np.append(lo2, cols["z2_hi"].max())
    grid = np.full((len(lo1), len(lo2)), math.nan)
    for a, b, c in zip(cols["z1_lo"], cols["z2_lo"], cols["count"]):
        i = int(np.searchsorted(lo1, a))
        j = int(np.searchsorted(lo2, b))
        grid[i, j] = c
    fig, ax = _fig()
    mesh = ax.pcolormesh(edges1, edges2, grid.T, shading="flat")
    fig.colorbar(mesh, ax=ax, label="count")
    # analytic reference density z1 z2 exp(-|z|^2 / 2) as contour lines
    z1 = np.linspace(edges1[0] + 1e-9, edges1[-1], 200)
    z2 = np.linspace(edges2[0] + 1e-9, edges2[-1], 200)
    Z1, Z2 = np.meshgrid(z1, z2)
    dens = Z1 * Z2 * np.exp(-(Z1**2 + Z2**2) / 2.0)
    ax.contour(Z1, Z2, dens, levels=6, colors="white", linewidths=0.8)
    ax.set_xlabel("z1")
    ax.set_ylabel("z2")
    _save(fig, spec.out_path)


def _render_drift(cols, spec: FigureSpec):
    fig, ax = _fig()
    x = cols["x"]
    ax.plot(x, cols["delta"], "o-", ms=3, lw=1, label="drift")
    ax.plot(x, cols["neg_beta"], "s--", ms=3, lw=1, label="-beta bound")
    legend_classes = ["drift", "-beta bound"]
    bad = cols["margin"] < 0
    if np.any(bad):
        ax.plot(x[bad], cols["delta"][bad], "rx", ms=8, mew=2,
                label="violation")
        legend_classes.append("violation")
    ax.set_xlabel("x")
    ax.set_ylabel("one-step drift")
    ax.legend()
    _save(fig, spec.out_path)
    with open(spec.out_path + ".legend.txt", "w", encoding="utf-8") as fh:
        for name in legend_classes:
            fh.write(name + "\n")


def _render_gamma(cols, spec: FigureSpec):
    fig, ax = _fig()
    ax.plot(cols["t"], cols["gamma"], lw=1, label="gamma")
    ell = cols["ell_bar"]
    if np.any(ell > 0):
        ax.plot(cols["t"][ell > 0], ell[ell > 0], lw=1, label="tail envelope")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("gamma(t)")
    ax2 = ax.twinx()
    ax2.plot(cols["t"], cols["ratio"], "g:", lw=1, label="gamma(2t)/gamma(t)")
    ax2.set_ylabel("doubling ratio")
    ax.legend(loc="lower left")
    ax2.legend(loc="upper right")
    _save(fig, spec.out_path)


def _render_potential(cols, spec: FigureSpec):
    fig, ax = _fig()
    d = cols["d_y"]
    bottom = np.zeros_like(d)
    for name in ("I1", "I2", "I3", "I4"):
        ax.bar(np.arange(len(d)), cols[name], bottom=bottom, label=name)
        bottom = bottom + cols[name]
    ax.set_xticks(np.arange(len(d)))
    ax.set_xticklabels([f"{v:g}" for v in d])
    ax.set_xlabel("d(y)")
    ax.set_ylabel("potential integrals")
    ax2 = ax.twinx()
    ax2.plot(np.arange(len(d)), cols["ratio"], "ko-", ms=4, lw=1,
             label="potential / u")
    ax2.set_ylabel("ratio")
    ax.legend(loc="upper left")
    ax2.legend(loc="upper right")
    _save(fig, spec.out_path)


_RENDERERS = {
    "survival_loglog": _render_survival,
    "en_curves": _render_en,
    "endpoint_heatmap": _render_heatmap,
    "drift_margin": _render_drift,
    "gamma_report": _render_gamma,
    "potential_ratio": _render_potential,
}


def render(spec: FigureSpec) -> str:
    """Render the figure; returns the output path.  On any input error
    nothing is written."""
    if spec.figure_kind not in FIGURE_KINDS:
        raise PlotError(f"unknown figure kind {spec.figure_kind!r}; "
                        f"expected one of {sorted(FIGURE_KINDS)}")
    cols = _read_csv(spec.input_csv, FIGURE_KINDS[spec.figure_kind])
    _RENDERERS[spec.figure_kind](cols, spec)
    return spec.out_path
