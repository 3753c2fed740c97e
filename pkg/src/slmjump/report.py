"""Delimited output and figure rendering for the CLI pipelines.

CSV files use '.' decimals, LF line endings and a header row; floats are
written with shortest round-trip ``repr`` so identical runs produce
byte-identical files (the CI reproducibility contract).  Figures are rendered
with matplotlib straight to SVG; presentation is not contractual, file
validity is, and the Date metadata is stripped so figures are stable too.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_csv",
    "observation_rows",
    "projection_figure",
    "intensity_figure",
    "market_figure",
]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    """Write rows (iterables of scalars) under a header, LF endings."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def observation_rows(stream_id: int, record):
    for e in record.events:
        yield (stream_id, e.level, e.time, e.direction)


def _save(fig, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def projection_figure(path, t_eval, mean_x, se_x, mean_m, se_m, jump_times=None, title=""):
    """Mean curves of X and M with 3-SE bands and jump markers."""
    fig, ax = plt.subplots(figsize=(8, 5))
    t = np.asarray(t_eval)
    for label, mean, se, color in (
        ("state X", np.asarray(mean_x), np.asarray(se_x), "tab:blue"),
        ("projection M", np.asarray(mean_m), np.asarray(se_m), "tab:red"),
    ):
        ax.plot(t, mean, color=color, label=label)
        ax.fill_between(t, mean - 3 * se, mean + 3 * se, color=color, alpha=0.2, linewidth=0)
    if jump_times is not None and len(jump_times):
        jt = np.asarray(jump_times)
        ax.plot(jt, np.full(jt.size, ax.get_ylim()[0]), "|", color="k", markersize=12,
                label="jump times")
    ax.set_xlabel("t")
    ax.set_ylabel("mean value")
    if title:
        ax.set_title(title)
    ax.legend(loc="best")
    _save(fig, path)


def intensity_figure(path, times, analytic_cum, hazard_curve, title=""):
    """Analytic integrated intensity against the empirical cumulative hazard."""
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(times, analytic_cum, "k--", label="integral of analytic intensity")
    ax.plot(hazard_curve.times, hazard_curve.values, color="tab:red", label="Nelson-Aalen")
    ax.fill_between(
        hazard_curve.times, hazard_curve.ci_low, hazard_curve.ci_high,
        color="tab:red", alpha=0.2, linewidth=0,
    )
    ax.set_xlabel("t")
    ax.set_ylabel("cumulative hazard")
    if title:
        ax.set_title(title)
    ax.legend(loc="best")
    _save(fig, path)


def market_figure(path, t_eval, mean_x, se_x, mean_m, se_m, jump_times=None, title=""):
    projection_figure(path, t_eval, mean_x, se_x, mean_m, se_m, jump_times, title)
