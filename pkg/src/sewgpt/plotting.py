"""Matplotlib figures written next to the delimited training log."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update({"font.size": 9, "axes.spines.top": False, "axes.spines.right": False,
                     "savefig.dpi": 150})


def write_loss_csv(history: Sequence[float], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for step, loss in enumerate(history, 1):
            w.writerow([step, repr(float(loss))])


def plot_loss_curve(history: Sequence[float], path: str | Path, title: str = "training loss",
                    smooth: int = 50) -> None:
    steps = range(1, len(history) + 1)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(steps, history, lw=0.6, color="0.7", label="per step")
    if len(history) >= smooth:
        avg = [sum(history[k - smooth:k]) / smooth for k in range(smooth, len(history) + 1)]
        ax.plot(range(smooth, len(history) + 1), avg, lw=1.2, color="C0",
                label=f"{smooth}-step mean")
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("per-token NLL")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_roundtrip_errors(errors: dict[str, float], bounds: dict[str, float],
                          path: str | Path) -> None:
    """Bar chart of per-channel max round-trip error against its bound."""
    names = list(errors)
    ratio = [errors[n] / bounds[n] if bounds[n] > 0 else 0.0 for n in names]
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.bar(names, ratio, color=["C0" if r <= 1 else "C3" for r in ratio])
    ax.axhline(1.0, color="0.3", lw=0.8, ls="--")
    ax.set_ylabel("max error / bound")
    ax.set_ylim(0, max(1.2, max(ratio) * 1.1))
    ax.set_title("codec round-trip error")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
