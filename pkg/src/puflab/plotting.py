"""Figures written next to reports. Uses the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def figure_path(report_path, suffix: str = "") -> Path:
    p = Path(report_path)
    return p.with_name(p.stem + suffix + ".png")


def _save(fig, path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def _sort_key(value: str):
    try:
        return (0, float(value), "")
    except ValueError:
        return (1, 0.0, value)


def plot_sweep(reports: Sequence, path, title: str = "") -> Path:
    """Test accuracy against the swept value; one dot per run plus the median line."""
    groups: dict[str, list[float]] = {}
    for r in reports:
        groups.setdefault(r.sweep_value or r.attack, []).append(r.test_acc)
    keys = list(groups)
    numeric = all(_sort_key(k)[0] == 0 for k in keys)
    xs = [float(k) for k in keys] if numeric else list(range(len(keys)))
    fig, ax = plt.subplots(figsize=(6, 4))
    for x, k in zip(xs, keys):
        ax.scatter([x] * len(groups[k]), groups[k], color="tab:blue", s=14, alpha=0.6)
    ax.plot(xs, [float(np.median(groups[k])) for k in keys], color="tab:red", marker="o", label="median")
    if reports:
        ax.axhline(reports[0].threshold, color="grey", linestyle="--", linewidth=1, label="success threshold")
    if not numeric:
        ax.set_xticks(xs)
        ax.set_xticklabels(keys, rotation=30, ha="right")
    ax.set_xlabel(reports[0].sweep if reports and reports[0].sweep else "run")
    ax.set_ylabel("test response accuracy")
    ax.set_title(title)
    ax.legend(loc="lower right")
    return _save(fig, path)


def plot_history(history: Sequence[dict], path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [h["epoch"] for h in history]
    ax.plot(epochs, [h["response_acc"] for h in history], label="validation response accuracy")
    for key in sorted(k for k in (history[0] if history else {}) if k.startswith("acc_") and k != "acc_response"):
        ax.plot(epochs, [h[key] for h in history], linestyle=":", label=key.replace("acc_", "") + " head")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_title(title)
    ax.legend(loc="lower right")
    return _save(fig, path)


def plot_reliability_histogram(counts, m: int, path, title: str = "") -> Path:
    """Share of challenges per reliability count; the inner bars are the unstable ones."""
    hist = np.bincount(np.asarray(counts, dtype=np.int64), minlength=m + 1) / max(len(counts), 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    colors = ["tab:grey" if k in (0, m) else "tab:orange" for k in range(m + 1)]
    ax.bar(range(m + 1), hist, color=colors)
    ax.set_xlabel(f"number of 1 responses out of {m}")
    ax.set_ylabel("fraction of challenges")
    ax.set_title(title)
    return _save(fig, path)
