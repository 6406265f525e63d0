"""Render training-trace figures to files alongside the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricsTrace

# 90% two-sided normal interval
_Z90 = 1.6448536269514722

_METRICS = [
    ("loss", "Loss"),
    ("kl", "KL divergence"),
    ("nll", "Reconstruction NLL"),
    ("coherence", "Topic coherence"),
    ("diversity", "Topic diversity"),
    ("quality", "Topic quality"),
    ("perplexity", "Perplexity"),
]


def _series(trace: MetricsTrace, name: str) -> tuple[np.ndarray, np.ndarray]:
    xs = np.array([r.epoch for r in trace.records])
    ys = np.array([getattr(r, name) for r in trace.records])
    return xs, ys


def render_trace(trace: MetricsTrace, out_dir: str | Path, title: str = "") -> list[Path]:
    """One PNG per tracked metric for a single run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, label in _METRICS:
        xs, ys = _series(trace, name)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(xs, ys, lw=1.2)
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_traces(traces: list[MetricsTrace], out_dir: str | Path, title: str = "") -> list[Path]:
    """Mean and 90% CI band across several runs (e.g. seeds) per metric.

    All traces must share the same epoch grid.
    """
    if not traces:
        raise ValueError("no traces given")
    if len(traces) == 1:
        return render_trace(traces[0], out_dir, title)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    epochs = [tuple(r.epoch for r in t.records) for t in traces]
    if len(set(epochs)) != 1:
        raise ValueError("traces have mismatched epoch grids")
    written = []
    for name, label in _METRICS:
        xs = np.array(epochs[0])
        stack = np.stack([_series(t, name)[1] for t in traces])
        mean = stack.mean(axis=0)
        ci = _Z90 * stack.std(axis=0, ddof=1) / np.sqrt(stack.shape[0])
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(xs, mean, lw=1.2)
        ax.fill_between(xs, mean - ci, mean + ci, alpha=0.25, lw=0)
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        if title:
            ax.set_title(f"{title} ({stack.shape[0]} runs)")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
