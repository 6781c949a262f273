"""Figures written next to the CSV outputs (PNG and SVG)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1) / 2
FORMATS = ("png", "svg")


def _figure(width=6.0):
    fig, ax = plt.subplots(figsize=(width, width * GOLDEN))
    return fig, ax


def _save(fig, stem) -> list:
    stem = Path(stem)
    out = []
    fig.tight_layout()
    for ext in FORMATS:
        path = stem.with_suffix("." + ext)
        fig.savefig(path, dpi=120, metadata={"Date": None} if ext == "svg" else None)
        out.append(path)
    plt.close(fig)
    return out


def plot_traces(traces: dict, stem, ylabel="duration (ms)"):
    """Best-so-far curves; ``traces`` maps a label to (evaluations, values)."""
    fig, ax = _figure()
    for label, (x, y) in traces.items():
        ax.step(x, y, where="post", label=label)
    ax.set_xscale("symlog", linthresh=10)
    ax.set_xlabel("evaluations")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    return _save(fig, stem)


def plot_pulse(pulse, stem, reference=None):
    """Amplitude in Gauss against time in ms."""
    fig, ax = _figure()
    for p, label in ((reference, "minimum phase"), (pulse, "flipped")):
        if p is None:
            continue
        t = np.arange(p.n_points) * p.dwell_s * 1e3
        ax.plot(t, np.abs(p.gauss()), label=label, lw=1)
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("|B1| (G)")
    ax.legend(frameon=False)
    return _save(fig, stem)


def plot_roots(roots, eligible, flipped, stem):
    roots = np.asarray(roots)
    fig, ax = plt.subplots(figsize=(5, 5))
    t = np.linspace(0, 2 * np.pi, 512)
    ax.plot(np.cos(t), np.sin(t), color="0.6", lw=0.8)
    eligible = np.asarray(eligible, dtype=bool)
    flipped = np.asarray(flipped, dtype=bool)
    ax.scatter(roots.real, roots.imag, s=6, color="0.5", label="roots")
    ax.scatter(roots[eligible].real, roots[eligible].imag, s=14, color="C0", label="eligible")
    ax.scatter(roots[flipped].real, roots[flipped].imag, s=14, color="C3", label="flipped")
    ax.set_aspect("equal")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.legend(frameon=False, loc="upper right")
    return _save(fig, stem)


def plot_profiles(z_cm, profiles: dict, stem, ylabel="|Mxy|"):
    fig, ax = _figure()
    for label, y in profiles.items():
        ax.plot(z_cm, y, label=label, lw=1)
    ax.set_xlabel("z (cm)")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    return _save(fig, stem)


def plot_sweep(values, gains, stem, xlabel):
    fig, ax = _figure()
    ax.plot(values, gains, "o-")
    ax.axhline(1.0, color="0.6", lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("duration gain (MC / DeepRF)")
    return _save(fig, stem)
