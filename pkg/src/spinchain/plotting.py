"""Deterministic SVG rendering of pulses, duration sweeps, and offset profiles."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "spinchain"

_SVG_METADATA = {"Date": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)


def plot_pulse(pulse, path) -> None:
    """Step plot of every channel's amplitude (Hz) versus time (ms)."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    edges = np.arange(pulse.segment_count + 1) * pulse.dt * 1e3
    for c, ch in enumerate(pulse.channels):
        ax.stairs(pulse.amplitudes[:, c], edges, label=f"spin {ch.spin} {ch.axis}")
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("amplitude (Hz)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_top_curve(curve, path) -> None:
    """log10(1 - F) versus pulse duration (ms)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    t = [p.t_p * 1e3 for p in curve.points]
    y = [np.log10(max(1.0 - p.fidelity, 1e-16)) for p in curve.points]
    ax.plot(t, y, "o-")
    ax.set_xlabel("pulse duration (ms)")
    ax.set_ylabel("log10(1 - F)")
    fig.tight_layout()
    _save(fig, path)


def plot_profile(profile, path) -> None:
    """Transfer fidelity versus resonance offset (kHz)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(profile.offsets * 1e-3, profile.fidelities, "-")
    ax.set_xlabel("offset (kHz)")
    ax.set_ylabel("transfer fidelity")
    ax.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    _save(fig, path)
