"""Figures and tables: state-density heatmaps, observed-vs-predicted joint tables, rating histograms."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.signal import find_peaks  # noqa: E402

from . import kernel, models  # noqa: E402
from .dataio import rescore  # noqa: E402

ROW_LABELS = ("L1", "M1", "H1")
COL_LABELS = ("L2", "M2", "H2")
# a maximum counts as a mode only if it reaches this fraction of the peak
MODE_REL_HEIGHT = 1e-3

plt.rcParams["svg.hashsalt"] = "beliefdyn"
_SVG_META = {"Date": None, "Creator": None}


def state_density(params, times):
    """Probability over the 99 states at each time: phi(t) or |psi(t)|^2; shape (len(times), 99)."""
    times = np.asarray(times, dtype=float)
    if params.family == models.QUANTUM:
        spec = kernel.hamiltonian_spectrum(params.mu, params.sigma)
        psi0 = kernel.initial_quantum_state()
        return np.array([np.abs(kernel.evolve_amplitudes(spec, psi0, t)) ** 2 for t in times])
    phi0 = kernel.initial_markov_state()
    if params.family == models.MARKOV:
        K = kernel.build_intensity(*params.rates)
        return np.array([kernel.transition_matrix(K, t) @ phi0 for t in times])
    w = models.binomial_weights(params.upsilon)
    mu = models.drift_grid()
    phi = np.broadcast_to(phi0, (len(mu), kernel.N_STATES))
    return np.array([w @ kernel.propagate_batch(mu * params.gamma, (1 - mu) * params.gamma, t, phi) for t in times])


def count_modes(density, rel_height=MODE_REL_HEIGHT):
    """Number of local maxima at least ``rel_height`` times the global maximum."""
    d = np.asarray(density, dtype=float)
    padded = np.concatenate(([-np.inf], d, [-np.inf]))
    peaks, _ = find_peaks(padded, height=rel_height * d.max())
    return len(peaks)


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def heatmap_svg(density, times, path, title=""):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.imshow(density, aspect="auto", origin="lower", cmap="viridis",
              extent=(0.5, kernel.N_STATES + 0.5, times[0], times[-1]))
    ax.set_xlabel("belief state")
    ax.set_ylabel("time (s)")
    ax.set_title(title)
    _save(fig, path)


def average_tables(tables):
    """Mean of per-participant relative-frequency (or probability) tables."""
    rel = [np.asarray(t, dtype=float) / max(np.sum(t), 1e-300) for t in tables if np.sum(t) > 0]
    return np.mean(rel, axis=0) if rel else np.full((3, 3), np.nan)


def tables_csv(blocks, path):
    """``blocks`` maps a column-group name (Obs, markov, ...) to a 3x3 table."""
    names = list(blocks)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("," + ",".join(f"{n}:{c}" for n in names for c in COL_LABELS) + "\n")
        for i, r in enumerate(ROW_LABELS):
            vals = [f"{blocks[n][i, j]:.4f}" for n in names for j in range(3)]
            fh.write(r + "," + ",".join(vals) + "\n")


def tables_markdown(blocks, title=""):
    names = list(blocks)
    lines = [f"### {title}", ""] if title else []
    lines.append("| | " + " | ".join(f"{n} {c}" for n in names for c in COL_LABELS) + " |")
    lines.append("|---" * (1 + 3 * len(names)) + "|")
    for i, r in enumerate(ROW_LABELS):
        lines.append(f"| {r} | " + " | ".join(f"{blocks[n][i, j]:.2f}" for n in names for j in range(3)) + " |")
    return "\n".join(lines) + "\n"


def rating_histogram(ratings):
    h = np.bincount(np.asarray(ratings, dtype=int), minlength=101).astype(float)
    return h / h.sum() if h.sum() else h


def rating_bars_svg(first, second, path, labels=("condition 1, second rating", "condition 2, first rating"), title=""):
    """Two relative-frequency panels over 0..100 plus their difference."""
    h1, h2 = rating_histogram(first), rating_histogram(second)
    x = np.arange(101)
    fig, axes = plt.subplots(3, 1, figsize=(7, 6), sharex=True)
    axes[0].bar(x, h1, width=1.0)
    axes[0].set_ylabel(labels[0], fontsize=7)
    axes[1].bar(x, h2, width=1.0)
    axes[1].set_ylabel(labels[1], fontsize=7)
    axes[2].bar(x, h1 - h2, width=1.0, color="gray")
    axes[2].set_ylabel("difference", fontsize=7)
    axes[2].set_xlabel("rating for the correct direction")
    if title:
        axes[0].set_title(title)
    _save(fig, path)


def interference_ratings(trials, coherence):
    """Rescored condition-1 second ratings and condition-2 first ratings for one coherence level."""
    first = [rescore(t.rating2, t.direction) for t in trials if t.coherence_pct == coherence and t.condition == 1]
    second = [rescore(t.rating1, t.direction) for t in trials if t.coherence_pct == coherence and t.condition == 2]
    return first, second
