"""Maximum-likelihood calibration and generalization-criterion comparison.

Parameters are estimated from the joint count tables of the calibration
conditions (1 and 2) and then used, untouched, to predict the joint table of
the held-out condition (3). Discrepancy is ``G2 = -2 * log-likelihood``.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
import logging

import numpy as np
from scipy.optimize import minimize

from . import models
from .exceptions import ConfigurationError, DegenerateDataError

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
OPEN_EPS = 1e-6

# search boxes; an open end is represented by pulling the bound in by OPEN_EPS
SEARCH_BOX = {
    models.MARKOV: ((OPEN_EPS, 1 - OPEN_EPS), (OPEN_EPS, 10.0)),
    models.QUANTUM: ((0.0, 10.0), (OPEN_EPS, 10.0)),
    models.MARKOV_V: ((OPEN_EPS, 1 - OPEN_EPS), (OPEN_EPS, 10.0)),
}
GRID_SIZE = 20
XATOL = 1e-5
# stopping is on parameter spread only; likelihood scale grows with n
FATOL = np.inf
MAX_ITER = 2000
MAX_RESTARTS = 3

COMPARISONS = ((models.MARKOV, models.QUANTUM), (models.MARKOV_V, models.QUANTUM))


def _as_counts(table):
    """3x3 nonnegative weights; observed data are integer, proportional (expected) counts need not be."""
    c = np.asarray(table, dtype=float)
    if c.shape != (3, 3):
        raise ValueError(f"count table must be 3x3, got shape {c.shape}")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise ValueError("count table entries must be finite and nonnegative")
    return c


def log_likelihood(params, counts_by_condition, timings):
    """Sum of ``count * ln p`` over cells and conditions (independent multinomials).

    Model probabilities are floored at 1e-12 before the log.
    """
    total = 0.0
    n = 0.0
    for cond, table in counts_by_condition.items():
        c = _as_counts(table)
        n += c.sum()
        p = np.maximum(models.joint_table(params, timings[cond]), PROB_FLOOR)
        total += float(np.sum(c * np.log(p)))
    if n == 0:
        raise DegenerateDataError("all count tables are empty")
    return total


def g2_statistic(table, counts):
    """``-2 * sum count * ln p`` for one predicted table."""
    c = _as_counts(counts)
    p = np.maximum(np.asarray(table, dtype=float), PROB_FLOOR)
    return float(-2.0 * np.sum(c * np.log(p)))


def grid_axes(family, grid_size=GRID_SIZE, box=None):
    """Cell-centre grid along each parameter axis of the search box."""
    box = box or SEARCH_BOX[family]
    frac = (np.arange(grid_size) + 0.5) / grid_size
    return tuple(lo + frac * (hi - lo) for lo, hi in box)


@lru_cache(maxsize=32)
def _grid_tables(family, grid_size, box, timings):
    """Predicted tables for every grid point and timing: (n_points, n_timings, 3, 3)."""
    a_axis, b_axis = grid_axes(family, grid_size, box)
    out = np.empty((len(a_axis) * len(b_axis), len(timings), 3, 3))
    if family == models.MARKOV_V:
        weights = np.stack([models.binomial_weights(u) for u in a_axis])
        for j, gamma in enumerate(b_axis):
            for c, tp in enumerate(timings):
                comps = models.markov_v_components(gamma, tp.t1, tp.t2)
                out[j::len(b_axis), c] = np.tensordot(weights, comps, axes=1)
        return out
    for i, (a, b) in enumerate(product(a_axis, b_axis)):
        params = models.make_params(family, (a, b))
        for c, tp in enumerate(timings):
            out[i, c] = models.joint_table(params, tp)
    return out


@dataclass
class FitResult:
    participant: str
    coherence: int
    family: str
    params: object
    log_likelihood: float
    g2: float
    n_iter: int = 0
    n_eval: int = 0
    converged: bool = True
    message: str = ""

    def to_dict(self):
        return {
            "participant": self.participant,
            "coherence": int(self.coherence),
            "family": self.family,
            "params": models.params_to_dict(self.params),
            "log_likelihood": float(self.log_likelihood),
            "g2": float(self.g2),
            "n_iter": int(self.n_iter),
            "n_eval": int(self.n_eval),
            "converged": bool(self.converged),
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            participant=str(d["participant"]),
            coherence=int(d["coherence"]),
            family=d["family"],
            params=models.make_params(d["family"], d["params"]),
            log_likelihood=float(d["log_likelihood"]),
            g2=float(d["g2"]),
            n_iter=int(d.get("n_iter", 0)),
            n_eval=int(d.get("n_eval", 0)),
            converged=bool(d.get("converged", True)),
            message=d.get("message", ""),
        )


def fit(family, counts_by_condition, timings, *, participant="", coherence=0,
        grid_size=GRID_SIZE, box=None, xatol=XATOL, max_iter=MAX_ITER):
    """Maximum-likelihood parameters for one family on calibration count tables.

    A fixed ``grid_size x grid_size`` grid seeds a bounded Nelder-Mead search,
    so the result depends on the data only. Non-convergence is reported in
    the result rather than raised.
    """
    if family not in models.FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    box = tuple(tuple(map(float, b)) for b in (box or SEARCH_BOX[family]))
    conds = sorted(counts_by_condition)
    if not conds:
        raise DegenerateDataError("no calibration conditions supplied")
    missing = [c for c in conds if c not in timings]
    if missing:
        raise ConfigurationError(f"no timing for conditions {missing}")
    counts = np.stack([_as_counts(counts_by_condition[c]) for c in conds])
    if counts.sum() == 0:
        raise DegenerateDataError("all count tables are empty")
    tps = tuple(timings[c] for c in conds)

    tables = _grid_tables(family, grid_size, box, tps)
    grid_ll = np.einsum("gcij,cij->g", np.log(np.maximum(tables, PROB_FLOOR)), counts)
    best = int(np.argmax(grid_ll))
    a_axis, b_axis = grid_axes(family, grid_size, box)
    x0 = np.array([a_axis[best // grid_size], b_axis[best % grid_size]])

    def negll(x):
        params = models.make_params(family, x)
        total = 0.0
        for c, tp in zip(counts, tps):
            total += np.sum(c * np.log(np.maximum(models.joint_table(params, tp), PROB_FLOOR)))
        return -total

    # initial simplex spans half a grid cell along each axis, kept inside the box;
    # restarts shrink the simplex to escape stalls on narrow ridges
    def simplex_at(x, scale):
        verts = [x.copy()]
        for d, (lo, hi) in enumerate(box):
            h = (hi - lo) / grid_size / 2 * scale
            v = x.copy()
            v[d] = v[d] + h if v[d] + h <= hi else v[d] - h
            verts.append(v)
        return np.array(verts)

    x, fun = x0, -grid_ll[best]
    n_iter = n_eval = 0
    converged, message = False, ""
    for attempt in range(MAX_RESTARTS + 1):
        res = minimize(
            negll, x, method="Nelder-Mead", bounds=box,
            options={"xatol": xatol, "fatol": FATOL, "maxiter": max_iter,
                     "initial_simplex": simplex_at(x, 0.1 ** attempt)},
        )
        n_iter += int(res.nit)
        n_eval += int(res.nfev)
        converged, message = bool(res.success), str(res.message)
        moved = np.max(np.abs(res.x - x))
        if res.fun <= fun:
            x, fun = res.x, res.fun
        if not converged or moved <= xatol:
            break
    if not converged:
        logger.warning("fit %s/%s/%s did not converge: %s", participant, coherence, family, message)
    ll = -float(fun)
    return FitResult(
        participant=str(participant), coherence=int(coherence), family=family,
        params=models.make_params(family, x), log_likelihood=ll, g2=-2.0 * ll,
        n_iter=n_iter, n_eval=n_eval + grid_size * grid_size,
        converged=converged, message=message,
    )


@dataclass
class CellPrediction:
    participant: str
    coherence: int
    observed: np.ndarray
    predicted: dict
    g2: dict
    g2_diff: dict

    def to_dict(self):
        return {
            "participant": self.participant,
            "coherence": int(self.coherence),
            "observed": np.asarray(self.observed, dtype=int).tolist(),
            "predicted": {f: np.asarray(t).tolist() for f, t in self.predicted.items()},
            "g2": {f: float(v) for f, v in self.g2.items()},
            "g2_diff": {k: float(v) for k, v in self.g2_diff.items()},
        }


@dataclass
class GeneralizationReport:
    timing: models.TimingPair
    cells: list = field(default_factory=list)

    def summary(self):
        """Per coherence level: summed G2 difference and how many participants favor each side."""
        out = {}
        for coh in sorted({c.coherence for c in self.cells}):
            cells = [c for c in self.cells if c.coherence == coh]
            entry = {"n_participants": len(cells)}
            for key in sorted({k for c in cells for k in c.g2_diff}):
                vals = [c.g2_diff[key] for c in cells if key in c.g2_diff]
                entry[key] = {
                    "summed_g2_diff": float(np.sum(vals)),
                    "n_positive": int(sum(v > 0 for v in vals)),
                    "n_negative": int(sum(v < 0 for v in vals)),
                }
            out[int(coh)] = entry
        return out

    def summed_g2_diff(self, first=models.MARKOV, second=models.QUANTUM):
        key = comparison_key(first, second)
        return {coh: v[key]["summed_g2_diff"] for coh, v in self.summary().items() if key in v}

    def to_dict(self):
        return {
            "timing": {"t1": self.timing.t1, "t2": self.timing.t2},
            "cells": [c.to_dict() for c in self.cells],
            "summary": {str(k): v for k, v in self.summary().items()},
        }


def comparison_key(first, second):
    return f"{first}-{second}"


def g2_diff(g2, first, second):
    """``G2_first - G2_second``; positive favors ``second``."""
    return g2[first] - g2[second]


def generalization_test(fits, heldout_counts, timing, comparisons=COMPARISONS):
    """Score calibrated fits on held-out count tables.

    ``fits`` is an iterable of FitResult; ``heldout_counts`` maps
    ``(participant, coherence)`` to a 3x3 count table. Every held-out cell
    needs a fit for every family that appears in ``fits``.
    """
    by_cell = {}
    families = set()
    for f in fits:
        by_cell.setdefault((str(f.participant), int(f.coherence)), {})[f.family] = f
        families.add(f.family)
    missing = []
    for (p, coh) in sorted(heldout_counts):
        have = by_cell.get((str(p), int(coh)), {})
        lacking = sorted(families - set(have)) if have else sorted(families) or ["<any>"]
        if lacking:
            missing.append(f"participant={p} coherence={coh} families={','.join(lacking)}")
    if missing:
        raise ConfigurationError("missing fits for held-out cells: " + "; ".join(missing))

    report = GeneralizationReport(timing=timing)
    for (p, coh) in sorted(heldout_counts, key=lambda k: (int(k[1]), str(k[0]))):
        counts = _as_counts(heldout_counts[(p, coh)])
        cell_fits = by_cell[(str(p), int(coh))]
        predicted = {fam: models.joint_table(cell_fits[fam].params, timing) for fam in sorted(cell_fits)}
        g2 = {fam: g2_statistic(t, counts) for fam, t in predicted.items()}
        diffs = {
            comparison_key(a, b): g2_diff(g2, a, b)
            for a, b in comparisons if a in g2 and b in g2
        }
        report.cells.append(CellPrediction(str(p), int(coh), counts, predicted, g2, diffs))
    return report
