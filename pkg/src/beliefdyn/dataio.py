"""Trial records: CSV ingest, rescoring, categorization, aggregation and simulation."""

import csv
from dataclasses import dataclass
import logging
from pathlib import Path

import numpy as np
import scipy.linalg

from . import kernel, models
from .exceptions import DataValidationError

logger = logging.getLogger(__name__)

COHERENCE_LEVELS = (2, 4, 8, 16)
DIRECTIONS = ("L", "R")
CSV_COLUMNS = ("participant", "session", "coherence_pct", "direction", "condition",
               "t1", "t2", "rating1", "rating2")
# inclusive rating bands for L, M, H
RATING_BANDS = ((0, 33), (34, 66), (67, 100))
TIMING_TOL = 1e-9


@dataclass(frozen=True)
class TrialRecord:
    participant: str
    session: int
    coherence_pct: int
    direction: str
    condition: int
    t1: float
    t2: float
    rating1: int
    rating2: int


@dataclass
class CellDataset:
    participant: str
    coherence: int
    condition: int
    counts: np.ndarray
    n_trials: int


def _check_rating(rating):
    if not (0 <= rating <= 100) or int(rating) != rating:
        raise ValueError(f"rating must be an integer in 0..100, got {rating!r}")


def rescore(rating, direction):
    """Express a rating relative to the correct motion direction."""
    _check_rating(rating)
    if direction == "R":
        return int(rating)
    if direction == "L":
        return 100 - int(rating)
    raise ValueError(f"direction must be 'L' or 'R', got {direction!r}")


def category_index(rating):
    _check_rating(rating)
    return 0 if rating <= 33 else (1 if rating <= 66 else 2)


def categorize(rating):
    return kernel.CATEGORIES[category_index(rating)]


def _category_array(ratings):
    r = np.asarray(ratings)
    return np.where(r <= 33, 0, np.where(r <= 66, 1, 2))


# -- CSV ------------------------------------------------------------------------

def _parse_row(row, timings):
    """Return (record, problems) for one CSV row dict; problems is a list of (column, reason)."""
    problems = []
    vals = {}

    def get(col, conv, check=None, reason=""):
        raw = (row.get(col) or "").strip()
        try:
            v = conv(raw)
        except (TypeError, ValueError):
            problems.append((col, f"cannot parse {raw!r}"))
            return None
        if check is not None and not check(v):
            problems.append((col, f"{reason}, got {raw!r}"))
            return None
        vals[col] = v
        return v

    def as_int(s):
        f = float(s)
        if f != int(f):
            raise ValueError(s)
        return int(f)

    get("participant", lambda s: s if s else int("x"))
    get("session", as_int)
    get("coherence_pct", as_int, lambda v: v in COHERENCE_LEVELS, f"must be one of {COHERENCE_LEVELS}")
    get("direction", str, lambda v: v in DIRECTIONS, "must be L or R")
    cond = get("condition", as_int, lambda v: v in timings, f"must be one of {sorted(timings)}")
    t1 = get("t1", float)
    t2 = get("t2", float)
    get("rating1", as_int, lambda v: 0 <= v <= 100, "must be in 0..100")
    get("rating2", as_int, lambda v: 0 <= v <= 100, "must be in 0..100")
    if cond is not None and t1 is not None and t2 is not None:
        tp = timings[cond]
        if abs(t1 - tp.t1) > TIMING_TOL or abs(t2 - tp.t2) > TIMING_TOL:
            problems.append(("t1", f"timing ({t1}, {t2}) does not match condition {cond} ({tp.t1}, {tp.t2})"))
    if problems:
        return None, problems
    return TrialRecord(**vals), []


def read_trials_csv(path, timings=None, skip_invalid=False):
    """Parse and validate a trials CSV.

    Invalid rows raise DataValidationError (file, line, column, reason)
    unless ``skip_invalid`` is set, in which case they are dropped with a
    warning. Unknown columns are ignored with a warning.
    """
    timings = timings or models.DEFAULT_TIMINGS
    path = Path(path)
    problems = []
    trials = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise DataValidationError([(str(path), 1, c, "missing required column") for c in missing])
        extra = [c for c in header if c not in CSV_COLUMNS]
        if extra:
            logger.warning("%s: ignoring unknown columns %s", path, ", ".join(extra))
        for row in reader:
            rec, row_problems = _parse_row(row, timings)
            line = reader.line_num
            if row_problems:
                problems.extend((str(path), line, col, reason) for col, reason in row_problems)
            else:
                trials.append(rec)
    if problems:
        if not skip_invalid:
            raise DataValidationError(problems)
        bad = len({p[1] for p in problems})
        logger.warning("%s: skipped %d invalid rows", path, bad)
    return trials


def write_trials_csv(trials, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t in trials:
            w.writerow([t.participant, t.session, t.coherence_pct, t.direction, t.condition,
                        repr(float(t.t1)), repr(float(t.t2)), t.rating1, t.rating2])


# -- aggregation ----------------------------------------------------------------

def aggregate(trials):
    """Group trials by (participant, coherence, condition) into rescored 3x3 count tables."""
    groups = {}
    for t in trials:
        key = (t.participant, t.coherence_pct, t.condition)
        k = category_index(rescore(t.rating1, t.direction))
        l = category_index(rescore(t.rating2, t.direction))
        table = groups.setdefault(key, np.zeros((3, 3), dtype=int))
        table[k, l] += 1
    return [
        CellDataset(p, c, cond, table, int(table.sum()))
        for (p, c, cond), table in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1], kv[0][2]))
    ]


def counts_by_cell(cells):
    """``{(participant, coherence): {condition: counts}}`` from aggregated cells."""
    out = {}
    for c in cells:
        out.setdefault((c.participant, c.coherence), {})[c.condition] = c.counts
    return out


def filter_trials(trials, coherence=None):
    if not coherence:
        return list(trials)
    keep = set(coherence)
    return [t for t in trials if t.coherence_pct in keep]


# -- simulation -----------------------------------------------------------------

def _sample_initial_states(rng, n):
    return rng.choice(kernel.STATES, size=n, p=kernel.initial_markov_state())


def simulate_ctmc_states(alpha, beta, timing, n, rng):
    """Exact event-driven sampling of the reflecting random walk.

    ``alpha``/``beta`` are scalars or per-trial arrays of down/up rates.
    Returns the states (1..99) occupied at ``t1`` and ``t2``.
    """
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n,))
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,))
    state = _sample_initial_states(rng, n)
    clock = np.zeros(n)
    s1 = np.zeros(n, dtype=int)
    s2 = np.zeros(n, dtype=int)
    seen1 = np.zeros(n, dtype=bool)
    active = np.arange(n)
    while active.size:
        s = state[active]
        down = np.where(s > 1, alpha[active], 0.0)
        up = np.where(s < kernel.N_STATES, beta[active], 0.0)
        rate = down + up
        t_next = clock[active] + rng.exponential(1.0, active.size) / rate
        hit1 = ~seen1[active] & (t_next > timing.t1)
        s1[active[hit1]] = s[hit1]
        seen1[active[hit1]] = True
        hit2 = t_next > timing.t2
        s2[active[hit2]] = s[hit2]
        step = np.where(rng.random(active.size) * rate < up, 1, -1)
        state[active] = s + step
        clock[active] = t_next
        active = active[~hit2]
    return s1, s2


def _band_ratings(rng, cats):
    lo = np.array([b[0] for b in RATING_BANDS])[cats]
    hi = np.array([b[1] for b in RATING_BANDS])[cats]
    return rng.integers(lo, hi + 1)


def simulate_quantum_categories(params, timing, n, rng):
    """Sequential measurement with collapse: sample k at t1, project, evolve, sample l at t2.

    Uses a direct Pade exponential of the Hamiltonian so the sampler stays
    independent of the spectral route used by the analytic tables.
    """
    H = kernel.build_hamiltonian(params.mu, params.sigma)
    psi1 = scipy.linalg.expm(-1j * timing.t1 * H) @ kernel.initial_quantum_state()
    p1 = kernel.category_masses(np.abs(psi1) ** 2)
    U2 = scipy.linalg.expm(-1j * timing.gap * H)
    cond = np.zeros((3, 3))
    for k, s in enumerate(kernel.CATEGORY_SLICES):
        if p1[k] <= 0:
            cond[k] = 1.0 / 3
            continue
        collapsed = np.zeros_like(psi1)
        collapsed[s] = psi1[s] / np.sqrt(p1[k])
        p2 = kernel.category_masses(np.abs(U2 @ collapsed) ** 2)
        cond[k] = p2 / p2.sum()
    k = rng.choice(3, size=n, p=p1 / p1.sum())
    u = rng.random(n)
    l = (u[:, None] > np.cumsum(cond[k], axis=1)[:, :2]).sum(axis=1)
    return k, l


def simulate_ratings(params, timing, n, rng):
    """Correct-direction ratings (rating1, rating2) for ``n`` simulated trials."""
    fam = params.family
    if fam == models.MARKOV:
        alpha, beta = params.rates
        return simulate_ctmc_states(alpha, beta, timing, n, rng)
    if fam == models.MARKOV_V:
        drift = np.clip(rng.binomial(models.N_DOTS, params.upsilon, n) / models.N_DOTS,
                        models.DRIFT_CLAMP, 1 - models.DRIFT_CLAMP)
        return simulate_ctmc_states(drift * params.gamma, (1 - drift) * params.gamma, timing, n, rng)
    if fam == models.QUANTUM:
        k, l = simulate_quantum_categories(params, timing, n, rng)
        return _band_ratings(rng, k), _band_ratings(rng, l)
    raise ValueError(f"unknown family {fam!r}")


def simulate_trials(params, timing, n, seed, *, participant="sim", coherence=2,
                    condition=1, session=1):
    """Simulated TrialRecords; directions alternate R, L so the split is exactly even for even n.

    Ratings for left-motion trials are stored in the raw frame (100 - rating),
    so rescoring recovers the simulated value. Deterministic given ``seed``
    (an int or a sequence of ints).
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    r1, r2 = simulate_ratings(params, timing, n, rng)
    out = []
    for i in range(n):
        d = "R" if i % 2 == 0 else "L"
        a, b = int(r1[i]), int(r2[i])
        if d == "L":
            a, b = 100 - a, 100 - b
        out.append(TrialRecord(str(participant), session, int(coherence), d, int(condition),
                               float(timing.t1), float(timing.t2), a, b))
    return out


def simulate_joint_counts(params, timing, n, rng):
    """Categorized 3x3 counts straight from the sampler (no TrialRecord round trip)."""
    r1, r2 = simulate_ratings(params, timing, n, rng)
    counts = np.zeros((3, 3), dtype=int)
    np.add.at(counts, (_category_array(r1), _category_array(r2)), 1)
    return counts


def simulate_corpus(params_for, participants, trials_per_cell, seed, timings=None,
                    coherence_levels=COHERENCE_LEVELS, conditions=(1, 2, 3)):
    """A full design: participants x coherence levels x conditions.

    ``params_for(participant, coherence)`` returns the generating params.
    Each cell gets its own seed stream derived from ``(seed, participant index,
    coherence, condition)``.
    """
    timings = timings or models.DEFAULT_TIMINGS
    trials = []
    for i, p in enumerate(participants):
        for coh in coherence_levels:
            params = params_for(p, coh)
            for cond in conditions:
                trials.extend(simulate_trials(
                    params, timings[cond], trials_per_cell, [int(seed), i, int(coh), int(cond)],
                    participant=p, coherence=coh, condition=cond,
                ))
    return trials
