import json

import numpy as np
import pytest

from beliefdyn import dataio, inference, models
from beliefdyn.exceptions import ConfigurationError, DegenerateDataError
from beliefdyn.models import DEFAULT_TIMINGS, MarkovParams, QuantumParams

CAL = {c: DEFAULT_TIMINGS[c] for c in (1, 2)}
HELD = DEFAULT_TIMINGS[3]


def analytic_counts(params, n):
    return {c: n * models.joint_table(params, tp) for c, tp in CAL.items()}


def simulated_counts(params, n, rng):
    return {c: dataio.simulate_joint_counts(params, tp, n, rng) for c, tp in CAL.items()}


# -- likelihood -----------------------------------------------------------------------

def test_proportional_counts_give_entropy_form():
    params = MarkovParams(0.4, 3.0)
    n = 500.0
    ll = inference.log_likelihood(params, analytic_counts(params, n), CAL)
    ref = sum(n * np.sum(p * np.log(p)) for p in (models.joint_table(params, tp) for tp in CAL.values()))
    assert ll == pytest.approx(ref, rel=1e-12)


def test_single_count_gives_log_probability():
    params = QuantumParams(2.0, 1.0)
    counts = np.zeros((3, 3), dtype=int)
    counts[1, 2] = 1
    ll = inference.log_likelihood(params, {1: counts}, CAL)
    assert ll == pytest.approx(np.log(models.joint_table(params, CAL[1])[1, 2]), rel=1e-12)


def test_floor_applies_to_zero_probability_cells():
    # sigma = 0 gives an exactly diagonal table
    params = QuantumParams(1.0, 0.0)
    counts = np.zeros((3, 3))
    counts[0, 2] = 2
    assert inference.log_likelihood(params, {1: counts}, CAL) == pytest.approx(2 * np.log(1e-12))


def test_empty_counts_are_degenerate():
    with pytest.raises(DegenerateDataError):
        inference.log_likelihood(MarkovParams(0.5, 1.0), {1: np.zeros((3, 3)), 2: np.zeros((3, 3))}, CAL)


@pytest.mark.parametrize("bad", [np.ones((2, 3)), -np.ones((3, 3)), np.full((3, 3), np.nan)])
def test_bad_count_tables(bad):
    with pytest.raises(ValueError):
        inference.log_likelihood(MarkovParams(0.5, 1.0), {1: bad}, CAL)


def test_likelihood_decreases_when_counts_move_to_unlikely_cells():
    params = MarkovParams(0.5, 2.0)
    p = models.joint_table(params, CAL[1])
    hi, lo = np.unravel_index(np.argmax(p), p.shape), np.unravel_index(np.argmin(p), p.shape)
    base = np.full((3, 3), 10)
    moved = base.copy()
    moved[hi] -= 5
    moved[lo] += 5
    assert inference.log_likelihood(params, {1: moved}, CAL) < inference.log_likelihood(params, {1: base}, CAL)


def test_true_params_win_on_synthetic_data():
    # n = 1000 trials in each calibration condition
    truth, other = MarkovParams(0.6, 1.2), MarkovParams(0.4, 1.2)
    wins = 0
    for seed in range(200):
        counts = simulated_counts(truth, 1000, np.random.default_rng(seed))
        wins += inference.log_likelihood(truth, counts, CAL) > inference.log_likelihood(other, counts, CAL)
    assert wins / 200 > 0.99


def test_g2_statistic():
    p = np.full((3, 3), 1 / 9)
    c = np.arange(9).reshape(3, 3)
    assert inference.g2_statistic(p, c) == pytest.approx(-2 * 36 * np.log(1 / 9))


# -- fitting -------------------------------------------------------------------------

@pytest.mark.parametrize("family, values", [
    ("markov", (0.3, 2.0)),
    ("markov", (0.7, 5.0)),
    ("quantum", (2.0, 1.0)),
    ("quantum", (6.0, 3.0)),
])
def test_self_consistency(family, values):
    params = models.make_params(family, values)
    res = inference.fit(family, analytic_counts(params, 1e6), CAL)
    assert res.converged
    got = np.array([getattr(res.params, n) for n in params.names])
    assert np.max(np.abs(got - values)) <= 10 * inference.XATOL


@pytest.mark.slow
def test_self_consistency_markov_v():
    params = models.MarkovVParams(0.4, 3.0)
    res = inference.fit("markov_v", analytic_counts(params, 1e6), CAL)
    assert res.converged
    assert abs(res.params.upsilon - 0.4) <= 10 * inference.XATOL
    assert abs(res.params.gamma - 3.0) <= 10 * inference.XATOL


def test_fit_is_deterministic():
    counts = simulated_counts(QuantumParams(3.0, 2.0), 300, np.random.default_rng(1))
    a = inference.fit("quantum", counts, CAL, participant="p", coherence=4)
    inference._grid_tables.cache_clear()
    b = inference.fit("quantum", counts, CAL, participant="p", coherence=4)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_argmax_invariant_under_proportional_additions():
    params = MarkovParams(0.35, 4.0)
    counts = simulated_counts(params, 400, np.random.default_rng(2))
    base = inference.fit("markov", counts, CAL)
    model = {c: models.joint_table(base.params, tp) for c, tp in CAL.items()}
    padded = {c: counts[c] + 250 * model[c] for c in counts}
    more = inference.fit("markov", padded, CAL)
    assert abs(more.params.mu - base.params.mu) <= 10 * inference.XATOL
    assert abs(more.params.gamma - base.params.gamma) <= 10 * inference.XATOL


def test_fit_result_fields():
    res = inference.fit("markov", simulated_counts(MarkovParams(0.5, 2.0), 100, np.random.default_rng(0)), CAL,
                        participant="s01", coherence=8)
    assert res.g2 == pytest.approx(-2 * res.log_likelihood)
    assert res.g2 >= 0
    assert res.n_iter > 0 and res.n_eval >= 400
    assert inference.FitResult.from_dict(json.loads(json.dumps(res.to_dict()))) == res


def test_fit_stays_in_box():
    counts = simulated_counts(QuantumParams(0.0, 0.01), 200, np.random.default_rng(4))
    res = inference.fit("quantum", counts, CAL)
    for v, (lo, hi) in zip((res.params.mu, res.params.sigma), inference.SEARCH_BOX["quantum"]):
        assert lo <= v <= hi


def test_fit_reports_nonconvergence_instead_of_raising():
    counts = simulated_counts(QuantumParams(2.0, 1.0), 200, np.random.default_rng(0))
    res = inference.fit("quantum", counts, CAL, max_iter=2)
    assert not res.converged
    assert res.message


def test_fit_errors():
    with pytest.raises(ValueError):
        inference.fit("linear", {1: np.ones((3, 3))}, CAL)
    with pytest.raises(DegenerateDataError):
        inference.fit("markov", {1: np.zeros((3, 3)), 2: np.zeros((3, 3))}, CAL)
    with pytest.raises(ConfigurationError):
        inference.fit("markov", {5: np.ones((3, 3))}, CAL)


def test_grid_axes_are_cell_centres():
    mu, gamma = inference.grid_axes("quantum", 20)
    assert mu[0] == pytest.approx(0.25) and mu[-1] == pytest.approx(9.75)
    assert len(gamma) == 20


# op-level recovery study at 2000 trials per condition, 50 replications
def _recovery_rate(params, tol):
    hits = 0
    for seed in range(50):
        counts = simulated_counts(params, 2000, np.random.default_rng([20, seed]))
        res = inference.fit(params.family, counts, CAL)
        got = [getattr(res.params, n) for n in params.names]
        want = [getattr(params, n) for n in params.names]
        hits += all(abs(g - w) <= t for g, w, t in zip(got, want, tol) if t is not None)
    return hits / 50


@pytest.mark.slow
def test_recovery_quantum_2000_trials():
    assert _recovery_rate(QuantumParams(2.0, 1.0), (0.15, 0.1)) >= 0.9


@pytest.mark.slow
def test_recovery_markov_2000_trials():
    assert _recovery_rate(MarkovParams(0.7, 2.0), (0.05, None)) >= 0.9


# -- generalization -----------------------------------------------------------------

def _fit(p, coh, fam, params):
    return inference.FitResult(p, coh, fam, params, -1.0, 2.0)


def test_identical_predictions_give_zero_diff():
    fits = [_fit("a", 2, "markov", MarkovParams(0.5, 2.0)), _fit("a", 2, "quantum", QuantumParams(3.0, 2.0))]
    report = inference.generalization_test(fits, {("a", 2): np.ones((3, 3))}, HELD,
                                           comparisons=(("markov", "markov"), ("quantum", "quantum")))
    assert report.cells[0].g2_diff == {"markov-markov": 0.0, "quantum-quantum": 0.0}
    assert inference.g2_diff({"x": 4.5, "y": 4.5}, "x", "y") == 0.0


def test_g2_diff_antisymmetric():
    g2 = {"markov": 12.5, "quantum": 7.25}
    assert inference.g2_diff(g2, "markov", "quantum") == -inference.g2_diff(g2, "quantum", "markov")


def test_generalization_uses_calibrated_params_untouched():
    mp, qp = MarkovParams(0.4, 3.0), QuantumParams(5.0, 2.0)
    counts = np.array([[3, 5, 1], [4, 60, 7], [0, 6, 2]])
    report = inference.generalization_test([_fit("a", 8, "markov", mp), _fit("a", 8, "quantum", qp)],
                                           {("a", 8): counts}, HELD)
    cell = report.cells[0]
    assert np.array_equal(cell.predicted["quantum"], models.joint_table(qp, HELD))
    gm = inference.g2_statistic(models.joint_table(mp, HELD), counts)
    gq = inference.g2_statistic(models.joint_table(qp, HELD), counts)
    assert cell.g2_diff["markov-quantum"] == gm - gq


def test_generalization_summary_sums_participants():
    fits, held = [], {}
    rng = np.random.default_rng(7)
    for p in ("a", "b", "c"):
        fits += [_fit(p, 2, "markov", MarkovParams(0.5, 1.0)), _fit(p, 2, "quantum", QuantumParams(2.0, 1.0))]
        held[(p, 2)] = rng.integers(0, 20, (3, 3))
    report = inference.generalization_test(fits, held, HELD)
    entry = report.summary()[2]["markov-quantum"]
    diffs = [c.g2_diff["markov-quantum"] for c in report.cells]
    assert entry["summed_g2_diff"] == pytest.approx(sum(diffs), rel=1e-14)
    assert entry["n_positive"] + entry["n_negative"] <= 3
    assert report.summed_g2_diff() == {2: entry["summed_g2_diff"]}
    json.dumps(report.to_dict())


def test_missing_fit_lists_cell():
    fits = [_fit("a", 2, "markov", MarkovParams(0.5, 1.0)), _fit("a", 2, "quantum", QuantumParams(1.0, 1.0)),
            _fit("b", 2, "markov", MarkovParams(0.5, 1.0))]
    held = {("a", 2): np.ones((3, 3)), ("b", 2): np.ones((3, 3)), ("c", 4): np.ones((3, 3))}
    with pytest.raises(ConfigurationError) as exc:
        inference.generalization_test(fits, held, HELD)
    msg = str(exc.value)
    assert "participant=b coherence=2 families=quantum" in msg
    assert "participant=c coherence=4" in msg
