import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binom

from beliefdyn import dataio, kernel, models
from beliefdyn.exceptions import ParameterDomainError
from beliefdyn.models import MarkovParams, MarkovVParams, QuantumParams, TimingPair

COND1 = TimingPair(0.5, 1.5)

timings = st.tuples(st.floats(0.01, 2.0), st.floats(0.01, 2.0)).map(lambda p: TimingPair(p[0], p[0] + p[1]))
markov_params = st.builds(MarkovParams, st.floats(0.01, 0.99), st.floats(0.01, 10))
quantum_params = st.builds(QuantumParams, st.floats(0, 10), st.floats(0.001, 10))
markov_v_params = st.builds(MarkovVParams, st.floats(0.01, 0.99), st.floats(0.01, 10))


def initial_block_masses():
    phi = [math.exp(-((j - 50) ** 2) / 50) for j in range(1, 100)]
    z = math.fsum(phi)
    return np.array([math.fsum(phi[0:33]) / z, math.fsum(phi[33:66]) / z, math.fsum(phi[66:99]) / z])


# -- parameter containers -----------------------------------------------------------

@pytest.mark.parametrize("family, values", [
    ("markov", (0.0, 1.0)), ("markov", (1.0, 1.0)), ("markov", (0.5, 0.0)),
    ("quantum", (-0.1, 1.0)), ("quantum", (1.0, -1.0)),
    ("markov_v", (0.5, np.nan)),
])
def test_params_reject_out_of_domain(family, values):
    with pytest.raises(ParameterDomainError):
        models.make_params(family, values)


def test_params_dict_round_trip():
    p = MarkovVParams(0.3, 4.0)
    assert models.make_params("markov_v", models.params_to_dict(p)) == p


def test_markov_rates():
    assert MarkovParams(0.25, 4.0).rates == (1.0, 3.0)


@pytest.mark.parametrize("t1, t2", [(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)])
def test_timing_order(t1, t2):
    with pytest.raises(ValueError):
        TimingPair(t1, t2)


# -- Markov joint -------------------------------------------------------------------

def test_markov_joint_near_simultaneous_is_diagonal():
    tab = models.markov_joint(MarkovParams(0.5, 1.0), TimingPair(1.0, 1.0 + 1e-9))
    off = tab.sum() - np.trace(tab)
    assert off < 1e-6


def test_markov_joint_matches_simulation():
    params = MarkovParams(0.5, 1.0)
    counts = dataio.simulate_joint_counts(params, COND1, 200_000, np.random.default_rng(3))
    assert np.max(np.abs(counts / counts.sum() - models.markov_joint(params, COND1))) < 0.01


def test_markov_pooled_marginal_identity():
    for params in (MarkovParams(0.5, 1.0), MarkovParams(0.1, 9.0), MarkovParams(0.93, 0.2)):
        for tp in models.DEFAULT_TIMINGS.values():
            pooled = models.markov_joint(params, tp).sum(axis=0)
            direct = models.markov_marginal(params, tp.t2)
            assert np.max(np.abs(pooled - direct)) < 1e-10


def test_markov_marginal_at_zero_is_initial_masses():
    # t1 very small: the first rating sees phi(0)
    tab = models.markov_joint(MarkovParams(0.5, 1.0), TimingPair(1e-12, 1.0))
    assert np.allclose(tab.sum(axis=1), initial_block_masses(), atol=1e-10)


def test_markov_drift_direction():
    # mu near 1 puts the down rate in charge; mu near 0 pushes mass upward
    low = models.markov_marginal(MarkovParams(0.95, 10.0), 2.5)
    high = models.markov_marginal(MarkovParams(0.05, 10.0), 2.5)
    assert low[0] > low[2] and high[2] > high[0]


# -- quantum joint ------------------------------------------------------------------

def test_quantum_uncoupled_is_diagonal():
    tab = models.quantum_joint(QuantumParams(3.0, 0.0), COND1)
    assert np.allclose(tab, np.diag(initial_block_masses()), atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 10), st.floats(1e-3, 10), timings)
def test_quantum_total_probability(mu, sigma, tp):
    tab = models.quantum_joint(QuantumParams(mu, sigma), tp)
    assert abs(tab.sum() - 1) < 1e-10
    assert tab.min() >= 0


def test_quantum_marginal_no_first_at_zero():
    m = models.quantum_marginal_no_first(QuantumParams(2.0, 1.0), 0.0)
    assert np.allclose(m, initial_block_masses(), atol=1e-14)
    # the three block masses, each evaluated independently with math.fsum
    assert m == pytest.approx([0.0004740369328880861, 0.9990519261342238, 0.0004740369328880861], abs=1e-14)


@pytest.mark.parametrize("t", [0.3, 1.5, 7.0])
def test_quantum_marginal_uncoupled_is_constant(t):
    m = models.quantum_marginal_no_first(QuantumParams(4.0, 0.0), t)
    assert np.allclose(m, initial_block_masses(), atol=1e-13)


def test_quantum_marginal_matches_near_simultaneous_joint():
    params = QuantumParams(2.0, 1.0)
    tab = models.quantum_joint(params, TimingPair(1.5, 1.5 + 1e-9))
    assert np.allclose(np.diag(tab), models.quantum_marginal_no_first(params, 1.5), atol=1e-8)


def test_quantum_joint_matches_dense_oracle():
    # build the sequential-measurement probabilities from dense matrices
    params = QuantumParams(2.0, 1.0)
    H = kernel.build_hamiltonian(params.mu, params.sigma)
    U1 = kernel.unitary_matrix(H, COND1.t1)
    U2 = kernel.unitary_matrix(H, COND1.gap)
    psi0 = kernel.initial_quantum_state()
    M = [kernel.projector(c) for c in kernel.CATEGORIES]
    ref = np.array([[np.linalg.norm(M[l] @ U2 @ M[k] @ U1 @ psi0) ** 2 for l in range(3)] for k in range(3)])
    assert np.allclose(models.quantum_joint(params, COND1), ref, atol=1e-12)


def test_quantum_matches_simulation():
    params = QuantumParams(2.0, 1.0)
    counts = dataio.simulate_joint_counts(params, COND1, 200_000, np.random.default_rng(5))
    tv = 0.5 * np.abs(counts / counts.sum() - models.quantum_joint(params, COND1)).sum()
    assert tv < 0.01


# -- Markov-V -----------------------------------------------------------------------

def test_markov_v_concentrated_reduces_to_markov():
    upsilon, gamma = 1e-12, 2.0
    tail = 1 - binom.pmf(0, models.N_DOTS, upsilon)
    mix = models.markov_v_joint(MarkovVParams(upsilon, gamma), COND1)
    single = models.markov_joint(MarkovParams(models.DRIFT_CLAMP, gamma), COND1)
    assert 0.5 * np.abs(mix - single).sum() <= tail + 1e-12


def test_markov_v_reverse_summation():
    gamma = 1.0
    mix = models.markov_v_joint(MarkovVParams(0.5, gamma), COND1)
    ref = np.zeros((3, 3))
    for n in range(models.N_DOTS, -1, -1):
        mu = min(max(n / models.N_DOTS, models.DRIFT_CLAMP), 1 - models.DRIFT_CLAMP)
        ref += binom.pmf(n, models.N_DOTS, 0.5) * models.markov_joint(MarkovParams(mu, gamma), COND1)
    assert np.max(np.abs(mix - ref)) < 1e-12


@pytest.mark.parametrize("upsilon", np.linspace(0.05, 0.95, 7))
@pytest.mark.parametrize("gamma", [0.5, 2.0, 5.0, 10.0])
def test_markov_v_fatter_tails(upsilon, gamma):
    mix = models.markov_v_joint(MarkovVParams(upsilon, gamma), COND1).sum(axis=0)
    single = models.markov_joint(MarkovParams(upsilon, gamma), COND1).sum(axis=0)
    assert mix[0] + mix[2] >= single[0] + single[2]


def test_markov_v_matches_simulation():
    params = MarkovVParams(0.4, 3.0)
    counts = dataio.simulate_joint_counts(params, COND1, 200_000, np.random.default_rng(8))
    tv = 0.5 * np.abs(counts / counts.sum() - models.markov_v_joint(params, COND1)).sum()
    assert tv < 0.01


def test_drift_grid_is_clamped():
    mu = models.drift_grid()
    assert len(mu) == 71 and mu[0] == 1e-6 and mu[-1] == 1 - 1e-6 and mu[35] == 0.5


# -- tables and interference ----------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.one_of(markov_params, quantum_params, markov_v_params), timings)
def test_joint_tables_are_distributions(params, tp):
    tab = models.joint_table(params, tp)
    assert tab.shape == (3, 3)
    assert tab.min() >= 0
    assert abs(tab.sum() - 1) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(markov_params, timings)
def test_markov_no_interference(params, tp):
    assert np.max(np.abs(models.interference_effect(params, tp))) < 1e-10


@settings(max_examples=15, deadline=None)
@given(markov_v_params, timings)
def test_markov_v_no_interference(params, tp):
    assert np.max(np.abs(models.interference_effect(params, tp))) < 1e-9


def test_quantum_interference_is_balanced():
    eff = models.interference_effect(QuantumParams(2.0, 1.0), COND1)
    assert np.max(np.abs(eff)) > 0
    assert abs(eff.sum()) < 1e-10


def test_quantum_interference_exists_in_fitting_box():
    best = 0.0
    for mu in np.linspace(0, 10, 11):
        for sigma in np.linspace(1, 10, 10):
            eff = models.interference_effect(QuantumParams(mu, sigma), COND1)
            best = max(best, np.max(np.abs(eff)))
    assert best > 1e-3


def test_tables_are_read_only_views_of_cache():
    tab = models.markov_v_components(1.0, 0.5, 1.5)
    with pytest.raises(ValueError):
        tab[0, 0, 0] = 1.0
