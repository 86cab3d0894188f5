"""State space, generators and propagators for the two belief processes.

Belief states are indexed 1..99 on the evidence scale (array index 0..98).
State 50 is the neutral point. Both processes share the same initial
probability distribution and the same three-way categorization of states.
"""

from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.stats import poisson

from .exceptions import NumericalFailureError, ParameterDomainError

N_STATES = 99
STATES = np.arange(1, N_STATES + 1)
CATEGORIES = ("L", "M", "H")
CATEGORY_SLICES = (slice(0, 33), slice(33, 66), slice(66, 99))

INITIAL_MEAN = 50
INITIAL_SD = 5.0

# round-off allowed in a transition matrix before we call it a failure
_STOCHASTIC_TOL = 1e-10
# Poisson tail mass dropped when truncating a uniformized series
_UNIFORM_TAIL = 1e-17


def _check_rate(name, value):
    if not np.isfinite(value) or value <= 0:
        raise ParameterDomainError(f"{name} must be a positive finite rate, got {value!r}")


def build_intensity(alpha, beta):
    """Generator of the belief random walk.

    ``alpha`` is the rate of a downward step j -> j-1, ``beta`` the rate of an
    upward step j -> j+1. Columns are "from" states, so ``K[j-1, j] = alpha``
    and ``K[j+1, j] = beta``. The walk reflects at states 1 and 99: the
    diagonal there only carries the one available escape rate, so every
    column sums to zero.
    """
    _check_rate("alpha", alpha)
    _check_rate("beta", beta)
    K = np.zeros((N_STATES, N_STATES))
    idx = np.arange(N_STATES - 1)
    K[idx, idx + 1] = alpha
    K[idx + 1, idx] = beta
    K[np.diag_indices(N_STATES)] = -K.sum(axis=0)
    K.setflags(write=False)
    return K


def drift_diffusion_to_rates(mu, gamma):
    """Map (drift, diffusion) = (alpha/(alpha+beta), alpha+beta) to (alpha, beta)."""
    return mu * gamma, (1.0 - mu) * gamma


def rates_to_drift_diffusion(alpha, beta):
    gamma = alpha + beta
    return alpha / gamma, gamma


def build_hamiltonian(mu_q, sigma):
    """Tridiagonal Hamiltonian with linear potential ``mu_q * i / 99`` and real coupling ``sigma``."""
    if not (np.isfinite(mu_q) and np.isfinite(sigma)):
        raise ParameterDomainError(f"Hamiltonian parameters must be finite, got mu={mu_q!r}, sigma={sigma!r}")
    H = np.diag(mu_q * STATES / N_STATES)
    idx = np.arange(N_STATES - 1)
    H[idx + 1, idx] = sigma
    H[idx, idx + 1] = np.conj(sigma)
    H.setflags(write=False)
    return H


def _clean_stochastic(T):
    """Clamp round-off negatives and renormalize columns; raise if the error is not round-off."""
    if T.min() < -_STOCHASTIC_TOL:
        raise NumericalFailureError(f"transition matrix has entry {T.min():.3e} < 0")
    T = np.clip(T, 0.0, None)
    colsum = T.sum(axis=-2, keepdims=True)
    if np.max(np.abs(colsum - 1.0)) > _STOCHASTIC_TOL:
        raise NumericalFailureError(
            f"transition matrix column sums deviate from 1 by {np.max(np.abs(colsum - 1.0)):.3e}"
        )
    return T / colsum


def transition_matrix(K, t):
    """``T(t) = exp(t K)``, column-stochastic.

    Uses Pade scaling-and-squaring. A diagonal similarity would symmetrize K,
    but its scaling grows like (beta/alpha)**49 and is useless for strongly
    drifting walks.
    """
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t!r}")
    K = np.asarray(K, dtype=float)
    if t == 0:
        return np.eye(K.shape[0])
    return _clean_stochastic(scipy.linalg.expm(t * K))


def transition_matrices(alphas, betas, t):
    """Batched ``exp(t K)`` for a vector of (alpha, beta) pairs; shape (n, 99, 99)."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    if np.any(alphas <= 0) or np.any(betas <= 0):
        raise ParameterDomainError("rates must be positive")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t!r}")
    n = len(alphas)
    if t == 0:
        return np.broadcast_to(np.eye(N_STATES), (n, N_STATES, N_STATES)).copy()
    Ks = np.zeros((n, N_STATES, N_STATES))
    idx = np.arange(N_STATES - 1)
    Ks[:, idx, idx + 1] = alphas[:, None]
    Ks[:, idx + 1, idx] = betas[:, None]
    diag = np.arange(N_STATES)
    Ks[:, diag, diag] = -Ks.sum(axis=1)
    return _clean_stochastic(scipy.linalg.expm(t * Ks))


def propagate_batch(alphas, betas, t, v):
    """``exp(t K_n) v_n`` for a batch of reflecting chains, by uniformization.

    ``v`` has shape (n, ..., 99). Each chain is run as a discrete jump chain
    with rate ``alpha + beta`` (the largest exit rate), so every term of the
    series is nonnegative; the dropped Poisson tail is below 1e-17.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    if np.any(alphas <= 0) or np.any(betas <= 0):
        raise ParameterDomainError("rates must be positive")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t!r}")
    v = np.asarray(v, dtype=float)
    if t == 0:
        return v.copy()
    lam = alphas + betas
    shape = (-1,) + (1,) * (v.ndim - 1)
    down = (alphas / lam).reshape(shape)
    up = (betas / lam).reshape(shape)
    m = lam.max() * t
    ks = np.arange(int(m + 15 * np.sqrt(m) + 40))
    n_terms = int(np.argmax(poisson.sf(ks, m) < _UNIFORM_TAIL)) + 1
    weights = poisson.pmf(np.arange(n_terms)[None, :], (lam * t)[:, None])
    weights /= weights.sum(axis=1, keepdims=True)
    acc = np.zeros_like(v)
    x = v
    for k in range(n_terms):
        acc += weights[:, k].reshape(shape) * x
        nxt = np.zeros_like(x)
        nxt[..., :-1] = down * x[..., 1:]
        nxt[..., 0] += down[..., 0] * x[..., 0]
        nxt[..., 1:] += up * x[..., :-1]
        nxt[..., -1] += up[..., 0] * x[..., -1]
        x = nxt
    return acc


def unitary_matrix(H, t):
    """``U(t) = exp(-i t H)`` through the eigendecomposition of Hermitian ``H``."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t!r}")
    H = np.asarray(H)
    if t == 0:
        return np.eye(H.shape[0], dtype=complex)
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * t * w)) @ V.conj().T


@lru_cache(maxsize=512)
def hamiltonian_spectrum(mu_q, sigma):
    """Eigenpairs of the tridiagonal Hamiltonian (real sigma), cached per parameter pair."""
    if not (np.isfinite(mu_q) and np.isfinite(sigma)):
        raise ParameterDomainError(f"Hamiltonian parameters must be finite, got mu={mu_q!r}, sigma={sigma!r}")
    d = mu_q * STATES / N_STATES
    e = np.full(N_STATES - 1, float(sigma))
    w, V = scipy.linalg.eigh_tridiagonal(d, e)
    w.setflags(write=False)
    V.setflags(write=False)
    return w, V


def evolve_amplitudes(spectrum, psi, t):
    """Apply ``U(t)`` to one amplitude vector (or to columns of a matrix)."""
    w, V = spectrum
    if t == 0:
        return np.asarray(psi, dtype=complex)
    coeff = V.T @ psi
    phase = np.exp(-1j * t * w)
    if coeff.ndim == 2:
        phase = phase[:, None]
    return V @ (phase * coeff)


def projector(label):
    """Diagonal 0/1 matrix selecting one third of the states."""
    k = CATEGORIES.index(label)
    m = np.zeros(N_STATES)
    m[CATEGORY_SLICES[k]] = 1.0
    return np.diag(m)


def category_masses(p):
    """Sum a length-99 probability vector (or the last axis of an array) over L/M/H blocks."""
    p = np.asarray(p)
    return np.stack([p[..., s].sum(axis=-1) for s in CATEGORY_SLICES], axis=-1)


def initial_markov_state():
    """Discrete Gaussian on states 1..99, centered at 50 with sd 5, renormalized."""
    phi = np.exp(-((STATES - INITIAL_MEAN) ** 2) / (2 * INITIAL_SD**2))
    phi = phi / phi.sum()
    phi.setflags(write=False)
    return phi


def initial_quantum_state():
    """Real nonnegative amplitudes whose squared magnitudes equal the Markov start."""
    psi = np.sqrt(initial_markov_state()).astype(complex)
    psi.setflags(write=False)
    return psi
