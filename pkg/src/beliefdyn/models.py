"""Joint and marginal category-response distributions for the three model families.

A joint table is a 3x3 array whose entry ``[k, l]`` is the probability of
category ``k`` (L/M/H) at the first rating and ``l`` at the second.
"""

from dataclasses import dataclass, asdict
from functools import lru_cache
from typing import ClassVar

import numpy as np
from scipy.stats import binom

from . import kernel
from .exceptions import ParameterDomainError

MARKOV = "markov"
QUANTUM = "quantum"
MARKOV_V = "markov_v"
FAMILIES = (MARKOV, QUANTUM, MARKOV_V)

# dots in the stimulus; the coherent count is Binomial(70, upsilon)
N_DOTS = 70
DRIFT_CLAMP = 1e-6


def _finite(*values):
    return all(np.isfinite(v) for v in values)


@dataclass(frozen=True)
class MarkovParams:
    """Drift ``mu = alpha / (alpha + beta)`` and diffusion ``gamma = alpha + beta``."""

    mu: float
    gamma: float
    family: ClassVar[str] = MARKOV
    names: ClassVar[tuple] = ("mu", "gamma")

    def __post_init__(self):
        if not _finite(self.mu, self.gamma) or not (0 < self.mu < 1) or self.gamma <= 0:
            raise ParameterDomainError(f"Markov needs 0 < mu < 1 and gamma > 0, got {self}")

    @property
    def rates(self):
        return kernel.drift_diffusion_to_rates(self.mu, self.gamma)


@dataclass(frozen=True)
class QuantumParams:
    """Potential slope ``mu`` and real coupling ``sigma``.

    ``sigma = 0`` is accepted for evaluation (a frozen walk) but lies outside
    the fitting box.
    """

    mu: float
    sigma: float
    family: ClassVar[str] = QUANTUM
    names: ClassVar[tuple] = ("mu", "sigma")

    def __post_init__(self):
        if not _finite(self.mu, self.sigma) or self.mu < 0 or self.sigma < 0:
            raise ParameterDomainError(f"Quantum needs mu >= 0 and sigma >= 0, got {self}")


@dataclass(frozen=True)
class MarkovVParams:
    """Binomial success probability ``upsilon`` for the drift, plus diffusion ``gamma``."""

    upsilon: float
    gamma: float
    family: ClassVar[str] = MARKOV_V
    names: ClassVar[tuple] = ("upsilon", "gamma")

    def __post_init__(self):
        if not _finite(self.upsilon, self.gamma) or not (0 < self.upsilon < 1) or self.gamma <= 0:
            raise ParameterDomainError(f"Markov-V needs 0 < upsilon < 1 and gamma > 0, got {self}")


PARAM_CLASSES = {MARKOV: MarkovParams, QUANTUM: QuantumParams, MARKOV_V: MarkovVParams}


def make_params(family, values):
    """Build a params record from a family name and a sequence or mapping of values."""
    try:
        cls = PARAM_CLASSES[family]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}") from None
    if isinstance(values, dict):
        return cls(**{k: float(values[k]) for k in cls.names})
    return cls(*(float(v) for v in values))


def params_to_dict(params):
    return {k: float(v) for k, v in asdict(params).items()}


@dataclass(frozen=True, order=True)
class TimingPair:
    t1: float
    t2: float

    def __post_init__(self):
        if not _finite(self.t1, self.t2) or not (0 < self.t1 < self.t2):
            raise ValueError(f"timing needs 0 < t1 < t2, got ({self.t1}, {self.t2})")

    @property
    def gap(self):
        return self.t2 - self.t1


DEFAULT_TIMINGS = {
    1: TimingPair(0.5, 1.5),
    2: TimingPair(1.5, 2.5),
    3: TimingPair(0.5, 2.5),
}
CALIBRATION_CONDITIONS = (1, 2)
GENERALIZATION_CONDITION = 3


# -- Markov -------------------------------------------------------------------

@lru_cache(maxsize=256)
def _markov_T(alpha, beta, t):
    T = kernel.transition_matrix(kernel.build_intensity(alpha, beta), t)
    T.setflags(write=False)
    return T


def _joint_from_propagators(T1, T2, phi0):
    """Stack-aware evaluation of ||M_l T2 M_k T1 phi0||_1; T1/T2 may carry a leading batch axis."""
    v1 = T1 @ phi0
    rows = []
    for s in kernel.CATEGORY_SLICES:
        w = np.einsum("...ij,...j->...i", T2[..., :, s], v1[..., s])
        rows.append(kernel.category_masses(w))
    return np.stack(rows, axis=-2)


def markov_joint(params, timing):
    alpha, beta = params.rates
    T1 = _markov_T(alpha, beta, timing.t1)
    T2 = _markov_T(alpha, beta, timing.gap)
    return _joint_from_propagators(T1, T2, kernel.initial_markov_state())


def markov_marginal(params, t):
    alpha, beta = params.rates
    return kernel.category_masses(_markov_T(alpha, beta, t) @ kernel.initial_markov_state())


# -- Quantum ------------------------------------------------------------------

def quantum_joint(params, timing):
    spectrum = kernel.hamiltonian_spectrum(params.mu, params.sigma)
    psi1 = kernel.evolve_amplitudes(spectrum, kernel.initial_quantum_state(), timing.t1)
    projected = np.zeros((kernel.N_STATES, 3), dtype=complex)
    for k, s in enumerate(kernel.CATEGORY_SLICES):
        projected[s, k] = psi1[s]
    psi2 = kernel.evolve_amplitudes(spectrum, projected, timing.gap)
    return kernel.category_masses(np.abs(psi2.T) ** 2)


def quantum_marginal_no_first(params, t):
    """Category probabilities of a single rating at time ``t`` (no earlier rating)."""
    spectrum = kernel.hamiltonian_spectrum(params.mu, params.sigma)
    psi = kernel.evolve_amplitudes(spectrum, kernel.initial_quantum_state(), t)
    return kernel.category_masses(np.abs(psi) ** 2)


# -- Markov-V -----------------------------------------------------------------

def drift_grid():
    """The 71 drift values n/70, clamped away from 0 and 1."""
    return np.clip(np.arange(N_DOTS + 1) / N_DOTS, DRIFT_CLAMP, 1 - DRIFT_CLAMP)


def binomial_weights(upsilon):
    return binom.pmf(np.arange(N_DOTS + 1), N_DOTS, upsilon)


def _drift_rates(gamma):
    mu = drift_grid()
    return mu * gamma, (1 - mu) * gamma


@lru_cache(maxsize=256)
def markov_v_components(gamma, t1, t2):
    """Per-drift joint tables, shape (71, 3, 3), for one diffusion rate.

    All 71 chains share the exit rate ``gamma``, so they are propagated
    together on vectors by uniformization rather than full matrix exponentials.
    """
    alphas, betas = _drift_rates(gamma)
    phi0 = np.broadcast_to(kernel.initial_markov_state(), (N_DOTS + 1, kernel.N_STATES))
    v1 = kernel.propagate_batch(alphas, betas, t1, phi0)
    projected = np.zeros((N_DOTS + 1, 3, kernel.N_STATES))
    for k, s in enumerate(kernel.CATEGORY_SLICES):
        projected[:, k, s] = v1[:, s]
    comps = kernel.category_masses(kernel.propagate_batch(alphas, betas, t2 - t1, projected))
    comps.setflags(write=False)
    return comps


def markov_v_joint(params, timing):
    comps = markov_v_components(params.gamma, timing.t1, timing.t2)
    return np.tensordot(binomial_weights(params.upsilon), comps, axes=1)


def markov_v_marginal(params, t):
    alphas, betas = _drift_rates(params.gamma)
    phi0 = np.broadcast_to(kernel.initial_markov_state(), (N_DOTS + 1, kernel.N_STATES))
    masses = kernel.category_masses(kernel.propagate_batch(alphas, betas, t, phi0))
    return binomial_weights(params.upsilon) @ masses


# -- dispatch -----------------------------------------------------------------

_JOINT = {MARKOV: markov_joint, QUANTUM: quantum_joint, MARKOV_V: markov_v_joint}
_MARGINAL = {MARKOV: markov_marginal, QUANTUM: quantum_marginal_no_first, MARKOV_V: markov_v_marginal}


def joint_table(params, timing):
    return _JOINT[params.family](params, timing)


def marginal(params, t):
    """Category probabilities of a lone rating at time ``t``."""
    return _MARGINAL[params.family](params, t)


def interference_effect(params, timing):
    """Second-rating marginal after a first rating, minus the lone-rating marginal at ``t2``.

    Identically zero for the Markov families; generally nonzero for the quantum walk.
    """
    return joint_table(params, timing).sum(axis=0) - marginal(params, timing.t2)
