"""scikit-learn style wrappers around the three belief-dynamics models.

Each estimator is a probabilistic classifier of the joint response label
(9 classes) given the rating times. ``fit`` runs the maximum-likelihood
calibration; ``predict_proba`` returns the model's joint table for each row.
Fitting on conditions 1-2 and scoring on condition 3 is the generalization
test::

    model = QuantumBeliefModel().fit(X_cal, y_cal)
    model.score(X_new, y_new)   # mean log-likelihood per trial
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import inference, models
from .models import TimingPair
from .validation import N_JOINT, check_joint_labels, check_timings, xy_to_tables


class BeliefModel(ClassifierMixin, BaseEstimator):
    family = None

    def __init__(self, grid_size=inference.GRID_SIZE, xatol=inference.XATOL,
                 max_iter=inference.MAX_ITER, bounds=None):
        self.grid_size = grid_size
        self.xatol = xatol
        self.max_iter = max_iter
        self.bounds = bounds

    def fit(self, X, y, sample_weight=None):
        tables = xy_to_tables(X, y, sample_weight)
        counts = {i: t for i, t in enumerate(tables.values())}
        timings = {i: tp for i, tp in enumerate(tables)}
        res = inference.fit(self.family, counts, timings, grid_size=self.grid_size,
                            box=self.bounds, xatol=self.xatol, max_iter=self.max_iter)
        self._set_fitted(res.params)
        self.fit_result_ = res
        self.log_likelihood_ = res.log_likelihood
        self.converged_ = res.converged
        self.n_iter_ = res.n_iter
        return self

    def _set_fitted(self, params):
        self.params_ = params
        self.classes_ = np.arange(N_JOINT)
        self.n_features_in_ = 2
        return self

    @classmethod
    def from_params(cls, params, **kwargs):
        """A ready-to-predict estimator with fixed parameters."""
        if params.family != cls.family:
            raise ValueError(f"{cls.__name__} expects {cls.family} params, got {params.family}")
        return cls(**kwargs)._set_fitted(params)

    def joint_table(self, t1, t2):
        check_is_fitted(self, "params_")
        return models.joint_table(self.params_, TimingPair(t1, t2))

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_timings(X)
        out = np.empty((len(X), N_JOINT))
        pairs, inverse = np.unique(X, axis=0, return_inverse=True)
        for i, (t1, t2) in enumerate(pairs):
            out[inverse.ravel() == i] = self.joint_table(t1, t2).ravel()
        return out

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def log_likelihood(self, X, y, sample_weight=None):
        """Total floored log-likelihood of the labelled trials."""
        y = check_joint_labels(y, len(X))
        p = self.predict_proba(X)[np.arange(len(y)), y]
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        return float(np.sum(w * np.log(np.maximum(p, inference.PROB_FLOOR))))

    def g2(self, X, y, sample_weight=None):
        return -2.0 * self.log_likelihood(X, y, sample_weight)

    def score(self, X, y, sample_weight=None):
        """Mean log-likelihood per trial (higher is better)."""
        w = np.ones(len(X)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        return self.log_likelihood(X, y, sample_weight) / w.sum()


class MarkovBeliefModel(BeliefModel):
    """Reflecting random walk over 99 belief states; fits (mu, gamma)."""

    family = models.MARKOV


class QuantumBeliefModel(BeliefModel):
    """Closed-system quantum walk with collapse at each rating; fits (mu, sigma)."""

    family = models.QUANTUM


class MarkovVBeliefModel(BeliefModel):
    """Random walk with Binomial(70, upsilon)/70 drift variability; fits (upsilon, gamma)."""

    family = models.MARKOV_V


ESTIMATORS = {
    models.MARKOV: MarkovBeliefModel,
    models.QUANTUM: QuantumBeliefModel,
    models.MARKOV_V: MarkovVBeliefModel,
}


def make_model(family, **kwargs):
    return ESTIMATORS[family](**kwargs)
