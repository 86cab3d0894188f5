"""Treatment-effect tests: summed two-sample G2 and a one-sample Hotelling T2."""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy import stats as sps

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

ALPHA = 0.05


@dataclass
class TestReport:
    name: str
    statistic: float
    df: float
    p_value: float
    critical_value: float = float("nan")
    components: dict = field(default_factory=dict)
    excluded: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self):
        return {
            "name": self.name,
            "statistic": float(self.statistic),
            "df": self.df if isinstance(self.df, list) else float(self.df),
            "p_value": float(self.p_value),
            "critical_value": float(self.critical_value),
            "components": {str(k): float(v) for k, v in sorted(self.components.items())},
            "excluded": list(self.excluded),
            "extra": {k: (float(v) if np.isscalar(v) else v) for k, v in self.extra.items()},
        }


def _xlogy_ratio(o, e):
    o = np.asarray(o, dtype=float)
    e = np.asarray(e, dtype=float)
    out = np.zeros_like(o)
    nz = o > 0
    out[nz] = o[nz] * np.log(o[nz] / e[nz])
    return out


def g2_two_sample(a, b):
    """Likelihood-ratio G2 for two count vectors against their pooled proportions."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    na, nb = a.sum(), b.sum()
    pooled = (a + b) / (na + nb)
    return float(2.0 * (_xlogy_ratio(a, na * pooled).sum() + _xlogy_ratio(b, nb * pooled).sum()))


def chi2_critical(df, alpha=ALPHA):
    return float(sps.chi2.ppf(1 - alpha, df))


def _summed_g2(name, first, second, n_cells):
    if set(first) != set(second):
        only = sorted(set(first) ^ set(second), key=str)
        raise ConfigurationError(f"{name}: participant sets differ ({only})")
    components, excluded = {}, []
    for p in sorted(first, key=str):
        a, b = np.asarray(first[p]), np.asarray(second[p])
        if a.size != n_cells or b.size != n_cells:
            raise ValueError(f"{name}: participant {p} needs {n_cells} cells per sample")
        if a.sum() == 0 or b.sum() == 0:
            msg = f"participant {p} excluded: empty sample"
            logger.warning("%s: %s", name, msg)
            excluded.append(msg)
            continue
        components[p] = g2_two_sample(a, b)
    df = len(components) * (n_cells - 1)
    stat = float(sum(components.values()))
    p_value = float(sps.chi2.sf(stat, df)) if df else float("nan")
    crit = chi2_critical(df) if df else float("nan")
    return TestReport(name, stat, df, p_value, crit, components, excluded)


def g2_marginal_test(first, second):
    """Summed per-participant G2 comparing two L/M/H marginals; df = P * 2.

    ``first`` and ``second`` map participant -> 3 counts (e.g. condition-1
    second rating vs condition-2 first rating).
    """
    return _summed_g2("interference_g2", first, second, 3)


def g2_joint_test(first, second):
    """Summed per-participant G2 comparing two 3x3 joint tables; df = P * 8."""
    return _summed_g2("joint_g2", first, second, 9)


def hotelling_change_test(changes, labels=None):
    """One-sample Hotelling T2 that the mean change vector is zero.

    ``changes`` maps participant -> k-vector (or is a (P, k) array). The F
    form uses (k, P - k) degrees of freedom.
    """
    if isinstance(changes, dict):
        keys = sorted(changes, key=str)
        X = np.array([np.asarray(changes[p], dtype=float) for p in keys])
    else:
        X = np.asarray(changes, dtype=float)
    P, k = X.shape
    labels = list(labels) if labels is not None else [str(i) for i in range(k)]
    if P < 5 or P <= k:
        raise ValueError(f"Hotelling test needs at least 5 and more than {k} participants, got {P}")
    mean = X.mean(axis=0)
    df1, df2 = k, P - k
    if np.all(mean == 0):
        t2 = 0.0
    else:
        S = np.atleast_2d(np.cov(X, rowvar=False))
        u, sv, vt = np.linalg.svd(S)
        tol = sv.max() * max(S.shape) * np.finfo(float).eps if sv.max() > 0 else 1.0
        if np.any(sv <= tol):
            null = vt[sv <= tol]
            involved = sorted({labels[i] for v in null for i in np.flatnonzero(np.abs(v) > 1e-8)})
            raise np.linalg.LinAlgError(f"singular change covariance; collinear components: {involved}")
        t2 = float(P * mean @ np.linalg.solve(S, mean))
    f = t2 * (P - k) / (k * (P - 1))
    p_value = float(sps.f.sf(f, df1, df2))
    return TestReport(
        "hotelling_change", f, [df1, df2], p_value, float(sps.f.ppf(1 - ALPHA, df1, df2)),
        components={lab: float(m) for lab, m in zip(labels, mean)},
        extra={"t2": t2, "n_participants": P},
    )
