"""Input checks and conversions between trial arrays and count tables.

Estimators take ``X`` of shape (n, 2) holding the rating times ``(t1, t2)``
of each trial and ``y`` holding the joint category label ``3 * k + l``
(k, l in 0..2 for L, M, H).
"""

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d

from .models import TimingPair

N_JOINT = 9


def encode_joint(first, second):
    return 3 * np.asarray(first) + np.asarray(second)


def decode_joint(label):
    label = np.asarray(label)
    return label // 3, label % 3


def check_timings(X):
    X = check_array(X, dtype=float, ensure_2d=True)
    if X.shape[1] != 2:
        raise ValueError(f"X must have two columns (t1, t2), got {X.shape[1]}")
    if np.any(X[:, 0] <= 0) or np.any(X[:, 1] <= X[:, 0]):
        raise ValueError("every row of X needs 0 < t1 < t2")
    return X


def check_joint_labels(y, n=None):
    y = column_or_1d(y, warn=True)
    if n is not None and len(y) != n:
        raise ValueError(f"y has {len(y)} entries, X has {n} rows")
    yi = np.asarray(y).astype(int)
    if np.any(yi != y) or np.any((yi < 0) | (yi >= N_JOINT)):
        raise ValueError("y must hold joint category labels in 0..8")
    return yi


def check_count_table(table):
    c = np.asarray(table)
    if c.shape != (3, 3):
        raise ValueError(f"count table must be 3x3, got {c.shape}")
    if np.any(c < 0) or np.any(c != np.round(c)):
        raise ValueError("count table entries must be nonnegative integers")
    return c.astype(int)


def xy_to_tables(X, y, sample_weight=None):
    """Collapse trials into ``{TimingPair: 3x3 counts}``; weights must be integral."""
    X = check_timings(X)
    y = check_joint_labels(y, len(X))
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if np.any(w < 0) or np.any(w != np.round(w)):
        raise ValueError("sample_weight must hold nonnegative integer counts")
    tables = {}
    for (t1, t2), lab, wt in zip(X, y, w):
        tab = tables.setdefault(TimingPair(float(t1), float(t2)), np.zeros((3, 3)))
        tab[lab // 3, lab % 3] += wt
    return dict(sorted(tables.items()))


def tables_to_xy(tables):
    """Inverse of :func:`xy_to_tables`: one weighted row per (timing, cell)."""
    X, y, w = [], [], []
    for tp, table in sorted(tables.items()):
        c = check_count_table(table)
        for lab in range(N_JOINT):
            X.append((tp.t1, tp.t2))
            y.append(lab)
            w.append(c[lab // 3, lab % 3])
    return np.array(X, dtype=float).reshape(-1, 2), np.array(y, dtype=int), np.array(w, dtype=float)
