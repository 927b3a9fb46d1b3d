"""Plug-in mutual information over every variable subset and its Möbius inversion.

Subsets are bitmasks over variables: bit ``v`` of a subset id selects
variable ``v`` (0-based), i.e. variable ``v + 1`` in the written labels
``"1"``, ``"12"``, ``"123"``. Index 0 is the empty set, whose cumulative
value is fixed at 0.

All information quantities are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import rel_entr
from sklearn.base import BaseEstimator

from .exceptions import DataError, DegenerateDataError
from .records import LabeledCounts

LN2 = math.log(2.0)


def subset_key(subset, n):
    """Written label of a subset id: ``0b011 -> "12"`` (comma-joined for n > 9)."""
    members = [str(v + 1) for v in range(n) if subset >> v & 1]
    return ("," if n > 9 else "").join(members)


def parse_subset(key, n):
    """Inverse of :func:`subset_key`; also accepts iterables of 1-based indices."""
    if isinstance(key, (int, np.integer)):
        subset = int(key)
    else:
        if isinstance(key, str):
            parts = key.split(",") if "," in key or n > 9 else list(key)
        else:
            parts = list(key)
        subset = 0
        for p in parts:
            v = int(p) - 1
            if not 0 <= v < n:
                raise DataError(f"variable {p} out of range for n={n}")
            subset |= 1 << v
    if not 1 <= subset < (1 << n):
        raise DataError(f"subset must be a nonempty subset of {n} variables")
    return subset


def full_subset(n):
    return (1 << n) - 1


def subsets_of_size(n, k):
    return [sum(1 << v for v in c) for c in combinations(range(n), k)]


def _resolve_prior(label_prior, counts_like):
    if label_prior is None or (isinstance(label_prior, str) and label_prior == "empirical"):
        return np.asarray(counts_like.label_weights(), dtype=float)
    if isinstance(label_prior, str):
        if label_prior == "uniform":
            return np.array([0.5, 0.5])
        raise ValueError(f"unknown label prior {label_prior!r}")
    prior = np.asarray(label_prior, dtype=float)
    if prior.shape != (2,) or (prior < 0).any() or prior.sum() <= 0:
        raise ValueError("label_prior must be two nonnegative weights")
    return prior / prior.sum()


def _as_conditionals(source):
    """``(n, p(x|y))`` from LabeledCounts, an ExactJoint, or a raw array."""
    if hasattr(source, "conditionals"):
        cond = np.asarray(source.conditionals(), dtype=float)
        return source.n, cond
    cond = np.asarray(source, dtype=float)
    n = int(round(math.log2(cond.shape[-1])))
    if cond.shape[-2] != 2 or (1 << n) != cond.shape[-1]:
        raise DataError(f"conditionals must have shape (..., 2, 2**n), got {cond.shape}")
    return n, cond


def marginalize(cond, n, subset):
    """Marginal of ``p(x|y)`` onto ``subset``; shape ``(..., 2, 2**|subset|)``.

    Output index ``k`` packs the subset's variables in increasing order,
    lowest variable in bit 0.
    """
    cond = np.asarray(cond)
    lead = cond.shape[:-1]
    nd = cond.reshape(lead + (2,) * n)
    base = len(lead)
    # C-order reshape puts variable v on axis n - 1 - v
    drop = tuple(base + n - 1 - v for v in range(n) if not subset >> v & 1)
    marg = nd.sum(axis=drop) if drop else nd
    return marg.reshape(lead + (-1,))


def conditional_distribution(counts, subset):
    """Per-label plug-in distributions over the outcomes of ``subset``."""
    n, cond = _as_conditionals(counts)
    return marginalize(cond, n, parse_subset(subset, n))


def _mi_from_marginal(marg, prior):
    # marg: (..., 2, m); prior: (..., 2)
    joint = prior[..., :, None] * marg
    px = joint.sum(axis=-2, keepdims=True)
    indep = prior[..., :, None] * px
    mi = rel_entr(joint, indep).sum(axis=(-2, -1)) / LN2
    return np.maximum(mi, 0.0)


def mutual_information(counts, subset, label_prior=None):
    """Plug-in ``I(Y; X_S)`` in bits."""
    n, cond = _as_conditionals(counts)
    prior = _resolve_prior(label_prior, counts)
    subset = parse_subset(subset, n)
    return float(_mi_from_marginal(marginalize(cond, n, subset), prior))


def cumulative_table(cond, n, prior):
    """``g`` for every subset id; ``cond`` may carry leading batch axes."""
    cond = np.asarray(cond, dtype=float)
    prior = np.broadcast_to(np.asarray(prior, dtype=float), cond.shape[:-1])
    g = np.zeros(cond.shape[:-2] + (1 << n,))
    for subset in range(1, 1 << n):
        g[..., subset] = _mi_from_marginal(marginalize(cond, n, subset), prior)
    return g


def mobius_inversion(g):
    """Irreducible terms ``f`` with ``g(S) = sum_{T ⊆ S} f(T)``.

    Works on the last axis (length ``2**n``) of any numeric array, including
    object arrays of ``fractions.Fraction``.
    """
    f = np.array(g, copy=True)
    size = f.shape[-1]
    bit = 1
    while bit < size:
        idx = np.arange(size)
        hi = idx[(idx & bit) != 0]
        f[..., hi] = f[..., hi] - f[..., hi ^ bit]
        bit <<= 1
    return f


def zeta_transform(f):
    """Forward subset sum; inverse of :func:`mobius_inversion`."""
    g = np.array(f, copy=True)
    size = g.shape[-1]
    bit = 1
    while bit < size:
        idx = np.arange(size)
        hi = idx[(idx & bit) != 0]
        g[..., hi] = g[..., hi] + g[..., hi ^ bit]
        bit <<= 1
    return g


def triplet_term(g):
    """Three-variable inclusion-exclusion for ``f(123)`` with ``g(∅) = 0``.

    ``g`` is indexed by subset id (variable 1 is bit 0).
    """
    return g[7] - g[3] - g[5] - g[6] + g[1] + g[2] + g[4]


@dataclass(frozen=True, eq=False)
class LatticeDecomposition:
    n: int
    g: np.ndarray
    f: np.ndarray

    @property
    def top_f(self):
        return float(self.f[-1])

    @property
    def top_g(self):
        return float(self.g[-1])

    def g_of(self, subset):
        return float(self.g[parse_subset(subset, self.n)])

    def f_of(self, subset):
        return float(self.f[parse_subset(subset, self.n)])

    def forward_residual(self):
        """``max |g - zeta(f)|`` over all subsets."""
        return float(np.max(np.abs(zeta_transform(self.f) - self.g)))

    def to_dict(self):
        order = sorted(range(1, 1 << self.n), key=lambda s: (bin(s).count("1"), s))
        return {
            "n": self.n,
            "g": {subset_key(s, self.n): float(self.g[s]) for s in order},
            "f": {subset_key(s, self.n): float(self.f[s]) for s in order},
            "top_f": self.top_f,
        }


def decompose_conditionals(cond, prior):
    """Decomposition of an exact ``(2, 2**n)`` conditional table under ``prior``."""
    n, cond = _as_conditionals(cond)
    g = cumulative_table(cond, n, np.asarray(prior, dtype=float) / np.sum(prior))
    return LatticeDecomposition(n, g, mobius_inversion(g))


def decompose(counts, label_prior=None):
    """Möbius decomposition of ``I(Y; X_S)`` over all nonempty subsets.

    ``counts`` is a :class:`LabeledCounts` or any object exposing
    ``conditionals()`` and ``label_weights()`` (e.g. an exact joint).
    ``label_prior`` is ``None``/``"empirical"``, ``"uniform"`` or two weights.
    """
    n, cond = _as_conditionals(counts)
    prior = _resolve_prior(label_prior, counts)
    g = cumulative_table(cond, n, prior)
    return LatticeDecomposition(n, g, mobius_inversion(g))


def batch_decompose(counts, label_prior=None):
    """Vectorised ``(g, f)`` for a stack of count tables of shape ``(B, 2, 2**n)``.

    ``label_prior=None`` uses each table's own label frequencies.
    """
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=-1)
    if (totals <= 0).any():
        raise DegenerateDataError("every label needs at least one shot")
    n = int(round(math.log2(counts.shape[-1])))
    cond = counts / totals[..., None]
    if label_prior is None or label_prior == "empirical":
        prior = totals / totals.sum(axis=-1, keepdims=True)
    elif isinstance(label_prior, str) and label_prior == "uniform":
        prior = np.full(totals.shape, 0.5)
    else:
        prior = np.broadcast_to(np.asarray(label_prior, float) / np.sum(label_prior), totals.shape)
    g = cumulative_table(cond, n, prior)
    return g, mobius_inversion(g)


@dataclass(frozen=True)
class LowOrderDiagnostics:
    max_marginal_delta: float
    max_pair_tv: float
    max_singleton_mi: float
    max_pair_mi: float

    def to_dict(self):
        return {
            "max_marginal_delta": self.max_marginal_delta,
            "max_pair_tv": self.max_pair_tv,
            "max_singleton_mi": self.max_singleton_mi,
            "max_pair_mi": self.max_pair_mi,
        }


def diagnostics(counts, label_prior=None):
    """Low-order leakage between the two label-conditional distributions.

    ``max_marginal_delta`` maximises ``|p(x_i=v|0) - p(x_i=v|1)|`` over
    variables and both bit values; ``max_pair_tv`` is the largest total
    variation between the label-conditional pair marginals.
    """
    n, cond = _as_conditionals(counts)
    prior = _resolve_prior(label_prior, counts)
    singles = subsets_of_size(n, 1)
    pairs = subsets_of_size(n, 2)
    delta = 0.0
    s_mi = 0.0
    for s in singles:
        m = marginalize(cond, n, s)
        delta = max(delta, float(np.max(np.abs(m[0] - m[1]))))
        s_mi = max(s_mi, float(_mi_from_marginal(m, prior)))
    tv = 0.0
    p_mi = 0.0
    for s in pairs:
        m = marginalize(cond, n, s)
        tv = max(tv, 0.5 * float(np.abs(m[0] - m[1]).sum()))
        p_mi = max(p_mi, float(_mi_from_marginal(m, prior)))
    return LowOrderDiagnostics(delta, tv, s_mi, p_mi)


def _counts_from_fit_args(X, y):
    if isinstance(X, LabeledCounts):
        return X
    if hasattr(X, "conditionals") and y is None:
        return X
    if y is None:
        raise ValueError("y is required when X is a bit matrix")
    from sklearn.utils.validation import check_X_y

    X, y = check_X_y(X, y, dtype=np.int64)
    return LabeledCounts.from_shots(X, y)


class MobiusDecomposition(BaseEstimator):
    """Estimator wrapper around :func:`decompose` and :func:`diagnostics`.

    ``fit`` accepts either a ``(shots, n)`` 0/1 matrix with labels or a
    :class:`LabeledCounts` (pass ``y=None``).

    Attributes
    ----------
    g_, f_ : dict
        Cumulative and irreducible terms keyed by written subset labels.
    top_f_ : float
        Irreducible term of the full variable set.
    decomposition_ : LatticeDecomposition
    diagnostics_ : LowOrderDiagnostics
    """

    def __init__(self, label_prior="empirical"):
        self.label_prior = label_prior

    def fit(self, X, y=None):
        counts = _counts_from_fit_args(X, y)
        self.decomposition_ = decompose(counts, self.label_prior)
        self.diagnostics_ = diagnostics(counts, self.label_prior)
        report = self.decomposition_.to_dict()
        self.g_ = report["g"]
        self.f_ = report["f"]
        self.top_f_ = self.decomposition_.top_f
        self.n_features_in_ = counts.n
        return self
