"""Matched held-out decoders with interaction-order-capped spin features."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import expit
from scipy.stats import chi2
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _seeding
from .exceptions import ConvergenceError, DataError, DegenerateDataError
from .records import unpack_bits

ORDERS = {"pairwise": 2, "triplet": 3, "triplet-inclusive": 3}


def _max_order(order):
    if isinstance(order, int):
        return order
    try:
        return ORDERS[order]
    except KeyError:
        raise ValueError(f"order must be one of {sorted(ORDERS)} or an int") from None


class SpinFeatures(TransformerMixin, BaseEstimator):
    """Products of spins ``s = 1 - 2b`` over every variable set of size 1..order."""

    def __init__(self, order="pairwise"):
        self.order = order

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        k = _max_order(self.order)
        self.terms_ = [
            c for size in range(1, k + 1) for c in combinations(range(X.shape[1]), size)
        ]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"expected {self.n_features_in_} bits, got {X.shape[1]}")
        s = 1.0 - 2.0 * X
        return np.stack([s[:, list(t)].prod(axis=1) for t in self.terms_], axis=1)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self)
        return np.array(["s" + "".join(str(v + 1) for v in t) for t in self.terms_], dtype=object)


class SpinProductClassifier(ClassifierMixin, BaseEstimator):
    """Ridge-penalised logistic regression on spin-product features.

    Minimises the weighted mean logistic loss plus ``alpha / 2 * ||w||^2``
    (intercept unpenalised) with Newton steps until the gradient norm drops
    below ``tol``. Scores of exactly zero predict the first class.

    With ``selection_alpha`` set, the fitted features are kept only if a
    likelihood-ratio test against the intercept-only model rejects at that
    level; otherwise the model falls back to the intercept (majority label).
    Without the gate, features that carry no label information still produce
    confident noise-driven decisions on every outcome cell.
    """

    def __init__(self, order="pairwise", alpha=1e-6, tol=1e-8, max_iter=10_000,
                 selection_alpha=None):
        self.order = order
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter
        self.selection_alpha = selection_alpha

    def _objective(self, theta, F, t, w):
        z = F @ theta
        loss = np.sum(w * (np.logaddexp(0.0, z) - t * z))
        return loss + 0.5 * self.alpha * theta[1:] @ theta[1:]

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise DegenerateDataError("training data must contain both labels")
        t = (y == self.classes_[1]).astype(float)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
        n_obs = float(w.sum())
        w = w / n_obs
        self.features_ = SpinFeatures(self.order).fit(X)
        F = np.hstack([np.ones((len(y), 1)), self.features_.transform(X)])
        ridge = np.full(F.shape[1], self.alpha)
        ridge[0] = 0.0
        theta = np.zeros(F.shape[1])
        value = self._objective(theta, F, t, w)
        for it in range(self.max_iter + 1):
            p = expit(F @ theta)
            grad = F.T @ (w * (p - t)) + ridge * theta
            gnorm = float(np.linalg.norm(grad))
            if gnorm < self.tol:
                break
            if it == self.max_iter:
                raise ConvergenceError(
                    f"logistic fit stopped at gradient norm {gnorm:.3g} after {it} iterations",
                    gnorm,
                    it,
                )
            hess = (F * (w * p * (1 - p))[:, None]).T @ F + np.diag(ridge)
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
            lr = 1.0
            while lr > 1e-10:
                cand = theta - lr * step
                cand_value = self._objective(cand, F, t, w)
                if cand_value <= value:
                    break
                lr *= 0.5
            else:
                # Newton direction stalled at machine precision; fall back to gradient
                cand = theta - grad
                cand_value = self._objective(cand, F, t, w)
            theta, value = cand, cand_value
        self.intercept_ = float(theta[0])
        self.coef_ = theta[1:].copy()
        self.n_iter_ = it
        self.loss_ = float(value)
        self.grad_norm_ = gnorm
        self.n_features_in_ = X.shape[1]
        self._select(t, w, n_obs)
        return self

    def _select(self, t, w, n_obs):
        rate = float(np.clip(w @ t, 1e-300, 1 - 1e-16))
        null_loss = -(rate * np.log(rate) + (1 - rate) * np.log1p(-rate))
        stat = max(0.0, 2.0 * n_obs * (null_loss - self.loss_))
        self.lr_statistic_ = stat
        self.lr_pvalue_ = float(chi2.sf(stat, df=len(self.coef_)))
        self.selected_ = self.selection_alpha is None or self.lr_pvalue_ < self.selection_alpha
        if not self.selected_:
            self.coef_ = np.zeros_like(self.coef_)
            self.intercept_ = float(np.log(rate) - np.log1p(-rate))

    def decision_function(self, X):
        check_is_fitted(self)
        return self.features_.transform(X) @ self.coef_ + self.intercept_

    def predict(self, X):
        return np.where(self.decision_function(X) > 0, self.classes_[1], self.classes_[0])


@dataclass(frozen=True, eq=False)
class ShotTable:
    """One row per shot with a stratified train/test assignment."""

    n: int
    outcomes: np.ndarray
    labels: np.ndarray
    train: np.ndarray

    def bits(self, rows=None):
        x = self.outcomes if rows is None else self.outcomes[rows]
        return unpack_bits(x, self.n)

    def partition(self, which):
        rows = self.train if which == "train" else ~self.train
        return self.bits(rows), self.labels[rows]

    def aggregated(self, which):
        """Distinct ``(outcome, label)`` rows of a partition with multiplicities."""
        rows = self.train if which == "train" else ~self.train
        K = 1 << self.n
        hist = np.bincount(self.labels[rows] * K + self.outcomes[rows], minlength=2 * K)
        keys = np.flatnonzero(hist)
        return unpack_bits(keys % K, self.n), keys // K, hist[keys]


def split(counts, seed=0):
    """Stratified 50/50 split; per label the train half gets ``floor(shots / 2)``."""
    if min(counts.total0, counts.total1) < 2:
        raise DegenerateDataError("each label needs at least two shots to split")
    outcomes, labels = counts.to_shots()
    train = np.zeros(len(labels), dtype=bool)
    for y in (0, 1):
        rows = np.flatnonzero(labels == y)
        rng = _seeding.stream(seed, "split", y)
        chosen = rng.permutation(rows)[: len(rows) // 2]
        train[chosen] = True
    return ShotTable(counts.n, outcomes, labels, train)


@dataclass(frozen=True)
class FeatureSpec:
    order: str = "pairwise"
    encoding: str = "spin"

    def __post_init__(self):
        _max_order(self.order)
        if self.encoding != "spin":
            raise ValueError("only the spin encoding is supported")


def train(table, spec=FeatureSpec(), alpha=1e-6, tol=1e-8, max_iter=10_000,
          selection_alpha=0.05):
    """Fit a :class:`SpinProductClassifier` on the table's train partition.

    ``selection_alpha=None`` disables the likelihood-ratio gate.
    """
    X, y, w = table.aggregated("train")
    if len(np.unique(y)) != 2:
        raise DegenerateDataError("train partition must contain both labels")
    model = SpinProductClassifier(
        spec.order, alpha=alpha, tol=tol, max_iter=max_iter, selection_alpha=selection_alpha
    )
    return model.fit(X, y, sample_weight=w)


def evaluate(model, table):
    """Test-partition accuracy."""
    X, y = table.partition("test")
    if len(y) == 0:
        raise DegenerateDataError("test partition is empty")
    return float(np.mean(model.predict(X) == y))


def compare_decoders(counts, seed=0, selection_alpha=0.05):
    """Pairwise vs triplet-inclusive held-out accuracy on one shared split."""
    table = split(counts, seed)
    pair = train(table, FeatureSpec("pairwise"), selection_alpha=selection_alpha)
    trip = train(table, FeatureSpec("triplet"), selection_alpha=selection_alpha)
    return {
        "pairwise_acc": evaluate(pair, table),
        "triplet_acc": evaluate(trip, table),
        "n_train": int(table.train.sum()),
        "n_test": int((~table.train).sum()),
        "seed": int(seed),
    }
