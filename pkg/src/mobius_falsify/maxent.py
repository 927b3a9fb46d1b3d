"""Pairwise maximum-entropy surrogate, fitted separately for each label.

For each label the surrogate is the highest-entropy distribution over all
``2**n`` outcomes whose one- and two-variable marginals equal the empirical
label-conditional ones. In spin variables ``s = 1 - 2x`` it has the Ising
form ``p(x) ∝ exp(sum_i h_i s_i + sum_{i<j} J_ij s_i s_j)``.

Two solvers are provided: iterative proportional fitting over the exact
state vector (default) and a Newton ascent on the log-likelihood used as an
independent cross-check.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import logsumexp, rel_entr
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConvergenceError, DataError
from .lattice import _counts_from_fit_args, decompose_conditionals
from .records import LabeledCounts, as_tensor, from_tensor, unpack_bits

ALGORITHMS = ("iterative-proportional-fitting", "gradient-ascent")


@dataclass(frozen=True)
class FitConfig:
    tolerance: float = 1e-10
    max_iterations: int = 100_000
    algorithm: str = "iterative-proportional-fitting"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")

    def to_dict(self):
        return {
            "tolerance": self.tolerance,
            "max_iterations": self.max_iterations,
            "algorithm": self.algorithm,
        }


def spin_table(n):
    """``s[x, v] = 1 - 2 * bit_v(x)`` for every outcome ``x``."""
    return 1 - 2 * unpack_bits(np.arange(1 << n), n)


def pair_list(n):
    return list(combinations(range(n), 2))


def pairwise_design(n):
    """Columns: the ``n`` spins, then ``s_i s_j`` for ``i < j`` in lexicographic order."""
    s = spin_table(n).astype(float)
    cols = [s[:, v] for v in range(n)] + [s[:, i] * s[:, j] for i, j in pair_list(n)]
    return np.stack(cols, axis=1)


def _pair_marginal(p_nd, i, j):
    n = p_nd.ndim
    return p_nd.sum(axis=tuple(a for a in range(n) if a not in (i, j)))


def marginal_residual(p, target, n):
    """Largest absolute gap between singleton or pair marginals of ``p`` and ``target``."""
    a = as_tensor(p, n)
    b = as_tensor(target, n)
    worst = 0.0
    for v in range(n):
        axes = tuple(k for k in range(n) if k != v)
        worst = max(worst, float(np.max(np.abs(a.sum(axis=axes) - b.sum(axis=axes)))))
    for i, j in pair_list(n):
        worst = max(worst, float(np.max(np.abs(_pair_marginal(a, i, j) - _pair_marginal(b, i, j)))))
    return worst


def kl_bits(p, q):
    """``KL(p || q)`` in bits; infinite when ``q`` misses support of ``p``."""
    with np.errstate(divide="ignore"):
        return float(rel_entr(p, q).sum() / np.log(2.0))


def ipf(target, n, tolerance=1e-10, max_iterations=100_000, track_kl=False):
    """Iterative proportional fitting of all pair marginals, starting from uniform.

    Returns ``(joint, residual, sweeps, kl_history)``; ``kl_history[k]`` is
    ``KL(target || joint)`` after ``k`` sweeps (entry 0 is the uniform start).
    Zero target cells are matched exactly by zeroing the matching slices.
    """
    target = np.asarray(target, dtype=float)
    q = np.full(1 << n, 1.0 / (1 << n))
    pairs = pair_list(n)
    targets = {(i, j): _pair_marginal(as_tensor(target, n), i, j) for i, j in pairs}
    history = [kl_bits(target, q)] if track_kl else None
    residual = marginal_residual(q, target, n)
    sweeps = 0
    while residual >= tolerance:
        if sweeps >= max_iterations:
            raise ConvergenceError(
                f"IPF did not reach tolerance {tolerance:g} in {max_iterations} sweeps "
                f"(residual {residual:.3g})",
                residual,
                sweeps,
            )
        q_nd = as_tensor(q, n)
        for i, j in pairs:
            current = _pair_marginal(q_nd, i, j)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(current > 0, targets[i, j] / current, 0.0)
            index = [None] * n
            index[i] = slice(None)
            index[j] = slice(None)
            q_nd = q_nd * ratio[tuple(index)]
        q = from_tensor(q_nd, n)
        q = q / q.sum()
        sweeps += 1
        residual = marginal_residual(q, target, n)
        if track_kl:
            history.append(kl_bits(target, q))
    return q, residual, sweeps, history


def newton_ascent(target, n, tolerance=1e-10, max_iterations=100_000):
    """Maximum-likelihood Ising parameters by damped Newton ascent.

    Needs every pair marginal cell of ``target`` to be positive; otherwise the
    optimum sits at infinite couplings.
    """
    target = np.asarray(target, dtype=float)
    Phi = pairwise_design(n)
    moments = Phi.T @ target
    theta = np.zeros(Phi.shape[1])

    def loglik(t):
        return float(t @ moments - logsumexp(Phi @ t))

    q = np.full(1 << n, 1.0 / (1 << n))
    current = loglik(theta)
    residual = marginal_residual(q, target, n)
    it = 0
    while residual >= tolerance:
        if it >= max_iterations:
            raise ConvergenceError(
                f"Newton ascent did not reach tolerance {tolerance:g} in {max_iterations} "
                f"iterations (residual {residual:.3g})",
                residual,
                it,
            )
        mean = Phi.T @ q
        grad = moments - mean
        hess = (Phi * q[:, None]).T @ Phi - np.outer(mean, mean)
        step = np.linalg.lstsq(hess + 1e-14 * np.eye(len(theta)), grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta + t * step
            value = loglik(cand)
            if value >= current - 1e-15 or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            step = grad
            cand = theta + 0.1 * step
            value = loglik(cand)
        theta, current = cand, value
        logits = Phi @ theta
        q = np.exp(logits - logsumexp(logits))
        residual = marginal_residual(q, target, n)
        it += 1
    return q, residual, it, theta


def recover_parameters(joint, n):
    """Ising ``(h, J, log_z)`` of a strictly positive joint, by Walsh projection of ``log p``.

    Returns ``None`` if any cell is zero. ``J`` is the upper triangle in
    :func:`pair_list` order.
    """
    joint = np.asarray(joint, dtype=float)
    if (joint <= 0).any():
        return None
    logp = np.log(joint)
    Phi = pairwise_design(n)
    coef = Phi.T @ logp / (1 << n)
    h = coef[:n]
    J = coef[n:]
    log_z = float(logsumexp(Phi @ coef))
    return h, J, log_z


def ising_joint(h, J, n):
    Phi = pairwise_design(n)
    logits = Phi @ np.concatenate([h, J])
    return np.exp(logits - logsumexp(logits))


@dataclass(frozen=True, eq=False)
class MaxEntSurrogate:
    n: int
    joints: np.ndarray
    fields: np.ndarray | None
    couplings: np.ndarray | None
    fit_residual: float
    iterations: tuple
    algorithm: str
    kl_history: tuple = (None, None)

    def coupling_matrix(self, label):
        if self.couplings is None:
            return None
        M = np.zeros((self.n, self.n))
        for (i, j), value in zip(pair_list(self.n), self.couplings[label]):
            M[i, j] = M[j, i] = value
        return M

    def conditionals(self):
        return self.joints

    def to_dict(self):
        def listify(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "n": self.n,
            "algorithm": self.algorithm,
            "fit_residual": self.fit_residual,
            "iterations": list(self.iterations),
            "pairs": [f"{i + 1}{j + 1}" for i, j in pair_list(self.n)],
            "labels": [
                {
                    "h": listify(None if self.fields is None else self.fields[y]),
                    "J": listify(None if self.couplings is None else self.couplings[y]),
                    "joint": self.joints[y].tolist(),
                }
                for y in (0, 1)
            ],
        }


def _fit_label(target, n, config, track_kl):
    if config.algorithm == "iterative-proportional-fitting":
        q, residual, iters, history = ipf(
            target, n, config.tolerance, config.max_iterations, track_kl
        )
        return q, residual, iters, history
    q, residual, iters, _ = newton_ascent(target, n, config.tolerance, config.max_iterations)
    return q, residual, iters, None


def fit_surrogate(counts, config=None, track_kl=False, threads=1):
    """Fit one pairwise max-ent model per label to the empirical conditionals."""
    config = config or FitConfig()
    if hasattr(counts, "require_nonempty"):
        counts.require_nonempty()
    cond = np.asarray(counts.conditionals(), dtype=float)
    n = counts.n
    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            results = list(pool.map(lambda y: _fit_label(cond[y], n, config, track_kl), (0, 1)))
    else:
        results = [_fit_label(cond[y], n, config, track_kl) for y in (0, 1)]
    joints = np.stack([r[0] for r in results])
    params = [recover_parameters(j, n) for j in joints]
    if all(p is not None for p in params):
        fields = np.stack([p[0] for p in params])
        couplings = np.stack([p[1] for p in params])
    else:
        fields = couplings = None
    return MaxEntSurrogate(
        n=n,
        joints=joints,
        fields=fields,
        couplings=couplings,
        fit_residual=max(r[1] for r in results),
        iterations=tuple(r[2] for r in results),
        algorithm=config.algorithm,
        kl_history=tuple(r[3] for r in results),
    )


def surrogate_decomposition(surrogate, label_prior=(0.5, 0.5)):
    """Exact lattice decomposition of the surrogate's implied ``(Y, X)`` joint."""
    return decompose_conditionals(surrogate.joints, label_prior)


def bayes_accuracy(joints, label_prior=(0.5, 0.5)):
    """Accuracy of the optimal decision rule: ``sum_x max_y prior(y) p(x|y)``."""
    joints = np.asarray(joints, dtype=float)
    prior = np.asarray(label_prior, dtype=float)
    prior = prior / prior.sum()
    return float((prior[:, None] * joints).max(axis=0).sum())


class PairwiseMaxEnt(ClassifierMixin, BaseEstimator):
    """Per-label pairwise max-ent model used as a generative classifier.

    ``fit`` accepts a ``(shots, n)`` 0/1 matrix with labels, or a
    :class:`LabeledCounts` with ``y=None``. ``predict`` applies the Bayes
    rule under the fitted joints and the empirical label prior (ties go to
    label 0).
    """

    def __init__(self, tolerance=1e-10, max_iterations=100_000,
                 algorithm="iterative-proportional-fitting"):
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.algorithm = algorithm

    def fit(self, X, y=None):
        counts = _counts_from_fit_args(X, y)
        config = FitConfig(self.tolerance, self.max_iterations, self.algorithm)
        self.surrogate_ = fit_surrogate(counts, config)
        self.joints_ = self.surrogate_.joints
        self.fields_ = self.surrogate_.fields
        self.couplings_ = self.surrogate_.couplings
        self.fit_residual_ = self.surrogate_.fit_residual
        self.prior_ = counts.label_weights()
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = counts.n
        return self

    def _outcomes(self, X):
        check_is_fitted(self)
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise DataError(f"expected a (shots, {self.n_features_in_}) bit matrix")
        return X.astype(np.int64) @ (1 << np.arange(X.shape[1]))

    def predict_proba(self, X):
        x = self._outcomes(X)
        joint = self.prior_[:, None] * self.joints_[:, x]
        total = joint.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            post = np.where(total > 0, joint / total, 0.5)
        return post.T

    def predict(self, X):
        x = self._outcomes(X)
        joint = self.prior_[:, None] * self.joints_[:, x]
        return (joint[1] > joint[0]).astype(int)

    def bayes_accuracy(self):
        check_is_fitted(self)
        return bayes_accuracy(self.joints_, self.prior_)

    def implied_decomposition(self):
        check_is_fitted(self)
        return surrogate_decomposition(self.surrogate_, self.prior_)


def counts_from_joints(joints, totals, rng):
    """Sample a :class:`LabeledCounts` from exact per-label joints."""
    joints = np.asarray(joints, dtype=float)
    n = int(joints.shape[-1]).bit_length() - 1
    arr = np.stack([rng.multinomial(int(totals[y]), joints[y] / joints[y].sum()) for y in (0, 1)])
    return LabeledCounts(n, arr)
