"""Shot-level bootstrap intervals and label-shuffle permutation tests.

Replicates are drawn in fixed blocks of ``_BLOCK``; block ``b`` always draws
from the stream derived from ``(seed, kind, b)``. The block layout is a
constant, so results do not depend on how many threads evaluate the blocks
or in what order.

A statistic is any callable ``LabeledCounts -> float``. Statistics that also
expose ``batch(counts)`` taking a ``(B, 2, 2**n)`` integer array are evaluated
vectorised; the two paths must agree.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _seeding
from .exceptions import DegenerateDataError, ReplicateError
from .lattice import batch_decompose, decompose, full_subset, parse_subset, subset_key
from .records import LabeledCounts

THREADS_ENV = "MOBIUS_FALSIFY_THREADS"
_BLOCK = 500


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ResampleConfig:
    bootstrap_replicates: int = 5000
    permutation_shuffles: int = 10000
    ci_level: float = 0.95
    seed: int = 0
    threads: int = field(default_factory=default_threads, compare=False)

    def __post_init__(self):
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must lie in (0, 1)")
        if self.bootstrap_replicates < 1 or self.permutation_shuffles < 1:
            raise ValueError("replicate counts must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def to_dict(self):
        return {
            "bootstrap_replicates": self.bootstrap_replicates,
            "permutation_shuffles": self.permutation_shuffles,
            "ci_level": self.ci_level,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ResampleReport:
    point: float
    ci_low: float
    ci_high: float
    p_value: float
    p_is_floor: bool
    replicates_used: dict

    def to_dict(self):
        return {
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "p_value": self.p_value,
            "p_is_floor": self.p_is_floor,
            "replicates_used": dict(self.replicates_used),
        }


class LatticeTerm:
    """``f`` (irreducible) or ``g`` (cumulative) of one subset; full set by default."""

    def __init__(self, subset=None, kind="f", label_prior=None):
        if kind not in ("f", "g"):
            raise ValueError("kind must be 'f' or 'g'")
        self.subset = subset
        self.kind = kind
        self.label_prior = label_prior

    def _index(self, n):
        return full_subset(n) if self.subset is None else parse_subset(self.subset, n)

    def name(self, n):
        return f"{self.kind}({subset_key(self._index(n), n)})"

    def __call__(self, counts):
        d = decompose(counts, self.label_prior)
        table = d.f if self.kind == "f" else d.g
        return float(table[self._index(counts.n)])

    def batch(self, counts):
        counts = np.asarray(counts)
        n = int(counts.shape[-1]).bit_length() - 1
        g, f = batch_decompose(counts, self.label_prior)
        table = f if self.kind == "f" else g
        return table[..., self._index(n)]


def top_term(label_prior=None):
    return LatticeTerm(None, "f", label_prior)


def _evaluate(statistic, n, stack, offset):
    if hasattr(statistic, "batch"):
        try:
            return np.asarray(statistic.batch(stack), dtype=float)
        except Exception:
            pass  # locate the failing replicate below
    out = np.empty(len(stack))
    for i, c in enumerate(stack):
        try:
            out[i] = statistic(LabeledCounts(n, c))
        except Exception as exc:
            raise ReplicateError(f"statistic failed on replicate {offset + i}: {exc}", offset + i) from exc
    return out


def _run_blocks(total, draw_block, threads):
    starts = list(range(0, total, _BLOCK))
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(draw_block, starts))
    else:
        parts = [draw_block(s) for s in starts]
    return np.concatenate(parts)


def bootstrap_replicates(counts, statistic, config):
    """Statistic values on ``config.bootstrap_replicates`` within-label resamples."""
    counts.require_nonempty()
    totals = counts.totals
    probs = counts.conditionals()
    B = config.bootstrap_replicates

    def block(start):
        stop = min(start + _BLOCK, B)
        rng = _seeding.stream(config.seed, "bootstrap", start // _BLOCK)
        stack = np.stack(
            [rng.multinomial(totals[y], probs[y], size=stop - start) for y in (0, 1)], axis=1
        )
        return _evaluate(statistic, counts.n, stack, start)

    return _run_blocks(B, block, config.threads)


def bootstrap_ci(counts, statistic, config=None):
    """Percentile interval ``(point, low, high)`` from the within-label bootstrap."""
    config = config or ResampleConfig()
    point = float(statistic(counts))
    reps = bootstrap_replicates(counts, statistic, config)
    alpha = (1.0 - config.ci_level) / 2.0
    low, high = np.quantile(reps, [alpha, 1.0 - alpha])
    return point, float(low), float(high)


def permutation_replicates(counts, statistic, config):
    """Statistic values after shuffling labels across the pooled shots.

    Shuffling the label column of the shot list and re-histogramming is the
    same as drawing the label-1 histogram from the pooled outcomes without
    replacement, so each shuffle is one multivariate hypergeometric draw.
    """
    pooled = counts.counts.sum(axis=0)
    total1 = counts.total1
    S = config.permutation_shuffles

    def block(start):
        stop = min(start + _BLOCK, S)
        rng = _seeding.stream(config.seed, "permutation", start // _BLOCK)
        c1 = rng.multivariate_hypergeometric(pooled, total1, size=stop - start)
        stack = np.stack([pooled - c1, c1], axis=1)
        return _evaluate(statistic, counts.n, stack, start)

    return _run_blocks(S, block, config.threads)


def permutation_test(counts, statistic, config=None):
    """Add-one permutation p-value and whether it sits at the Monte Carlo floor.

    When no shuffle reaches the observed value the returned p-value is the
    floor ``1 / shuffles`` and the flag is set.
    """
    config = config or ResampleConfig()
    if counts.total0 + counts.total1 < 2:
        raise DegenerateDataError("permutation test needs at least two shots")
    observed = float(statistic(counts))
    reps = permutation_replicates(counts, statistic, config)
    exceed = int(np.count_nonzero(reps >= observed))
    S = config.permutation_shuffles
    if exceed == 0:
        return 1.0 / S, True
    return (1.0 + exceed) / (1.0 + S), False


def resample(counts, statistic=None, config=None):
    """Bootstrap interval plus permutation p-value for one statistic."""
    config = config or ResampleConfig()
    statistic = statistic or top_term()
    point, low, high = bootstrap_ci(counts, statistic, config)
    p, floor = permutation_test(counts, statistic, config)
    return ResampleReport(
        point=point,
        ci_low=low,
        ci_high=high,
        p_value=p,
        p_is_floor=floor,
        replicates_used={
            "bootstrap": config.bootstrap_replicates,
            "permutation": config.permutation_shuffles,
        },
    )
