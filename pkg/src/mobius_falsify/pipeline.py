"""End-to-end analysis of one dataset and report comparison."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from . import __version__, _seeding
from .decode import compare_decoders
from .exceptions import MobiusFalsifyError, ShapeMismatchError, StageError
from .lattice import decompose, diagnostics, parse_subset
from .maxent import FitConfig, bayes_accuracy, fit_surrogate, surrogate_decomposition
from .records import aggregate
from .resample import LatticeTerm, ResampleConfig, resample


@dataclass(frozen=True)
class AnalysisConfig:
    seed: int = 0
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    label_prior: str = "empirical"
    statistic_subset: str | None = None
    statistic_kind: str = "f"
    decoder_selection_alpha: float | None = 0.05

    def to_dict(self):
        return {
            "seed": self.seed,
            "resample": {k: v for k, v in self.resample.to_dict().items() if k != "seed"},
            "fit": self.fit.to_dict(),
            "label_prior": self.label_prior if isinstance(self.label_prior, str) else list(self.label_prior),
            "statistic_subset": self.statistic_subset,
            "statistic_kind": self.statistic_kind,
            "decoder_selection_alpha": self.decoder_selection_alpha,
        }


@dataclass(frozen=True, eq=False)
class AnalysisReport:
    n: int
    circuits: int
    shots: int
    totals: tuple
    lattice: object
    diagnostics: object
    triplet_ci: object
    statistic: str
    surrogate: dict
    decode: dict
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "n": self.n,
            "circuits": self.circuits,
            "shots": self.shots,
            "totals": list(self.totals),
            "lattice": self.lattice.to_dict(),
            "forward_residual": self.lattice.forward_residual(),
            "diagnostics": self.diagnostics.to_dict(),
            "statistic": self.statistic,
            "triplet_ci": self.triplet_ci.to_dict(),
            "surrogate": dict(self.surrogate),
            "decode": dict(self.decode),
            "provenance": dict(self.provenance),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self):
        return format_table(self.to_dict())


def format_table(report):
    """Headline row in the column order circuits/shots, max marginal delta,
    max pair TV, top term, pair/trip accuracy; then interval and surrogate."""
    d = report["diagnostics"]
    ci = report["triplet_ci"]
    dec = report["decode"]
    sur = report["surrogate"]
    top = report["lattice"]["top_f"]
    header = f"{'Circuits / Shots':>18} {'Max |D| marg.':>14} {'Max TV pair':>12} {'f(top) bits':>12} {'Acc. (Pair/Trip)':>17}"
    row = (
        f"{str(report['circuits']) + ' / ' + str(report['shots']):>18} "
        f"{d['max_marginal_delta']:>14.5f} {d['max_pair_tv']:>12.5f} {top:>12.5f} "
        f"{dec['pairwise_acc']:>8.3f} / {dec['triplet_acc']:.3f}"
    )
    ptext = (f"p <= {ci['p_value']:.1e} (permutation floor)" if ci["p_is_floor"]
             else f"p = {ci['p_value']:.3g}")
    lines = [
        header,
        row,
        "",
        f"{report['statistic']} = {ci['point']:.5f} bits, "
        f"CI [{ci['ci_low']:.5f}, {ci['ci_high']:.5f}], {ptext}",
        f"max singleton MI = {d['max_singleton_mi']:.3g} bits, max pair MI = {d['max_pair_mi']:.3g} bits",
        f"pairwise surrogate: f(top) = {sur['top_f']:.3g} bits, Bayes accuracy = "
        f"{sur['bayes_accuracy']:.3f}, fit residual = {sur['fit_residual']:.1e}",
    ]
    return "\n".join(lines)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except MobiusFalsifyError as exc:
        exc.stage = name
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_analysis(dataset, config=None):
    """aggregate -> decompose -> diagnostics -> resample -> surrogate -> decoders."""
    config = config or AnalysisConfig()
    counts = _stage("aggregate", aggregate, dataset)
    prior = _stage("prior", _prior_weights, counts, config.label_prior)
    lattice = _stage("decompose", decompose, counts, prior)
    diag = _stage("diagnostics", diagnostics, counts, prior)

    subset = None if config.statistic_subset is None else parse_subset(config.statistic_subset, counts.n)
    statistic = LatticeTerm(subset, config.statistic_kind, prior)
    rcfg = replace(config.resample, seed=_seeding.derive_seed(config.seed, "resample"))
    ci = _stage("resample", resample, counts, statistic, rcfg)

    surrogate = _stage("maxent", fit_surrogate, counts, config.fit)
    implied = _stage("maxent", surrogate_decomposition, surrogate, prior)
    decode_seed = _seeding.derive_seed(config.seed, "decode")
    accuracies = _stage("decode", compare_decoders, counts, decode_seed,
                        config.decoder_selection_alpha)

    report = AnalysisReport(
        n=counts.n,
        circuits=len(dataset.records),
        shots=dataset.total_shots,
        totals=(counts.total0, counts.total1),
        lattice=lattice,
        diagnostics=diag,
        triplet_ci=ci,
        statistic=statistic.name(counts.n),
        surrogate={
            "top_f": implied.top_f,
            "bayes_accuracy": bayes_accuracy(surrogate.joints, prior),
            "fit_residual": surrogate.fit_residual,
            "iterations": list(surrogate.iterations),
        },
        decode=accuracies,
        provenance={
            "dataset": dataset.provenance,
            "config": config.to_dict(),
            "version": __version__,
        },
    )
    for key, value in _flatten(report.to_dict()).items():
        if isinstance(value, float) and not math.isfinite(value):
            raise StageError("report", ValueError(f"non-finite value in {key}"))
    return report


def _prior_weights(counts, label_prior):
    if label_prior in (None, "empirical"):
        return tuple(float(w) for w in counts.label_weights())
    if label_prior == "uniform":
        return (0.5, 0.5)
    return tuple(float(w) for w in label_prior)


def _flatten(obj, prefix=""):
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(_flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            out.update(_flatten(v, f"{prefix}[{i}]"))
    else:
        out[prefix] = obj
    return out


@dataclass(frozen=True)
class FieldComparison:
    field: str
    passed: bool
    actual: object
    expected: object
    tolerance: float


def _as_report_dict(report):
    return report.to_dict() if hasattr(report, "to_dict") else report


def compare_report(report, reference, tolerances=None, default_tolerance=1e-12):
    """Compare every numeric and boolean field except provenance.

    ``tolerances`` maps flattened field names (``"lattice.top_f"``) to
    absolute tolerances; other numeric fields use ``default_tolerance``.
    Raises :class:`ShapeMismatchError` if the field sets differ.
    """
    tolerances = dict(tolerances or {})
    actual = {k: v for k, v in _flatten(_as_report_dict(report)).items()
              if not k.startswith("provenance")}
    expected = {k: v for k, v in _flatten(_as_report_dict(reference)).items()
                if not k.startswith("provenance")}
    if actual.keys() != expected.keys():
        missing = sorted(expected.keys() - actual.keys())
        extra = sorted(actual.keys() - expected.keys())
        raise ShapeMismatchError(f"report fields differ: missing {missing}, unexpected {extra}")
    unknown = set(tolerances) - actual.keys()
    if unknown:
        raise ShapeMismatchError(f"tolerances name unknown fields {sorted(unknown)}")
    results = []
    for key in sorted(actual):
        a, e = actual[key], expected[key]
        tol = tolerances.get(key, default_tolerance)
        if isinstance(a, bool) or isinstance(e, bool) or isinstance(a, str) or a is None:
            ok = a == e
        else:
            ok = abs(float(a) - float(e)) <= tol
        results.append(FieldComparison(key, bool(ok), a, e, tol))
    return results

