"""Subset-lattice information decomposition of label-conditioned bitstring counts.

Measures how much of the information a set of measured bits carries about a
binary context label is irreducibly higher-order, and tests that against
pairwise-only explanations (matched max-ent surrogate, order-capped decoders,
bootstrap and permutation inference).
"""

__version__ = "0.1.0"

from .decode import SpinFeatures, SpinProductClassifier, compare_decoders, evaluate, split, train
from .exceptions import (
    ConvergenceError,
    DataError,
    DegenerateDataError,
    MobiusFalsifyError,
    ParseError,
    SchemaVersionError,
    ShapeMismatchError,
    ShotTotalError,
    WidthMismatchError,
)
from .lattice import (
    LatticeDecomposition,
    LowOrderDiagnostics,
    MobiusDecomposition,
    conditional_distribution,
    decompose,
    diagnostics,
    mobius_inversion,
    mutual_information,
    zeta_transform,
)
from .maxent import FitConfig, MaxEntSurrogate, PairwiseMaxEnt, bayes_accuracy, fit_surrogate, surrogate_decomposition
from .pipeline import AnalysisConfig, AnalysisReport, compare_report, run_analysis
from .records import CircuitRecord, Dataset, LabeledCounts, aggregate, load_dataset, save_dataset, unmask, unrotate
from .resample import ResampleConfig, ResampleReport, bootstrap_ci, permutation_test, resample
from .synth import ExactJoint, NoiseSpec, exact_joint, sample_dataset

__all__ = [name for name in dir() if not name.startswith("_")]
