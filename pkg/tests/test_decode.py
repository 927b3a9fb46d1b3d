import numpy as np
import pytest
from sklearn.base import clone

from mobius_falsify import LabeledCounts, NoiseSpec, aggregate, sample_dataset
from mobius_falsify.decode import (
    FeatureSpec,
    SpinFeatures,
    SpinProductClassifier,
    compare_decoders,
    evaluate,
    split,
    train,
)
from mobius_falsify.exceptions import DegenerateDataError
from mobius_falsify.maxent import counts_from_joints, fit_surrogate, bayes_accuracy
from mobius_falsify.synth import noisy_parity_error


def a1b(eps, seed):
    return aggregate(sample_dataset(NoiseSpec.preset("a1b", eps=eps, seed=seed)))


@pytest.fixture(scope="module")
def ideal():
    return a1b(0.0, 4)


class TestSplit:
    def test_four_and_four(self):
        counts = LabeledCounts(3, np.array([[2, 0, 0, 2, 0, 0, 0, 0], [0, 1, 1, 0, 2, 0, 0, 0]]))
        table = split(counts, 0)
        for y in (0, 1):
            assert table.train[table.labels == y].sum() == 2

    def test_odd_label_gives_train_the_floor(self):
        counts = LabeledCounts(3, np.array([[5, 0, 0, 0, 0, 0, 0, 0], [0, 3, 0, 0, 0, 0, 0, 0]]))
        table = split(counts, 1)
        assert table.train[table.labels == 0].sum() == 2
        assert table.train[table.labels == 1].sum() == 1

    def test_deterministic(self, ideal):
        a, b = split(ideal, 9), split(ideal, 9)
        np.testing.assert_array_equal(a.train, b.train)
        assert not np.array_equal(a.train, split(ideal, 10).train)

    def test_multiplicities_match_source(self, ideal):
        table = split(ideal, 0)
        hist = np.stack([np.bincount(table.outcomes[table.labels == y], minlength=8) for y in (0, 1)])
        np.testing.assert_array_equal(hist, ideal.counts)

    def test_too_few_shots(self):
        counts = LabeledCounts(3, np.array([[1, 0, 0, 0, 0, 0, 0, 0], [4, 0, 0, 0, 0, 0, 0, 0]]))
        with pytest.raises(DegenerateDataError):
            split(counts)


class TestFeatures:
    def test_names_and_values(self):
        X = np.array([[0, 1, 1]])
        f = SpinFeatures("triplet").fit(X)
        assert list(f.get_feature_names_out()) == ["s1", "s2", "s3", "s12", "s13", "s23", "s123"]
        np.testing.assert_array_equal(f.transform(X), [[1, -1, -1, -1, -1, 1, 1]])

    def test_pairwise_has_no_triplet(self):
        assert len(SpinFeatures("pairwise").fit(np.zeros((1, 3))).terms_) == 6

    def test_bad_order(self):
        with pytest.raises(ValueError):
            FeatureSpec("quartic")


class TestIdealParity:
    def test_pairwise_at_chance(self, ideal):
        table = split(ideal, 0)
        assert (~table.train).sum() >= 4096
        assert abs(evaluate(train(table, FeatureSpec("pairwise")), table) - 0.5) <= 0.05

    def test_triplet_perfect(self, ideal):
        table = split(ideal, 0)
        assert evaluate(train(table, FeatureSpec("triplet")), table) == 1.0


class TestNoisyParity:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_triplet_near_bayes(self, seed):
        q = noisy_parity_error(0.05)
        acc = compare_decoders(a1b(0.05, 100 + seed), seed)
        assert acc["triplet_acc"] == pytest.approx(1 - q, abs=0.02)
        assert abs(acc["pairwise_acc"] - 0.5) <= 0.05

    def test_report_shape(self, noisy_a1b_counts):
        acc = compare_decoders(noisy_a1b_counts, 5)
        assert set(acc) == {"pairwise_acc", "triplet_acc", "n_train", "n_test", "seed"}
        assert acc["n_train"] + acc["n_test"] == 24576 and acc["seed"] == 5

    def test_nesting(self):
        for seed in range(4):
            acc = compare_decoders(a1b(0.05, 200 + seed), seed)
            assert acc["triplet_acc"] >= acc["pairwise_acc"] - 0.02

    def test_deterministic(self, noisy_a1b_counts):
        assert compare_decoders(noisy_a1b_counts, 3) == compare_decoders(noisy_a1b_counts, 3)

    def test_converged(self, noisy_a1b_counts):
        table = split(noisy_a1b_counts, 0)
        model = train(table, FeatureSpec("triplet"))
        assert model.grad_norm_ < 1e-8
        assert np.all(np.isfinite(model.coef_))


class TestClassifier:
    def test_zero_weights_predict_majority(self):
        counts = LabeledCounts(3, np.array([[30, 10, 0, 0, 0, 0, 0, 0], [0, 0, 20, 0, 0, 0, 0, 0]]))
        table = split(counts, 0)
        model = train(table, FeatureSpec("pairwise"), selection_alpha=1e-300)
        assert not model.selected_ and np.all(model.coef_ == 0)
        _, y = table.partition("test")
        assert evaluate(model, table) == pytest.approx(max(np.mean(y == 0), np.mean(y == 1)))

    def test_label_flip_symmetry(self, noisy_a1b_counts):
        table = split(noisy_a1b_counts, 0)
        X, y, w = table.aggregated("train")
        a = SpinProductClassifier("triplet").fit(X, y, sample_weight=w)
        b = SpinProductClassifier("triplet").fit(X, 1 - y, sample_weight=w)
        np.testing.assert_allclose(a.coef_, -b.coef_, atol=1e-6)
        Xt, yt = table.partition("test")
        assert np.mean(a.predict(Xt) == yt) == pytest.approx(np.mean(b.predict(Xt) == 1 - yt), abs=1e-3)

    def test_ties_predict_first_class(self):
        X = np.array([[0, 0, 0], [0, 0, 0]])
        model = SpinProductClassifier("pairwise").fit(X, np.array([0, 1]))
        assert model.decision_function(X)[0] == pytest.approx(0.0, abs=1e-12)
        assert model.predict(X[:1])[0] == 0

    def test_ungated_keeps_features(self, ideal):
        table = split(ideal, 0)
        model = train(table, FeatureSpec("pairwise"), selection_alpha=None)
        assert model.selected_
        assert model.grad_norm_ < 1e-8

    def test_single_label_rejected(self):
        with pytest.raises(DegenerateDataError):
            SpinProductClassifier().fit(np.zeros((3, 3)), np.zeros(3))

    def test_sklearn_protocol(self):
        est = SpinProductClassifier("triplet", alpha=1e-3, selection_alpha=0.01)
        assert clone(est).get_params() == est.get_params()
        assert SpinFeatures("triplet").get_params() == {"order": "triplet"}


@pytest.mark.slow
def test_triplet_bounded_by_surrogate_bayes():
    # data drawn from a pairwise surrogate: no decoder should beat its Bayes rule
    gen = np.random.default_rng(17)
    sur = fit_surrogate(a1b(0.05, 5))
    counts = counts_from_joints(sur.joints, (20000, 20000), gen)
    acc = compare_decoders(counts, 0)
    assert acc["n_test"] >= 10_000
    assert acc["triplet_acc"] <= bayes_accuracy(sur.joints) + 0.03
