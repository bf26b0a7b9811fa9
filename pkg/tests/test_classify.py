""" Tests for 'core.classify' & 'core.learners' modules. """

import numpy as np
import pytest

from fallalert.core import classify, learners, signal
from fallalert.models.classifier import ClassifierSpec, FeatureConfig
from fallalert.models.errors import ConfigError, FeatureConfigError
from fallalert.models.labels import ActivityLabel, ClassifierFamily, CoordinateSystem
from fallalert.models.window import FeatureVector

FAST_SPECS = [
    ClassifierSpec(ClassifierFamily.DECISION_TREE),
    ClassifierSpec(ClassifierFamily.KNN, {"k": 3}),
    ClassifierSpec(ClassifierFamily.NAIVE_BAYES),
    ClassifierSpec(ClassifierFamily.GBT, {"n_rounds": 15}),
]


@pytest.mark.parametrize("spec", FAST_SPECS, ids=lambda s: s.family.value)
def test_families_learn_separable_classes(separable, spec):
    X_train, y_train, X_val, y_val = separable
    model = classify.train(spec, X_train, y_train, seed=1)

    assert model.labels == (ActivityLabel.WALK, ActivityLabel.RUN, ActivityLabel.SIT, ActivityLabel.STAND)
    assert classify.evaluate(model, X_val, y_val).accuracy >= 0.95

    _, scores = classify.predict_many(model, X_val)
    assert scores.shape == (len(X_val), 4)
    assert np.allclose(scores.sum(axis=1), 1.0)


def test_gbt_without_rounds_predicts_prior():
    rng = np.random.default_rng(0)
    X = rng.normal(0, 1, (40, 18))
    labels = [ActivityLabel.RUN] * 10 + [ActivityLabel.WALK] * 30
    model = classify.train(ClassifierSpec(ClassifierFamily.GBT, {"n_rounds": 0}), X, labels)

    predicted, scores = classify.predict_many(model, rng.normal(0, 1, (5, 18)))
    assert predicted == [ActivityLabel.WALK] * 5
    assert np.allclose(scores, [[0.75, 0.25]])


def test_model_predicts_only_trained_labels(separable):
    X_train, y_train, _, _ = separable
    keep = [i for i, label in enumerate(y_train) if label in (ActivityLabel.SIT, ActivityLabel.WALK)]
    model = classify.train(FAST_SPECS[0], X_train[keep], [y_train[i] for i in keep])

    assert model.labels == (ActivityLabel.WALK, ActivityLabel.SIT)
    predicted, _ = classify.predict_many(model, X_train)
    assert set(predicted) <= {ActivityLabel.WALK, ActivityLabel.SIT}


def test_single_class_training():
    X = np.ones((4, 18))
    for spec in FAST_SPECS:
        model = classify.train(spec, X, [ActivityLabel.SIT] * 4)
        predicted, _ = classify.predict_many(model, X)
        assert predicted == [ActivityLabel.SIT] * 4


def test_train_rejects_bad_input():
    spec = FAST_SPECS[0]
    with pytest.raises(ValueError):
        classify.train(spec, np.empty((0, 18)), [])
    with pytest.raises(ValueError):
        classify.train(spec, np.ones((3, 18)), [ActivityLabel.WALK] * 2)
    X = np.ones((2, 18))
    X[0, 4] = np.nan
    with pytest.raises(ValueError):
        classify.train(spec, X, [ActivityLabel.WALK] * 2)


def test_mixed_feature_configs(chest_windows):
    cartesian = signal.extract_features(chest_windows[0], CoordinateSystem.CARTESIAN)
    spherical = signal.extract_features(chest_windows[1], CoordinateSystem.SPHERICAL)
    with pytest.raises(FeatureConfigError):
        classify.train(FAST_SPECS[0], [cartesian, spherical], [ActivityLabel.WALK] * 2)


def test_predict_checks_feature_config(tree_model, chest_windows):
    window = chest_windows[0]
    label, scores = classify.predict(tree_model, signal.extract_features(window, CoordinateSystem.CARTESIAN))
    assert label == window.label
    assert set(scores) == set(tree_model.labels)

    with pytest.raises(FeatureConfigError):
        classify.predict(tree_model, signal.extract_features(window, CoordinateSystem.SPHERICAL))
    with pytest.raises(FeatureConfigError):
        classify.predict(tree_model, FeatureVector(np.zeros(18), version=99))


def test_tree_fits_training_windows(tree_model, chest_windows):
    features = [signal.extract_features(w) for w in chest_windows]
    confusion = classify.evaluate(tree_model, features, [w.label for w in chest_windows])
    assert confusion.accuracy == 1.0
    assert confusion.total == len(chest_windows)


def test_evaluate_confusion_layout(separable):
    X_train, y_train, X_val, y_val = separable
    keep = [i for i, label in enumerate(y_train) if label != ActivityLabel.STAND]
    model = classify.train(FAST_SPECS[0], X_train[keep], [y_train[i] for i in keep])

    confusion = classify.evaluate(model, X_val, y_val)
    assert confusion.labels == (ActivityLabel.WALK, ActivityLabel.RUN, ActivityLabel.SIT, ActivityLabel.STAND)
    assert confusion.support[ActivityLabel.STAND] == 20
    # STAND is never predicted
    assert confusion.counts[:, 3].sum() == 0
    assert confusion.counts[3, 3] == 0

    frame = confusion.to_frame()
    assert frame.index.name == "truth"
    assert list(frame.columns) == ["WALK", "RUN", "SIT", "STAND"]

    with pytest.raises(ValueError):
        classify.evaluate(model, np.empty((0, 18)), [])


@pytest.mark.parametrize("spec", FAST_SPECS, ids=lambda s: s.family.value)
def test_model_file_round_trip(separable, spec, tmp_path):
    X_train, y_train, X_val, _ = separable
    model = classify.train(spec, X_train, y_train, seed=2, feature_config=FeatureConfig(CoordinateSystem.SPHERICAL))
    path = tmp_path / "model.json"

    classify.save_model(model, path)
    loaded = classify.load_model(path)

    assert loaded.spec == model.spec
    assert loaded.labels == model.labels
    assert loaded.feature_config == FeatureConfig(CoordinateSystem.SPHERICAL)
    assert loaded.training_digest == model.training_digest
    assert np.array_equal(classify.predict_many(loaded, X_val)[1], classify.predict_many(model, X_val)[1])


def test_load_model_rejects_foreign_file(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"format": "something-else", "version": 1}')
    with pytest.raises(ConfigError):
        classify.load_model(path)


def test_training_digest_changes_with_seed(separable):
    X_train, y_train, _, _ = separable
    a = classify.train(FAST_SPECS[0], X_train, y_train, seed=1)
    b = classify.train(FAST_SPECS[0], X_train, y_train, seed=1)
    c = classify.train(FAST_SPECS[0], X_train, y_train, seed=2)
    assert a.training_digest == b.training_digest != c.training_digest


@pytest.mark.parametrize(
    "family, params",
    [
        (ClassifierFamily.KNN, {"k": 0}),
        (ClassifierFamily.KNN, {"k": 2.5}),
        (ClassifierFamily.KNN, {"depth": 3}),
        (ClassifierFamily.GBT, {"learning_rate": 2.0}),
        (ClassifierFamily.NAIVE_BAYES, {"var_smoothing": 0.0}),
    ],
)
def test_spec_validation(family, params):
    with pytest.raises(ConfigError):
        ClassifierSpec(family, params)


def test_spec_defaults():
    spec = ClassifierSpec("DECISION_TREE", {"max_depth": 3.0})
    assert spec.hyperparameters == {"max_depth": 3, "min_samples_split": 2}
    assert isinstance(spec.hyperparameters["max_depth"], int)
    assert spec.describe() == "DECISION_TREE(max_depth=3, min_samples_split=2)"


def test_parse_space():
    parsed = classify.parse_space({"k": {"range": [1, 6, 2]}, "max_depth": [3, 4], "learning_rate": 0.1, "n": {"randint": [1, 5]}})
    assert parsed["k"] == [1, 3, 5]
    assert parsed["max_depth"] == [3, 4]
    assert parsed["learning_rate"] == [0.1]
    assert hasattr(parsed["n"], "rvs")


@pytest.mark.parametrize("space", [{}, {"k": []}, {"k": {"normal": [0, 1]}}, {"k": {"range": [1, 3], "randint": [1, 3]}}])
def test_parse_space_errors(space):
    with pytest.raises(ConfigError):
        classify.parse_space(space)


def test_sample_specs():
    finite = classify.sample_specs(ClassifierFamily.KNN, {"k": [1, 3]}, iterations=10, seed=0)
    assert sorted(spec.hyperparameters["k"] for spec in finite) == [1, 3]

    space = {"max_depth": {"randint": [2, 21]}}
    first = classify.sample_specs(ClassifierFamily.DECISION_TREE, space, iterations=6, seed=4)
    again = classify.sample_specs(ClassifierFamily.DECISION_TREE, space, iterations=6, seed=4)
    assert len(first) == 6
    assert first == again
    assert all(2 <= spec.hyperparameters["max_depth"] <= 20 for spec in first)
    assert all(type(spec.hyperparameters["max_depth"]) is int for spec in first)


def test_cross_validate(separable):
    X_train, y_train, _, _ = separable
    scores = classify.cross_validate(FAST_SPECS[0], X_train, y_train, folds=4, seed=0)
    assert len(scores) == 4
    assert min(scores) >= 0.9
    assert scores == classify.cross_validate(FAST_SPECS[0], X_train, y_train, folds=4, seed=0)

    with pytest.raises(ValueError):
        classify.cross_validate(FAST_SPECS[0], X_train, y_train, folds=1, seed=0)


def test_randomized_search(separable):
    X_train, y_train, _, _ = separable
    report = classify.randomized_search(ClassifierFamily.KNN, {"k": [1, 3, 5]}, X_train, y_train, folds=3, iterations=5, seed=1)

    assert len(report.candidates) == 3
    means = [c.mean for c in report.candidates]
    assert report.best.mean == max(means)
    assert report.best_index == means.index(max(means))

    frame = report.to_frame()
    assert list(frame.columns) == ["candidate", "family", "spec", "fold_1", "fold_2", "fold_3", "mean_accuracy", "best"]
    assert frame["best"].sum() == 1

    threaded = classify.randomized_search(ClassifierFamily.KNN, {"k": [1, 3, 5]}, X_train, y_train, folds=3, iterations=5, seed=1, workers=3)
    assert [c.fold_scores for c in threaded.candidates] == [c.fold_scores for c in report.candidates]


def test_randomized_search_arguments(separable):
    X_train, y_train, _, _ = separable
    with pytest.raises(ValueError):
        classify.randomized_search(ClassifierFamily.KNN, {"k": [1]}, X_train, y_train, iterations=0)
    with pytest.raises(ValueError):
        classify.randomized_search(ClassifierFamily.KNN, {"k": [1]}, X_train, y_train, folds=1)


def test_best_gini_split():
    X = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0], [5.0, 4.0]])
    y = np.array([0, 0, 1, 1])
    feature, threshold, impurity = learners.best_gini_split(X, y, 2)
    assert (feature, threshold, impurity) == (1, 2.5, 0.0)

    assert learners.best_gini_split(np.ones((3, 2)), np.array([0, 1, 0]), 2) is None


def test_knn_distance_ties_prefer_earlier_rows():
    learner = learners.KNNLearner(k=1).fit(np.array([[0.0], [2.0]]), np.array([1, 0]), 2)
    assert learner.predict_scores(np.array([[1.0]])).tolist() == [[0.0, 1.0]]
    assert learners.KNNLearner(k=10).fit(np.array([[0.0], [2.0]]), np.array([1, 0]), 2).predict_scores([[5.0]]).tolist() == [[0.5, 0.5]]


def test_tree_arrays_round_trip():
    learner = learners.DecisionTreeLearner().fit(np.array([[0.0], [1.0], [2.0]]), np.array([0, 1, 1]), 2)
    rebuilt = learners.DecisionTreeLearner.from_dict(learner.to_dict())
    X = np.array([[-1.0], [0.4], [0.6], [3.0]])
    assert np.array_equal(rebuilt.predict_scores(X), learner.predict_scores(X))
    assert rebuilt.predict_scores(X).argmax(axis=1).tolist() == [0, 0, 1, 1]
