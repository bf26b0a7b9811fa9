""" Shared fixtures for the fallalert tests. """

import os

import numpy as np
import pytest

from fallalert.core import classify, signal
from fallalert.core.synthetic import synthetic_corpus
from fallalert.definitions import TESTS_RESOURCES_PATH
from fallalert.helpers import arguments
from fallalert.helpers.config import _Config
from fallalert.models.classifier import ClassifierSpec, FeatureConfig
from fallalert.models.labels import ActivityLabel, BodyLocation, ClassifierFamily, CoordinateSystem

FAST_OVERRIDES = os.path.join(TESTS_RESOURCES_PATH, "fast.conf")


@pytest.fixture(scope="session")
def corpus():
    """A small seeded corpus: 3 subjects, every activity at every location plus chest falls."""
    return synthetic_corpus(seed=11, subjects=3, sessions=2, duration_s=8, falls_per_subject=4, knee_falls_per_subject=3)


@pytest.fixture(scope="session")
def chest_windows(corpus):
    windows = []
    for recording in corpus.select(location=BodyLocation.LEFT_CHEST, falls=False):
        windows.extend(signal.segment_windows(recording))
    return windows


@pytest.fixture(scope="session")
def tree_model(chest_windows):
    """A decision tree trained on every chest activity window of the corpus."""
    X = signal.features_matrix(chest_windows, CoordinateSystem.CARTESIAN)
    labels = [w.label for w in chest_windows]
    spec = ClassifierSpec(ClassifierFamily.DECISION_TREE, {"max_depth": 12})
    return classify.train(spec, X, labels, seed=3, feature_config=FeatureConfig(CoordinateSystem.CARTESIAN))


@pytest.fixture
def separable():
    """4 classes x 18 features with class means 6 sigma apart - (X_train, y_train, X_val, y_val)."""
    rng = np.random.default_rng(5)
    classes = [ActivityLabel.WALK, ActivityLabel.RUN, ActivityLabel.SIT, ActivityLabel.STAND]
    means = {label: np.full(18, 6.0 * i) + rng.normal(0, 0.5, 18) for i, label in enumerate(classes)}

    def draw(per_class):
        X, y = [], []
        for label in classes:
            X.append(means[label] + rng.normal(0, 1.0, (per_class, 18)))
            y.extend([label] * per_class)
        return np.vstack(X), y

    X_train, y_train = draw(40)
    X_val, y_val = draw(20)
    return X_train, y_train, X_val, y_val


@pytest.fixture
def fast_settings():
    """config.yaml with the small-corpus / few-iteration overrides of tests/resources/fast.conf."""
    return _Config(override_path=FAST_OVERRIDES)


@pytest.fixture(autouse=True)
def reset_arguments():
    yield
    arguments.CONSOLE_ARGS = None
