"""
Activity classification: training, prediction, evaluation, stratified k-fold cross
validation, randomized hyperparameter search and model files.
"""

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np
from scipy import stats
from sklearn.metrics import confusion_matrix
from sklearn.model_selection import ParameterGrid, ParameterSampler, StratifiedKFold

from fallalert.core.learners import LEARNERS
from fallalert.models.classifier import (
    CandidateResult,
    ClassifierSpec,
    ConfusionMatrix,
    CVReport,
    FeatureConfig,
    TrainedModel,
)
from fallalert.models.errors import ConfigError, FeatureConfigError
from fallalert.models.labels import ActivityLabel, ClassifierFamily, CoordinateSystem, activity_order
from fallalert.models.window import FeatureVector

MODEL_FORMAT = "fallalert-model"
MODEL_VERSION = 1

DISTRIBUTIONS = {
    "randint": stats.randint,
    "uniform": stats.uniform,
    "loguniform": stats.loguniform,
}


def parse_space(space: Mapping) -> Dict:
    """Turns a configured hyperparameter space into ParameterSampler input.

    Each hyperparameter maps to a list of values, `{range: [start, stop, step]}`, or a scipy
    distribution `{randint: [low, high]}`, `{uniform: [loc, scale]}`, `{loguniform: [a, b]}`.
    """
    if not space:
        raise ConfigError("Hyperparameter space is empty.")

    parsed = {}
    for name, value in space.items():
        if isinstance(value, Mapping):
            if len(value) != 1:
                raise ConfigError(f"Hyperparameter {name} needs exactly one distribution - got {dict(value)}.")
            (dist, args), = value.items()
            if dist == "range":
                parsed[name] = list(range(*args))
            elif dist in DISTRIBUTIONS:
                parsed[name] = DISTRIBUTIONS[dist](*args)
            else:
                raise ConfigError(f"Unknown distribution {dist!r} for {name} - use range, {', '.join(DISTRIBUTIONS)}.")
        else:
            parsed[name] = list(value) if isinstance(value, (list, tuple)) else [value]

        if isinstance(parsed[name], list) and not parsed[name]:
            raise ConfigError(f"Hyperparameter {name} has no values.")
    return parsed


def _python_scalar(value):
    return value.item() if isinstance(value, np.generic) else value


def sample_specs(family: ClassifierFamily, space: Mapping, iterations: int, seed: int):
    """Draws candidate specs. A finite (all-list) space smaller than `iterations` is exhausted instead."""
    distributions = parse_space(space)
    n_iter = iterations
    if all(isinstance(v, list) for v in distributions.values()):
        n_iter = min(iterations, len(ParameterGrid(distributions)))

    sampler = ParameterSampler(distributions, n_iter=n_iter, random_state=seed)
    return [ClassifierSpec(family, {k: _python_scalar(v) for k, v in params.items()}) for params in sampler]


def _feature_matrix(features, feature_config=None) -> Tuple[np.ndarray, FeatureConfig]:
    if isinstance(features, np.ndarray):
        return np.asarray(features, dtype=float), feature_config or FeatureConfig()

    features = list(features)
    if not features:
        return np.empty((0, 18)), feature_config or FeatureConfig()

    configs = {(fv.system, fv.version) for fv in features}
    if len(configs) > 1:
        raise FeatureConfigError(f"Mixed feature configurations in one training set: {sorted(str(c) for c in configs)}.")
    system, version = configs.pop()
    config = FeatureConfig(system, version)
    if feature_config is not None and feature_config != config:
        raise FeatureConfigError(f"Features are {config} but {feature_config} was requested.")
    return np.vstack([fv.values for fv in features]), config


def training_digest(X: np.ndarray, labels: Sequence[ActivityLabel], spec: ClassifierSpec, seed: int) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(X, dtype=float).tobytes())
    digest.update(",".join(label.value for label in labels).encode())
    digest.update(repr(spec.key).encode())
    digest.update(str(seed).encode())
    return digest.hexdigest()


def train(spec: ClassifierSpec, features, labels: Sequence[ActivityLabel], seed: int = 0, feature_config: FeatureConfig = None) -> TrainedModel:
    """Fits a classifier.

    Args:
        spec: ClassifierSpec (family + hyperparameters)
        features: FeatureVectors (or an (n, 18) matrix together with feature_config)
        labels: ActivityLabel per feature vector
        seed: training seed

    Returns:
        TrainedModel: predicts only the labels seen in training
    """
    X, config = _feature_matrix(features, feature_config)
    labels = list(labels)
    if not len(X):
        raise ValueError("Cannot train on an empty feature set.")
    if len(X) != len(labels):
        raise ValueError(f"Got {len(X)} feature vectors but {len(labels)} labels.")
    if not np.all(np.isfinite(X)):
        raise ValueError("Training features contain NaN or infinite values.")

    model_labels = tuple(activity_order(labels))
    index = {label: i for i, label in enumerate(model_labels)}
    y = np.array([index[label] for label in labels], dtype=int)

    learner = LEARNERS[spec.family.value](**spec.hyperparameters).fit(X, y, len(model_labels), seed)
    logging.debug("Trained %s on %s vector(s), %s label(s).", spec.describe(), len(X), len(model_labels))
    return TrainedModel(spec, config, model_labels, learner, training_digest(X, labels, spec, seed))


def predict_many(model: TrainedModel, X: np.ndarray):
    """Predicts a matrix of feature rows. Returns (labels, (n, K) scores)."""
    scores = model.learner.predict_scores(np.atleast_2d(np.asarray(X, dtype=float)))
    winners = np.argmax(scores, axis=1)
    return [model.labels[i] for i in winners], scores


def check_feature_config(model: TrainedModel, fv: FeatureVector):
    if not isinstance(fv, FeatureVector):
        raise FeatureConfigError(f"Expected a FeatureVector - got {type(fv).__name__}.")
    if (fv.system, fv.version) != (model.feature_config.system, model.feature_config.version):
        raise FeatureConfigError(
            f"Model expects {model.feature_config.system.value} features v{model.feature_config.version} - "
            f"got {fv.system.value} v{fv.version}."
        )


def predict(model: TrainedModel, fv: FeatureVector) -> Tuple[ActivityLabel, Dict[ActivityLabel, float]]:
    """Predicts one feature vector. Returns (winning label, score per label)."""
    check_feature_config(model, fv)
    labels, scores = predict_many(model, fv.values.reshape(1, -1))
    return labels[0], {label: float(s) for label, s in zip(model.labels, scores[0])}


def evaluate(model: TrainedModel, features, labels: Sequence[ActivityLabel]) -> ConfusionMatrix:
    """Confusion matrix of a model over a validation set (rows = truth)."""
    if isinstance(features, np.ndarray):
        X = features
    else:
        features = list(features)
        for fv in features:
            check_feature_config(model, fv)
        X = np.vstack([fv.values for fv in features]) if features else np.empty((0, 18))

    labels = list(labels)
    if not len(X):
        raise ValueError("Cannot evaluate on an empty validation set.")

    predicted, _ = predict_many(model, X)
    matrix_labels = tuple(activity_order(set(model.labels) | set(labels)))
    counts = confusion_matrix(
        [label.value for label in labels], [label.value for label in predicted], labels=[label.value for label in matrix_labels]
    )
    return ConfusionMatrix(matrix_labels, counts)


def _accuracy(model, X, labels) -> float:
    predicted, _ = predict_many(model, X)
    return float(np.mean([p == t for p, t in zip(predicted, labels)]))


def cross_validate(spec: ClassifierSpec, X: np.ndarray, labels: Sequence[ActivityLabel], folds: int, seed: int) -> Tuple[float, ...]:
    """Stratified k-fold accuracy of one spec (fold order fixed by the seed)."""
    if folds < 2:
        raise ValueError(f"Cross validation needs at least 2 folds - got {folds}.")
    X = np.asarray(X, dtype=float)
    labels = np.array(labels, dtype=object)
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)

    scores = []
    for train_idx, test_idx in splitter.split(X, [label.value for label in labels]):
        model = train(spec, X[train_idx], list(labels[train_idx]), seed)
        scores.append(_accuracy(model, X[test_idx], list(labels[test_idx])))
    return tuple(scores)


def randomized_search(
    family: ClassifierFamily,
    space: Mapping,
    X: np.ndarray,
    labels: Sequence[ActivityLabel],
    folds: int = 5,
    iterations: int = 100,
    seed: int = 0,
    workers: int = 1,
) -> CVReport:
    """Samples `iterations` specs from a space & scores each by stratified k-fold accuracy.

    Identical sampled specs are cross-validated once. The best candidate has the highest mean
    accuracy; the first evaluated wins ties.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be at least 1 - got {iterations}.")
    if folds < 2:
        raise ValueError(f"folds must be at least 2 - got {folds}.")

    specs = sample_specs(ClassifierFamily(family), space, iterations, seed)
    unique = list({spec.key: spec for spec in specs}.values())
    logging.info("Randomized search %s: %s candidate(s), %s distinct, %s folds.", family, len(specs), len(unique), folds)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        scores = list(pool.map(lambda spec: cross_validate(spec, X, labels, folds, seed), unique))
    by_key = {spec.key: score for spec, score in zip(unique, scores)}

    candidates = [CandidateResult(spec, by_key[spec.key]) for spec in specs]
    report = CVReport(ClassifierFamily(family), candidates, folds, seed)
    logging.info("Best %s: %s (mean accuracy %.4f).", family, report.best_spec.describe(), report.best.mean)
    return report


def save_model(model: TrainedModel, path):
    """Writes a model as a self-describing JSON document."""
    document = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": model.spec.asdict(),
        "feature_config": {
            "system": model.feature_config.system.value,
            "version": model.feature_config.version,
            "names": list(model.feature_config.names),
        },
        "labels": [label.value for label in model.labels],
        "training_digest": model.training_digest,
        "parameters": model.learner.to_dict(),
    }
    with open(path, "w") as model_file:
        json.dump(document, model_file, separators=(",", ":"))
    logging.info("Saved %s model to %s.", model.spec.describe(), path)


def load_model(path) -> TrainedModel:
    with open(path) as model_file:
        document = json.load(model_file)

    if document.get("format") != MODEL_FORMAT or document.get("version") != MODEL_VERSION:
        raise ConfigError(f"{path} is not a version {MODEL_VERSION} {MODEL_FORMAT} file.")

    spec = ClassifierSpec(document["spec"]["family"], document["spec"]["hyperparameters"])
    config = FeatureConfig(CoordinateSystem(document["feature_config"]["system"]), int(document["feature_config"]["version"]))
    learner = LEARNERS[spec.family.value].from_dict(document["parameters"], **spec.hyperparameters)
    labels = tuple(ActivityLabel(label) for label in document["labels"])
    return TrainedModel(spec, config, labels, learner, document.get("training_digest", ""))
