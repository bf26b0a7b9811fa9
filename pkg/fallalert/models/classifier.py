"""
Classifier specs, trained models, confusion matrices & cross-validation reports.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from fallalert.models.errors import ConfigError
from fallalert.models.labels import ActivityLabel, ClassifierFamily, CoordinateSystem
from fallalert.models.window import FEATURE_NAMES, FEATURE_VERSION

# name -> (type, default, minimum) per family
HYPERPARAMETERS = {
    ClassifierFamily.DECISION_TREE: {"max_depth": (int, 20, 1), "min_samples_split": (int, 2, 2)},
    ClassifierFamily.KNN: {"k": (int, 5, 1)},
    ClassifierFamily.NAIVE_BAYES: {"var_smoothing": (float, 1e-9, 0.0)},
    ClassifierFamily.GBT: {"n_rounds": (int, 100, 0), "learning_rate": (float, 0.1, 0.0), "max_depth": (int, 3, 1)},
}


@dataclass(frozen=True)
class ClassifierSpec:
    """A classifier family & its hyperparameters (validated & completed with defaults)."""

    family: ClassifierFamily
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        family = ClassifierFamily(self.family)
        object.__setattr__(self, "family", family)
        allowed = HYPERPARAMETERS[family]

        unknown = sorted(set(self.hyperparameters) - set(allowed))
        if unknown:
            raise ConfigError(f"{family.value} does not take hyperparameter(s) {unknown} - allowed: {sorted(allowed)}.")

        resolved = {}
        for name, (kind, default, minimum) in allowed.items():
            value = self.hyperparameters.get(name, default)
            if kind is int and float(value) != int(value):
                raise ConfigError(f"{family.value} {name} must be an integer - got {value!r}.")
            value = kind(value)
            if value < minimum or (kind is float and minimum == 0.0 and value <= 0.0):
                raise ConfigError(f"{family.value} {name} is out of range (minimum {minimum}) - got {value!r}.")
            resolved[name] = value

        if family == ClassifierFamily.GBT and resolved["learning_rate"] > 1.0:
            raise ConfigError(f"GBT learning_rate must be at most 1 - got {resolved['learning_rate']}.")
        object.__setattr__(self, "hyperparameters", resolved)

    @property
    def key(self) -> Tuple:
        return (self.family.value, tuple(sorted(self.hyperparameters.items())))

    def describe(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in sorted(self.hyperparameters.items()))
        return f"{self.family.value}({params})"

    def asdict(self):
        return {"family": self.family.value, "hyperparameters": dict(self.hyperparameters)}


@dataclass(frozen=True)
class FeatureConfig:
    system: CoordinateSystem = CoordinateSystem.CARTESIAN
    version: int = FEATURE_VERSION

    @property
    def names(self):
        return FEATURE_NAMES[self.system]


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A fitted classifier plus everything needed to use & audit it.

    Attributes:
        spec: ClassifierSpec the model was trained with
        feature_config: coordinate system + feature version it accepts
        labels: the ActivityLabels it can predict, in canonical order
        learner: fitted learner (see core.learners)
        training_digest: sha256 over the training data, labels, spec & seed
    """

    spec: ClassifierSpec
    feature_config: FeatureConfig
    labels: Tuple[ActivityLabel, ...]
    learner: Any
    training_digest: str = ""


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows = truth, columns = prediction."""

    labels: Tuple[ActivityLabel, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    @property
    def support(self) -> Dict[ActivityLabel, int]:
        return {label: int(n) for label, n in zip(self.labels, self.counts.sum(axis=1))}

    def to_frame(self) -> pd.DataFrame:
        names = [label.value for label in self.labels]
        frame = pd.DataFrame(self.counts, index=names, columns=names)
        frame.index.name = "truth"
        return frame


@dataclass(frozen=True)
class CandidateResult:
    spec: ClassifierSpec
    fold_scores: Tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores))


@dataclass(frozen=True)
class CVReport:
    """Per-candidate fold accuracies of a randomized search; best = highest mean (first on ties)."""

    family: ClassifierFamily
    candidates: List[CandidateResult]
    folds: int
    seed: int
    best_index: Optional[int] = None

    def __post_init__(self):
        if self.best_index is None and self.candidates:
            means = [c.mean for c in self.candidates]
            object.__setattr__(self, "best_index", int(np.argmax(means)))

    @property
    def best(self) -> CandidateResult:
        return self.candidates[self.best_index]

    @property
    def best_spec(self) -> ClassifierSpec:
        return self.best.spec

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, candidate in enumerate(self.candidates):
            row = {"candidate": i, "family": self.family.value, "spec": candidate.spec.describe()}
            row.update({f"fold_{k + 1}": score for k, score in enumerate(candidate.fold_scores)})
            row["mean_accuracy"] = candidate.mean
            row["best"] = i == self.best_index
            rows.append(row)
        return pd.DataFrame(rows)
