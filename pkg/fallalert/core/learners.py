"""
Self-contained learners behind the classifier families: a Gini CART decision tree,
Euclidean k-nearest neighbours, Gaussian naive Bayes and softmax gradient-boosted trees.

Every learner works on integer class indices (0..K-1), returns an (n, K) score matrix
whose rows sum to 1, and round-trips through plain dicts for model files.
"""

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp, softmax


class TreeArrays:
    """Flat binary tree: a node is a leaf when feature[node] == -1.

    Samples go left when x[feature] <= threshold.
    """

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def add(self, value, feature=-1, threshold=0.0):
        self.feature.append(int(feature))
        self.threshold.append(float(threshold))
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)

        node = np.zeros(len(X), dtype=int)
        active = feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            current = node[rows]
            go_left = X[rows, feature[current]] <= threshold[current]
            node[rows] = np.where(go_left, left[current], right[current])
            active = feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        values = np.asarray(self.value, dtype=float)
        return values[self.apply(X)]

    def to_dict(self):
        return {
            "feature": list(self.feature),
            "threshold": list(self.threshold),
            "left": list(self.left),
            "right": list(self.right),
            "value": [np.asarray(v, dtype=float).tolist() for v in self.value],
        }

    @classmethod
    def from_dict(cls, data):
        tree = cls()
        tree.feature = [int(v) for v in data["feature"]]
        tree.threshold = [float(v) for v in data["threshold"]]
        tree.left = [int(v) for v in data["left"]]
        tree.right = [int(v) for v in data["right"]]
        tree.value = data["value"]
        return tree


def _midpoint(lo: float, hi: float) -> float:
    mid = (lo + hi) / 2.0
    return mid if mid < hi else lo


def best_gini_split(X: np.ndarray, y: np.ndarray, n_classes: int):
    """Exact best (feature, threshold) by weighted Gini impurity.

    Thresholds are midpoints between consecutive distinct values. Ties go to the lowest
    feature, then the lowest threshold.

    Returns:
        (feature, threshold, impurity) or None when every feature is constant
    """
    n = len(y)
    onehot = np.eye(n_classes)[y]
    best = None

    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if not valid.size:
            continue

        left_counts = np.cumsum(onehot[order], axis=0)[valid]
        right_counts = onehot.sum(axis=0) - left_counts
        n_left = (valid + 1).astype(float)
        n_right = n - n_left

        # n * weighted gini = n - sum(cl^2)/nl - sum(cr^2)/nr
        impurity = (n - (left_counts**2).sum(axis=1) / n_left - (right_counts**2).sum(axis=1) / n_right) / n
        i = int(np.argmin(impurity))
        if best is None or impurity[i] < best[2] - 1e-12:
            best = (f, _midpoint(xs[valid[i]], xs[valid[i] + 1]), float(impurity[i]))

    return best


def best_sse_split(X: np.ndarray, r: np.ndarray):
    """Exact best (feature, threshold) minimising the summed squared error of the two sides."""
    n = len(r)
    total = r.sum()
    best = None

    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if not valid.size:
            continue

        left_sum = np.cumsum(r[order])[valid]
        n_left = (valid + 1).astype(float)
        # Maximising sum_l^2/n_l + sum_r^2/n_r minimises the SSE
        score = left_sum**2 / n_left + (total - left_sum) ** 2 / (n - n_left)
        i = int(np.argmax(score))
        if best is None or score[i] > best[2] + 1e-12:
            best = (f, _midpoint(xs[valid[i]], xs[valid[i] + 1]), float(score[i]))

    return best


class DecisionTreeLearner:
    """CART classification tree grown with Gini splits until nodes are pure (or max_depth).

    Scores are the class frequencies of the reached leaf.
    """

    family = "DECISION_TREE"

    def __init__(self, max_depth=20, min_samples_split=2):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.n_classes = 0
        self.tree = None

    def fit(self, X, y, n_classes, seed=0):
        self.n_classes = n_classes
        self.tree = TreeArrays()
        self._grow(X, y, depth=0)
        return self

    def _grow(self, X, y, depth):
        counts = np.bincount(y, minlength=self.n_classes)
        node = self.tree.add((counts / counts.sum()).tolist())

        if counts.max() == len(y) or depth >= self.max_depth or len(y) < self.min_samples_split:
            return node

        split = best_gini_split(X, y, self.n_classes)
        if split is None:
            return node

        feature, threshold, _ = split
        mask = X[:, feature] <= threshold
        self.tree.feature[node] = feature
        self.tree.threshold[node] = threshold
        self.tree.left[node] = self._grow(X[mask], y[mask], depth + 1)
        self.tree.right[node] = self._grow(X[~mask], y[~mask], depth + 1)
        return node

    def predict_scores(self, X):
        return self.tree.predict(X)

    def to_dict(self):
        return {"n_classes": self.n_classes, "tree": self.tree.to_dict()}

    @classmethod
    def from_dict(cls, data, **hyperparameters):
        learner = cls(**hyperparameters)
        learner.n_classes = int(data["n_classes"])
        learner.tree = TreeArrays.from_dict(data["tree"])
        return learner


class KNNLearner:
    """Euclidean k-nearest neighbours; scores are vote fractions (nearest first on distance ties)."""

    family = "KNN"

    def __init__(self, k=5):
        self.k = k
        self.X = None
        self.y = None
        self.n_classes = 0

    def fit(self, X, y, n_classes, seed=0):
        self.X = np.array(X, dtype=float)
        self.y = np.array(y, dtype=int)
        self.n_classes = n_classes
        return self

    def predict_scores(self, X):
        k = min(self.k, len(self.y))
        distances = cdist(np.atleast_2d(X), self.X)
        nearest = np.argsort(distances, axis=1, kind="stable")[:, :k]
        votes = np.zeros((len(distances), self.n_classes))
        for col in range(k):
            np.add.at(votes, (np.arange(len(distances)), self.y[nearest[:, col]]), 1.0)
        return votes / k

    def to_dict(self):
        return {"n_classes": self.n_classes, "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, data, **hyperparameters):
        learner = cls(**hyperparameters)
        learner.n_classes = int(data["n_classes"])
        learner.X = np.array(data["X"], dtype=float)
        learner.y = np.array(data["y"], dtype=int)
        return learner


class GaussianNBLearner:
    """Gaussian naive Bayes with a variance floor of var_smoothing * max(largest feature variance, 1)."""

    family = "NAIVE_BAYES"

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing
        self.means = None
        self.variances = None
        self.log_priors = None

    def fit(self, X, y, n_classes, seed=0):
        epsilon = self.var_smoothing * max(float(np.var(X, axis=0).max()), 1.0)
        self.means = np.vstack([X[y == c].mean(axis=0) for c in range(n_classes)])
        self.variances = np.vstack([X[y == c].var(axis=0) for c in range(n_classes)]) + epsilon
        self.log_priors = np.log(np.bincount(y, minlength=n_classes) / len(y))
        return self

    def predict_scores(self, X):
        X = np.atleast_2d(X)
        log_norm = -0.5 * np.log(2.0 * np.pi * self.variances).sum(axis=1)
        squared = ((X[:, None, :] - self.means[None, :, :]) ** 2 / self.variances[None, :, :]).sum(axis=2)
        joint = self.log_priors[None, :] + log_norm[None, :] - 0.5 * squared
        return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))

    def to_dict(self):
        return {"means": self.means.tolist(), "variances": self.variances.tolist(), "log_priors": self.log_priors.tolist()}

    @classmethod
    def from_dict(cls, data, **hyperparameters):
        learner = cls(**hyperparameters)
        learner.means = np.array(data["means"], dtype=float)
        learner.variances = np.array(data["variances"], dtype=float)
        learner.log_priors = np.array(data["log_priors"], dtype=float)
        return learner


class GBTLearner:
    """Multiclass gradient boosting with a softmax objective.

    Raw scores start at the log class priors; every round fits one depth-limited regression
    tree per class to the residuals y_k - p_k and sets each leaf to the Newton step
    (K - 1) / K * sum(r) / sum(|r| * (1 - |r|)), shrunk by learning_rate.
    """

    family = "GBT"

    def __init__(self, n_rounds=100, learning_rate=0.1, max_depth=3):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.initial = None
        self.trees = []

    def fit(self, X, y, n_classes, seed=0):
        priors = np.bincount(y, minlength=n_classes) / len(y)
        self.initial = np.log(np.maximum(priors, 1e-300))
        self.trees = []
        if n_classes < 2:
            return self

        onehot = np.eye(n_classes)[y]
        raw = np.tile(self.initial, (len(y), 1))
        for _ in range(self.n_rounds):
            residuals = onehot - softmax(raw, axis=1)
            round_trees = []
            for k in range(n_classes):
                tree = TreeArrays()
                self._grow(tree, X, residuals[:, k], n_classes, depth=0)
                raw[:, k] += self.learning_rate * tree.predict(X)
                round_trees.append(tree)
            self.trees.append(round_trees)
        return self

    def _leaf_value(self, r, n_classes):
        denominator = np.sum(np.abs(r) * (1.0 - np.abs(r)))
        if denominator <= 1e-12:
            return 0.0
        return float((n_classes - 1) / n_classes * r.sum() / denominator)

    def _grow(self, tree, X, r, n_classes, depth):
        node = tree.add(self._leaf_value(r, n_classes))
        if depth >= self.max_depth or len(r) < 2 or np.ptp(r) == 0:
            return node

        split = best_sse_split(X, r)
        if split is None:
            return node

        feature, threshold, _ = split
        mask = X[:, feature] <= threshold
        tree.feature[node] = feature
        tree.threshold[node] = threshold
        tree.left[node] = self._grow(tree, X[mask], r[mask], n_classes, depth + 1)
        tree.right[node] = self._grow(tree, X[~mask], r[~mask], n_classes, depth + 1)
        return node

    def raw_scores(self, X):
        X = np.atleast_2d(X)
        raw = np.tile(self.initial, (len(X), 1))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                raw[:, k] += self.learning_rate * tree.predict(X)
        return raw

    def predict_scores(self, X):
        return softmax(self.raw_scores(X), axis=1)

    def to_dict(self):
        return {
            "initial": self.initial.tolist(),
            "trees": [[tree.to_dict() for tree in round_trees] for round_trees in self.trees],
        }

    @classmethod
    def from_dict(cls, data, **hyperparameters):
        learner = cls(**hyperparameters)
        learner.initial = np.array(data["initial"], dtype=float)
        learner.trees = [[TreeArrays.from_dict(t) for t in round_trees] for round_trees in data["trees"]]
        return learner


LEARNERS = {
    "DECISION_TREE": DecisionTreeLearner,
    "KNN": KNNLearner,
    "NAIVE_BAYES": GaussianNBLearner,
    "GBT": GBTLearner,
}
