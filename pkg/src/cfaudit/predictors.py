"""Built-in classifiers and the predictor contract the engine relies on.

A predictor maps batches of schema-valid instances to class labels. The
engine treats it as a black box: only `predict_batch` and `classes` are
required. The built-in models (logistic regression, multilayer
perceptron, decision tree) are implemented directly on numpy so that
training is seeded and reproducible and the network exposes its loss
gradients for finite-difference checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, DatasetStats
from .errors import InstanceValidationError, TrainingError
from .schema import FeatureSchema, schema_from_dict, schema_to_dict

MODEL_FORMAT = "cfaudit-model/1"


class Predictor:
    """Minimal classifier interface consumed by the engine and audits."""

    classes: tuple = ()
    deterministic: bool = True

    def predict_batch(self, instances) -> list:
        raise NotImplementedError


class CallablePredictor(Predictor):
    """Adapts a plain function to the predictor contract.

    `fn` receives one instance (a tuple of feature values) and returns a
    class label. Used for constructed oracles in tests and examples.
    """

    def __init__(self, fn, classes, deterministic: bool = True):
        self.fn = fn
        self.classes = tuple(str(c) for c in classes)
        self.deterministic = deterministic

    def predict_batch(self, instances) -> list:
        labels = [str(self.fn(inst)) for inst in instances]
        unknown = set(labels) - set(self.classes)
        if unknown:
            raise InstanceValidationError([("*", f"predictor returned unknown label(s) {sorted(unknown)}")])
        return labels


class FeatureEncoder:
    """Numeric design matrix for the built-in models.

    Continuous features are standardized with moments taken from the
    training rows; categorical features are one-hot encoded over the
    schema's category lists, so unseen-at-train-time categories still
    get a column.
    """

    def __init__(self, schema: FeatureSchema, means=None, stds=None):
        self.schema = schema
        self.means = dict(means or {})
        self.stds = dict(stds or {})
        self.width = sum(1 if f.is_continuous else len(f.categories) for f in schema.features)

    @classmethod
    def fit(cls, schema: FeatureSchema, rows) -> "FeatureEncoder":
        means = {}
        stds = {}
        for i, spec in enumerate(schema.features):
            if not spec.is_continuous:
                continue
            col = np.array([row[i] for row in rows], dtype=float)
            means[spec.name] = float(col.mean())
            std = float(col.std())
            stds[spec.name] = std if std > 0.0 else 1.0
        return cls(schema, means, stds)

    def encode(self, instances) -> np.ndarray:
        m = len(instances)
        out = np.zeros((m, self.width))
        col = 0
        for i, spec in enumerate(self.schema.features):
            if spec.is_continuous:
                values = np.array([inst[i] for inst in instances], dtype=float)
                mu = self.means.get(spec.name, 0.0)
                sd = self.stds.get(spec.name, 1.0)
                out[:, col] = (values - mu) / sd
                col += 1
            else:
                index = {c: j for j, c in enumerate(spec.categories)}
                for r, inst in enumerate(instances):
                    value = inst[i]
                    if value not in index:
                        raise InstanceValidationError(
                            [(spec.name, f"unknown category {value!r}")]
                        )
                    out[r, col + index[value]] = 1.0
                col += len(spec.categories)
        return out

    def to_dict(self) -> dict:
        return {"means": self.means, "stds": self.stds}


class SoftmaxNet:
    """Feed-forward softmax classifier; no hidden layers makes it a
    multinomial logistic regression."""

    def __init__(self, layer_sizes, seed: int = 0, weights=None, biases=None):
        self.layer_sizes = list(layer_sizes)
        if weights is not None:
            self.weights = [np.asarray(w, dtype=float) for w in weights]
            self.biases = [np.asarray(b, dtype=float) for b in biases]
            return
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def _forward(self, X: np.ndarray):
        activations = [X]
        a = X
        for layer, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            if layer < len(self.weights) - 1:
                a = np.maximum(z, 0.0)
            else:
                a = z
            activations.append(a)
        return activations

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self._forward(X)[-1]

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        z = self.logits(X)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict_indices(self, X: np.ndarray) -> np.ndarray:
        # argmax takes the first maximum, i.e. ties go to the lowest class index
        return np.argmax(self.logits(X), axis=1)

    def loss_and_grads(self, X: np.ndarray, y_idx: np.ndarray):
        """Mean cross-entropy and its gradients w.r.t. every parameter.

        Overflow is not an error here: divergence surfaces as a
        non-finite loss, which fit() turns into TrainingError.
        """
        with np.errstate(over="ignore", invalid="ignore"):
            return self._loss_and_grads(X, y_idx)

    def _loss_and_grads(self, X: np.ndarray, y_idx: np.ndarray):
        m = X.shape[0]
        activations = self._forward(X)
        z = activations[-1]
        z_shift = z - z.max(axis=1, keepdims=True)
        log_probs = z_shift - np.log(np.exp(z_shift).sum(axis=1, keepdims=True))
        loss = float(-log_probs[np.arange(m), y_idx].mean())

        probs = np.exp(log_probs)
        delta = probs
        delta[np.arange(m), y_idx] -= 1.0
        delta /= m
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            a_prev = activations[layer]
            grads_w[layer] = a_prev.T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (activations[layer] > 0.0)
        return loss, grads_w, grads_b

    def fit(self, X: np.ndarray, y_idx: np.ndarray, learning_rate: float,
            epochs: int, batch_size: int, seed: int) -> None:
        rng = np.random.default_rng(seed)
        m = X.shape[0]
        for _ in range(epochs):
            order = rng.permutation(m)
            for start in range(0, m, batch_size):
                batch = order[start:start + batch_size]
                loss, grads_w, grads_b = self.loss_and_grads(X[batch], y_idx[batch])
                if not np.isfinite(loss):
                    raise TrainingError(
                        "training diverged (non-finite loss); lower the learning rate"
                    )
                for W, b, gw, gb in zip(self.weights, self.biases, grads_w, grads_b):
                    W -= learning_rate * gw
                    b -= learning_rate * gb

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SoftmaxNet":
        return cls(obj["layer_sizes"], weights=obj["weights"], biases=obj["biases"])


@dataclass
class TreeNode:
    """Axis-aligned split (`value <= threshold` goes left) or a leaf."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    label_index: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"label_index": self.label_index}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TreeNode":
        if "label_index" in obj:
            return cls(label_index=int(obj["label_index"]))
        return cls(
            feature=int(obj["feature"]),
            threshold=float(obj["threshold"]),
            left=cls.from_dict(obj["left"]),
            right=cls.from_dict(obj["right"]),
        )


class DecisionTree:
    """CART classifier: greedy Gini splits at midpoints of sorted values.

    Ties between candidate splits keep the earlier feature and lower
    threshold, which makes fitting deterministic without randomness.
    """

    def __init__(self, n_classes: int, max_depth: int = 6, min_leaf: int = 1,
                 root: TreeNode | None = None):
        self.n_classes = n_classes
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.root = root

    def fit(self, X: np.ndarray, y_idx: np.ndarray) -> None:
        self.root = self._grow(X, y_idx, depth=0)

    def _leaf(self, y_idx: np.ndarray) -> TreeNode:
        counts = np.bincount(y_idx, minlength=self.n_classes)
        return TreeNode(label_index=int(np.argmax(counts)))

    def _gini(self, counts: np.ndarray, total: int) -> float:
        if total == 0:
            return 0.0
        p = counts / total
        return float(1.0 - np.sum(p * p))

    def _grow(self, X: np.ndarray, y_idx: np.ndarray, depth: int) -> TreeNode:
        m = X.shape[0]
        if depth >= self.max_depth or m < 2 * self.min_leaf or len(np.unique(y_idx)) == 1:
            return self._leaf(y_idx)
        best = None  # (impurity, feature, threshold)
        for j in range(X.shape[1]):
            order = np.argsort(X[:, j], kind="stable")
            xs = X[order, j]
            ys = y_idx[order]
            left_counts = np.zeros(self.n_classes)
            right_counts = np.bincount(ys, minlength=self.n_classes).astype(float)
            for split in range(1, m):
                left_counts[ys[split - 1]] += 1
                right_counts[ys[split - 1]] -= 1
                if xs[split] == xs[split - 1]:
                    continue
                if split < self.min_leaf or m - split < self.min_leaf:
                    continue
                impurity = (split * self._gini(left_counts, split)
                            + (m - split) * self._gini(right_counts, m - split)) / m
                if best is None or impurity < best[0] - 1e-12:
                    threshold = (xs[split - 1] + xs[split]) / 2.0
                    best = (impurity, j, threshold)
        if best is None:
            return self._leaf(y_idx)
        _, feature, threshold = best
        mask = X[:, feature] <= threshold
        return TreeNode(
            feature=feature,
            threshold=threshold,
            left=self._grow(X[mask], y_idx[mask], depth + 1),
            right=self._grow(X[~mask], y_idx[~mask], depth + 1),
        )

    def predict_indices(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=int)
        self._route(self.root, X, np.arange(X.shape[0]), out)
        return out

    def _route(self, node: TreeNode, X: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
        if node.is_leaf:
            out[idx] = node.label_index
            return
        mask = X[idx, node.feature] <= node.threshold
        self._route(node.left, X, idx[mask], out)
        self._route(node.right, X, idx[~mask], out)

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "root": self.root.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DecisionTree":
        return cls(
            n_classes=int(obj["n_classes"]),
            max_depth=int(obj["max_depth"]),
            min_leaf=int(obj["min_leaf"]),
            root=TreeNode.from_dict(obj["root"]),
        )


class BuiltinPredictor(Predictor):
    """Wraps an encoder plus a fitted model behind the predictor contract."""

    def __init__(self, kind: str, schema: FeatureSchema, encoder: FeatureEncoder,
                 model, heldout_indices: tuple = ()):
        self.kind = kind
        self.schema = schema
        self.encoder = encoder
        self.model = model
        self.classes = schema.classes
        self.deterministic = True
        self.heldout_indices = tuple(heldout_indices)

    def predict_batch(self, instances) -> list:
        if not instances:
            return []
        for inst in instances:
            if len(inst) != self.schema.n:
                raise InstanceValidationError(
                    [("*", f"expected {self.schema.n} values, got {len(inst)}")]
                )
        X = self.encoder.encode(instances)
        idx = self.model.predict_indices(X)
        return [self.classes[i] for i in idx]


@dataclass(frozen=True)
class ModelConfig:
    """Training configuration for the built-in models."""

    kind: str = "logreg"
    hidden: tuple = (16,)
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 32
    max_depth: int = 6
    min_leaf: int = 1
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("logreg", "mlp", "dtree"):
            raise TrainingError(f"unknown model kind {self.kind!r}")
        if not (0.0 < self.test_fraction < 1.0):
            raise TrainingError("test_fraction must lie strictly between 0 and 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainingError("epochs and batch_size must be positive")
        if self.kind == "mlp" and not self.hidden:
            raise TrainingError("an mlp needs at least one hidden layer")


def _stratified_split(labels, classes, test_fraction: float, seed: int):
    """Deterministic per-class split; every class keeps a training row."""
    rng = np.random.default_rng(seed)
    train_idx = []
    test_idx = []
    labels = list(labels)
    for cls in classes:
        members = [i for i, lab in enumerate(labels) if lab == cls]
        if not members:
            continue
        members = [int(i) for i in rng.permutation(members)]
        n_test = int(round(test_fraction * len(members)))
        n_test = min(n_test, len(members) - 1)
        test_idx.extend(members[:n_test])
        train_idx.extend(members[n_test:])
    if not test_idx:
        # tiny dataset: move the last training row over so accuracy is defined
        test_idx.append(train_idx.pop())
    return sorted(train_idx), sorted(test_idx)


def train(dataset: Dataset, config: ModelConfig | None = None) -> tuple:
    """Fit a built-in model; returns (predictor, held-out accuracy).

    The split is stratified and seeded. The returned predictor carries
    `heldout_indices`, the dataset row numbers that were not used for
    fitting, so audits can default to unseen instances.
    """
    config = config or ModelConfig()
    schema = dataset.schema
    labels = dataset.labels()
    present = set(labels)
    if len(present) < 2:
        raise TrainingError("training data contains a single class")

    train_idx, test_idx = _stratified_split(labels, schema.classes, config.test_fraction, config.seed)
    instances = dataset.instances()
    train_rows = [instances[i] for i in train_idx]
    test_rows = [instances[i] for i in test_idx]
    class_index = {c: i for i, c in enumerate(schema.classes)}
    y_train = np.array([class_index[labels[i]] for i in train_idx])
    y_test = np.array([class_index[labels[i]] for i in test_idx])

    encoder = FeatureEncoder.fit(schema, train_rows)
    X_train = encoder.encode(train_rows)
    X_test = encoder.encode(test_rows)

    if config.kind in ("logreg", "mlp"):
        hidden = list(config.hidden) if config.kind == "mlp" else []
        sizes = [encoder.width] + hidden + [len(schema.classes)]
        model = SoftmaxNet(sizes, seed=config.seed)
        model.fit(X_train, y_train, config.learning_rate, config.epochs,
                  config.batch_size, config.seed)
    else:
        model = DecisionTree(len(schema.classes), config.max_depth, config.min_leaf)
        model.fit(X_train, y_train)

    predictor = BuiltinPredictor(config.kind, schema, encoder, model,
                                 heldout_indices=tuple(test_idx))
    accuracy = float(np.mean(model.predict_indices(X_test) == y_test))
    return predictor, accuracy


def save_model(path, predictor: BuiltinPredictor, stats: DatasetStats,
               accuracy: float | None = None) -> None:
    """Persist a trained model with everything needed to explain with it."""
    artifact = {
        "format": MODEL_FORMAT,
        "kind": predictor.kind,
        "schema": schema_to_dict(predictor.schema),
        "stats": stats.to_dict(),
        "encoder": predictor.encoder.to_dict(),
        "model": predictor.model.to_dict(),
        "heldout_indices": list(predictor.heldout_indices),
        "accuracy": accuracy,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(artifact, fh)
        fh.write("\n")


def load_model(path) -> tuple:
    """Returns (predictor, stats, accuracy) from a saved artifact."""
    with open(path, encoding="utf-8") as fh:
        artifact = json.load(fh)
    if artifact.get("format") != MODEL_FORMAT:
        raise TrainingError(f"not a model artifact: {path}")
    schema = schema_from_dict(artifact["schema"])
    stats = DatasetStats.from_dict(artifact["stats"])
    encoder = FeatureEncoder(schema, **artifact["encoder"])
    kind = artifact["kind"]
    if kind in ("logreg", "mlp"):
        model = SoftmaxNet.from_dict(artifact["model"])
    elif kind == "dtree":
        model = DecisionTree.from_dict(artifact["model"])
    else:
        raise TrainingError(f"unknown model kind {kind!r} in artifact")
    predictor = BuiltinPredictor(kind, schema, encoder, model,
                                 heldout_indices=tuple(artifact.get("heldout_indices", ())))
    return predictor, stats, artifact.get("accuracy")
