"""Binary classifiers used to score records, plus neighborhood encoding and
instance reweighting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .calibration import ScoreSet
from .spatial import Dataset, Partitioning, region_index

LOGISTIC = "logistic-regression"

# keeps exp() finite; sigmoid(35) is still strictly below 1.0 in float64
_LOGIT_CLIP = 35.0


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = LOGISTIC
    learning_rate: float = 0.1
    epochs: int = 500
    l2: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "l2": self.l2,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Design matrix: ``[intercept | standardized numeric | one-hot region]``."""

    values: np.ndarray
    n_numeric: int
    n_regions: int
    mean: np.ndarray
    scale: np.ndarray

    intercept = 0

    @property
    def numeric(self) -> np.ndarray:
        return self.values[:, 1 : 1 + self.n_numeric]

    @property
    def onehot(self) -> np.ndarray:
        return self.values[:, 1 + self.n_numeric :]

    def __len__(self):
        return self.values.shape[0]


def encode_features(d: Dataset, p: Partitioning, reference: FeatureMatrix | None = None) -> FeatureMatrix:
    """Encode ``d`` with ``p`` as the neighborhood attribute.

    Numeric columns are standardized with this dataset's mean and population
    standard deviation, or with those of ``reference`` (use the training
    matrix when encoding held-out records). Constant columns become 0.
    """
    x = d.features
    if reference is None:
        mean = x.mean(axis=0) if len(d) else np.zeros(x.shape[1])
        sd = x.std(axis=0) if len(d) else np.ones(x.shape[1])
        scale = np.where(sd > 0, sd, np.inf)
    else:
        mean, scale = reference.mean, reference.scale
    numeric = (x - mean) / scale
    owner = region_index(p, d.grid, d.rows, d.cols)
    onehot = np.zeros((len(d), len(p)))
    onehot[np.arange(len(d)), owner] = 1.0
    values = np.hstack([np.ones((len(d), 1)), numeric, onehot])
    values.setflags(write=False)
    return FeatureMatrix(values, x.shape[1], len(p), mean, scale)


def sigmoid(z):
    z = np.clip(z, -_LOGIT_CLIP, _LOGIT_CLIP)
    return 1.0 / (1.0 + np.exp(-z))


def _penalty_mask(n_cols: int, unpenalized: Sequence[int]) -> np.ndarray:
    mask = np.ones(n_cols)
    mask[list(unpenalized)] = 0.0
    return mask


def log_loss(beta, x, y, w, l2=0.0, unpenalized=(0,)) -> float:
    """Weighted mean log-loss plus ``l2/2 * ||beta||^2`` over penalized coefficients."""
    z = x @ beta
    per_record = np.logaddexp(0.0, z) - y * z
    mask = _penalty_mask(len(beta), unpenalized)
    return float(np.dot(w, per_record) / w.sum() + 0.5 * l2 * np.dot(mask * beta, beta))


def log_loss_gradient(beta, x, y, w, l2=0.0, unpenalized=(0,)) -> np.ndarray:
    p = 1.0 / (1.0 + np.exp(-(x @ beta)))
    mask = _penalty_mask(len(beta), unpenalized)
    return x.T @ (w * (p - y)) / w.sum() + l2 * mask * beta


class LogisticRegression:
    """Full-batch gradient descent from zero weights, fixed step size.

    Column 0 is treated as the intercept and is not penalized.
    """

    def __init__(self, learning_rate=0.1, epochs=500, l2=1e-3, unpenalized=(0,), track_loss=False):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2 = l2
        self.unpenalized = tuple(unpenalized)
        self.track_loss = track_loss
        self.coef_ = None
        self.loss_history_: list[float] = []

    def fit(self, x, y, sample_weight=None):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        w_total = w.sum()
        mask = _penalty_mask(x.shape[1], self.unpenalized)
        beta = np.zeros(x.shape[1])
        self.loss_history_ = []
        for _ in range(self.epochs):
            if self.track_loss:
                self.loss_history_.append(log_loss(beta, x, y, w, self.l2, self.unpenalized))
            p = sigmoid(x @ beta)
            grad = x.T @ (w * (p - y)) / w_total + self.l2 * mask * beta
            beta = beta - self.learning_rate * grad
        if self.track_loss:
            self.loss_history_.append(log_loss(beta, x, y, w, self.l2, self.unpenalized))
        self.coef_ = beta
        return self

    def predict_proba(self, x) -> np.ndarray:
        """Probability of the positive class for each row of ``x``."""
        return sigmoid(np.asarray(x, dtype=np.float64) @ self.coef_)


class Classifier(Protocol):
    def fit(self, x, y, sample_weight=None): ...

    def predict_proba(self, x) -> np.ndarray: ...


_REGISTRY: dict[str, Callable[[ClassifierSpec], Classifier]] = {
    LOGISTIC: lambda spec: LogisticRegression(spec.learning_rate, spec.epochs, spec.l2),
}


def register_classifier(kind: str, factory: Callable[[ClassifierSpec], Classifier]) -> None:
    """Make ``kind`` usable in :class:`ClassifierSpec`.

    ``factory(spec)`` must return an object with ``fit(x, y, sample_weight)``
    and ``predict_proba(x)`` returning positive-class scores in [0, 1]. It is
    responsible for honouring ``spec.seed``.
    """
    _REGISTRY[kind] = factory


def make_classifier(spec: ClassifierSpec) -> Classifier:
    try:
        return _REGISTRY[spec.kind](spec)
    except KeyError:
        raise ValueError(f"unknown classifier kind {spec.kind!r}; known: {sorted(_REGISTRY)}") from None


def _check_weights(w, n):
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != n:
        raise ValueError(f"{w.shape[0]} weights for {n} records")
    if (w < 0).any() or not w.any():
        raise ValueError("instance weights must be non-negative and not all zero")
    return w


def fit_classifier(m: FeatureMatrix, labels, weights=None, spec: ClassifierSpec = ClassifierSpec()) -> Classifier:
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.shape[0] != len(m):
        raise ValueError(f"{len(m)} feature rows but {y.shape[0]} labels")
    w = None if weights is None else _check_weights(weights, len(m))
    return make_classifier(spec).fit(m.values, y, sample_weight=w)


def train_and_score(
    m: FeatureMatrix, labels, weights=None, spec: ClassifierSpec = ClassifierSpec(), task: int = 0
) -> ScoreSet:
    """Fit on ``m`` and return in-sample confidence scores."""
    model = fit_classifier(m, labels, weights, spec)
    return ScoreSet(model.predict_proba(m.values), task)


def reweight(d: Dataset, groups, task: int = 0) -> np.ndarray:
    """Instance weights making group membership independent of the label.

    ``w(u) = |g(u)| * |y(u)| / (n * |g(u), y(u)|)``. ``groups`` is either an
    array aligned with the dataset or a mapping from record id to group.
    """
    if isinstance(groups, Mapping):
        groups = [groups[int(i)] for i in d.ids]
    g = np.asarray(groups).reshape(-1)
    if g.shape[0] != len(d):
        raise ValueError(f"{g.shape[0]} group ids for {len(d)} records")
    _, g = np.unique(g, return_inverse=True)
    y = d.label(task).astype(np.int64)
    n = len(d)
    n_groups = int(g.max()) + 1 if n else 0
    group_count = np.bincount(g, minlength=n_groups)
    label_count = np.bincount(y, minlength=2)
    joint = np.bincount(g * 2 + y, minlength=2 * n_groups).reshape(n_groups, 2)
    return group_count[g] * label_count[y] / (n * joint[g, y])
