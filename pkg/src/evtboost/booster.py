"""Gradient boosting training loop and model (de)serialization.

The model is a base score plus an ordered list of trees; each round fits
one tree (one per class for the multiclass cross-entropy loss) to the
first- and second-order derivatives of the loss at the current estimate,
then applies shrinkage.  Feature subsampling per round is a pure function
of (seed, round) through a counter-based Philox generator, so training is
bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import losses as L
from .errors import DataError, NumericalError
from .tree import Tree, grow

FORMAT_VERSION = 1

# Losses like trgamma are not globally convex, so per-row hessians are
# floored at this value before a tree is grown.
HESS_FLOOR = 1e-6


@dataclass
class TrainParams:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_leaves: int = 8
    lambda_reg: float = 1.0
    eta: float = 0.0
    colsample: float = 1.0
    n_quantile_bins: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise DataError("n_trees must be >= 0")
        if self.max_leaves < 2:
            raise DataError("max_leaves must be >= 2")
        if not 0.0 < self.colsample <= 1.0:
            raise DataError("colsample must lie in (0, 1]")
        if not 0.0 < self.learning_rate <= 1.0:
            raise DataError("learning_rate must lie in (0, 1]")
        if self.lambda_reg < 0 or self.eta < 0:
            raise DataError("lambda_reg and eta must be >= 0")


@dataclass
class BoostedModel:
    """Fitted boosting model: loss metadata, base score and trees.

    For multiclass models ``trees`` is round-major with ``n_classes``
    consecutive trees per round.  ``train_losses`` holds the total training
    loss before each round plus after the last (length n_rounds + 1); it is
    not serialized.
    """

    loss: L.LossSpec
    base_score: float | np.ndarray
    trees: list[Tree]
    params: TrainParams
    feature_names: list[str]
    train_losses: list[float] = field(default_factory=list, repr=False)

    @property
    def n_rounds(self) -> int:
        if self.loss.multiclass:
            return len(self.trees) // self.loss.n_classes
        return len(self.trees)


def _round_feature_subset(seed: int, round_idx: int, n_features: int, colsample: float):
    """Feature subset for one boosting round; pure in (seed, round)."""
    if colsample >= 1.0:
        return None
    n_pick = max(1, int(round(colsample * n_features)))
    rng = np.random.Generator(np.random.Philox(key=np.uint64([seed, round_idx])))
    return np.sort(rng.choice(n_features, size=n_pick, replace=False))


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return np.asarray(labels, dtype=float)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels.astype(int)] = 1.0
    return out


def initial_estimate(ys, loss: L.LossSpec, weights=None, tol: float = 1e-10,
                     max_iter: int = 100):
    """Constant score minimizing the total loss (Newton with bisection).

    Returns a scalar, or a per-class vector for the cross-entropy loss
    (cyclic per-class Newton on the coupled softmax system).
    """
    ys = np.asarray(ys, dtype=float)
    if ys.size == 0:
        raise DataError("initial estimate needs at least one response")

    if loss.multiclass:
        y = _one_hot(ys, loss.n_classes)
        w = np.ones(y.shape[0]) if weights is None else np.asarray(weights, dtype=float)
        w_total = float(w.sum())
        mass = w @ y  # weighted count per class
        theta = np.zeros(loss.n_classes)
        scale = max(1.0, w_total)
        for _ in range(max_iter):
            # cyclic per-class updates; with the other scores fixed the
            # stationary point of one score solves softmax_c = mass_c / total
            for c in range(loss.n_classes):
                others = np.exp(np.delete(theta, c)).sum()
                target = mass[c] / w_total
                if target <= 0.0:
                    theta[c] = -30.0
                elif target >= 1.0:
                    theta[c] = 30.0
                else:
                    theta[c] = np.clip(np.log(others * target / (1.0 - target)),
                                       -30.0, 30.0)
            g_tot = w_total * L.softmax(theta) - mass
            if np.abs(g_tot).max() < tol * scale:
                return theta - theta.mean()  # pin the softmax shift invariance
        raise NumericalError("initial estimate did not converge (cross_entropy)")

    def total_grad(t):
        _, g, _ = L.evaluate_loss(loss, ys, np.full_like(ys, t))
        return float(g.sum())

    def total_grad_hess(t):
        _, g, h = L.evaluate_loss(loss, ys, np.full_like(ys, t))
        return float(g.sum()), float(h.sum())

    # bracket a sign change of the total gradient
    lo, hi, step = 0.0, 0.0, 1.0
    g_lo = g_hi = total_grad(0.0)
    while g_lo > 0.0:
        lo -= step
        step *= 2.0
        if lo < -700.0:
            raise NumericalError("initial estimate did not converge (no bracket)")
        g_lo = total_grad(lo)
    step = 1.0
    while g_hi < 0.0:
        hi += step
        step *= 2.0
        if hi > 700.0:
            raise NumericalError("initial estimate did not converge (no bracket)")
        g_hi = total_grad(hi)

    theta = 0.5 * (lo + hi)
    scale = max(1.0, ys.size)
    for _ in range(max_iter):
        g, h = total_grad_hess(theta)
        if abs(g) < tol * scale:
            return float(theta)
        if g > 0:
            hi = theta
        else:
            lo = theta
        if h > 0:
            candidate = theta - g / h
        else:
            candidate = np.nan
        if not np.isfinite(candidate) or not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)  # bisection fallback
        if abs(candidate - theta) < 1e-14 * max(1.0, abs(theta)):
            return float(candidate)
        theta = candidate
    raise NumericalError("initial estimate did not converge")


def _responses_for_loss(loss: L.LossSpec, ys, weights):
    if loss.multiclass:
        y = _one_hot(np.asarray(ys), loss.n_classes)
        w = np.ones(y.shape[0]) if weights is None else np.asarray(weights, dtype=float)
        return y, w
    return np.asarray(ys, dtype=float), None


def fit(X, ys, loss: L.LossSpec, params: TrainParams, feature_names=None,
        weights=None) -> BoostedModel:
    """Train a boosted model on a feature matrix and responses.

    ``ys`` is a 1-d response array (class labels 0..C-1 or one-hot rows for
    cross-entropy); ``weights`` are the per-observation cross-entropy
    weights.  Loss domain violations surface with the offending row index.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(p)]
    if len(feature_names) != p:
        raise DataError("feature_names length must match column count")

    y, w = _responses_for_loss(loss, ys, weights)
    if y.shape[0] != n:
        raise DataError("response length must match row count")

    base = initial_estimate(ys, loss, weights=weights)
    if loss.multiclass:
        theta = np.tile(base, (n, 1))
    else:
        theta = np.full(n, base)

    model = BoostedModel(loss=loss, base_score=base, trees=[], params=params,
                         feature_names=list(feature_names))
    lr = params.learning_rate
    for round_idx in range(params.n_trees):
        subset = _round_feature_subset(params.seed, round_idx, p, params.colsample)
        v, g, h = L.evaluate_loss(loss, y, theta, weights=w)
        model.train_losses.append(float(v.sum()))
        h = np.maximum(h, HESS_FLOOR)
        if loss.multiclass:
            for c in range(loss.n_classes):
                t = grow(X, g[:, c], h[:, c], params.max_leaves, params.lambda_reg,
                         params.eta, params.n_quantile_bins, subset)
                theta[:, c] += lr * t.predict(X)
                model.trees.append(t)
        else:
            t = grow(X, g, h, params.max_leaves, params.lambda_reg,
                     params.eta, params.n_quantile_bins, subset)
            theta += lr * t.predict(X)
            model.trees.append(t)
    v, _, _ = L.evaluate_loss(loss, y, theta, weights=w)
    model.train_losses.append(float(v.sum()))
    return model


def predict_raw(model: BoostedModel, X, n_trees: int | None = None) -> np.ndarray:
    """Raw boosting estimate: base score plus the (prefix) sum of trees.

    ``n_trees`` truncates to the first rounds (multiclass counts rounds,
    not individual trees); None uses the full model.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise DataError(
            f"feature mismatch: model expects {len(model.feature_names)} features, "
            f"got {X.shape[1] if X.ndim == 2 else 'non-matrix'}"
        )
    rounds = model.n_rounds if n_trees is None else min(n_trees, model.n_rounds)
    lr = model.params.learning_rate
    if model.loss.multiclass:
        C = model.loss.n_classes
        out = np.tile(np.asarray(model.base_score, dtype=float), (X.shape[0], 1))
        for r in range(rounds):
            for c in range(C):
                out[:, c] += lr * model.trees[r * C + c].predict(X)
        return out
    out = np.full(X.shape[0], float(model.base_score))
    for t in model.trees[:rounds]:
        out += lr * t.predict(X)
    return out


# ---------------------------------------------------------------------------
# Serialization: versioned canonical JSON
# ---------------------------------------------------------------------------

def to_doc(model: BoostedModel) -> dict:
    base = model.base_score
    if isinstance(base, np.ndarray):
        base = [float(b) for b in base]
    else:
        base = float(base)
    return {
        "format_version": FORMAT_VERSION,
        "loss": model.loss.hyperparams(),
        "base_score": base,
        "feature_names": list(model.feature_names),
        "params": asdict(model.params),
        "trees": [t.to_doc() for t in model.trees],
    }


def from_doc(doc: dict) -> BoostedModel:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise DataError("not a model document")
    if doc["format_version"] != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {doc['format_version']!r}")
    missing = {"loss", "base_score", "feature_names", "params", "trees"} - set(doc)
    if missing:
        raise DataError(f"model document missing fields: {sorted(missing)}")
    loss = L.loss_spec_from_dict(doc["loss"])
    base = doc["base_score"]
    if isinstance(base, list):
        base = np.asarray(base, dtype=float)
    try:
        params = TrainParams(**doc["params"])
    except TypeError as exc:
        raise DataError(f"bad training params in model document: {exc}") from exc
    return BoostedModel(
        loss=loss,
        base_score=base,
        trees=[Tree.from_doc(t) for t in doc["trees"]],
        params=params,
        feature_names=list(doc["feature_names"]),
    )


def dumps(model: BoostedModel) -> str:
    """Canonical serialization: sorted keys, shortest round-trip decimals."""
    return json.dumps(to_doc(model), sort_keys=True, separators=(",", ":")) + "\n"


def loads(text: str) -> BoostedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"model document is not valid JSON: {exc}") from exc
    return from_doc(doc)


def save(model: BoostedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model))


def load(path) -> BoostedModel:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
