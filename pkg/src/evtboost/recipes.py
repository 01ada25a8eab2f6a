"""Concrete train-and-score recipes for cross-validation and tuning.

A recipe owns the mapping from a GridDataset split to model inputs: which
rows are in the loss's domain, which response/transform to use, and how to
turn raw scores into the quantities being scored.  Enrichers (imputation
or neighbour features) are fitted on the training split only and applied
to both splits, so no validation information leaks into training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import booster as B
from . import dataset as D
from . import losses as L
from . import mixture as M
from .errors import DataError
from .evaluate import ThresholdScoreSpec, threshold_score


def truncate(model: B.BoostedModel, n_rounds: int | None) -> B.BoostedModel:
    """Shallow copy keeping only the first ``n_rounds`` boosting rounds."""
    if n_rounds is None or n_rounds >= model.n_rounds:
        return model
    per_round = model.loss.n_classes if model.loss.multiclass else 1
    return B.BoostedModel(
        loss=model.loss,
        base_score=model.base_score,
        trees=model.trees[: n_rounds * per_round],
        params=model.params,
        feature_names=model.feature_names,
    )


def response_rows(ds: D.GridDataset, loss_kind: str, response: str, u: float):
    """(row mask, y) of the observations a loss kind can train on."""
    if response == "cnt":
        obs = ~np.isnan(ds.cnt)
        if loss_kind not in ("poisson", "dgpd"):
            raise DataError(f"loss {loss_kind!r} does not model counts")
        return obs, ds.cnt[obs]
    if response != "ba":
        raise DataError(f"unknown response {response!r}")
    obs = ~np.isnan(ds.ba)
    ba = ds.ba
    if loss_kind == "squared_log":
        return obs, ba[obs]
    if loss_kind == "trgamma":
        rows = obs & (ba > 0) & (ba <= u)
        return rows, np.log1p(ba[rows])
    if loss_kind == "gpd":
        rows = obs & (ba > u)
        return rows, ba[rows] - u
    if loss_kind == "cross_entropy":
        return obs, D.ba_class_labels(ba[obs], u)
    raise DataError(f"loss {loss_kind!r} does not model burned areas")


def count_threshold_probs(model: B.BoostedModel, X, thresholds) -> np.ndarray:
    """P(Y <= u_j) per row for a fitted count model (dgpd or poisson)."""
    theta = B.predict_raw(model, X)
    ks = np.floor(np.asarray(thresholds, dtype=float))
    if model.loss.kind == "dgpd":
        cols = [1.0 - L.dgpd_survival(k + 1.0, theta, model.loss.alpha) for k in ks]
    elif model.loss.kind == "poisson":
        cols = [special.pdtr(k, np.exp(theta)) for k in ks]
    else:
        raise DataError(f"loss {model.loss.kind!r} has no count CDF")
    return np.column_stack(cols)


def balanced_weights(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Inverse-frequency weights: n / (C * count of the row's class)."""
    labels = np.asarray(labels, dtype=int)
    counts = np.bincount(labels, minlength=n_classes).astype(float)
    counts[counts == 0] = 1.0
    return labels.size / (n_classes * counts[labels])


@dataclass
class Fitted:
    model: object  # BoostedModel or MixtureModel
    enrichers: list
    residual_sd: float | None = None  # squared_log only


@dataclass
class BoosterRecipe:
    """Single boosted model on one response subset.

    ``metric`` is "nll" (mean loss on the validation rows inside the loss's
    domain) or "threshold" (threshold score from the model-implied CDF;
    count losses and squared_log).  ``enrichers`` are objects with
    fit(train)/transform(ds), fitted on the training split only.
    """

    loss: L.LossSpec
    params: B.TrainParams
    response: str = "cnt"
    u: float = 200.0
    metric: str = "nll"
    score_spec: ThresholdScoreSpec | None = None
    include_position: bool = True
    balance_classes: bool = False
    enrichers: list = field(default_factory=list)

    def _design(self, ds: D.GridDataset):
        return ds.feature_matrix(include_position=self.include_position)

    def fit(self, train: D.GridDataset) -> Fitted:
        for e in self.enrichers:
            e.fit(train)
            train = e.transform(train)
        rows, y = response_rows(train, self.loss.kind, self.response, self.u)
        if not rows.any():
            raise DataError("no trainable rows for this loss")
        X, names = self._design(train)
        weights = None
        if self.loss.multiclass and self.balance_classes:
            weights = balanced_weights(y, self.loss.n_classes)
        model = B.fit(X[rows], y, self.loss, self.params, feature_names=names,
                      weights=weights)
        fitted = Fitted(model=model, enrichers=list(self.enrichers))
        if self.loss.kind == "squared_log":
            resid = np.log1p(y) - B.predict_raw(model, X[rows])
            fitted.residual_sd = float(max(resid.std(), 1e-6))
        return fitted

    def score(self, fitted: Fitted, valid: D.GridDataset,
              n_trees: int | None = None) -> float:
        for e in fitted.enrichers:
            valid = e.transform(valid)
        model = truncate(fitted.model, n_trees)
        rows, y = response_rows(valid, self.loss.kind, self.response, self.u)
        if not rows.any():
            raise DataError("no scorable validation rows")
        X, names = self._design(valid)
        X = X[rows]
        if self.metric == "nll":
            theta = B.predict_raw(model, X)
            if self.loss.multiclass:
                yv = B._one_hot(y, self.loss.n_classes)
                v, _, _ = L.cross_entropy_eval(yv, theta)
            else:
                v, _, _ = L.evaluate_loss(self.loss, y, theta)
            return float(v.mean())
        if self.metric == "threshold":
            spec = self.score_spec
            if spec is None:
                raise DataError("threshold metric requires a score spec")
            if self.loss.kind == "squared_log":
                theta = B.predict_raw(model, X)
                z = (np.log1p(spec.thresholds)[None, :] - theta[:, None])
                probs = stats.norm.cdf(z / fitted.residual_sd)
            else:
                probs = count_threshold_probs(model, X, spec.thresholds)
            return threshold_score(probs, y, spec)
        raise DataError(f"unknown metric {self.metric!r}")


@dataclass
class MixtureRecipe:
    """Three-component burned-area mixture scored by the threshold score.

    ``vary`` names the component whose tree count the CV checkpoints
    truncate (the other components keep their full tree lists).
    """

    classifier_params: B.TrainParams
    bulk_params: B.TrainParams
    tail_params: B.TrainParams
    u: float = 200.0
    xi: float = 0.8
    kappa: float = 0.5
    k_shape: float = 1.0
    score_spec: ThresholdScoreSpec | None = None
    vary: str = "classifier"
    include_position: bool = True
    enrichers: list = field(default_factory=list)

    def _design(self, ds: D.GridDataset):
        return ds.feature_matrix(include_position=self.include_position)

    def fit(self, train: D.GridDataset):
        for e in self.enrichers:
            e.fit(train)
            train = e.transform(train)
        rows = ~np.isnan(train.ba)
        X, names = self._design(train)
        model = M.fit_mixture(
            X[rows], train.ba[rows], u=self.u, xi=self.xi, kappa=self.kappa,
            k_shape=self.k_shape, classifier_params=self.classifier_params,
            bulk_params=self.bulk_params, tail_params=self.tail_params,
            feature_names=names,
        )
        return Fitted(model=model, enrichers=list(self.enrichers))

    def _truncated(self, m: M.MixtureModel, n_trees: int | None) -> M.MixtureModel:
        if n_trees is None:
            return m
        parts = {"classifier": m.classifier, "bulk": m.bulk, "tail": m.tail}
        if self.vary not in parts:
            raise DataError(f"unknown component {self.vary!r}")
        parts[self.vary] = truncate(parts[self.vary], n_trees)
        return M.MixtureModel(u=m.u, **parts)

    def score(self, fitted, valid: D.GridDataset, n_trees: int | None = None) -> float:
        spec = self.score_spec or _default_ba_spec()
        for e in fitted.enrichers:
            valid = e.transform(valid)
        model = self._truncated(fitted.model, n_trees)
        rows = ~np.isnan(valid.ba)
        if not rows.any():
            raise DataError("no scorable validation rows")
        X, names = self._design(valid)
        probs = M.threshold_probs(model, X[rows], spec.thresholds, names=None)
        return threshold_score(probs, valid.ba[rows], spec)


def _default_ba_spec() -> ThresholdScoreSpec:
    from .evaluate import default_score_spec

    return default_score_spec("ba")


@dataclass
class CntImputationEnricher:
    """Appends cnt_cov from a fold-local dGPD counts model (no BA inputs)."""

    alpha: float
    params: B.TrainParams
    include_position: bool = True
    _aux: B.BoostedModel | None = None

    def fit(self, train: D.GridDataset) -> None:
        rows = ~np.isnan(train.cnt)
        if not rows.any():
            raise DataError("no observed counts to fit the imputation model")
        X, names = train.feature_matrix(include_position=self.include_position)
        loss = L.LossSpec(kind="dgpd", alpha=self.alpha)
        self._aux = B.fit(X[rows], train.cnt[rows], loss, self.params,
                          feature_names=names)

    def transform(self, ds: D.GridDataset) -> D.GridDataset:
        return D.impute_cnt_covariate(ds, self._aux,
                                      include_position=self.include_position)


@dataclass
class BaClassImputationEnricher:
    """Appends p_zero/p_med/p_large from a fold-local size classifier."""

    u: float
    params: B.TrainParams
    include_position: bool = True
    _aux: B.BoostedModel | None = None

    def fit(self, train: D.GridDataset) -> None:
        rows = ~np.isnan(train.ba)
        if not rows.any():
            raise DataError("no observed burned areas to fit the classifier")
        X, names = train.feature_matrix(include_position=self.include_position)
        loss = L.LossSpec(kind="cross_entropy", n_classes=3)
        labels = D.ba_class_labels(train.ba[rows], self.u)
        self._aux = B.fit(X[rows], labels, loss, self.params, feature_names=names)

    def transform(self, ds: D.GridDataset) -> D.GridDataset:
        return D.impute_ba_class_covariates(ds, self._aux, u=self.u,
                                            include_position=self.include_position)
