"""Three-component burned-area model: zero / bulk / tail.

A 3-class softmax classifier carries the component probabilities; positive
sizes up to the threshold ``u`` follow a right-truncated gamma fitted on
log(1+size) (truncation log(1+u) in transformed space); sizes above ``u``
follow a generalized Pareto on the excesses.  The pieces compose into the
full conditional CDF

    P(BA <= b | x) = p1 + p2 * F_bulk(b | x) + p3 * F_tail(b | x),

with F_bulk back-transformed through the monotone log(1+.) map (so
F_bulk(u) = 1 by construction) and F_tail supported on (u, inf).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import booster as B
from . import losses as L
from .errors import DataError
from .dataset import ba_class_labels

MANIFEST_VERSION = 1


@dataclass
class MixtureModel:
    classifier: B.BoostedModel
    bulk: B.BoostedModel
    tail: B.BoostedModel
    u: float = 200.0

    def __post_init__(self):
        if self.classifier.loss.kind != "cross_entropy" or self.classifier.loss.n_classes != 3:
            raise DataError("mixture classifier must be 3-class cross_entropy")
        if self.bulk.loss.kind != "trgamma":
            raise DataError("mixture bulk model must use the trgamma loss")
        if self.tail.loss.kind != "gpd":
            raise DataError("mixture tail model must use the gpd loss")
        if self.u <= 0:
            raise DataError("mixture threshold must be > 0")
        if abs(self.bulk.loss.u_trunc - np.log1p(self.u)) > 1e-9:
            raise DataError("bulk truncation must equal log(1+u) of the mixture threshold")

    @property
    def xi(self) -> float:
        return self.tail.loss.xi

    @property
    def kappa(self) -> float:
        return self.tail.loss.kappa

    @property
    def k_shape(self) -> float:
        return self.bulk.loss.k_shape


def _component_matrix(model: B.BoostedModel, X, names):
    if names is None:
        if X.shape[1] != len(model.feature_names):
            raise DataError("feature count mismatch; pass feature names to align")
        return X
    missing = [w for w in model.feature_names if w not in names]
    if missing:
        raise DataError(f"missing features for mixture component: {missing}")
    idx = [names.index(w) for w in model.feature_names]
    return X[:, idx]


def component_probs(m: MixtureModel, X, names=None) -> np.ndarray:
    """Softmax class probabilities (n, 3) of (zero, bulk, tail)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    raw = B.predict_raw(m.classifier, _component_matrix(m.classifier, X, names))
    return L.softmax(raw)


def tail_sigma(m: MixtureModel, X, names=None) -> np.ndarray:
    """GPD scale recovered from the tail score via the quantile identity."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    theta = B.predict_raw(m.tail, _component_matrix(m.tail, X, names))
    c = L.gpd_scale_factor(m.xi, m.kappa)
    return m.xi * np.exp(theta) / c


def cdf(m: MixtureModel, X, b, names=None) -> np.ndarray:
    """P(BA <= b | x) for each row; ``b`` is a scalar threshold >= 0."""
    b = float(b)
    if b < 0:
        raise DataError("cdf threshold must be >= 0")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    p = component_probs(m, X, names)
    out = p[:, 0].copy()
    if b > 0:
        theta_bulk = B.predict_raw(m.bulk, _component_matrix(m.bulk, X, names))
        f2 = L.trgamma_cdf(np.log1p(min(b, m.u)), theta_bulk, m.k_shape, np.log1p(m.u))
        out += p[:, 1] * f2
    if b > m.u:
        sigma = tail_sigma(m, X, names)
        out += p[:, 2] * L.gpd_cdf_excess(b - m.u, sigma, m.xi)
    return out


def threshold_probs(m: MixtureModel, X, thresholds, names=None) -> np.ndarray:
    """Matrix of P(BA <= u_j | x_i); thresholds must be sorted ascending."""
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) < 0):
        raise DataError("thresholds must be sorted ascending")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.column_stack([cdf(m, X, b, names) for b in thresholds])


def sample(m: MixtureModel, x, n_draws: int, seed: int, names=None) -> np.ndarray:
    """Monte Carlo draws of BA at a single covariate vector.

    Components are drawn by inverse transform: the bulk through the inverse
    regularized incomplete gamma on the truncated range, the tail through
    the GPD quantile function.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != 1:
        raise DataError("sample draws at a single covariate vector")
    rng = np.random.default_rng(seed)
    p = component_probs(m, x, names)[0]
    comp = rng.choice(3, size=n_draws, p=p)
    out = np.zeros(n_draws)

    n_bulk = int((comp == 1).sum())
    if n_bulk:
        theta = float(B.predict_raw(m.bulk, _component_matrix(m.bulk, x, names))[0])
        k = m.k_shape
        s_trunc = k * np.log1p(m.u) * np.exp(-theta)
        urand = rng.uniform(size=n_bulk)
        z = special.gammaincinv(k, urand * special.gammainc(k, s_trunc)) * np.exp(theta) / k
        out[comp == 1] = np.expm1(z)

    n_tail = int((comp == 2).sum())
    if n_tail:
        sigma = float(tail_sigma(m, x, names)[0])
        urand = rng.uniform(size=n_tail)
        out[comp == 2] = m.u + sigma * np.expm1(-m.xi * np.log1p(-urand)) / m.xi
    return out


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def fit_mixture(
    X,
    ba,
    u: float,
    xi: float,
    kappa: float,
    k_shape: float,
    classifier_params: B.TrainParams,
    bulk_params: B.TrainParams,
    tail_params: B.TrainParams,
    feature_names=None,
    class_weights=None,
) -> MixtureModel:
    """Fit the three components on observed burned areas.

    All rows train the classifier; rows with 0 < ba <= u train the bulk
    model on log(1+ba); rows with ba > u train the tail model on the
    excesses.
    """
    X = np.asarray(X, dtype=float)
    ba = np.asarray(ba, dtype=float)
    if np.any(np.isnan(ba)):
        raise DataError("fit_mixture requires observed burned areas")
    labels = ba_class_labels(ba, u)
    cls_loss = L.LossSpec(kind="cross_entropy", n_classes=3)
    classifier = B.fit(X, labels, cls_loss, classifier_params,
                       feature_names=feature_names, weights=class_weights)

    bulk_rows = labels == 1
    if not bulk_rows.any():
        raise DataError("no observations in (0, u] to fit the bulk model")
    bulk_loss = L.LossSpec(kind="trgamma", k_shape=k_shape, u_trunc=float(np.log1p(u)))
    bulk = B.fit(X[bulk_rows], np.log1p(ba[bulk_rows]), bulk_loss, bulk_params,
                 feature_names=feature_names)

    tail_rows = labels == 2
    if not tail_rows.any():
        raise DataError("no observations above u to fit the tail model")
    tail_loss = L.LossSpec(kind="gpd", xi=xi, kappa=kappa)
    tail = B.fit(X[tail_rows], ba[tail_rows] - u, tail_loss, tail_params,
                 feature_names=feature_names)
    return MixtureModel(classifier=classifier, bulk=bulk, tail=tail, u=u)


# ---------------------------------------------------------------------------
# Manifest (three component files + threshold)
# ---------------------------------------------------------------------------

def save(m: MixtureModel, path) -> None:
    """Write the manifest plus the three component model files beside it."""
    base = os.path.splitext(os.path.basename(path))[0]
    outdir = os.path.dirname(path) or "."
    parts = {"classifier": m.classifier, "bulk": m.bulk, "tail": m.tail}
    manifest = {
        "format_version": MANIFEST_VERSION,
        "kind": "mixture",
        "threshold": m.u,
        "xi": m.xi,
        "kappa": m.kappa,
        "k_shape": m.k_shape,
    }
    for name, model in parts.items():
        fname = f"{base}.{name}.json"
        B.save(model, os.path.join(outdir, fname))
        manifest[name] = fname
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n")


def load(path) -> MixtureModel:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != "mixture":
        raise DataError("not a mixture manifest")
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise DataError(f"unsupported manifest version {manifest.get('format_version')!r}")
    outdir = os.path.dirname(path) or "."
    parts = {}
    for name in ("classifier", "bulk", "tail"):
        if name not in manifest:
            raise DataError(f"manifest missing component {name!r}")
        parts[name] = B.load(os.path.join(outdir, manifest[name]))
    m = MixtureModel(u=float(manifest["threshold"]), **parts)
    for key, val in (("xi", m.xi), ("kappa", m.kappa), ("k_shape", m.k_shape)):
        if key in manifest and abs(float(manifest[key]) - val) > 1e-12:
            raise DataError(f"manifest {key} disagrees with component model")
    return m


def is_mixture_document(path) -> bool:
    """True if the JSON file at ``path`` is a mixture manifest."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return False
    return isinstance(doc, dict) and doc.get("kind") == "mixture"
