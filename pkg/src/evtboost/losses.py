"""Differentiable loss functions with analytic gradients and hessians.

Every loss is a negative log-likelihood (up to additive constants) in a
single real score ``theta`` that parameterizes the conditional response
distribution:

* ``poisson``       -- theta is the log mean of a Poisson count.
* ``dgpd``          -- theta scales a discrete generalized Pareto pmf,
                       p(y) = (1 + e^theta y)^(-alpha) - (1 + e^theta (y+1))^(-alpha).
* ``trgamma``       -- theta is the log rescaled scale of a gamma density
                       right-truncated at ``u_trunc``.
* ``gpd``           -- theta is the log kappa-level quantile of generalized
                       Pareto excesses with fixed shape ``xi``.
* ``cross_entropy`` -- theta is a vector of class scores mapped through
                       softmax; supports per-observation weights.
* ``squared_log``   -- squared error on log(1 + y), i.e. theta predicts
                       log(1 + y).

Each loss has a vectorized core ``<name>_eval`` returning per-row
``(value, grad, hess)`` arrays, plus a scalar convenience wrapper returning
a :class:`LossEval`.  All powers of the form (1+x)^(-a) go through
log1p/expm1-style identities so that values stay finite far into the tails;
genuine underflow (a pmf that rounds to zero) raises
:class:`~evtboost.errors.NumericalError` instead of being clamped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DataError, NumericalError

LOSS_KINDS = ("poisson", "dgpd", "trgamma", "gpd", "cross_entropy", "squared_log")


@dataclass
class LossEval:
    """Loss value with first and second derivatives w.r.t. the score.

    For ``cross_entropy`` the grad/hess are per-class vectors (the hessian
    is the diagonal approximation); for all other losses they are scalars.
    """

    value: float
    grad: float | np.ndarray
    hess: float | np.ndarray


@dataclass
class LossSpec:
    """A loss identity plus the fixed hyperparameters it needs.

    Only the fields relevant to ``kind`` are read.  ``alpha`` is the dGPD
    tail parameter (alpha = 1/xi of the underlying GPD), ``xi`` the GPD
    shape, ``kappa`` the quantile level of the GPD reparameterization,
    ``k_shape`` the gamma shape, ``u_trunc`` the gamma right-truncation
    point, ``class_weights`` the per-observation cross-entropy weights and
    ``n_classes`` the number of classes.  ``raw_pmf_loss`` switches the
    dGPD objective from the negative log pmf (default) to the raw pmf.
    """

    kind: str
    alpha: float = 1.0
    xi: float = 1.0
    kappa: float = 0.5
    k_shape: float = 1.0
    u_trunc: float = 1.0
    class_weights: np.ndarray | None = None
    n_classes: int = 3
    raw_pmf_loss: bool = False

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise DataError(f"unknown loss kind {self.kind!r}")
        if self.alpha <= 0:
            raise DataError("alpha must be > 0")
        if self.xi <= 0:
            raise DataError("xi must be > 0")
        if not 0.0 < self.kappa < 1.0:
            raise DataError("kappa must lie in (0, 1)")
        if self.k_shape <= 0:
            raise DataError("k_shape must be > 0")
        if self.u_trunc <= 0:
            raise DataError("u_trunc must be > 0")
        if self.n_classes < 2:
            raise DataError("n_classes must be >= 2")

    @property
    def multiclass(self) -> bool:
        return self.kind == "cross_entropy"

    def hyperparams(self) -> dict:
        """The hyperparameters actually read by this loss kind (for serialization)."""
        out: dict = {"kind": self.kind}
        if self.kind == "dgpd":
            out["alpha"] = self.alpha
            if self.raw_pmf_loss:
                out["raw_pmf_loss"] = True
        elif self.kind == "trgamma":
            out["k_shape"] = self.k_shape
            out["u_trunc"] = self.u_trunc
        elif self.kind == "gpd":
            out["xi"] = self.xi
            out["kappa"] = self.kappa
        elif self.kind == "cross_entropy":
            out["n_classes"] = self.n_classes
        return out


def loss_spec_from_dict(doc: dict) -> LossSpec:
    """Rebuild a LossSpec from its serialized hyperparameter dict."""
    known = {"kind", "alpha", "xi", "kappa", "k_shape", "u_trunc", "n_classes",
             "raw_pmf_loss"}
    unknown = set(doc) - known
    if unknown:
        raise DataError(f"unknown loss fields: {sorted(unknown)}")
    return LossSpec(**doc)


# ---------------------------------------------------------------------------
# Poisson
# ---------------------------------------------------------------------------

def poisson_eval(y, theta):
    """Poisson deviance-style loss: y*log(y/e^theta) - y + e^theta (0*log0 = 0)."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(y < 0):
        raise DataError("poisson loss requires y >= 0")
    mu = np.exp(theta)
    ylogy = special.xlogy(y, y)
    value = ylogy - y * theta - y + mu
    return value, mu - y, mu


def poisson(y: float, theta: float) -> LossEval:
    v, g, h = poisson_eval(y, theta)
    return LossEval(float(v), float(g), float(h))


# ---------------------------------------------------------------------------
# Discrete generalized Pareto
# ---------------------------------------------------------------------------

def _dgpd_pieces(y, theta, alpha):
    """Stable building blocks for the dGPD pmf at integers y and y+1.

    Returns (log_s_y, w_y, E, D) where s_k = (1 + e^theta k)^(-alpha),
    w_k = e^theta k / (1 + e^theta k), E = s_{y+1}/s_y and D = 1 - E, so
    that pmf = s_y * D.
    """
    with np.errstate(divide="ignore"):  # log(0) at y = 0 is handled below
        t_y = theta + np.log(y)
    t_y1 = theta + np.log(y + 1.0)
    # softplus(t) = log(1 + e^t); exact 0 at y = 0 where the term is absent
    sp_y = np.where(y > 0, np.logaddexp(0.0, t_y), 0.0)
    sp_y1 = np.logaddexp(0.0, t_y1)
    log_s_y = -alpha * sp_y
    w_y = np.where(y > 0, special.expit(t_y), 0.0)
    w_y1 = special.expit(t_y1)
    d = -alpha * (sp_y1 - sp_y)  # log(s_{y+1}/s_y) <= 0
    E = np.exp(d)
    D = -np.expm1(d)
    return log_s_y, w_y, w_y1, E, D


def dgpd_eval(y, theta, alpha, raw_pmf_loss=False):
    """Discrete GPD loss, gradient and hessian w.r.t. theta.

    Default is the negative log pmf; ``raw_pmf_loss`` evaluates the pmf
    itself with its raw derivatives instead.
    """
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if alpha <= 0:
        raise DataError("dgpd loss requires alpha > 0")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise DataError("dgpd loss requires integer y >= 0")

    log_s_y, w_y, w_y1, E, D = _dgpd_pieces(y, theta, alpha)

    if raw_pmf_loss:
        s_y = np.exp(log_s_y)
        pmf = s_y * D
        g = -alpha * s_y * (w_y - E * w_y1)
        h = alpha * (alpha + 1.0) * s_y * (w_y * w_y - E * w_y1 * w_y1) + g
        return pmf, g, h

    log_pmf = log_s_y + np.log(D, out=np.full_like(D, -np.inf), where=D > 0)
    bad = ~np.isfinite(log_pmf)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NumericalError(
            f"dGPD pmf underflows to 0 at y={y.flat[i]:g}, theta={theta.flat[i]:g}, "
            f"alpha={alpha:g}"
        )
    # grad = -p'/p, hess = (p'/p)^2 - p''/p, with p'/p and p''/p formed from
    # the same stable ratios (no pmf in a denominator).
    ratio1 = alpha * (w_y - E * w_y1) / D          # = -p'/p
    ratio2 = alpha * (alpha + 1.0) * (w_y * w_y - E * w_y1 * w_y1) / D - ratio1  # = p''/p
    value = -log_pmf
    grad = ratio1
    hess = ratio1 * ratio1 - ratio2
    return value, grad, hess


def dgpd(y: float, theta: float, alpha: float) -> LossEval:
    v, g, h = dgpd_eval(y, theta, alpha)
    return LossEval(float(v), float(g), float(h))


def dgpd_pmf(y, theta, alpha):
    """Probability mass (1 + e^theta y)^(-alpha) - (1 + e^theta (y+1))^(-alpha)."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    log_s_y, _, _, _, D = _dgpd_pieces(y, theta, alpha)
    return np.exp(log_s_y) * D


def dgpd_survival(k, theta, alpha):
    """P(Y >= k) = (1 + e^theta k)^(-alpha) for integer k >= 0."""
    k = np.asarray(k, dtype=float)
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore"):
        t = theta + np.log(k)
    sp = np.where(k > 0, np.logaddexp(0.0, t), 0.0)
    return np.exp(-alpha * sp)


def dgpd_mean(theta, alpha: float, tol: float = 1e-10) -> float | np.ndarray:
    """Predicted mean sum_{k>=1} (1 + e^theta k)^(-alpha) for alpha > 1.

    The series is summed in blocks until the integral bracket around the
    remaining tail is tighter than ``tol``; the bracket midpoint (an
    integral tail estimate with guaranteed error < tol) is then added.
    """
    if alpha <= 1.0:
        raise DataError("dGPD mean does not exist for alpha <= 1")
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))
    c = np.exp(theta_arr)
    total = np.zeros_like(theta_arr)
    done = np.zeros(theta_arr.shape, dtype=bool)
    k_next = np.ones_like(theta_arr)  # first unsummed integer per row
    block = 4096
    max_terms = 10 ** 9
    while not done.all():
        idx = np.flatnonzero(~done)
        ks = k_next[idx, None] + np.arange(block)[None, :]
        total[idx] += np.exp(-alpha * np.log1p(c[idx, None] * ks)).sum(axis=1)
        k_next[idx] += block
        if np.any(k_next > max_terms):
            raise NumericalError("dGPD mean series did not converge")
        # tail after summing through K = k_next - 1 lies between
        # I(K+1) and I(K), with I(a) = (1+c a)^(1-alpha) / (c (alpha-1))
        K = k_next[idx] - 1.0
        upper = np.exp((1.0 - alpha) * np.log1p(c[idx] * K)) / (c[idx] * (alpha - 1.0))
        lower = np.exp((1.0 - alpha) * np.log1p(c[idx] * (K + 1.0))) / (c[idx] * (alpha - 1.0))
        ok = 0.5 * (upper - lower) < tol
        total[idx[ok]] += 0.5 * (upper[ok] + lower[ok])
        done[idx[ok]] = True
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return float(total[0])
    return total


# ---------------------------------------------------------------------------
# Right-truncated gamma
# ---------------------------------------------------------------------------

def trgamma_eval(y, theta, k, u):
    """Truncated-gamma loss k*theta + y*k*e^(-theta) + log gamma_lower(k, k*u*e^(-theta)).

    Derivatives use the closed forms of the incomplete-gamma terms: with
    s = k*u*e^(-theta), d(gamma)/d(theta) = -s^k e^(-s) and
    d2(gamma)/d(theta)2 = (k - s) s^k e^(-s).
    """
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if k <= 0 or u <= 0:
        raise DataError("trgamma loss requires k > 0 and u > 0")
    if np.any(y <= 0) or np.any(y > u):
        i = int(np.argmax((y <= 0) | (y > u)))
        raise DataError(f"trgamma loss requires 0 < y <= u; offending y={y.flat[i]:g}")
    inv_mu = np.exp(-theta)
    s = k * u * inv_mu
    reg = special.gammainc(k, s)  # P(k, s) = gamma(k, s) / Gamma(k)
    if np.any(reg <= 0.0):
        i = int(np.argmax(reg <= 0.0))
        raise NumericalError(
            f"truncated-gamma normalizer underflows at theta={theta.flat[i]:g}"
        )
    log_gamma_lower = special.gammaln(k) + np.log(reg)
    value = k * theta + y * k * inv_mu + log_gamma_lower
    # R1 = gamma'(theta)/gamma = -exp(k log s - s - log gamma_lower)
    r1 = -np.exp(k * np.log(s) - s - log_gamma_lower)
    grad = k - y * k * inv_mu + r1
    hess = y * k * inv_mu - (k - s) * r1 - r1 * r1
    return value, grad, hess


def trgamma(y: float, theta: float, k: float, u: float) -> LossEval:
    v, g, h = trgamma_eval(y, theta, k, u)
    return LossEval(float(v), float(g), float(h))


def trgamma_cdf(y, theta, k, u):
    """CDF of the right-truncated gamma on (0, u] at its log-scale score theta."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s = k * np.clip(y, 0.0, u) * np.exp(-theta)
    s_trunc = k * u * np.exp(-theta)
    denom = special.gammainc(k, s_trunc)
    if np.any(denom <= 0.0):
        raise NumericalError("truncated-gamma normalizer underflows in cdf")
    return np.where(y <= 0, 0.0, np.where(y >= u, 1.0, special.gammainc(k, s) / denom))


# ---------------------------------------------------------------------------
# Generalized Pareto with quantile reparameterization
# ---------------------------------------------------------------------------

def gpd_scale_factor(xi: float, kappa: float) -> float:
    """(1-kappa)^(-xi) - 1, the bridge between theta and the GPD scale.

    The kappa-level quantile of GPD(sigma, xi) is sigma * this / xi, so
    theta = log-quantile implies sigma = xi * e^theta / this.
    """
    if not 0.0 < kappa < 1.0:
        raise DataError("kappa must lie in (0, 1)")
    if xi <= 0:
        raise DataError("xi must be > 0")
    return float(np.expm1(-xi * np.log1p(-kappa)))


def gpd_eval(y, theta, xi, kappa):
    """GPD excess loss with theta modelling the log kappa-quantile."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(y <= 0):
        i = int(np.argmax(y <= 0))
        raise DataError(f"gpd loss requires y > 0; offending y={y.flat[i]:g}")
    c = gpd_scale_factor(xi, kappa)
    log_ay = np.log(c) + np.log(y) - theta  # log(A y), A = c e^(-theta)
    softplus = np.logaddexp(0.0, log_ay)    # log(1 + A y)
    value = (xi + 1.0) / xi * softplus + np.log(xi) + theta - np.log(c)
    r = special.expit(log_ay)               # A y / (1 + A y)
    grad = 1.0 - (xi + 1.0) / xi * r
    hess = (xi + 1.0) / xi * r * (1.0 - r)
    return value, grad, hess


def gpd(y: float, theta: float, xi: float, kappa: float) -> LossEval:
    v, g, h = gpd_eval(y, theta, xi, kappa)
    return LossEval(float(v), float(g), float(h))


def gpd_cdf_excess(x, sigma, xi):
    """Standard GPD CDF 1 - (1 + xi x / sigma)^(-1/xi) for excesses x >= 0."""
    x = np.asarray(x, dtype=float)
    return -np.expm1(-np.log1p(xi * np.maximum(x, 0.0) / sigma) / xi)


# ---------------------------------------------------------------------------
# Weighted cross-entropy (softmax)
# ---------------------------------------------------------------------------

def softmax(scores):
    """Row-wise softmax, shifted for stability."""
    z = np.asarray(scores, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_eval(y, theta, w=1.0):
    """Weighted multiclass cross-entropy on one-hot rows.

    ``y`` and ``theta`` have shape (n, C); returns per-row value (n,), grad
    (n, C) and the diagonal hessian (n, C).
    """
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if y.shape != theta.shape:
        raise DataError("cross_entropy y/theta shape mismatch")
    row_sums = y.sum(axis=-1)
    if np.any(row_sums != 1.0) or np.any((y != 0.0) & (y != 1.0)):
        raise DataError("cross_entropy requires one-hot rows")
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise DataError("cross_entropy weights must be >= 0")
    zmax = theta.max(axis=-1, keepdims=True)
    logsumexp = zmax[..., 0] + np.log(np.exp(theta - zmax).sum(axis=-1))
    value = w * (logsumexp - (y * theta).sum(axis=-1))
    p = softmax(theta)
    w_col = w[..., None] if w.ndim else w
    grad = w_col * (p - y)
    hess = w_col * p * (1.0 - p)
    return value, grad, hess


def cross_entropy(y, theta, w: float = 1.0) -> LossEval:
    y = np.atleast_2d(np.asarray(y, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    v, g, h = cross_entropy_eval(y, theta, w)
    return LossEval(float(v[0]), g[0], h[0])


# ---------------------------------------------------------------------------
# Squared loss on log(1 + y)
# ---------------------------------------------------------------------------

def squared_log_eval(y, theta):
    """(log(1+y) - theta)^2 / 2 with unit hessian."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(y < 0):
        raise DataError("squared_log loss requires y >= 0")
    z = np.log1p(y)
    resid = theta - z
    return 0.5 * resid * resid, resid, np.ones_like(resid)


def squared_log(y: float, theta: float) -> LossEval:
    v, g, h = squared_log_eval(y, theta)
    return LossEval(float(v), float(g), float(h))


# ---------------------------------------------------------------------------
# Dispatch for the booster
# ---------------------------------------------------------------------------

def evaluate_loss(spec: LossSpec, y, theta, weights=None):
    """Per-row (value, grad, hess) arrays for any loss kind.

    For ``cross_entropy``, ``y``/``theta`` are (n, C) and ``weights``
    (default all-ones) are the per-observation weights; other kinds take
    1-d arrays and ignore ``weights``.
    """
    if spec.kind == "poisson":
        return poisson_eval(y, theta)
    if spec.kind == "dgpd":
        return dgpd_eval(y, theta, spec.alpha, raw_pmf_loss=spec.raw_pmf_loss)
    if spec.kind == "trgamma":
        return trgamma_eval(y, theta, spec.k_shape, spec.u_trunc)
    if spec.kind == "gpd":
        return gpd_eval(y, theta, spec.xi, spec.kappa)
    if spec.kind == "cross_entropy":
        w = 1.0 if weights is None else weights
        return cross_entropy_eval(y, theta, w)
    if spec.kind == "squared_log":
        return squared_log_eval(y, theta)
    raise DataError(f"unknown loss kind {spec.kind!r}")
