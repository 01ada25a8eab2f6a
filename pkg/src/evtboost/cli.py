"""Batch command-line interface.

Subcommands: train, predict, cvfolds, tune, score, pdp, importance, synth.
Configuration is an INI file with sections data/schema/loss/train/cv/score/
tune; unknown sections or keys are rejected.  Every run appends one line to
a plaintext run log (config hash, seed, wall time, exit status).  Exit
codes: 0 ok, 1 configuration error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import os
import sys
import time

import numpy as np

from . import booster as B
from . import dataset as D
from . import evaluate as E
from . import interpret as I
from . import losses as L
from . import mixture as M
from . import recipes as R
from . import spatialcv as S
from . import synth
from .errors import ConfigError, DataError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

_SECTION_KEYS = {
    "data": {"train", "spacing", "missing", "season"},
    "schema": {"lon", "lat", "year", "month", "cnt", "ba", "covariates"},
    "loss": {"kind", "alpha", "xi", "kappa", "k_shape", "u", "n_classes",
             "raw_pmf_loss", "response"},
    "train": {"n_trees", "learning_rate", "max_leaves", "lambda_reg", "eta",
              "colsample", "n_quantile_bins", "seed"},
    "cv": {"n_folds", "seed", "beta0_cnt", "beta0_ba", "beta", "range",
           "sigma_gp", "nu", "phi"},
    "score": {"thresholds", "weights", "response"},
    "tune": {"learning_rate", "max_leaves", "lambda_reg", "eta", "colsample",
             "alpha", "xi", "k_shape"},
}


class RunConfig:
    """Parsed INI configuration with strict key checking."""

    def __init__(self, path: str | None):
        self.path = path
        self.raw = b""
        cp = configparser.ConfigParser()
        if path is not None:
            if not os.path.exists(path):
                raise ConfigError(f"config file {path!r} does not exist")
            with open(path, "rb") as fh:
                self.raw = fh.read()
            try:
                cp.read_string(self.raw.decode("utf-8"))
            except (configparser.Error, UnicodeDecodeError) as exc:
                raise ConfigError(f"cannot parse config {path!r}: {exc}") from exc
            for section in cp.sections():
                if section not in _SECTION_KEYS:
                    raise ConfigError(f"unknown config section [{section}]")
                unknown = set(cp[section]) - _SECTION_KEYS[section]
                if unknown:
                    raise ConfigError(
                        f"unknown keys in [{section}]: {sorted(unknown)}")
        self.cp = cp
        train_path = self.get("data", "train")
        if train_path is not None and not os.path.exists(train_path):
            raise ConfigError(f"referenced data file {train_path!r} does not exist")

    def get(self, section, key, default=None):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key)
        return default

    def getfloat(self, section, key, default=None):
        val = self.get(section, key)
        if val is None:
            return default
        try:
            return float(val)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {val!r}") from None

    def getint(self, section, key, default=None):
        val = self.get(section, key)
        if val is None:
            return default
        try:
            return int(val)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {val!r}") from None

    def getbool(self, section, key, default=False):
        val = self.get(section, key)
        if val is None:
            return default
        if val.lower() in ("1", "true", "yes", "on"):
            return True
        if val.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key} must be a boolean, got {val!r}")

    def config_hash(self) -> str:
        return hashlib.sha256(self.raw).hexdigest()[:12]

    # -- builders ----------------------------------------------------------

    def load_dataset(self) -> D.GridDataset:
        path = self.get("data", "train")
        if path is None:
            raise ConfigError("config needs [data] train = <csv path>")
        schema = {role: self.get("schema", role, D.DEFAULT_SCHEMA[role])
                  for role in D.DEFAULT_SCHEMA}
        season_text = self.get("data", "season", "3-9")
        try:
            lo, hi = (int(t) for t in season_text.split("-"))
            season = tuple(range(lo, hi + 1))
        except ValueError:
            raise ConfigError(f"[data] season must look like '3-9', got {season_text!r}") \
                from None
        cov_text = self.get("schema", "covariates")
        covs = [t.strip() for t in cov_text.split(",")] if cov_text else None
        return D.load_csv(
            path,
            schema=schema,
            missing_marker=self.get("data", "missing", "NA"),
            season=season,
            spacing=self.getfloat("data", "spacing", 0.5),
            covariate_columns=covs,
        )

    def loss_spec(self, kind: str | None = None) -> L.LossSpec:
        kind = kind or self.get("loss", "kind")
        if kind is None:
            raise ConfigError("loss kind required (--loss or [loss] kind)")
        try:
            return L.LossSpec(
                kind=kind,
                alpha=self.getfloat("loss", "alpha", 1.0),
                xi=self.getfloat("loss", "xi", 0.8),
                kappa=self.getfloat("loss", "kappa", 0.5),
                k_shape=self.getfloat("loss", "k_shape", 1.0),
                u_trunc=float(np.log1p(self.threshold_u())),
                n_classes=self.getint("loss", "n_classes", 3),
                raw_pmf_loss=self.getbool("loss", "raw_pmf_loss", False),
            )
        except DataError as exc:
            raise ConfigError(str(exc)) from exc

    def threshold_u(self) -> float:
        return self.getfloat("loss", "u", 200.0)

    def train_params(self, seed_override=None) -> B.TrainParams:
        try:
            return B.TrainParams(
                n_trees=self.getint("train", "n_trees", 100),
                learning_rate=self.getfloat("train", "learning_rate", 0.1),
                max_leaves=self.getint("train", "max_leaves", 8),
                lambda_reg=self.getfloat("train", "lambda_reg", 1.0),
                eta=self.getfloat("train", "eta", 0.0),
                colsample=self.getfloat("train", "colsample", 1.0),
                n_quantile_bins=self.getint("train", "n_quantile_bins", 32),
                seed=seed_override if seed_override is not None
                else self.getint("train", "seed", 0),
            )
        except DataError as exc:
            raise ConfigError(str(exc)) from exc

    def mask_params(self, ds: D.GridDataset) -> S.MaskModelParams:
        try:
            params = S.MaskModelParams(
                beta0_cnt=self.getfloat("cv", "beta0_cnt", 0.0),
                beta0_ba=self.getfloat("cv", "beta0_ba", 0.0),
                beta=self.getfloat("cv", "beta", 0.42),
                r=self.getfloat("cv", "range", 2.0),
                sigma_gp=self.getfloat("cv", "sigma_gp", 1.0),
                nu=self.getfloat("cv", "nu", 1.0),
                phi=self.getfloat("cv", "phi", 0.25),
            )
        except DataError as exc:
            raise ConfigError(str(exc)) from exc
        # default intercepts: calibrate to the dataset's observed masking rate
        if self.get("cv", "beta0_cnt") is None and self.get("cv", "beta0_ba") is None:
            params = S.calibrate_intercepts(ds, params)
        return params

def _read_numbers(path) -> np.ndarray:
    if not os.path.exists(path):
        raise ConfigError(f"file {path!r} does not exist")
    vals = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals.append(float(line))
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number: {line!r}") from None
    return np.asarray(vals)


def _fmt(v) -> str:
    if isinstance(v, float):  # includes numpy float64, which reprs differently
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _response_for_loss(kind: str, override: str | None) -> str:
    if override:
        return override
    return "cnt" if kind in ("poisson", "dgpd") else "ba"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = RunConfig(args.config)
    ds = cfg.load_dataset()
    ds = D.cross_fill_zeros(ds)
    loss = cfg.loss_spec(args.loss)
    response = _response_for_loss(loss.kind, args.response or cfg.get("loss", "response"))
    params = cfg.train_params(seed_override=args.seed)
    rows, y = R.response_rows(ds, loss.kind, response, cfg.threshold_u())
    if not rows.any():
        raise DataError("no trainable rows for this loss/response")
    X, names = ds.feature_matrix()
    model = B.fit(X[rows], y, loss, params, feature_names=names)
    B.save(model, args.out)
    print(f"rounds={model.n_rounds}")
    print(f"train_loss={model.train_losses[-1]!r}")
    print(f"model={args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    ds = _load_data_for_model(args)
    X, names = ds.feature_matrix()
    keys = [(ds.cells[c].id, int(y), int(m))
            for c, y, m in zip(ds.cell_index, ds.year, ds.month)]

    if M.is_mixture_document(args.model):
        mix = M.load(args.model)
        thresholds = _read_numbers(args.thresholds) if args.thresholds \
            else E.default_score_spec("ba").thresholds
        if np.any(np.diff(thresholds) < 0):
            raise DataError("thresholds must be sorted ascending")
        header = ["cell", "year", "month"] + [f"p_le_{_fmt(float(t))}" for t in thresholds]
        if ds.n_rows == 0:
            _write_csv(args.out, header, [])
            return EXIT_OK
        probs = M.threshold_probs(mix, X, thresholds, names=names)
        rows = [list(k) + list(p) for k, p in zip(keys, probs)]
        _write_csv(args.out, header, rows)
        return EXIT_OK

    model = B.load(args.model)
    Xa = D._align_features(X, names, model.feature_names)
    if model.loss.multiclass:
        header = ["cell", "year", "month", "p_zero", "p_med", "p_large"]
        if ds.n_rows == 0:
            _write_csv(args.out, header, [])
            return EXIT_OK
        probs = L.softmax(B.predict_raw(model, Xa))
        rows = [list(k) + list(p) for k, p in zip(keys, probs)]
    else:
        header = ["cell", "year", "month", "raw"]
        with_mean = model.loss.kind == "dgpd" and model.loss.alpha > 1.0
        if with_mean:
            header.append("mean")
        if ds.n_rows == 0:
            _write_csv(args.out, header, [])
            return EXIT_OK
        raw = B.predict_raw(model, Xa)
        if with_mean:
            means = L.dgpd_mean(raw, model.loss.alpha, tol=1e-8)
            rows = [list(k) + [float(r), float(mn)]
                    for k, r, mn in zip(keys, raw, means)]
        else:
            rows = [list(k) + [float(r)] for k, r in zip(keys, raw)]
    _write_csv(args.out, header, rows)
    return EXIT_OK


def _load_data_for_model(args) -> D.GridDataset:
    if not os.path.exists(args.data):
        raise ConfigError(f"data file {args.data!r} does not exist")
    if args.config:
        return _dataset_with_path(RunConfig(args.config), args.data)
    return D.load_csv(args.data)


def cmd_cvfolds(args) -> int:
    cfg = RunConfig(args.config)
    ds = cfg.load_dataset()
    params = cfg.mask_params(ds)
    n_folds = args.n_folds if args.n_folds is not None else cfg.getint("cv", "n_folds", 5)
    seed = args.seed if args.seed is not None else cfg.getint("cv", "seed", 0)
    folds = S.generate_folds(ds, params, n_folds=n_folds, seed=seed)
    S.save_folds(folds, ds, args.out)
    total = sum(len(folds.masks[f][r]) for f in range(n_folds) for r in S.RESPONSES)
    print(f"n_folds={n_folds}")
    print(f"validation_keys={total}")
    print(f"folds={args.out}")
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = RunConfig(args.config)
    ds = cfg.load_dataset()
    ds = D.cross_fill_zeros(ds)
    loss = cfg.loss_spec(args.loss)
    response = _response_for_loss(loss.kind, args.response or cfg.get("loss", "response"))
    folds = S.load_folds(args.folds, ds)
    base_params = cfg.train_params()
    seed = args.seed if args.seed is not None else base_params.seed

    box: dict[str, tuple[float, float]] = {}
    if cfg.cp.has_section("tune"):
        for key in cfg.cp["tune"]:
            lo_hi = [float(t) for t in cfg.get("tune", key).split(",")]
            if len(lo_hi) != 2:
                raise ConfigError(f"[tune] {key} must be 'lo, hi'")
            box[key] = (lo_hi[0], lo_hi[1])
    if not box:
        box = {"learning_rate": (0.02, 0.3), "max_leaves": (2, 16),
               "lambda_reg": (0.0, 10.0)}

    int_params = {"max_leaves"}
    loss_params = {"alpha", "xi", "k_shape"}

    def objective(point: dict) -> float:
        kwargs = {}
        lkw = {}
        for key, val in point.items():
            if key in int_params:
                kwargs[key] = int(round(val))
            elif key in loss_params:
                lkw[key] = float(val)
            else:
                kwargs[key] = float(val)
        params = B.TrainParams(**{**_params_dict(base_params), **kwargs})
        spec = loss if not lkw else L.LossSpec(**{**loss.hyperparams(), **lkw})
        recipe = R.BoosterRecipe(loss=spec, params=params, response=response,
                                 u=cfg.threshold_u(), metric="nll")
        cv = E.run_cv(ds, folds, recipe, response, checkpoints=[params.n_trees])
        return float(cv.mean[0])

    history = E.tune_loop(objective, box, n_iters=args.max_iters, seed=seed)
    names = list(box)
    _write_csv(args.out, ["iteration"] + names + ["score"],
               [[i] + [float(p[k]) for k in names] + [float(s)]
                for i, (p, s) in enumerate(history)])
    best = min(history, key=lambda hs: hs[1])
    for k in names:
        print(f"best_{k}={best[0][k]!r}")
    print(f"best_score={best[1]!r}")
    print(f"log={args.out}")
    return EXIT_OK


def _params_dict(p: B.TrainParams) -> dict:
    return {k: getattr(p, k) for k in
            ("n_trees", "learning_rate", "max_leaves", "lambda_reg", "eta",
             "colsample", "n_quantile_bins", "seed")}


def cmd_cv(args) -> int:
    cfg = RunConfig(args.config)
    ds = cfg.load_dataset()
    ds = D.cross_fill_zeros(ds)
    loss = cfg.loss_spec(args.loss)
    response = _response_for_loss(loss.kind, args.response or cfg.get("loss", "response"))
    folds = S.load_folds(args.folds, ds)
    params = cfg.train_params()
    try:
        checkpoints = sorted({int(t) for t in args.checkpoints.split(",")})
    except ValueError:
        raise ConfigError(f"--checkpoints must be comma-separated integers, "
                          f"got {args.checkpoints!r}") from None
    params = B.TrainParams(**{**_params_dict(params), "n_trees": max(checkpoints)})
    recipe = R.BoosterRecipe(loss=loss, params=params, response=response,
                             u=cfg.threshold_u(), metric="nll")
    cv = E.run_cv(ds, folds, recipe, response, checkpoints=checkpoints)
    E.save_cv_report(cv, args.out)
    selected = E.one_se_select(cv, direction=args.direction)
    print(f"selected_n_trees={selected}")
    print(f"min_mean_score={cv.mean.min()!r}")
    print(f"report={args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = RunConfig(args.config) if args.config else RunConfig(None)
    response = args.response or cfg.get("score", "response", "ba")
    ds = D.load_csv(args.data) if not args.config else _dataset_with_path(cfg, args.data)
    with open(args.pred, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["cell", "year", "month"]:
            raise DataError(f"{args.pred}: not a prediction export")
        prob_cols = header[3:]
        rows = list(reader)
    if args.thresholds:
        thresholds = _read_numbers(args.thresholds)
    else:
        try:
            thresholds = np.array([float(c.removeprefix("p_le_")) for c in prob_cols])
        except ValueError:
            raise DataError("cannot infer thresholds from prediction header; "
                            "pass --thresholds") from None
    weights_path = cfg.get("score", "weights")
    weights = _read_numbers(weights_path) if weights_path else None
    spec = E.ThresholdScoreSpec(thresholds, weights)
    if spec.thresholds.size != len(prob_cols):
        raise DataError("threshold count does not match prediction columns")
    probs = np.array([[float(v) for v in r[3:]] for r in rows]) \
        if rows else np.empty((0, len(prob_cols)))
    resp = ds.cnt if response == "cnt" else ds.ba
    observed = ~np.isnan(resp)
    if probs.shape[0] != ds.n_rows:
        raise DataError("prediction rows do not match data rows")
    score = E.threshold_score(probs[observed], resp[observed], spec)
    print(f"score={score!r}")
    return EXIT_OK


def _dataset_with_path(cfg: RunConfig, path: str) -> D.GridDataset:
    if not os.path.exists(path):
        raise ConfigError(f"data file {path!r} does not exist")
    if not cfg.cp.has_section("data"):
        cfg.cp.add_section("data")
    cfg.cp["data"]["train"] = path
    return cfg.load_dataset()


def cmd_pdp(args) -> int:
    model = B.load(args.model)
    ds = D.load_csv(args.data)
    X, names = ds.feature_matrix()
    Xa = D._align_features(X, names, model.feature_names)
    feats = [f.strip() for f in args.features.split(",")]
    idx = []
    for f in feats:
        if f not in model.feature_names:
            raise DataError(f"model has no feature {f!r}")
        idx.append(model.feature_names.index(f))
    grids = []
    for j in idx:
        col = Xa[:, j]
        col = col[~np.isnan(col)]
        grids.append(np.unique(np.quantile(col, np.linspace(0.0, 1.0, args.points))))
    mesh = np.stack([g.ravel() for g in np.meshgrid(*grids, indexing="ij")], axis=-1)

    transform = None
    if args.transform == "mean":
        if model.loss.kind != "dgpd" or model.loss.alpha <= 1.0:
            raise DataError("--transform mean needs a dgpd model with alpha > 1")
        transform = lambda raw: L.dgpd_mean(raw, model.loss.alpha, tol=1e-8)
    elif args.transform != "none":
        raise ConfigError(f"unknown transform {args.transform!r}")

    res = I.partial_dependence(model, Xa, idx, mesh, n_sub=args.n_sub,
                               transform=transform, seed=args.seed)
    header = feats + ["estimate", "lo", "hi"]
    rows = [list(map(float, res.grid[i])) + [float(res.estimate[i]), float(res.lo[i]),
                                             float(res.hi[i])]
            for i in range(res.grid.shape[0])]
    _write_csv(args.out, header, rows)
    print(f"points={res.grid.shape[0]}")
    print(f"pdp={args.out}")
    return EXIT_OK


def cmd_importance(args) -> int:
    model = B.load(args.model)
    imp = I.importance(model, metric=args.metric)
    _write_csv(args.out, ["feature", "proportion"],
               [[k, float(v)] for k, v in imp.items()])
    for k, v in imp.items():
        print(f"{k}={v!r}")
    print(f"importance={args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synth.synth_dataset(args.kind, n_years=args.years, nx=args.nx, ny=args.ny,
                             seed=args.seed, alpha=args.alpha,
                             mask_rate=args.mask_rate)
    D.save_csv(ds, args.out)
    print(f"rows={ds.n_rows}")
    print(f"data={args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evtboost",
                                     description="Extreme-value gradient boosting")
    parser.add_argument("--runlog", default="runs.log",
                        help="plaintext run log to append to")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a single-loss model")
    p.add_argument("--config", required=True)
    p.add_argument("--loss", default=None, choices=list(L.LOSS_KINDS))
    p.add_argument("--response", default=None, choices=["cnt", "ba"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict with a model or mixture manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--thresholds", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cvfolds", help="generate spatial validation folds")
    p.add_argument("--config", required=True)
    p.add_argument("--n-folds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cvfolds)

    p = sub.add_parser("cv", help="tree-count curve over spatial folds")
    p.add_argument("--config", required=True)
    p.add_argument("--folds", required=True)
    p.add_argument("--loss", default=None, choices=list(L.LOSS_KINDS))
    p.add_argument("--response", default=None, choices=["cnt", "ba"])
    p.add_argument("--checkpoints", default="25,50,100,200",
                   help="comma-separated tree counts to score")
    p.add_argument("--direction", default="largest", choices=["largest", "smallest"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("tune", help="Bayesian-optimization hyperparameter search")
    p.add_argument("--config", required=True)
    p.add_argument("--folds", required=True)
    p.add_argument("--loss", default=None, choices=list(L.LOSS_KINDS))
    p.add_argument("--response", default=None, choices=["cnt", "ba"])
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("score", help="threshold-score a prediction export")
    p.add_argument("--pred", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--response", default=None, choices=["cnt", "ba"])
    p.add_argument("--thresholds", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("pdp", help="partial dependence export")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--features", required=True, help="comma-separated feature names")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--n-sub", type=int, default=10000)
    p.add_argument("--transform", default="none", help="none or mean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pdp)

    p = sub.add_parser("importance", help="covariate importance export")
    p.add_argument("--model", required=True)
    p.add_argument("--metric", default="gain", choices=["gain", "coverage"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--kind", required=True, choices=["counts", "sizes"])
    p.add_argument("--years", type=int, default=2)
    p.add_argument("--nx", type=int, default=6)
    p.add_argument("--ny", type=int, default=6)
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--mask-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _append_runlog(path, command, config_hash, seed, wall, status) -> None:
    try:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(f"cmd={command} config_hash={config_hash} seed={seed} "
                     f"wall_time={wall:.3f}s status={status}\n")
    except OSError:
        pass  # the run log must never break the run


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that is a configuration error here
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG

    t0 = time.perf_counter()
    status = EXIT_OK
    try:
        status = args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        status = EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        status = EXIT_NUMERIC
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    finally:
        cfg_path = getattr(args, "config", None)
        if cfg_path and os.path.exists(cfg_path):
            with open(cfg_path, "rb") as fh:
                cfg_hash = hashlib.sha256(fh.read()).hexdigest()[:12]
        else:
            cfg_hash = hashlib.sha256(b"").hexdigest()[:12]
        seed = getattr(args, "seed", None)
        _append_runlog(args.runlog, args.command, cfg_hash,
                       seed if seed is not None else "NA",
                       time.perf_counter() - t0, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
