"""Command-line driver: ``optbin {ingest,train,evaluate,sweep,binwidth-study}``.

Every command reads an optional JSON config (``--config``); explicit flags
override its keys, and keys missing from both fall back to ``DEFAULTS``.
Artifacts go under ``--out DIR`` and carry a hash of the effective config.
Exit status is 0 on success, 1 for invalid input and 2 for I/O failures.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
import zlib
from collections import Counter
from dataclasses import fields
from pathlib import Path

import numpy as np

from .black_scholes import bs_benchmark, iv_band_series
from .ensemble import EnsembleModel
from .features import N_FEATURES, feature_matrix
from .gbt import GbtConfig, GbtModel, boost
from .labels import BinConfig, bin_of, mid_price, scaled_output
from .market_data import (
    SplitDataset,
    build_records,
    chronological_split,
    filter_records,
    load_dataset,
    parse_option_csv,
    parse_underlying_csv,
    parse_yield_csv,
    save_dataset,
)
from .metrics import em_vs_binwidth, error_distribution, evaluate, orthogonal_regression, write_rows_csv
from .mlp import MlpModel, MlpTrainConfig, train as train_mlp
from .simulator import DEFAULT_SIGMA_GRID, DEFAULT_TTMS, GbmConfig, emv_sweep, synthetic_dataset

log = logging.getLogger("optbin")

MODEL_FORMAT = "optbin.model"
LEARNERS = ("ann", "gbt", "ensemble")

DEFAULTS = {
    "seed": 0,
    "approach": 1,
    "learner": "gbt",
    "bin_width": 0.1,
    "n_classes": 50,
    "train_fraction": 0.7,
    "underlying": None,
    "options": None,
    "yields": None,
    "synthetic": None,  # {"sigma": ..., "days": ..., ...} replaces the CSV inputs in ingest
    "datasets": [],
    "dataset": None,
    "split": "test",
    "model": None,
    "ann": {},
    "gbt": {},
    "sweep": {"sigma_grid": list(DEFAULT_SIGMA_GRID), "days": 500, "ttms": list(DEFAULT_TTMS), "repetitions": 1},
    "widths": [0.075, 0.1, 0.25, 0.5],
    "width_upper": 5.0,
}


class ValidationError(ValueError):
    pass


# ---- config -------------------------------------------------------------


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(config_path=None, overrides=None) -> dict:
    """Defaults, then the JSON file, then flag overrides (``None`` values ignored)."""
    cfg = copy.deepcopy(DEFAULTS)
    if config_path:
        with open(config_path) as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = _merge(cfg, user)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            outer, inner = key.split(".", 1)
            cfg[outer] = {**cfg[outer], inner: value}
        else:
            cfg[key] = value
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["approach"] not in (1, 2, 3):
        raise ValidationError(f"approach must be 1, 2 or 3, got {cfg['approach']!r}")
    if cfg["learner"] not in LEARNERS:
        raise ValidationError(f"learner must be one of {LEARNERS}, got {cfg['learner']!r}")
    try:
        BinConfig(cfg["bin_width"], cfg["n_classes"])
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    if not isinstance(cfg["seed"], int):
        raise ValidationError("seed must be an integer")


def config_hash(cfg: dict) -> str:
    """Short digest of the effective config, ignoring where outputs go."""
    payload = {k: v for k, v in cfg.items() if k != "out"}
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def derive_seed(root: int, stage: str) -> int:
    """Per-stage seed drawn from the root seed and the stage name."""
    return int(np.random.SeedSequence([root, zlib.crc32(stage.encode())]).generate_state(1)[0])


def bins_of(cfg) -> BinConfig:
    return BinConfig(cfg["bin_width"], cfg["n_classes"])


def _dataclass_kwargs(cls, d, section):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValidationError(f"unknown {section} settings: {', '.join(sorted(unknown))}")
    return dict(d)


def mlp_config(cfg, n_classes=None) -> MlpTrainConfig:
    kw = _dataclass_kwargs(MlpTrainConfig, cfg["ann"], "ann")
    kw["n_classes"] = n_classes or cfg["n_classes"]
    kw.setdefault("seed", derive_seed(cfg["seed"], "ann"))
    if "hidden" in kw:
        kw["hidden"] = tuple(kw["hidden"])
    return MlpTrainConfig(**kw)


def gbt_config(cfg, n_classes=None) -> GbtConfig:
    kw = _dataclass_kwargs(GbtConfig, cfg["gbt"], "gbt")
    kw["n_classes"] = n_classes or cfg["n_classes"]
    return GbtConfig(**kw)


# ---- models ---------------------------------------------------------------


class TrainedModel:
    """A learner plus the feature approach and bins it was trained with."""

    def __init__(self, learner, approach, bins, ann=None, gbt=None, n_features=None):
        self.learner = learner
        self.approach = approach
        self.bins = bins
        self.ann = ann
        self.gbt = gbt
        self.n_features = n_features or N_FEATURES[approach]

    @property
    def predictor(self):
        if self.learner == "ensemble":
            return EnsembleModel(self.ann, self.gbt)
        return self.ann if self.learner == "ann" else self.gbt

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValidationError(f"model expects {self.n_features} features, got {X.shape[-1]}")
        return self.predictor.predict(X)

    def to_dict(self, **meta):
        return {
            "format": MODEL_FORMAT,
            "version": 1,
            **meta,
            "learner": self.learner,
            "approach": self.approach,
            "n_features": self.n_features,
            "bin_width": self.bins.width,
            "n_classes": self.bins.n_classes,
            "ann": self.ann.to_dict() if self.ann else None,
            "gbt": self.gbt.to_dict() if self.gbt else None,
        }

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        if d.get("format") != MODEL_FORMAT:
            raise ValidationError(f"{path}: not an {MODEL_FORMAT} document")
        return cls(
            d["learner"],
            d["approach"],
            BinConfig(d["bin_width"], d["n_classes"]),
            MlpModel.from_dict(d["ann"]) if d["ann"] else None,
            GbtModel.from_dict(d["gbt"]) if d["gbt"] else None,
            d["n_features"],
        )


def fit(cfg, X, y, bins: BinConfig | None = None) -> TrainedModel:
    bins = bins or bins_of(cfg)
    learner = cfg["learner"]
    ann = gbt = None
    if learner in ("ann", "ensemble"):
        ann = train_mlp(X, y, mlp_config(cfg, bins.n_classes))
    if learner in ("gbt", "ensemble"):
        gbt = boost(X, y, gbt_config(cfg, bins.n_classes))
    return TrainedModel(learner, cfg["approach"], bins, ann, gbt, X.shape[1])


def labels_for(records, bins):
    if not records:
        return np.zeros(0, dtype=np.int64)
    return bin_of(scaled_output([r.close for r in records], [r.strike for r in records]), bins)


# ---- commands ---------------------------------------------------------------


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_ingest(cfg, out: Path):
    h = config_hash(cfg)
    drops = Counter()
    if cfg["synthetic"]:
        syn = dict(cfg["synthetic"])
        syn.setdefault("seed", derive_seed(cfg["seed"], "synthetic"))
        ttms = tuple(syn.pop("ttms", DEFAULT_TTMS))
        records = filter_records(synthetic_dataset(GbmConfig(**syn), ttms), drops)
        n_raw = len(records)
    else:
        missing = [k for k in ("underlying", "options", "yields") if not cfg[k]]
        if missing:
            raise ValidationError(f"ingest needs paths for: {', '.join(missing)}")
        bars = parse_underlying_csv(cfg["underlying"])
        quotes = parse_option_csv(cfg["options"])
        yields = parse_yield_csv(cfg["yields"])
        n_raw = len(quotes)
        records = filter_records(build_records(bars, quotes, yields, drops), drops)
    if not records:
        raise ValidationError("no records survive ingestion")
    split = chronological_split(records, cfg["train_fraction"])
    save_dataset(out / "dataset.json", split, config_hash=h)
    report = {
        "config_hash": h,
        "n_input": n_raw,
        "n_records": len(records),
        "n_train": len(split.train),
        "n_test": len(split.test),
        "drops": dict(sorted(drops.items())),
    }
    _write_json(out / "drops.json", report)
    log.info("ingested %d records (%d train / %d test)", len(records), len(split.train), len(split.test))
    return report


def _pooled_train(paths):
    if not paths:
        raise ValidationError("no dataset given")
    pooled = SplitDataset()
    for p in paths:
        ds = load_dataset(p)
        pooled.train += ds.train
        pooled.test += ds.test
    return pooled


def cmd_train(cfg, out: Path):
    h = config_hash(cfg)
    paths = list(cfg["datasets"]) or ([cfg["dataset"]] if cfg["dataset"] else [])
    data = _pooled_train(paths)
    if not data.train:
        raise ValidationError("training split is empty")
    bins = bins_of(cfg)
    X = feature_matrix(data.train, cfg["approach"])
    y = labels_for(data.train, bins)
    model = fit(cfg, X, y, bins)
    _write_json(out / "model.json", model.to_dict(config_hash=h))
    report = {"config_hash": h, "datasets": [str(p) for p in paths], "n_train": len(X), "learner": cfg["learner"]}
    if model.ann is not None:
        model.ann.write_loss_csv(out / "ann_loss.csv")
        report["ann_epochs"] = len(model.ann.history)
        report["ann_final_loss"] = model.ann.history[-1][1]
    if model.gbt is not None:
        write_rows_csv(out / "gbt_loss.csv", ["round", "train_loss"], enumerate(model.gbt.history, 1), f"config_hash={h}")
        report["gbt_final_loss"] = model.gbt.history[-1] if model.gbt.history else None
    _write_json(out / "train_report.json", report)
    return report


def evaluation_outputs(predictor, records, bins: BinConfig, out: Path, h: str, approach: int = 1):
    """Score ``predictor`` on ``records`` and write metrics, CDF, scatter and IV band files."""
    if not records:
        raise ValidationError("no records to evaluate")
    X = feature_matrix(records, approach)
    actual = labels_for(records, bins)
    pred = np.asarray(predictor.predict(X), dtype=float)
    report = evaluate(actual, pred, bins)
    strikes = np.array([r.strike for r in records])
    closes = np.array([r.close for r in records])
    mids = mid_price(pred, strikes, bins)
    reg = orthogonal_regression(mids, closes)
    dist = error_distribution(actual, pred)
    bench = bs_benchmark(records, bins)
    bench_report = evaluate(actual, bench.labels, bins)
    band = iv_band_series(records, pred, bins)

    metrics = json.loads(report.to_json())
    metrics.update(
        config_hash=h,
        regression={"slope": reg.slope, "intercept": reg.intercept},
        bs_benchmark={"em": bench_report.em, "rho": bench_report.rho, "accuracy": bench_report.accuracy,
                      "floored": int(np.sum(bench.floored))},
        iv_band={"hit_rate": band.hit_rate, "n_dates": len(band.points), "dropped_dates": band.dropped_dates},
    )
    _write_json(out / "metrics.json", metrics)
    write_rows_csv(out / "error_cdf.csv", ["error", "cdf"], dist.cdf, f"config_hash={h}")
    write_rows_csv(
        out / "scatter.csv",
        ["date", "strike", "actual_close", "predicted_mid", "actual_bin", "predicted_bin"],
        [(r.date.isoformat(), float(r.strike), float(c), float(m), int(a), float(p))
         for r, c, m, a, p in zip(records, closes, mids, actual, pred)],
        f"config_hash={h}",
    )
    band.write_csv(out / "iv_band.csv", f"config_hash={h}")
    return metrics


def cmd_evaluate(cfg, out: Path):
    h = config_hash(cfg)
    if not cfg["model"]:
        raise ValidationError("evaluate needs a model file")
    model = TrainedModel.load(cfg["model"])
    if cfg["approach"] != model.approach:
        raise ValidationError(f"model uses approach {model.approach} features, config asks for {cfg['approach']}")
    paths = list(cfg["datasets"]) or ([cfg["dataset"]] if cfg["dataset"] else [])
    if not paths:
        raise ValidationError("evaluate needs a dataset")
    records = []
    for p in paths:
        ds = load_dataset(p)
        if cfg["split"] == "test":
            records += ds.test
        elif cfg["split"] == "train":
            records += ds.train
        elif cfg["split"] == "all":
            records += ds.train + ds.test
        else:
            raise ValidationError(f"split must be train, test or all, got {cfg['split']!r}")
    return evaluation_outputs(model, records, model.bins, out, h, model.approach)


def cmd_sweep(cfg, out: Path):
    h = config_hash(cfg)
    if not cfg["model"]:
        raise ValidationError("sweep needs a model file")
    model = TrainedModel.load(cfg["model"])
    if model.approach != 1:
        raise ValidationError("the volatility sweep only supports Approach I models")
    sw = cfg["sweep"]
    grid = [float(s) for s in sw["sigma_grid"]]
    if not grid or min(grid) <= 0:
        raise ValidationError("sigma grid must be non-empty and positive")
    base = GbmConfig(sigma=grid[0], days=int(sw["days"]), seed=derive_seed(cfg["seed"], "sweep"))
    curve = emv_sweep(model, base, grid, model.bins, tuple(sw["ttms"]), repetitions=int(sw["repetitions"]))
    curve.write_csv(out / "emv.csv", f"config_hash={h}")
    summary = {"config_hash": h, "emv": curve.emv, "em_at_emv": curve.em_at(curve.emv)}
    _write_json(out / "sweep.json", summary)
    return summary


def cmd_binwidth_study(cfg, out: Path):
    h = config_hash(cfg)
    widths = [float(w) for w in cfg["widths"]]
    if not widths:
        raise ValidationError("no bin widths given")
    if any(w <= 0 for w in widths):
        raise ValidationError(f"bin widths must be positive, got {widths}")
    paths = list(cfg["datasets"]) or ([cfg["dataset"]] if cfg["dataset"] else [])
    data = _pooled_train(paths)
    rows = em_vs_binwidth(data, widths, lambda X, y, bins: fit(cfg, X, y, bins), cfg["approach"], cfg["width_upper"])
    write_rows_csv(out / "em_vs_width.csv", ["width", "em"], rows, f"config_hash={h}")
    return rows


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "binwidth-study": cmd_binwidth_study,
}


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="optbin", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--approach", type=int)
        s.add_argument("--learner", choices=LEARNERS)
        s.add_argument("--bin-width", dest="bin_width", type=float)
        s.add_argument("--n-classes", dest="n_classes", type=int)
        if name == "ingest":
            s.add_argument("--underlying")
            s.add_argument("--options")
            s.add_argument("--yields")
            s.add_argument("--train-fraction", dest="train_fraction", type=float)
        if name in ("train", "evaluate", "binwidth-study"):
            s.add_argument("--dataset", dest="datasets", action="append", help="dataset file (repeat to pool)")
        if name in ("evaluate", "sweep"):
            s.add_argument("--model")
        if name == "evaluate":
            s.add_argument("--split", choices=("train", "test", "all"))
        if name == "sweep":
            s.add_argument("--sigma-grid", dest="sweep.sigma_grid", type=_floats, help="comma-separated volatilities")
            s.add_argument("--days", dest="sweep.days", type=int)
            s.add_argument("--repetitions", dest="sweep.repetitions", type=int)
        if name == "binwidth-study":
            s.add_argument("--widths", type=_floats, help="comma-separated bin widths")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out", "verbose")}
    try:
        cfg = resolve_config(args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except OSError as exc:
        print(f"optbin: I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError) as exc:
        print(f"optbin: invalid input: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
