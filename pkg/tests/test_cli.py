import json

import numpy as np
import pytest

from optbin.cli import (
    DEFAULTS,
    TrainedModel,
    ValidationError,
    config_hash,
    derive_seed,
    evaluation_outputs,
    labels_for,
    main,
    resolve_config,
)
from optbin.labels import BinConfig
from optbin.market_data import load_dataset
from optbin.metrics import em_vs_binwidth


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def fast_config(workdir):
    p = workdir / "fast.json"
    p.write_text(json.dumps({"gbt": {"n_rounds": 8}, "ann": {"epochs": 5}}))
    return str(p)


@pytest.fixture(scope="module")
def ingested(workdir, fixture_paths):
    out = workdir / "ingest"
    rc = main(["ingest", "--out", str(out), "--underlying", fixture_paths["underlying"],
               "--options", fixture_paths["options"], "--yields", fixture_paths["yields"]])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def synthetic_ingested(workdir):
    cfg = workdir / "syn.json"
    cfg.write_text(json.dumps({"synthetic": {"sigma": 0.15, "days": 45, "s0": 8000.0}}))
    out = workdir / "syn"
    assert main(["ingest", "--config", str(cfg), "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained(workdir, ingested, fast_config):
    out = workdir / "train"
    rc = main(["train", "--config", fast_config, "--out", str(out), "--dataset", str(ingested / "dataset.json")])
    assert rc == 0
    return out


def test_ingest_fixture(ingested):
    report = json.loads((ingested / "drops.json").read_text())
    # counted on the bundled fixture
    assert report["n_records"] == 216 and report["n_input"] == 1824
    assert report["drops"] == {"expired": 24, "insufficient_window": 912, "moneyness": 395, "ttm": 444,
                               "untraded": 89}
    ds = load_dataset(ingested / "dataset.json")
    assert (len(ds.train), len(ds.test)) == (151, 65)
    assert json.loads((ingested / "dataset.json").read_text())["config_hash"] == report["config_hash"]


def test_ingest_empty_and_missing(tmp_path, fixture_paths):
    empty = tmp_path / "o.csv"
    empty.write_text("date,expiry,strike,close,prev_close,volume\n")
    base = ["ingest", "--out", str(tmp_path / "o"), "--underlying", fixture_paths["underlying"]]
    assert main(base + ["--options", str(empty), "--yields", fixture_paths["yields"]]) == 1
    assert main(base + ["--options", fixture_paths["options"], "--yields", str(tmp_path / "none.csv")]) == 2
    assert main(base + ["--options", fixture_paths["options"]]) == 1


def test_train_outputs(trained):
    model = json.loads((trained / "model.json").read_text())
    report = json.loads((trained / "train_report.json").read_text())
    assert model["learner"] == "gbt" and model["config_hash"] == report["config_hash"]
    assert report["n_train"] == 151
    lines = (trained / "gbt_loss.csv").read_text().splitlines()
    assert lines[0] == f"# config_hash={report['config_hash']}"
    losses = [float(l.split(",")[1]) for l in lines[2:]]
    assert len(losses) == 8
    assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))


def test_train_is_reproducible(workdir, ingested, fast_config, trained):
    out = workdir / "train_again"
    assert main(["train", "--config", fast_config, "--out", str(out), "--dataset", str(ingested / "dataset.json")]) == 0
    assert (out / "model.json").read_bytes() == (trained / "model.json").read_bytes()


def test_train_pooled(workdir, ingested, synthetic_ingested, fast_config):
    out = workdir / "pooled"
    rc = main(["train", "--config", fast_config, "--out", str(out), "--learner", "ensemble",
               "--dataset", str(ingested / "dataset.json"), "--dataset", str(synthetic_ingested / "dataset.json")])
    assert rc == 0
    n_syn = len(load_dataset(synthetic_ingested / "dataset.json").train)
    assert json.loads((out / "train_report.json").read_text())["n_train"] == 151 + n_syn
    assert (out / "ann_loss.csv").exists() and (out / "gbt_loss.csv").exists()


def test_train_validation_errors(tmp_path, ingested):
    ds = str(ingested / "dataset.json")
    assert main(["train", "--out", str(tmp_path), "--dataset", ds, "--approach", "4"]) == 1
    assert main(["train", "--out", str(tmp_path)]) == 1
    assert main(["train", "--out", str(tmp_path), "--dataset", str(tmp_path / "missing.json")]) == 2


class Perfect:
    def __init__(self, labels):
        self.labels = labels

    def predict(self, X):
        return self.labels


def test_evaluate_perfect_stub(tmp_path, ingested):
    recs = load_dataset(ingested / "dataset.json").test
    bins = BinConfig()
    m = evaluation_outputs(Perfect(labels_for(recs, bins)), recs, bins, tmp_path, "abc")
    assert m["em"] == 0.0 and m["rho"] == 0.0 and m["accuracy"] == 1.0
    assert m["regression"]["slope"] == pytest.approx(1.0, abs=0.02)
    for name in ("error_cdf.csv", "scatter.csv", "iv_band.csv"):
        assert (tmp_path / name).read_text().startswith("# config_hash=abc\n")
    assert (tmp_path / "error_cdf.csv").read_text().splitlines()[2] == "0.0,1.0"


def test_evaluate_cross_asset(workdir, trained, synthetic_ingested):
    out = workdir / "cross"
    rc = main(["evaluate", "--out", str(out), "--model", str(trained / "model.json"),
               "--dataset", str(synthetic_ingested / "dataset.json")])
    assert rc == 0
    m = json.loads((out / "metrics.json").read_text())
    assert m["n"] == len(load_dataset(synthetic_ingested / "dataset.json").test)
    assert 0 <= m["rho"] <= 1 and m["em"] >= 0 and "bs_benchmark" in m


def test_evaluate_feature_mismatch(tmp_path, trained, ingested):
    rc = main(["evaluate", "--out", str(tmp_path), "--model", str(trained / "model.json"),
               "--dataset", str(ingested / "dataset.json"), "--approach", "2"])
    assert rc == 1
    model = TrainedModel.load(trained / "model.json")
    with pytest.raises(ValidationError):
        model.predict(np.zeros((3, 17)))


def test_sweep(workdir, trained):
    out = workdir / "sweep"
    rc = main(["sweep", "--out", str(out), "--model", str(trained / "model.json"), "--sigma-grid", "0.12,0.04,0.08",
               "--days", "40"])
    assert rc == 0
    rows = (out / "emv.csv").read_text().splitlines()
    assert rows[0].startswith("# config_hash=")
    assert [r.split(",")[0] for r in rows[2:]] == ["0.04", "0.08", "0.12"]
    assert main(["sweep", "--out", str(out), "--model", str(workdir / "nope.json")]) == 2


def test_sweep_rejects_other_approaches(tmp_path, ingested, fast_config):
    assert main(["train", "--config", fast_config, "--out", str(tmp_path), "--approach", "2",
                 "--dataset", str(ingested / "dataset.json")]) == 0
    assert main(["sweep", "--out", str(tmp_path), "--model", str(tmp_path / "model.json")]) == 1


def test_binwidth_study(workdir, ingested, fast_config):
    out = workdir / "bw"
    ds = str(ingested / "dataset.json")
    assert main(["binwidth-study", "--config", fast_config, "--out", str(out), "--dataset", ds, "--widths", "0.1"]) == 0
    rows = (out / "em_vs_width.csv").read_text().splitlines()
    assert rows[1] == "width,em" and len(rows) == 3
    cfg = resolve_config(fast_config)
    from optbin.cli import fit

    ((_, direct),) = em_vs_binwidth(load_dataset(ds), [0.1], lambda X, y, b: fit(cfg, X, y, b))
    assert float(rows[2].split(",")[1]) == direct
    assert main(["binwidth-study", "--out", str(out), "--dataset", ds, "--widths", "0.1,0"]) == 1


def test_config_precedence(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 5, "learner": "ann", "gbt": {"n_rounds": 3}}))
    cfg = resolve_config(p, {"learner": "ensemble", "approach": None})
    assert cfg["seed"] == 5 and cfg["learner"] == "ensemble" and cfg["approach"] == DEFAULTS["approach"]
    assert cfg["gbt"] == {"n_rounds": 3}
    p.write_text(json.dumps({"colour": 1}))
    with pytest.raises(ValidationError):
        resolve_config(p)


def test_hash_and_seed_derivation():
    a = resolve_config(None, {"seed": 1})
    assert config_hash(a) == config_hash(resolve_config(None, {"seed": 1}))
    assert config_hash(a) != config_hash(resolve_config(None, {"seed": 2}))
    assert derive_seed(1, "ann") == derive_seed(1, "ann")
    assert len({derive_seed(1, "ann"), derive_seed(1, "sweep"), derive_seed(2, "ann")}) == 3


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "optbin", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "binwidth-study" in res.stdout
