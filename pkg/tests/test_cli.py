import json
import os
import xml.etree.ElementTree as ET

import pytest

from drivegen import cli
from drivegen.trajectory import ScenarioLabel, load_dataset, rule_label

SMALL = [
    "synth.cutin=40", "synth.driveby_left=20", "synth.driveby_right=20",
    "ae.hidden=8", "ae.latent=4", "ae.epochs=2",
    "len.iters=50", "len.hidden=8",
    "lgan.width=8", "lgan.depth=1", "lgan.noise_dim=4", "lgan.iters=5", "lgan.batch=16",
    "rcgan.hidden=4", "rcgan.disc_hidden=4", "rcgan.noise_dim=2", "rcgan.iters=3", "rcgan.batch=4",
    "sample.n=20", "eval.n=5", "eval.runs=2",
    "cluster.method=pca", "cluster.eps=0.5,1.0", "cluster.min_neighbors=3",
    "outliers.k=5",
]

STEPS = [["synth"], ["train", "ae"], ["train", "len"], ["train", "lgan"], ["train", "rcgan"],
         ["sample"], ["sample", "--override", "sample.source=rcgan",
                      "--override", "sample.output=rc.jsonl",
                      "--override", "sample.lengths=30:3,70:2"],
         ["eval"], ["cluster"], ["outliers"],
         ["plot", "--override", "plot.input=data.jsonl"]]


def run_cli(out, *args, overrides=SMALL, seed=7):
    argv = [*args, "--out", str(out), "--seed", str(seed)]
    for o in overrides:
        argv += ["--override", o]
    return cli.main(argv)


def run_pipeline(out):
    for step in STEPS:
        assert run_cli(out, *step) == 0, step


def snapshot(out):
    return {name: (out / name).read_bytes() for name in sorted(os.listdir(out))}


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory):
    a, b = tmp_path_factory.mktemp("a"), tmp_path_factory.mktemp("b")
    run_pipeline(a)
    run_pipeline(b)
    return a, b


def test_pipeline_is_byte_reproducible(pipeline_dirs):
    a, b = pipeline_dirs
    sa, sb = snapshot(a), snapshot(b)
    assert sa.keys() == sb.keys()
    for name in sa:
        assert sa[name] == sb[name], name


def test_every_stage_writes_resolved_config(pipeline_dirs):
    a, _ = pipeline_dirs
    for name in ("synth", "train-ae", "train-len", "train-lgan", "train-rcgan", "sample",
                 "eval", "cluster", "outliers", "plot"):
        text = (a / f"{name}.config").read_text()
        assert "seed = 7\n" in text and "ae.hidden = 8\n" in text


def test_pipeline_outputs(pipeline_dirs):
    a, _ = pipeline_dirs
    assert len(load_dataset(a / "data.jsonl")) == 80
    samples = load_dataset(a / "samples.jsonl")
    assert len(samples) == 20 and all(30 <= len(t) <= 70 for t in samples)
    assert sorted(len(t) for t in load_dataset(a / "rc.jsonl")) == [30, 30, 30, 70, 70]
    prov = json.loads((a / "samples.jsonl.provenance.json").read_text())
    assert prov["source"] == "lgan" and prov["n"] == 20
    rows = (a / "eval.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2 + 2 * 3  # raw runs plus min/max/avg for both sets
    assert (a / "embedding.csv").read_text().splitlines()[0] == "id,label,x0,x1,cluster"
    assert len((a / "outliers.csv").read_text().splitlines()) == 81
    svg = ET.parse(a / "outliers.svg").getroot()
    assert len(svg.findall(".//{http://www.w3.org/2000/svg}path")) == 5
    for name in ("plot.svg", "matched_curve.svg", "embedding.svg"):
        ET.parse(a / name)


def test_synth_counts_and_noiseless_labels(tmp_path):
    assert run_cli(tmp_path, "synth", overrides=["synth.cutin=30", "synth.driveby_left=20",
                                                  "synth.noise_std=0.0"]) == 0
    ds = load_dataset(tmp_path / "data.jsonl")
    assert sum(t.label is ScenarioLabel.CutIn for t in ds) == 30
    assert sum(rule_label(t) is t.label for t in ds) / len(ds) >= 0.99


def test_ae_sweep_writes_one_checkpoint_per_size(tmp_path):
    ov = ["synth.cutin=20", "ae.hidden=4,6,8", "ae.latent=3", "ae.epochs=1"]
    assert run_cli(tmp_path, "synth", overrides=ov) == 0
    assert run_cli(tmp_path, "train", "ae", overrides=ov) == 0
    for hs in (4, 6, 8):
        assert (tmp_path / f"ae-h{hs}.sfck").exists()
    hist = (tmp_path / "ae_history.csv").read_text().splitlines()
    assert hist[0] == "hidden,epoch,train_loss,val_loss" and len(hist) == 4
    assert json.loads((tmp_path / "ae_sweep.json").read_text())["best_hidden"] in (4, 6, 8)


def test_unknown_key_is_config_error(tmp_path, capsys):
    assert run_cli(tmp_path, "synth", overrides=["ae.hiden=3"]) == 2
    assert "ae.hiden" in capsys.readouterr().err


def test_bad_config_file_reports_line(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nseed = 3\nsynth.cutin = many\n")
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "run.cfg:3" in capsys.readouterr().err


def test_config_file_then_seed_then_override():
    cfg = cli.RunConfig.defaults()
    cfg.update_from_text("seed = 3\nae.hidden = 32, 64\n")
    assert cfg["seed"] == 3 and cfg["ae.hidden"] == [32, 64]
    back = cli.RunConfig.defaults()
    back.update_from_text(cfg.to_text())
    assert back.values == cfg.values


def test_missing_upstream_artifact_names_the_stage(tmp_path, capsys):
    assert run_cli(tmp_path, "synth", overrides=["synth.cutin=5"]) == 0
    assert run_cli(tmp_path, "train", "lgan") == 3
    err = capsys.readouterr().err
    assert "train ae" in err and "ae.sfck" in err
    assert run_cli(tmp_path / "empty", "train", "ae") == 3


def test_len_from_other_ae_is_rejected(tmp_path, pipeline_dirs):
    a, _ = pipeline_dirs
    ov = ["synth.cutin=20", "ae.hidden=4", "ae.latent=4", "ae.epochs=1"]
    assert run_cli(tmp_path, "synth", overrides=ov) == 0
    assert run_cli(tmp_path, "train", "ae", overrides=ov) == 0
    other_len = str(a / "len.sfck")
    assert run_cli(tmp_path, "train", "lgan", overrides=ov + [f"len.checkpoint={other_len}"]) == 2


def test_plot_of_empty_file_is_axes_only(tmp_path):
    (tmp_path / "empty.jsonl").write_text("")
    assert run_cli(tmp_path, "plot", overrides=["plot.input=empty.jsonl"]) == 0
    root = ET.parse(tmp_path / "plot.svg").getroot()
    assert root.findall(".//{http://www.w3.org/2000/svg}path") == []


def test_plot_rejects_unknown_kind(tmp_path):
    (tmp_path / "empty.jsonl").write_text("")
    assert run_cli(tmp_path, "plot", overrides=["plot.input=empty.jsonl", "plot.kind=pie"]) == 2
