"""Command-line pipeline.

    drivegen synth    --out run/
    drivegen train ae --out run/ --override ae.hidden=32,64,128
    drivegen train len --out run/
    drivegen train lgan --out run/
    drivegen sample   --out run/ --override sample.source=rcgan

All stages of one experiment share an output directory: later stages find
earlier artifacts there unless a path key points elsewhere.  Every run
writes the fully resolved configuration it used next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import analysis, plot
from .autoencoder import (AeConfig, AeModel, LenConfig, LenModel, TrainingError, config_dict,
                          encode_dataset, latent_dataset, reconstruction_losses,
                          train_autoencoder, train_length_estimator)
from .generators import (LatentGanConfig, LatentGanModel, LatentSpaceMismatch, RcganConfig,
                         RcganModel, ae_digest, generate_trajectories, sample_rcgan,
                         train_latent_gan, train_rcgan)
from .metrics import (ProtocolError, baseline_split_eval, evaluate_sets, format_tables,
                      matched_curve_csv, stats_csv)
from .nn import CheckpointError, NumericError, load_checkpoint, save_checkpoint, stream
from .trajectory import (Dataset, DatasetError, NormStats, ScenarioLabel, SynthParams,
                         fit_normalization, load_dataset, normalize, save_dataset, synth_dataset)

log = logging.getLogger("drivegen")

EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 2, 3, 4


class ConfigError(ValueError):
    pass


class MissingArtifact(FileNotFoundError):
    pass


# -- configuration ------------------------------------------------------------------------

# key -> (type, default).  Types: int, float, str, bool, "ints", "floats", "counts".
SCHEMA: dict[str, tuple] = {
    "seed": (int, 0),
    "data": (str, "data.jsonl"),
    "ae.checkpoint": (str, "ae.sfck"),
    "len.checkpoint": (str, "len.sfck"),
    "lgan.checkpoint": (str, "lgan.sfck"),
    "rcgan.checkpoint": (str, "rcgan.sfck"),
    "synth.cutin": (int, 500),
    "synth.driveby_left": (int, 0),
    "synth.driveby_right": (int, 0),
    "synth.noise_std": (float, 0.15),
    "synth.lane_offset": (float, 3.5),
    "synth.decel_fraction": (float, 0.15),
    "ae.hidden": ("ints", [64]),
    "ae.latent": (int, 32),
    "ae.epochs": (int, 100),
    "ae.lr": (float, 1e-3),
    "ae.val_fraction": (float, 0.1),
    "ae.max_batch": (int, 32),
    "len.hidden": ("ints", [64, 64]),
    "len.iters": (int, 3000),
    "len.lr": (float, 3e-3),
    "len.holdout": (float, 0.2),
    "lgan.mode": (str, "wgan-gp"),
    "lgan.arch": (str, "resnet"),
    "lgan.width": (int, 64),
    "lgan.depth": (int, 2),
    "lgan.noise_dim": (int, 16),
    "lgan.iters": (int, 2000),
    "lgan.batch": (int, 64),
    "lgan.lr": (float, 1e-4),
    "lgan.n_critic": (int, 5),
    "lgan.lambda_gp": (float, 10.0),
    "rcgan.hidden": (int, 32),
    "rcgan.layers": (int, 2),
    "rcgan.disc_hidden": (int, 32),
    "rcgan.noise_dim": (int, 8),
    "rcgan.iters": (int, 5000),
    "rcgan.batch": (int, 32),
    "rcgan.lr": (float, 1e-3),
    "sample.source": (str, "lgan"),
    "sample.n": (int, 200),
    "sample.lengths": ("counts", {30: 50, 70: 50}),
    "sample.output": (str, "samples.jsonl"),
    "eval.generated": (str, "samples.jsonl"),
    "eval.real": (str, "data.jsonl"),
    "eval.runs": (int, 5),
    "eval.m_over_n": (int, 4),
    "eval.n": (int, 0),
    "eval.truncate": (float, 0.75),
    "eval.baseline": (bool, True),
    "cluster.method": (str, "tsne"),
    "cluster.k": (int, 2),
    "cluster.perplexity": (float, 30.0),
    "cluster.iters": (int, 1000),
    "cluster.eps": ("floats", [1.0, 2.0, 3.0, 4.0, 5.0]),
    "cluster.min_neighbors": ("ints", [5, 10, 20]),
    "cluster.balance": (bool, True),
    "outliers.k": (int, 10),
    "plot.kind": (str, "lines"),
    "plot.input": (str, ""),
    "plot.output": (str, "plot.svg"),
    "plot.xlabel": (str, ""),
    "plot.ylabel": (str, ""),
    "plot.title": (str, ""),
}


def _parse_value(key: str, text: str):
    kind = SCHEMA[key][0]
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind in (int, float, str):
            return kind(text)
        if kind == "ints":
            return [int(v) for v in text.split(",") if v.strip()]
        if kind == "floats":
            return [float(v) for v in text.split(",") if v.strip()]
        if kind == "counts":
            out = {}
            for item in text.split(","):
                if item.strip():
                    k, v = item.split(":")
                    out[int(k)] = int(v)
            return out
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    raise AssertionError(kind)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, dict):
        return ",".join(f"{k}:{n}" for k, n in v.items())
    if isinstance(v, list):
        return ",".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({k: _copy(v[1]) for k, v in SCHEMA.items()})

    def set(self, key: str, text: str) -> None:
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _parse_value(key, text)

    def update_from_text(self, text: str, origin: str = "<config>") -> None:
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{origin}:{lineno}: expected key = value")
            key, val = line.split("=", 1)
            try:
                self.set(key, val)
            except ConfigError as exc:
                raise ConfigError(f"{origin}:{lineno}: {exc}") from None

    def __getitem__(self, key):
        return self.values[key]

    def to_text(self) -> str:
        return "".join(f"{k} = {_format_value(self.values[k])}\n" for k in sorted(self.values))


def _copy(v):
    return dict(v) if isinstance(v, dict) else list(v) if isinstance(v, list) else v


def resolve_config(path: str | None, seed: int | None, overrides: list[str]) -> RunConfig:
    cfg = RunConfig.defaults()
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg.update_from_text(fh.read(), path)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if seed is not None:
        cfg.values["seed"] = seed
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be KEY=VALUE, got {item!r}")
        cfg.set(*item.split("=", 1))
    return cfg


# -- run context ------------------------------------------------------------------------------


class Run:
    def __init__(self, cfg: RunConfig, out: str, name: str):
        self.cfg, self.out, self.name = cfg, out, name
        os.makedirs(out, exist_ok=True)
        self.write_text(f"{name}.config", cfg.to_text())

    def path(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(self.out, p)

    def write_text(self, name: str, text: str) -> str:
        path = self.path(name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        log.info("wrote %s", path)
        return path

    def write_json(self, name: str, obj) -> str:
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def require(self, key: str, stage: str) -> str:
        path = self.path(self.cfg[key])
        if not os.path.exists(path):
            raise MissingArtifact(f"missing {stage} artifact {path}; run `drivegen {stage}` first "
                                  f"or set {key}")
        return path

    def dataset(self, key: str = "data", stage: str = "synth") -> Dataset:
        return load_dataset(self.require(key, stage))

    def load_ae(self) -> tuple[AeModel, NormStats]:
        ckpt = load_checkpoint(self.require("ae.checkpoint", "train ae"))
        return AeModel.from_checkpoint(ckpt), NormStats.from_dict(ckpt.metadata["norm_stats"])

    def load_len(self, ae: AeModel) -> LenModel:
        ckpt = load_checkpoint(self.require("len.checkpoint", "train len"))
        if ckpt.metadata.get("ae_digest") != ae_digest(ae):
            raise LatentSpaceMismatch("length estimator was trained against a different "
                                      "autoencoder; rerun `drivegen train len`")
        return LenModel.from_checkpoint(ckpt)


def _history_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


# -- commands -----------------------------------------------------------------------------------


def cmd_synth(run: Run) -> None:
    c = run.cfg
    counts = {ScenarioLabel.CutIn: c["synth.cutin"],
              ScenarioLabel.DriveByLeft: c["synth.driveby_left"],
              ScenarioLabel.DriveByRight: c["synth.driveby_right"]}
    if any(v < 0 for v in counts.values()):
        raise ConfigError("synth counts must be non-negative")
    params = SynthParams(lane_offset_m=c["synth.lane_offset"], noise_std_m=c["synth.noise_std"],
                         decel_fraction=c["synth.decel_fraction"])
    ds = synth_dataset({k: v for k, v in counts.items() if v}, params, c["seed"])
    path = run.path(c["data"])
    save_dataset(ds, path)
    log.info("wrote %d trajectories to %s", len(ds), path)


def _train_ae(run: Run) -> None:
    c = run.cfg
    ds = run.dataset()
    stats = fit_normalization(ds)
    nds = normalize(ds, stats)
    rows, results = [], []
    for hs in c["ae.hidden"]:
        cfg = AeConfig(hidden_size=hs, latent_size=c["ae.latent"], epochs=c["ae.epochs"],
                       lr=c["ae.lr"], seed=c["seed"], val_fraction=c["ae.val_fraction"],
                       max_batch=c["ae.max_batch"])
        model, hist = train_autoencoder(nds, cfg, on_epoch=lambda r, hs=hs: log.info(
            "ae hs=%d epoch %d train %.5f val %.5f", hs, r["epoch"], r["train_loss"], r["val_loss"]))
        rows += [{"hidden": hs, **r} for r in hist]
        best = min((r["val_loss"] for r in hist), default=float("nan"))
        meta = {"norm_stats": stats.to_dict(), "config": config_dict(cfg), "best_val_loss": best}
        ckpt = model.to_checkpoint(meta)
        if len(c["ae.hidden"]) > 1:
            save_checkpoint(ckpt, run.path(f"ae-h{hs}.sfck"))
        results.append((best, hs, ckpt))
    run.write_text("ae_history.csv", _history_csv(rows, ["hidden", "epoch", "train_loss", "val_loss"]))
    # Downstream stages use the sweep's best model.
    best, hs, ckpt = min(results, key=lambda r: (np.nan_to_num(r[0], nan=np.inf), r[1]))
    save_checkpoint(ckpt, run.path(c["ae.checkpoint"]))
    run.write_json("ae_sweep.json", {"best_hidden": hs,
                                     "best_val_loss": {str(h): b for b, h, _ in results}})


def _train_len(run: Run) -> None:
    c = run.cfg
    ae, stats = run.load_ae()
    ld = latent_dataset(ae, normalize(run.dataset(), stats))
    cfg = LenConfig(hidden=tuple(c["len.hidden"]), iters=c["len.iters"], lr=c["len.lr"],
                    seed=c["seed"], holdout=c["len.holdout"])
    lm = train_length_estimator(ld, cfg, ae.length_range)
    save_checkpoint(lm.to_checkpoint({"ae_digest": ae_digest(ae), "config": config_dict(cfg)}),
                    run.path(c["len.checkpoint"]))
    run.write_json("len_report.json", lm.report)


def _train_lgan(run: Run) -> None:
    c = run.cfg
    ae, stats = run.load_ae()
    run.load_len(ae)  # the sampling path needs it; fail now rather than later
    ld = latent_dataset(ae, normalize(run.dataset(), stats))
    cfg = LatentGanConfig(mode=c["lgan.mode"], arch=c["lgan.arch"], width=c["lgan.width"],
                          depth=c["lgan.depth"], noise_dim=c["lgan.noise_dim"],
                          iters=c["lgan.iters"], batch=c["lgan.batch"], lr=c["lgan.lr"],
                          n_critic=c["lgan.n_critic"], lambda_gp=c["lgan.lambda_gp"],
                          seed=c["seed"])
    try:
        m, report = train_latent_gan(ld, cfg, ae_digest(ae))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    save_checkpoint(m.to_checkpoint({"config": config_dict(cfg)}), run.path(c["lgan.checkpoint"]))
    run.write_text("lgan_history.csv", report.to_csv())


def _train_rcgan(run: Run) -> None:
    c = run.cfg
    ds = run.dataset()
    nds = normalize(ds, fit_normalization(ds))
    cfg = RcganConfig(hidden_size=c["rcgan.hidden"], gen_layers=c["rcgan.layers"],
                      disc_hidden=c["rcgan.disc_hidden"], noise_dim=c["rcgan.noise_dim"],
                      iters=c["rcgan.iters"], batch=c["rcgan.batch"], lr_g=c["rcgan.lr"],
                      lr_d=c["rcgan.lr"], seed=c["seed"])
    m, report = train_rcgan(nds, cfg)
    save_checkpoint(m.to_checkpoint({"config": config_dict(cfg)}), run.path(c["rcgan.checkpoint"]))
    run.write_text("rcgan_history.csv", report.to_csv())


TRAINERS = {"ae": _train_ae, "len": _train_len, "lgan": _train_lgan, "rcgan": _train_rcgan}


def cmd_train(run: Run, which: str) -> None:
    TRAINERS[which](run)


def cmd_sample(run: Run) -> None:
    c = run.cfg
    source = c["sample.source"]
    rng = stream(c["seed"], "sample", source)
    if source == "lgan":
        ae, stats = run.load_ae()
        lm = run.load_len(ae)
        m = LatentGanModel.from_checkpoint(load_checkpoint(run.require("lgan.checkpoint", "train lgan")))
        ds = generate_trajectories(m, ae, lm, c["sample.n"], rng, stats)
        prov = {"source": "lgan", "mode": m.mode, "n": len(ds), "ae_digest": ae_digest(ae)}
    elif source == "rcgan":
        m = RcganModel.from_checkpoint(load_checkpoint(run.require("rcgan.checkpoint", "train rcgan")))
        trajs = []
        for length, n in sorted(c["sample.lengths"].items()):
            try:
                trajs += list(sample_rcgan(m, length, n, rng))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        ds = Dataset(tuple(trajs))
        prov = {"source": "rcgan", "lengths": {str(k): v for k, v in c["sample.lengths"].items()}}
    else:
        raise ConfigError(f"sample.source must be lgan or rcgan, got {source!r}")
    prov["seed"] = c["seed"]
    out = c["sample.output"]
    save_dataset(ds, run.path(out))
    run.write_json(out + ".provenance.json", prov)


def cmd_eval(run: Run) -> None:
    c = run.cfg
    real = run.dataset("eval.real", "synth")
    gen = run.dataset("eval.generated", "sample")
    n = c["eval.n"] or None
    kw = dict(runs=c["eval.runs"], m_over_n=c["eval.m_over_n"], n=n, seed=c["seed"],
              truncate=c["eval.truncate"])
    try:
        stats = []
        if c["eval.baseline"]:
            stats.append(baseline_split_eval(real, **kw))
            # Same N for both rows so the tables are comparable.
            kw["n"] = kw["n"] or stats[0].runs[0].n
        stats.append(evaluate_sets(gen, real, label="Generated", **kw))
    except ProtocolError as exc:
        raise ConfigError(str(exc)) from None
    run.write_text("eval.csv", stats_csv(stats))
    run.write_text("eval_tables.txt", format_tables(stats))
    run.write_text("matched_curve.csv", matched_curve_csv(stats))
    curves = {st.label: np.mean([r.matched for r in st.runs], axis=0) for st in stats}
    run.write_text("matched_curve.svg", plot.matched_distance_curve(curves))


def cmd_cluster(run: Run) -> None:
    c = run.cfg
    ae, stats = run.load_ae()
    ds = run.dataset()
    labels = [t.label or ScenarioLabel.Unknown for t in ds]
    idx = list(range(len(ds)))
    if c["cluster.balance"]:
        idx = analysis.balance_classes(idx, labels, stream(c["seed"], "cluster", "balance"))
    sub = normalize(ds.subset(idx) if len(set(idx)) == len(idx) else _resampled(ds, idx), stats)
    truth = [labels[k] for k in idx]
    lat = encode_dataset(ae, sub)
    method = c["cluster.method"]
    if method == "tsne":
        emb = analysis.tsne_embed(lat, analysis.TsneConfig(perplexity=c["cluster.perplexity"],
                                                           iters=c["cluster.iters"], seed=c["seed"]),
                                  ids=sub.ids)
    elif method == "pca":
        emb, _ = analysis.pca_fit_transform(lat, c["cluster.k"], sub.ids)
    elif method == "svd":
        emb = analysis.svd_transform(lat, c["cluster.k"], sub.ids)
    else:
        raise ConfigError(f"cluster.method must be tsne, pca or svd, got {method!r}")
    rows = analysis.sweep_dbscan(emb, truth, c["cluster.eps"], c["cluster.min_neighbors"])
    best = rows[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "label", *(f"x{k}" for k in range(emb.points.shape[1])), "cluster"])
    for tid, lab, p, cl in zip(sub.ids, truth, emb.points, best["labels"].labels):
        w.writerow([tid, lab.value, *(repr(float(v)) for v in p), int(cl)])
    run.write_text("embedding.csv", buf.getvalue())
    sweep = [{k: v for k, v in r.items() if k != "labels"} for r in rows]
    cons = analysis.cluster_consistency(best["labels"], truth)
    run.write_json("consistency.json", {
        "method": method, "best": sweep[0], "sweep": sweep,
        "classes": [cl.value for cl in cons.classes], "table": cons.table.tolist()})
    if emb.points.shape[1] >= 2:
        run.write_text("embedding.svg", plot.scatter_embedding(emb.points[:, :2], best["labels"].labels))
        run.write_text("embedding_truth.svg",
                       plot.scatter_embedding(emb.points[:, :2], [t.value for t in truth]))


def _resampled(ds: Dataset, idx) -> Dataset:
    # Balancing may repeat trajectories; ids must stay unique.
    from .trajectory import Trajectory

    seen: dict[str, int] = {}
    out = []
    for k in idx:
        t = ds.trajectories[k]
        n = seen.get(t.id, 0)
        seen[t.id] = n + 1
        out.append(t if n == 0 else Trajectory(f"{t.id}#{n}", t.points, t.label))
    return Dataset(tuple(out))


def cmd_outliers(run: Run) -> None:
    c = run.cfg
    ae, stats = run.load_ae()
    ds = run.dataset()
    nds = normalize(ds, stats)
    scores = analysis.outlier_probabilities(zip(nds.ids, reconstruction_losses(ae, nds)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "id", "loss", "prob"])
    for k, s in enumerate(scores):
        w.writerow([k + 1, s.id, repr(s.loss), repr(s.prob)])
    run.write_text("outliers.csv", buf.getvalue())
    by_id = {t.id: t for t in ds}
    top = [by_id[s.id] for s in scores[:max(c["outliers.k"], 0)]]
    run.write_text("outliers.svg", plot.trajectory_lines(top, title=f"top {len(top)} outliers"))


def _read_csv(path: str) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_plot(run: Run) -> None:
    c = run.cfg
    src = run.require("plot.input", "plot (plot.input)")
    kind = c["plot.kind"]
    labels = {k: c[f"plot.{k}"] for k in ("xlabel", "ylabel", "title") if c[f"plot.{k}"]}
    try:
        if kind == "lines":
            svg = plot.trajectory_lines(load_dataset(src, None), **labels)
        elif kind == "scatter":
            rows = _read_csv(src)
            pts = np.array([[float(r["x0"]), float(r["x1"])] for r in rows]).reshape(-1, 2)
            lab = [r.get("cluster", r.get("label", "0")) for r in rows]
            svg = plot.scatter_embedding(pts, lab, **labels)
        elif kind == "matched":
            rows = _read_csv(src)
            curves: dict[str, list] = {}
            for r in rows:
                curves.setdefault(f"{r['set']} run{r['run']}", []).append(float(r["distance"]))
            svg = plot.matched_distance_curve(curves, labels.get("title", ""))
        elif kind == "loss":
            rows = _read_csv(src)
            xkey = "iter" if rows and "iter" in rows[0] else "epoch"
            group = "hidden" if rows and "hidden" in rows[0] else None
            series: dict[str, tuple[list, list]] = {}
            for r in rows:
                for col, val in r.items():
                    if col in (xkey, group) or not col.endswith("loss"):
                        continue
                    name = f"{col} hs={r[group]}" if group else col
                    xs, ys = series.setdefault(name, ([], []))
                    xs.append(float(r[xkey]))
                    ys.append(float(val))
            svg = plot.loss_curve(series, labels.get("title", ""))
        else:
            raise ConfigError(f"plot.kind must be lines, scatter, matched or loss, got {kind!r}")
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise DatasetError(f"malformed plot input {src}: {exc}") from None
    run.write_text(c["plot.output"], svg)


# -- entry point ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set one config key; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="drivegen", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("synth", "sample", "eval", "cluster", "outliers", "plot"):
        sub.add_parser(name, parents=[common])
    tr = sub.add_parser("train", parents=[common])
    tr.add_argument("which", choices=sorted(TRAINERS))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args.config, args.seed, args.override)
        name = args.command + (f"-{args.which}" if args.command == "train" else "")
        run = Run(cfg, args.out, name)
        if args.command == "train":
            cmd_train(run, args.which)
        else:
            globals()[f"cmd_{args.command}"](run)
    except (ConfigError, DatasetError, CheckpointError, LatentSpaceMismatch) as exc:
        print(f"drivegen: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"drivegen: error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (NumericError, TrainingError) as exc:
        print(f"drivegen: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
