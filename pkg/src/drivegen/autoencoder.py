"""Sequence-to-sequence LSTM autoencoder and the latent-to-length estimator.

The encoder is a two-layer LSTM whose final top-layer hidden state is
projected linearly to a fixed-size latent vector.  The decoder is seeded from
the latent through a linear bridge that produces the initial ``(h, c)`` of
both decoder layers, then rolls out autoregressively: each step consumes the
previously emitted point (zeros at the first step).  Training batches hold
trajectories of a single length, so no padding is ever needed.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import (AdamState, Linear, LstmParams, LstmStack, MlpParams, ModelCheckpoint,
                 NumericError, Tape, Tensor, adam_step, forward_mlp, stream)
from .trajectory import LENGTH_RANGE, Dataset, Trajectory, batch_by_length, split_batch

log = logging.getLogger(__name__)

N_FEATURES = 2


class TrainingError(NumericError):
    """Training hit a non-finite loss or gradient."""


@dataclass
class AeConfig:
    hidden_size: int = 64
    latent_size: int = 32
    epochs: int = 100
    lr: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.1
    max_batch: int = 32
    clip: float = 1.0
    lr_schedule: str = "cosine"  # or "constant"
    length_range: tuple[int, int] = LENGTH_RANGE


@dataclass
class AeModel:
    encoder: LstmStack
    to_latent: Linear
    bridge: Linear
    decoder: list[LstmParams]
    out: Linear
    length_range: tuple[int, int] = LENGTH_RANGE

    @classmethod
    def init(cls, rng, hidden_size: int, latent_size: int,
             length_range=LENGTH_RANGE) -> "AeModel":
        h = hidden_size
        return cls(
            encoder=LstmStack.init(rng, N_FEATURES, h, 2, "enc"),
            to_latent=Linear.init(rng, h, latent_size),
            bridge=Linear.init(rng, latent_size, 4 * h),
            decoder=[LstmParams.init(rng, N_FEATURES, h, "dec0"),
                     LstmParams.init(rng, h, h, "dec1")],
            out=Linear.init(rng, h, N_FEATURES),
            length_range=tuple(length_range),
        )

    @property
    def hidden_size(self) -> int:
        return self.decoder[0].hidden_size

    @property
    def latent_size(self) -> int:
        return self.to_latent.w.shape[1]

    def named(self) -> dict[str, Tensor]:
        out = self.encoder.named("ae.enc")
        out.update(self.to_latent.named("ae.latent"))
        out.update(self.bridge.named("ae.bridge"))
        for k, lay in enumerate(self.decoder):
            out.update(lay.named(f"ae.dec.{k}"))
        out.update(self.out.named("ae.out"))
        return out

    def to_checkpoint(self, metadata=None) -> ModelCheckpoint:
        meta = {"kind": "ae", "hidden_size": self.hidden_size, "latent_size": self.latent_size,
                "length_range": list(self.length_range)}
        meta.update(metadata or {})
        return ModelCheckpoint.from_tensors(self.named(), meta)

    @classmethod
    def from_checkpoint(cls, ckpt: ModelCheckpoint) -> "AeModel":
        meta = ckpt.metadata
        model = cls.init(np.random.default_rng(0), int(meta["hidden_size"]),
                         int(meta["latent_size"]), tuple(meta["length_range"]))
        for name, t in model.named().items():
            t.data = ckpt.arrays[name].astype(np.float64)
        return model


# -- forward passes --------------------------------------------------------------------


def encode_batch(tape: Tape, m: AeModel, x: Tensor) -> Tensor:
    """``[T, B, 2]`` trajectories to ``[B, latent]`` codes."""
    _, finals = m.encoder(tape, x)
    return m.to_latent(tape, finals[-1][0])


def decode_batch(tape: Tape, m: AeModel, z: Tensor, length: int) -> Tensor:
    """Autoregressive rollout of ``length`` points from ``[B, latent]`` codes."""
    h = m.hidden_size
    batch = z.shape[0]
    state = m.bridge(tape, z)
    h0 = tape.take(state, slice(0, h), axis=1)
    c0 = tape.take(state, slice(h, 2 * h), axis=1)
    h1 = tape.take(state, slice(2 * h, 3 * h), axis=1)
    c1 = tape.take(state, slice(3 * h, 4 * h), axis=1)
    l0, l1 = m.decoder
    prev = Tensor(np.zeros((batch, N_FEATURES)))
    outs = []
    for _ in range(length):
        h0, c0 = tape.lstm_cell(prev, h0, c0, l0.w, l0.u, l0.b)
        h1, c1 = tape.lstm_cell(h0, h1, c1, l1.w, l1.u, l1.b)
        prev = m.out(tape, h1)
        outs.append(prev)
    return tape.stack(outs)


def _check_length(m: AeModel, length: int) -> None:
    lo, hi = m.length_range
    if not lo <= length <= hi:
        raise ValueError(f"length {length} outside the model's range [{lo}, {hi}]")


def encode(m: AeModel, t: Trajectory) -> np.ndarray:
    lo, hi = m.length_range
    if not lo <= len(t) <= hi:
        warnings.warn(f"trajectory {t.id!r} length {len(t)} outside trained range [{lo}, {hi}]",
                      stacklevel=2)
    x = Tensor(t.points[:, None, :])
    return encode_batch(Tape(), m, x).data[0].copy()


def encode_dataset(m: AeModel, ds: Dataset) -> np.ndarray:
    """Latents for every trajectory, in dataset order; batched by length."""
    z = np.zeros((len(ds), m.latent_size))
    pos = {t.id: k for k, t in enumerate(ds)}
    for batch in batch_by_length(ds):
        codes = encode_batch(Tape(), m, Tensor(batch.array())).data
        for t, row in zip(batch.members, codes):
            z[pos[t.id]] = row
    return z


def decode(m: AeModel, z, length: int, id: str = "decoded") -> Trajectory:
    _check_length(m, length)
    z = Tensor(np.asarray(z, dtype=np.float64).reshape(1, -1))
    pts = decode_batch(Tape(), m, z, length).data[:, 0, :]
    return Trajectory(id=id, points=pts)


def decode_many(m: AeModel, z: np.ndarray, lengths) -> list[np.ndarray]:
    """Decode rows of ``z`` to their requested lengths, batching equal lengths."""
    lengths = [int(n) for n in lengths]
    out: list[np.ndarray | None] = [None] * len(lengths)
    for n in sorted(set(lengths)):
        _check_length(m, n)
        idx = [k for k, v in enumerate(lengths) if v == n]
        pts = decode_batch(Tape(), m, Tensor(np.asarray(z)[idx]), n).data
        for j, k in enumerate(idx):
            out[k] = pts[:, j, :].copy()
    return out


def reconstruct(m: AeModel, t: Trajectory) -> np.ndarray:
    return decode(m, encode(m, t), len(t)).points


def sequence_mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


def reconstruction_loss(m: AeModel, t: Trajectory) -> float:
    """Per-element MSE between ``t`` and its decoded encoding."""
    return sequence_mse(t.points, reconstruct(m, t))


def reconstruction_losses(m: AeModel, ds: Dataset) -> np.ndarray:
    """Batched :func:`reconstruction_loss` for a whole dataset (dataset order)."""
    out = np.zeros(len(ds))
    pos = {t.id: k for k, t in enumerate(ds)}
    for batch in batch_by_length(ds):
        tape = Tape()
        x = batch.array()
        rec = decode_batch(tape, m, encode_batch(tape, m, Tensor(x)), batch.length).data
        per = np.mean((rec - x) ** 2, axis=(0, 2))
        for t, v in zip(batch.members, per):
            out[pos[t.id]] = v
    return out


# -- training ----------------------------------------------------------------------------


def _batch_loss(tape: Tape, m: AeModel, x: np.ndarray) -> Tensor:
    target = Tensor(x)
    rec = decode_batch(tape, m, encode_batch(tape, m, target), x.shape[0])
    return tape.mse(rec, target)


def split_ids(ds: Dataset, fraction: float, rng) -> tuple[Dataset, Dataset]:
    n_val = int(round(fraction * len(ds)))
    perm = rng.permutation(len(ds))
    return ds.subset(np.sort(perm[n_val:])), ds.subset(np.sort(perm[:n_val]))


def evaluate_loss(m: AeModel, ds: Dataset, max_batch: int | None = None) -> float:
    """Mean of per-batch per-element MSE over length batches."""
    losses = []
    for lb in batch_by_length(ds):
        for b in split_batch(lb, max_batch):
            losses.append(_batch_loss(Tape(), m, b.array()).item())
    return float(np.mean(losses)) if losses else float("nan")


def train_autoencoder(ds: Dataset, cfg: AeConfig | None = None, on_epoch=None):
    """Fit the autoencoder on a normalized dataset.

    Each epoch visits the length batches in shuffled order.  Returns
    ``(model, history)`` where history holds one dict per epoch with
    ``epoch``, ``train_loss`` and ``val_loss``.
    """
    cfg = cfg or AeConfig()
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    model = AeModel.init(stream(cfg.seed, "ae", "init"), cfg.hidden_size, cfg.latent_size,
                         cfg.length_range)
    split_rng = stream(cfg.seed, "ae", "split")
    train, val = split_ids(ds, cfg.val_fraction, split_rng) if cfg.val_fraction > 0 else (ds, Dataset())
    batches = [b for lb in batch_by_length(train) for b in split_batch(lb, cfg.max_batch)]
    if len(batches) < 2 and cfg.epochs > 0:
        raise ValueError("need at least two length batches to train")
    params = model.named()
    opt = AdamState(lr=cfg.lr)
    order_rng = stream(cfg.seed, "ae", "order")
    history = []
    if cfg.lr_schedule not in ("cosine", "constant"):
        raise ValueError(f"unknown lr schedule {cfg.lr_schedule!r}")
    for epoch in range(1, cfg.epochs + 1):
        if cfg.lr_schedule == "cosine":
            # Decays to a tenth of the base rate; the tail settles the noisy val loss.
            frac = (epoch - 1) / max(cfg.epochs - 1, 1)
            opt.lr = cfg.lr * (0.1 + 0.45 * (1.0 + np.cos(np.pi * frac)))
        losses = []
        try:
            for k in order_rng.permutation(len(batches)):
                tape = Tape()
                loss = _batch_loss(tape, model, batches[k].array())
                grads = tape.backward(loss, params)
                adam_step(opt, params, grads, clip=cfg.clip)
                losses.append(loss.item())
            val_loss = evaluate_loss(model, val, cfg.max_batch) if len(val) else float("nan")
        except NumericError as exc:
            raise TrainingError(f"autoencoder training diverged in epoch {epoch}: {exc}") from exc
        rec = {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val_loss}
        history.append(rec)
        log.debug("ae epoch %d train %.5f val %.5f", epoch, rec["train_loss"], val_loss)
        if on_epoch is not None:
            on_epoch(rec)
    return model, history


# -- length estimation -----------------------------------------------------------------


@dataclass
class LatentDataset:
    x: np.ndarray  # [n, latent]
    y: np.ndarray  # [n] lengths in frames
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=int)
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("latent and length sets differ in size")

    def __len__(self):
        return self.x.shape[0]


def latent_dataset(m: AeModel, ds: Dataset) -> LatentDataset:
    return LatentDataset(encode_dataset(m, ds), ds.lengths, tuple(ds.ids))


@dataclass
class LenConfig:
    hidden: tuple[int, ...] = (64, 64)
    iters: int = 3000
    batch: int = 64
    lr: float = 3e-3
    seed: int = 0
    holdout: float = 0.2


@dataclass
class LenModel:
    mlp: MlpParams
    x_mean: np.ndarray
    x_std: np.ndarray
    length_range: tuple[int, int] = LENGTH_RANGE
    report: dict = field(default_factory=dict)

    @property
    def _center(self) -> float:
        return 0.5 * (self.length_range[0] + self.length_range[1])

    @property
    def _half(self) -> float:
        return 0.5 * (self.length_range[1] - self.length_range[0])

    def named(self) -> dict[str, Tensor]:
        return self.mlp.named("len.mlp")

    def raw(self, z: np.ndarray) -> np.ndarray:
        """Unrounded length predictions for ``[n, latent]`` codes."""
        x = Tensor((np.atleast_2d(z) - self.x_mean) / self.x_std)
        return forward_mlp(self.mlp, x, Tape()).data[:, 0] * self._half + self._center

    def to_checkpoint(self, metadata=None) -> ModelCheckpoint:
        tensors = dict(self.named())
        tensors["len.x_mean"] = Tensor(self.x_mean)
        tensors["len.x_std"] = Tensor(self.x_std)
        meta = {"kind": "len", "widths": self.mlp.widths, "length_range": list(self.length_range),
                "report": self.report}
        meta.update(metadata or {})
        return ModelCheckpoint.from_tensors(tensors, meta)

    @classmethod
    def from_checkpoint(cls, ckpt: ModelCheckpoint) -> "LenModel":
        meta = ckpt.metadata
        mlp = MlpParams.init(np.random.default_rng(0), meta["widths"])
        lm = cls(mlp, ckpt.arrays["len.x_mean"].astype(np.float64),
                 ckpt.arrays["len.x_std"].astype(np.float64), tuple(meta["length_range"]),
                 dict(meta.get("report", {})))
        for name, t in lm.named().items():
            t.data = ckpt.arrays[name].astype(np.float64)
        return lm


def round_length(raw, length_range=LENGTH_RANGE):
    lo, hi = length_range
    return np.clip(np.floor(np.asarray(raw, dtype=np.float64) + 0.5), lo, hi).astype(int)


def estimate_length(lm: LenModel, z) -> int:
    return int(round_length(lm.raw(np.asarray(z))[0], lm.length_range))


def estimate_lengths(lm: LenModel, z: np.ndarray) -> np.ndarray:
    return round_length(lm.raw(z), lm.length_range)


def length_accuracy(lm: LenModel, ld: LatentDataset) -> dict:
    pred = estimate_lengths(lm, ld.x)
    err = np.abs(pred - ld.y)
    return {"exact": float(np.mean(err == 0)), "within2": float(np.mean(err <= 2)),
            "n": int(len(ld))}


def train_length_estimator(ld: LatentDataset, cfg: LenConfig | None = None,
                           length_range=LENGTH_RANGE) -> LenModel:
    """MSE regression from latent to length on a random train/holdout split.

    Inputs are standardized per coordinate and targets scaled to [-1, 1].
    Holdout accuracy (exact after rounding, within 2 frames) is stored on
    ``model.report``.
    """
    cfg = cfg or LenConfig()
    if len(ld) == 0:
        raise ValueError("empty latent dataset")
    rng = stream(cfg.seed, "len", "split")
    n_hold = int(round(cfg.holdout * len(ld))) if len(ld) >= 10 else 0
    perm = rng.permutation(len(ld))
    hold, fit = perm[:n_hold], perm[n_hold:]
    x_mean = ld.x[fit].mean(axis=0)
    x_std = np.maximum(ld.x[fit].std(axis=0), 1e-8)
    mlp = MlpParams.init(stream(cfg.seed, "len", "init"),
                         [ld.x.shape[1], *cfg.hidden, 1], "tanh", "linear")
    # Zero head: the untrained estimator is a constant, so the fit adds only
    # the input dependence the data supports.
    mlp.layers[-1].w.data[:] = 0.0
    lm = LenModel(mlp, x_mean, x_std, tuple(length_range))
    xs = (ld.x[fit] - x_mean) / x_std
    ys = ((ld.y[fit] - lm._center) / lm._half)[:, None]
    params = lm.named()
    opt = AdamState(lr=cfg.lr)
    batch_rng = stream(cfg.seed, "len", "batches")
    for it in range(cfg.iters):
        # Cosine decay sharpens the final fit; exact rounding needs sub-frame error.
        opt.lr = cfg.lr * 0.5 * (1.0 + np.cos(np.pi * it / max(cfg.iters, 1)))
        idx = batch_rng.choice(len(fit), min(cfg.batch, len(fit)), replace=False)
        tape = Tape()
        loss = tape.mse(forward_mlp(mlp, Tensor(xs[idx]), tape), Tensor(ys[idx]))
        adam_step(opt, params, tape.backward(loss, params))
    lm.report = {"train": length_accuracy(lm, LatentDataset(ld.x[fit], ld.y[fit]))}
    if n_hold:
        lm.report["holdout"] = length_accuracy(lm, LatentDataset(ld.x[hold], ld.y[hold]))
    return lm


def config_dict(cfg) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
