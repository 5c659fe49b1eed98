"""Generative models.

Two routes to new trajectories:

* a GAN (standard or WGAN-GP) over autoencoder latents; samples are turned
  back into trajectories by estimating their length and decoding, and
* a recurrent conditional GAN whose LSTM generator and bidirectional LSTM
  discriminator both see the (scaled) target length at every step, so the
  requested length is honoured by construction.

The WGAN-GP penalty is computed from central differences of the critic
around each interpolate, which needs only first-order backpropagation.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .autoencoder import (AeModel, LatentDataset, LenModel, TrainingError, decode_many,
                          estimate_lengths)
from .nn import (AdamState, Linear, LstmParams, LstmStack, MlpParams, ModelCheckpoint,
                 NumericError, ResNetParams, Tape, Tensor, adam_step, forward_bilstm, forward_mlp,
                 stream)
from .trajectory import LENGTH_RANGE, Dataset, NormStats, Trajectory, batch_by_length

log = logging.getLogger(__name__)

STANDARD = "standard"
WGAN_GP = "wgan-gp"


def params_digest(tensors: dict[str, Tensor]) -> str:
    """Content hash of named parameters at checkpoint (float32) precision."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        h.update(name.encode())
        h.update(np.ascontiguousarray(tensors[name].data, dtype="<f4").tobytes())
    return h.hexdigest()


def ae_digest(ae: AeModel) -> str:
    return params_digest(ae.named())


@dataclass
class GanTrainReport:
    iters: list[int] = field(default_factory=list)
    d_loss: list[float] = field(default_factory=list)
    g_loss: list[float] = field(default_factory=list)
    gp: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def record(self, it, d, g, gp=float("nan"), norm=float("nan")):
        vals = (d, g)
        if not np.isfinite(vals).all():
            raise TrainingError(f"non-finite GAN loss at iteration {it}")
        self.iters.append(it)
        self.d_loss.append(float(d))
        self.g_loss.append(float(g))
        self.gp.append(float(gp))
        self.grad_norm.append(float(norm))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "d_loss", "g_loss", "gp"])
        for row in zip(self.iters, self.d_loss, self.g_loss, self.gp):
            w.writerow([row[0], *(repr(v) for v in row[1:])])
        return buf.getvalue()


# -- gradient penalty -------------------------------------------------------------------


def _critic_forward(critic, x: Tensor, tape: Tape) -> Tensor:
    return critic(tape, x) if callable(critic) else forward_mlp(critic, x, tape)


def _probe_offsets(dim: int, h: float) -> np.ndarray:
    eye = np.eye(dim) * h
    return np.concatenate([eye, -eye], axis=0)  # [2d, d]


def critic_gradient_fd(critic, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central-difference input gradient of a scalar critic at each row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    b, d = x.shape
    probes = (x[:, None, :] + _probe_offsets(d, h)[None]).reshape(b * 2 * d, d)
    out = _critic_forward(critic, Tensor(probes), Tape()).data.reshape(b, 2 * d)
    return (out[:, :d] - out[:, d:]) / (2.0 * h)


def penalty_terms(critic, x_real: np.ndarray, x_fake: np.ndarray, rng: np.random.Generator,
                  h: float, tape: Tape) -> tuple[Tensor, np.ndarray]:
    """Penalty node plus the per-sample estimated gradient norms."""
    if h <= 0:
        raise ValueError("probe spacing h must be positive")
    x_real = np.atleast_2d(np.asarray(x_real, dtype=np.float64))
    x_fake = np.atleast_2d(np.asarray(x_fake, dtype=np.float64))
    if x_real.shape != x_fake.shape:
        raise ValueError("real and fake batches differ in shape")
    b, d = x_real.shape
    eps = rng.uniform(size=(b, 1))
    x_hat = eps * x_real + (1.0 - eps) * x_fake
    probes = (x_hat[:, None, :] + _probe_offsets(d, h)[None]).reshape(b * 2 * d, d)
    out = tape.reshape(_critic_forward(critic, Tensor(probes), tape), (b, 2 * d))
    grad = tape.scale(tape.sub(tape.take(out, slice(0, d), axis=1),
                               tape.take(out, slice(d, 2 * d), axis=1)), 1.0 / (2.0 * h))
    # Tiny offset keeps sqrt differentiable at a zero gradient.
    norm = tape.sqrt(tape.shift(tape.sum(tape.square(grad), axis=1), 1e-12))
    pen = tape.mean(tape.square(tape.shift(norm, -1.0)))
    return pen, norm.data.copy()


def gradient_penalty(critic, x_real, x_fake, rng: np.random.Generator, h: float = 1e-3,
                     tape: Tape | None = None) -> Tensor:
    """Mean over the batch of ``(||grad critic(x_hat)|| - 1)^2`` at random interpolates.

    The input gradient is estimated by central differences with spacing ``h``;
    the result is an ordinary tape node, differentiable in the critic weights.
    """
    return penalty_terms(critic, x_real, x_fake, rng, h, tape if tape is not None else Tape())[0]


# -- latent GAN -------------------------------------------------------------------------


@dataclass
class LatentGanConfig:
    mode: str = WGAN_GP
    arch: str = "resnet"
    width: int = 64
    depth: int = 2  # hidden layers (mlp) or residual blocks (resnet)
    noise_dim: int = 16
    iters: int = 2000
    batch: int = 64
    lr: float = 1e-4
    lr_decay: str = "linear"  # to zero at the last iteration, or "constant"
    beta1: float | None = None  # 0 for WGAN-GP, 0.5 for the standard GAN
    beta2: float = 0.9
    n_critic: int = 5
    lambda_gp: float = 10.0
    gp_h: float = 1e-3
    seed: int = 0
    snapshot_every: int = 500


@dataclass
class LatentGanModel:
    generator: MlpParams | ResNetParams
    critic: MlpParams | ResNetParams
    mode: str
    noise_dim: int
    z_mean: np.ndarray
    z_std: np.ndarray
    lambda_gp: float = 10.0
    ae_digest: str = ""

    @property
    def latent_size(self) -> int:
        return self.z_mean.shape[0]

    def named(self) -> dict[str, Tensor]:
        out = self.generator.named("lgan.gen")
        out.update(self.critic.named("lgan.disc"))
        return out

    def discriminate(self, z: np.ndarray) -> np.ndarray:
        """Critic score (WGAN-GP) or real-probability (standard) of raw latents."""
        x = Tensor((np.atleast_2d(z) - self.z_mean) / self.z_std)
        return forward_mlp(self.critic, x, Tape()).data[:, 0]

    def to_checkpoint(self, metadata=None) -> ModelCheckpoint:
        t = dict(self.named())
        t["lgan.z_mean"] = Tensor(self.z_mean)
        t["lgan.z_std"] = Tensor(self.z_std)
        meta = {"kind": "lgan", "mode": self.mode, "noise_dim": self.noise_dim,
                "lambda_gp": self.lambda_gp, "ae_digest": self.ae_digest,
                "latent_size": self.latent_size, "arch": _arch_meta(self.generator),
                "critic_arch": _arch_meta(self.critic)}
        meta.update(metadata or {})
        return ModelCheckpoint.from_tensors(t, meta)

    @classmethod
    def from_checkpoint(cls, ckpt: ModelCheckpoint) -> "LatentGanModel":
        meta = ckpt.metadata
        rng = np.random.default_rng(0)
        m = cls(_build_from_meta(rng, meta["arch"]), _build_from_meta(rng, meta["critic_arch"]),
                meta["mode"], int(meta["noise_dim"]),
                ckpt.arrays["lgan.z_mean"].astype(np.float64),
                ckpt.arrays["lgan.z_std"].astype(np.float64),
                float(meta["lambda_gp"]), meta.get("ae_digest", ""))
        for name, t in m.named().items():
            t.data = ckpt.arrays[name].astype(np.float64)
        return m


def _arch_meta(net) -> dict:
    if isinstance(net, ResNetParams):
        return {"type": "resnet", "n_in": net.inp.w.shape[0], "width": net.inp.w.shape[1],
                "blocks": len(net.blocks), "n_out": net.out.w.shape[1],
                "hidden_act": net.hidden_act, "out_act": net.out_act}
    return {"type": "mlp", "widths": net.widths, "hidden_act": net.hidden_act,
            "out_act": net.out_act}


def _build_from_meta(rng, meta):
    if meta["type"] == "resnet":
        return ResNetParams.init(rng, meta["n_in"], meta["width"], meta["blocks"], meta["n_out"],
                                 meta["hidden_act"], meta["out_act"])
    return MlpParams.init(rng, meta["widths"], meta["hidden_act"], meta["out_act"])


def _build_net(rng, cfg: LatentGanConfig, n_in: int, n_out: int, hidden_act: str, out_act: str):
    if cfg.arch == "resnet":
        return ResNetParams.init(rng, n_in, cfg.width, cfg.depth, n_out, hidden_act, out_act)
    if cfg.arch == "mlp":
        return MlpParams.init(rng, [n_in] + [cfg.width] * cfg.depth + [n_out], hidden_act, out_act)
    raise ValueError(f"unknown architecture {cfg.arch!r}")


def init_latent_gan(cfg: LatentGanConfig, ld: LatentDataset, digest: str = "") -> LatentGanModel:
    if cfg.mode not in (STANDARD, WGAN_GP):
        raise ValueError(f"unknown GAN mode {cfg.mode!r}")
    d = ld.x.shape[1]
    gen = _build_net(stream(cfg.seed, "lgan", "gen"), cfg, cfg.noise_dim, d, "tanh", "linear")
    head = "sigmoid" if cfg.mode == STANDARD else "linear"
    disc = _build_net(stream(cfg.seed, "lgan", "disc"), cfg, d, 1, "leaky_relu", head)
    return LatentGanModel(gen, disc, cfg.mode, cfg.noise_dim, ld.x.mean(axis=0),
                          np.maximum(ld.x.std(axis=0), 1e-8), cfg.lambda_gp, digest)


def train_latent_gan(ld: LatentDataset, cfg: LatentGanConfig | None = None, digest: str = ""):
    """Alternating GAN training on standardized latents.

    Standard mode uses the non-saturating log loss with one discriminator
    step per generator step; WGAN-GP uses ``n_critic`` critic steps with the
    gradient penalty.  Returns ``(model, report)``.
    """
    cfg = cfg or LatentGanConfig()
    if len(ld) == 0:
        raise ValueError("empty latent dataset")
    m = init_latent_gan(cfg, ld, digest)
    real_all = (ld.x - m.z_mean) / m.z_std
    logits_net = replace(m.critic, out_act="linear")  # shares the critic's tensors
    gp = m.mode == WGAN_GP
    g_params, d_params = m.generator.named("g"), m.critic.named("d")
    beta1 = cfg.beta1 if cfg.beta1 is not None else (0.0 if gp else 0.5)
    g_opt = AdamState(lr=cfg.lr, beta1=beta1, beta2=cfg.beta2)
    d_opt = AdamState(lr=cfg.lr, beta1=beta1, beta2=cfg.beta2)
    rng = stream(cfg.seed, "lgan", "train")
    report = GanTrainReport()
    n_d = cfg.n_critic if gp else 1
    bsz = min(cfg.batch, len(ld))

    def fake_batch(tape):
        noise = Tensor(rng.standard_normal((bsz, cfg.noise_dim)))
        return forward_mlp(m.generator, noise, tape)

    if cfg.lr_decay not in ("linear", "constant"):
        raise ValueError(f"unknown lr decay {cfg.lr_decay!r}")
    try:
        for it in range(1, cfg.iters + 1):
            if cfg.lr_decay == "linear":
                g_opt.lr = d_opt.lr = cfg.lr * (1.0 - (it - 1) / cfg.iters)
            for _ in range(n_d):
                real = real_all[rng.choice(len(ld), bsz, replace=False)]
                fake = fake_batch(Tape()).data
                tape = Tape()
                s_real = forward_mlp(logits_net, Tensor(real), tape)
                s_fake = forward_mlp(logits_net, Tensor(fake), tape)
                if gp:
                    pen, norms = penalty_terms(logits_net, real, fake, rng, cfg.gp_h, tape)
                    w_loss = tape.sub(tape.mean(s_fake), tape.mean(s_real))
                    d_loss = tape.add(w_loss, tape.scale(pen, cfg.lambda_gp))
                else:
                    d_loss = tape.add(tape.bce_with_logits(s_real, 1.0),
                                      tape.bce_with_logits(s_fake, 0.0))
                adam_step(d_opt, d_params, tape.backward(d_loss, d_params))
            tape = Tape()
            s_fake = forward_mlp(logits_net, fake_batch(tape), tape)
            if gp:
                g_loss = tape.scale(tape.mean(s_fake), -1.0)
            else:
                g_loss = tape.bce_with_logits(s_fake, 1.0)
            adam_step(g_opt, g_params, tape.backward(g_loss, g_params))
            if gp:
                report.record(it, d_loss.item(), g_loss.item(), pen.item(), float(np.mean(norms)))
            else:
                report.record(it, d_loss.item(), g_loss.item())
            if cfg.snapshot_every and it % cfg.snapshot_every == 0:
                report.snapshots.append((it, fake.copy()))
    except NumericError as exc:
        raise TrainingError(f"latent GAN diverged at iteration {it}: {exc}") from exc
    return m, report


def sample_latent(m: LatentGanModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` latent vectors in the autoencoder's (unstandardized) latent space."""
    if n <= 0:
        return np.zeros((0, m.latent_size))
    noise = Tensor(rng.standard_normal((n, m.noise_dim)))
    return forward_mlp(m.generator, noise, Tape()).data * m.z_std + m.z_mean


class LatentSpaceMismatch(ValueError):
    pass


def check_latent_space(m: LatentGanModel, ae: AeModel, lm: LenModel | None = None,
                       lm_digest: str | None = None) -> None:
    if m.latent_size != ae.latent_size:
        raise LatentSpaceMismatch(f"GAN latent size {m.latent_size} != AE latent size {ae.latent_size}")
    digest = ae_digest(ae)
    if m.ae_digest and m.ae_digest != digest:
        raise LatentSpaceMismatch("latent GAN was trained against a different autoencoder")
    if lm_digest and lm_digest != digest:
        raise LatentSpaceMismatch("length estimator was trained against a different autoencoder")
    if lm is not None and lm.x_mean.shape[0] != ae.latent_size:
        raise LatentSpaceMismatch("length estimator input size does not match the AE latent size")


def generate_trajectories(m: LatentGanModel, ae: AeModel, lm: LenModel, n: int,
                          rng: np.random.Generator, stats: NormStats | None = None,
                          lm_digest: str | None = None, prefix: str = "aegan") -> Dataset:
    """Sample latents, estimate their lengths, decode, and map back to meters."""
    check_latent_space(m, ae, lm, lm_digest)
    z = sample_latent(m, n, rng)
    return decode_latents(ae, lm, z, stats, prefix)


def decode_latents(ae: AeModel, lm: LenModel, z: np.ndarray, stats: NormStats | None = None,
                   prefix: str = "aegan") -> Dataset:
    if len(z) == 0:
        return Dataset()
    lengths = estimate_lengths(lm, z)
    pts = decode_many(ae, z, lengths)
    trajs = []
    for k, p in enumerate(pts):
        if stats is not None:
            p = p * stats.std + stats.mean
        trajs.append(Trajectory(f"{prefix}-{k:05d}", p))
    return Dataset(tuple(trajs))


# -- recurrent conditional GAN ------------------------------------------------------------


@dataclass
class RcganConfig:
    hidden_size: int = 32
    gen_layers: int = 2
    disc_hidden: int = 32
    noise_dim: int = 8
    iters: int = 5000
    batch: int = 32
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    beta1: float = 0.5
    seed: int = 0
    snapshot_every: int = 500
    length_range: tuple[int, int] = LENGTH_RANGE


@dataclass
class RcganModel:
    gen: LstmStack
    gen_out: Linear
    disc: tuple[LstmParams, LstmParams]
    disc_out: Linear
    noise_dim: int
    length_range: tuple[int, int] = LENGTH_RANGE
    norm_stats: NormStats | None = None

    def named(self) -> dict[str, Tensor]:
        out = self.gen.named("rcgan.gen")
        out.update(self.gen_out.named("rcgan.gen_out"))
        out.update(self.disc[0].named("rcgan.disc.fwd"))
        out.update(self.disc[1].named("rcgan.disc.bwd"))
        out.update(self.disc_out.named("rcgan.disc_out"))
        return out

    def generator_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.named().items() if ".gen" in k}

    def discriminator_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.named().items() if ".disc" in k}

    def condition(self, length: int) -> float:
        lo, hi = self.length_range
        return (length - lo) / (hi - lo)

    def to_checkpoint(self, metadata=None) -> ModelCheckpoint:
        meta = {"kind": "rcgan", "hidden_size": self.gen.layers[0].hidden_size,
                "gen_layers": len(self.gen.layers), "disc_hidden": self.disc[0].hidden_size,
                "noise_dim": self.noise_dim, "length_range": list(self.length_range),
                "norm_stats": self.norm_stats.to_dict() if self.norm_stats else None}
        meta.update(metadata or {})
        return ModelCheckpoint.from_tensors(self.named(), meta)

    @classmethod
    def from_checkpoint(cls, ckpt: ModelCheckpoint) -> "RcganModel":
        meta = ckpt.metadata
        cfg = RcganConfig(hidden_size=meta["hidden_size"], gen_layers=meta["gen_layers"],
                          disc_hidden=meta["disc_hidden"], noise_dim=meta["noise_dim"],
                          length_range=tuple(meta["length_range"]))
        m = init_rcgan(cfg)
        if meta.get("norm_stats"):
            m.norm_stats = NormStats.from_dict(meta["norm_stats"])
        for name, t in m.named().items():
            t.data = ckpt.arrays[name].astype(np.float64)
        return m


def init_rcgan(cfg: RcganConfig) -> RcganModel:
    rng = stream(cfg.seed, "rcgan", "init")
    gen = LstmStack.init(rng, cfg.noise_dim + 1, cfg.hidden_size, cfg.gen_layers, "gen")
    gen_out = Linear.init(rng, cfg.hidden_size, 2)
    disc = (LstmParams.init(rng, 3, cfg.disc_hidden, "dfwd"),
            LstmParams.init(rng, 3, cfg.disc_hidden, "dbwd"))
    disc_out = Linear.init(rng, 2 * cfg.disc_hidden, 1)
    return RcganModel(gen, gen_out, disc, disc_out, cfg.noise_dim, tuple(cfg.length_range))


def _with_condition(tape: Tape, x: Tensor, cond: float) -> Tensor:
    steps, batch = x.shape[0], x.shape[1]
    return tape.concat([x, Tensor(np.full((steps, batch, 1), cond))], axis=-1)


def rcgan_generate(tape: Tape, m: RcganModel, length: int, noise: np.ndarray) -> Tensor:
    """``noise`` is ``[length, B, noise_dim]``; returns ``[length, B, 2]`` normalized points."""
    x = _with_condition(tape, Tensor(noise), m.condition(length))
    hseq, _ = m.gen(tape, x)
    steps, batch, hidden = hseq.shape
    flat = m.gen_out(tape, tape.reshape(hseq, (steps * batch, hidden)))
    return tape.reshape(flat, (steps, batch, 2))


def rcgan_discriminate(tape: Tape, m: RcganModel, x: Tensor, length: int) -> Tensor:
    """Per-step real/fake logits ``[T, B, 1]``."""
    h = forward_bilstm(m.disc, _with_condition(tape, x, m.condition(length)), tape)
    steps, batch, width = h.shape
    flat = m.disc_out(tape, tape.reshape(h, (steps * batch, width)))
    return tape.reshape(flat, (steps, batch, 1))


def rcgan_probabilities(m: RcganModel, x: np.ndarray) -> np.ndarray:
    """Per-step probability that each ``[T, B, 2]`` sequence is real."""
    logits = rcgan_discriminate(Tape(), m, Tensor(x), x.shape[0]).data
    return 0.5 + 0.5 * np.tanh(0.5 * logits)


def train_rcgan(ds: Dataset, cfg: RcganConfig | None = None):
    """Adversarial training on a normalized dataset, one length bucket per iteration.

    Both networks receive the min-max scaled length at every step; the
    discriminator is trained against all-ones targets for real sequences and
    all-zeros for generated ones, step by step.
    """
    cfg = cfg or RcganConfig()
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    m = init_rcgan(cfg)
    m.norm_stats = ds.norm_stats
    buckets = [b.array() for b in batch_by_length(ds)]
    # Buckets are drawn in proportion to their size, matching the data's length mix.
    weights = np.array([b.shape[1] for b in buckets], dtype=float)
    weights /= weights.sum()
    g_params, d_params = m.generator_params(), m.discriminator_params()
    g_opt = AdamState(lr=cfg.lr_g, beta1=cfg.beta1)
    d_opt = AdamState(lr=cfg.lr_d, beta1=cfg.beta1)
    rng = stream(cfg.seed, "rcgan", "train")
    report = GanTrainReport()
    try:
        for it in range(1, cfg.iters + 1):
            bucket = buckets[rng.choice(len(buckets), p=weights)]
            length, avail = bucket.shape[0], bucket.shape[1]
            bsz = min(cfg.batch, avail)
            real = bucket[:, rng.choice(avail, bsz, replace=False), :]
            noise = rng.standard_normal((length, bsz, cfg.noise_dim))
            fake = rcgan_generate(Tape(), m, length, noise).data

            tape = Tape()
            d_loss = tape.add(
                tape.bce_with_logits(rcgan_discriminate(tape, m, Tensor(real), length), 1.0),
                tape.bce_with_logits(rcgan_discriminate(tape, m, Tensor(fake), length), 0.0))
            adam_step(d_opt, d_params, tape.backward(d_loss, d_params))

            tape = Tape()
            noise = rng.standard_normal((length, bsz, cfg.noise_dim))
            gen = rcgan_generate(tape, m, length, noise)
            g_loss = tape.bce_with_logits(rcgan_discriminate(tape, m, gen, length), 1.0)
            adam_step(g_opt, g_params, tape.backward(g_loss, g_params))
            report.record(it, d_loss.item(), g_loss.item())
            if cfg.snapshot_every and it % cfg.snapshot_every == 0:
                report.snapshots.append((it, gen.data[:, 0, :].copy()))
    except NumericError as exc:
        raise TrainingError(f"RC-GAN diverged at iteration {it}: {exc}") from exc
    return m, report


def sample_rcgan(m: RcganModel, length: int, n: int, rng: np.random.Generator,
                 denormalize: bool = True, prefix: str = "rcgan") -> Dataset:
    """``n`` trajectories of exactly ``length`` points."""
    lo, hi = m.length_range
    if not lo <= length <= hi:
        raise ValueError(f"length {length} outside the trained range [{lo}, {hi}]")
    if n <= 0:
        return Dataset()
    noise = rng.standard_normal((length, n, m.noise_dim))
    pts = rcgan_generate(Tape(), m, length, noise).data
    trajs = []
    for k in range(n):
        p = pts[:, k, :]
        if denormalize and m.norm_stats is not None:
            p = p * m.norm_stats.std + m.norm_stats.mean
        trajs.append(Trajectory(f"{prefix}-L{length}-{k:05d}", p))
    return Dataset(tuple(trajs))
