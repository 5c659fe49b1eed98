import numpy as np
import pytest

import drivegen.generators as gen
from drivegen.autoencoder import (AeModel, LatentDataset, LenConfig, encode_dataset, reconstruct,
                                  train_length_estimator)
from drivegen.metrics import dtw
from drivegen.nn import (Linear, MlpParams, Tape, Tensor, forward_mlp, grad_check,
                         load_checkpoint, save_checkpoint, stream)
from drivegen.trajectory import (ScenarioLabel, SynthParams, fit_normalization, normalize,
                                 synth_dataset)


def _linear_critic(w):
    w = np.asarray(w, float)
    return MlpParams([Linear(Tensor(w[:, None]), Tensor(np.array([0.3])))], "tanh", "linear")


def _latents(n=200, d=4, seed=0):
    rng = np.random.default_rng(seed)
    return LatentDataset(rng.normal(size=(n, d)) * [1, 2, 0.5, 1][:d] + 1.0,
                         rng.integers(30, 71, n))


# -- gradient penalty -----------------------------------------------------------------------


def test_penalty_zero_for_unit_norm_linear_critic():
    rng = np.random.default_rng(0)
    w = rng.normal(size=5)
    w /= np.linalg.norm(w)
    x_real, x_fake = rng.normal(size=(16, 5)), rng.normal(size=(16, 5))
    pen = gen.gradient_penalty(_linear_critic(w), x_real, x_fake, rng).item()
    assert abs(pen) < 1e-10


def test_penalty_closed_form_for_norm_three():
    rng = np.random.default_rng(1)
    w = rng.normal(size=6)
    w *= 3.0 / np.linalg.norm(w)
    pen = gen.gradient_penalty(_linear_critic(w), rng.normal(size=(32, 6)),
                               rng.normal(size=(32, 6)), rng, h=1e-3).item()
    assert abs(pen - 4.0) < 1e-8


def test_fd_input_gradient_matches_autodiff():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        critic = MlpParams.init(rng, [4, 16, 1], "tanh", "linear")
        x = rng.normal(size=(8, 4))
        fd = gen.critic_gradient_fd(critic, x, h=1e-3)
        xt = Tensor(x)
        t = Tape()
        ad = t.backward(t.sum(forward_mlp(critic, xt, t)), {"x": xt})["x"]
        assert np.abs(fd - ad).max() / np.abs(ad).max() < 1e-6


def test_penalty_is_differentiable_in_critic_weights():
    rng = np.random.default_rng(2)
    critic = MlpParams.init(rng, [3, 5, 1], "tanh", "linear")
    x_real, x_fake = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))

    def loss(tape):
        return gen.gradient_penalty(critic, x_real, x_fake, np.random.default_rng(9), tape=tape)

    params = critic.named("c")
    # A constant shift of the critic cannot change its input gradient.
    out_bias = {"c.1.b": params.pop("c.1.b")}
    t = Tape()
    assert t.backward(loss(t), out_bias)["c.1.b"][0] == 0.0
    assert grad_check(loss, params, max_coords=None) < 1e-5


def test_penalty_rejects_bad_inputs():
    c = _linear_critic([1.0, 0.0])
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        gen.gradient_penalty(c, np.zeros((2, 2)), np.zeros((2, 2)), rng, h=0.0)
    with pytest.raises(ValueError):
        gen.gradient_penalty(c, np.zeros((2, 2)), np.zeros((3, 2)), rng)


# -- latent GAN -------------------------------------------------------------------------------


def _small_cfg(**kw):
    base = dict(width=16, depth=1, noise_dim=4, iters=20, batch=16, seed=3)
    base.update(kw)
    return gen.LatentGanConfig(**base)


def test_zero_iterations_leave_initialization():
    ld = _latents()
    cfg = _small_cfg(iters=0)
    m, report = gen.train_latent_gan(ld, cfg)
    ref = gen.init_latent_gan(cfg, ld)
    assert report.iters == []
    for (k, a), (_, b) in zip(m.named().items(), ref.named().items()):
        assert np.array_equal(a.data, b.data), k


@pytest.mark.parametrize("mode", [gen.STANDARD, gen.WGAN_GP])
@pytest.mark.parametrize("arch", ["mlp", "resnet"])
def test_latent_gan_deterministic(mode, arch):
    ld = _latents()
    a, ra = gen.train_latent_gan(ld, _small_cfg(mode=mode, arch=arch))
    b, rb = gen.train_latent_gan(ld, _small_cfg(mode=mode, arch=arch))
    assert ra.to_csv() == rb.to_csv()
    assert gen.params_digest(a.named()) == gen.params_digest(b.named())
    za = gen.sample_latent(a, 7, stream(1, "s"))
    assert za.shape == (7, 4)
    assert za.tobytes() == gen.sample_latent(b, 7, stream(1, "s")).tobytes()


def test_report_finite_and_csv_columns():
    _, report = gen.train_latent_gan(_latents(), _small_cfg())
    lines = report.to_csv().splitlines()
    assert lines[0] == "iter,d_loss,g_loss,gp"
    assert len(lines) == 21
    assert all(np.isfinite(report.gp)) and all(np.isfinite(report.d_loss))
    with pytest.raises(gen.TrainingError):
        report.record(99, float("nan"), 0.0)


def test_discriminator_output_ranges():
    ld = _latents()
    std, _ = gen.train_latent_gan(ld, _small_cfg(mode=gen.STANDARD))
    p = std.discriminate(np.random.default_rng(0).normal(1, 3, size=(100, 4)))
    assert np.all((p > 0) & (p < 1))
    assert std.critic.out_act == "sigmoid"
    wg, _ = gen.train_latent_gan(ld, _small_cfg())
    assert wg.critic.out_act == "linear"


def test_empty_latents_and_n_zero():
    with pytest.raises(ValueError):
        gen.train_latent_gan(LatentDataset(np.zeros((0, 4)), np.zeros(0)), _small_cfg())
    m, _ = gen.train_latent_gan(_latents(), _small_cfg(iters=0))
    assert gen.sample_latent(m, 0, stream(0, "s")).shape == (0, 4)


def test_latent_gan_checkpoint_round_trip(tmp_path):
    m, _ = gen.train_latent_gan(_latents(), _small_cfg(arch="resnet"), digest="abc")
    save_checkpoint(m.to_checkpoint(), tmp_path / "lgan.sfck")
    ck = load_checkpoint(tmp_path / "lgan.sfck")
    assert all(k.startswith("lgan.") for k in ck.arrays)
    back = gen.LatentGanModel.from_checkpoint(ck)
    assert back.ae_digest == "abc" and back.mode == m.mode
    np.testing.assert_allclose(gen.sample_latent(back, 5, stream(0, "s")),
                               gen.sample_latent(m, 5, stream(0, "s")), atol=1e-4)


@pytest.fixture(scope="module")
def gaussian_wgan():
    rng = np.random.default_rng(5)
    x = rng.multivariate_normal([0, 1, -1, 2], np.diag([1, 4, 0.25, 1]), size=2000)
    m, report = gen.train_latent_gan(LatentDataset(x, np.full(2000, 50)), gen.LatentGanConfig(iters=5000, seed=0))
    return x, m, report


@pytest.mark.slow
def test_wgan_gp_gradient_norms_approach_one(gaussian_wgan):
    _, _, report = gaussian_wgan
    tail = np.array(report.grad_norm[-len(report.grad_norm) // 10:])
    assert 0.5 <= np.mean(np.abs(tail)) <= 1.5


@pytest.mark.slow
def test_wgan_gp_samples_match_gaussian_moments(gaussian_wgan):
    # Generated mean and covariance inside 3-sigma bootstrap bands of the real ones.
    x, m, _ = gaussian_wgan
    z = gen.sample_latent(m, 2000, stream(0, "check"))
    boot = np.random.default_rng(0)
    means, covs = [], []
    for _ in range(200):
        xb = x[boot.integers(0, 2000, 2000)]
        means.append(xb.mean(axis=0))
        covs.append(np.cov(xb.T))
    means, covs = np.array(means), np.array(covs)
    assert np.all(np.abs(z.mean(axis=0) - x.mean(axis=0)) <= 3 * means.std(axis=0))
    assert np.all(np.abs(np.cov(z.T) - np.cov(x.T)) <= 3 * covs.std(axis=0))


# -- pipeline from latents to trajectories -----------------------------------------------------


@pytest.fixture(scope="module")
def pipeline():
    ds = synth_dataset({ScenarioLabel.CutIn: 30}, SynthParams(), 4)
    stats = fit_normalization(ds)
    nds = normalize(ds, stats)
    ae = AeModel.init(stream(0, "ae"), 8, 4)
    ld = LatentDataset(encode_dataset(ae, nds), nds.lengths)
    lm = train_length_estimator(ld, LenConfig(iters=50))
    lg, _ = gen.train_latent_gan(ld, _small_cfg(), digest=gen.ae_digest(ae))
    return nds, ae, ld, lm, lg


def test_generate_five_in_range(pipeline):
    _, ae, _, lm, lg = pipeline
    out = gen.generate_trajectories(lg, ae, lm, 5, stream(0, "g"))
    assert len(out) == 5 and all(30 <= len(t) <= 70 for t in out)
    assert len(gen.generate_trajectories(lg, ae, lm, 0, stream(0, "g"))) == 0


def test_replayed_latents_reproduce_ae_reconstructions(pipeline, monkeypatch):
    nds, ae, ld, lm, lg = pipeline
    monkeypatch.setattr(gen, "sample_latent", lambda m, n, rng: ld.x[:n])
    monkeypatch.setattr(gen, "estimate_lengths", lambda lm, z: ld.y[:len(z)])
    out = gen.generate_trajectories(lg, ae, lm, 6, stream(0, "g"))
    for t, src in zip(out, nds.trajectories[:6]):
        np.testing.assert_allclose(t.points, reconstruct(ae, src), atol=1e-12)


def test_latent_space_mismatch_detected(pipeline):
    _, ae, _, lm, lg = pipeline
    other = AeModel.init(stream(1, "ae"), 8, 4)
    with pytest.raises(gen.LatentSpaceMismatch):
        gen.generate_trajectories(lg, other, lm, 2, stream(0, "g"))
    wider = AeModel.init(stream(0, "ae"), 8, 6)
    with pytest.raises(gen.LatentSpaceMismatch):
        gen.check_latent_space(lg, wider)
    with pytest.raises(gen.LatentSpaceMismatch):
        gen.check_latent_space(lg, ae, lm, lm_digest="0" * 64)


# -- RC-GAN -----------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def rc_data():
    ds = synth_dataset({ScenarioLabel.CutIn: 60}, SynthParams(), 6)
    return normalize(ds, fit_normalization(ds))


def _rc_cfg(**kw):
    base = dict(hidden_size=8, gen_layers=2, disc_hidden=8, noise_dim=3, iters=10, batch=8,
                seed=2, snapshot_every=5)
    base.update(kw)
    return gen.RcganConfig(**base)


def test_rcgan_zero_iterations_is_init(rc_data):
    m, report = gen.train_rcgan(rc_data, _rc_cfg(iters=0))
    ref = gen.init_rcgan(_rc_cfg())
    assert report.iters == []
    for (k, a), (_, b) in zip(m.named().items(), ref.named().items()):
        assert np.array_equal(a.data, b.data), k


def test_rcgan_deterministic_and_snapshots(rc_data):
    a, ra = gen.train_rcgan(rc_data, _rc_cfg())
    b, rb = gen.train_rcgan(rc_data, _rc_cfg())
    assert ra.to_csv() == rb.to_csv()
    assert gen.params_digest(a.named()) == gen.params_digest(b.named())
    assert [s[0] for s in ra.snapshots] == [5, 10]


def test_rcgan_exact_lengths_everywhere(rc_data):
    m = gen.init_rcgan(_rc_cfg())
    m.norm_stats = rc_data.norm_stats
    for length in range(30, 71):
        out = gen.sample_rcgan(m, length, 2, stream(length, "s"))
        assert [len(t) for t in out] == [length, length]
    assert [len(t) for t in gen.sample_rcgan(m, 42, 3, stream(0, "s"))] == [42] * 3


def test_rcgan_sampling_contract(rc_data):
    m = gen.init_rcgan(_rc_cfg())
    with pytest.raises(ValueError):
        gen.sample_rcgan(m, 29, 1, stream(0, "s"))
    with pytest.raises(ValueError):
        gen.sample_rcgan(m, 71, 1, stream(0, "s"))
    assert len(gen.sample_rcgan(m, 40, 0, stream(0, "s"))) == 0
    a = gen.sample_rcgan(m, 40, 4, stream(3, "s"))
    b = gen.sample_rcgan(m, 40, 4, stream(3, "s"))
    assert all(x.points.tobytes() == y.points.tobytes() for x, y in zip(a, b))
    pts = list(a)
    assert all(dtw(pts[i], pts[j]) > 0 for i in range(4) for j in range(i + 1, 4))


def test_rcgan_discriminator_per_step_probabilities():
    m = gen.init_rcgan(_rc_cfg())
    x = np.random.default_rng(0).normal(size=(33, 5, 2))
    p = gen.rcgan_probabilities(m, x)
    assert p.shape == (33, 5, 1)
    assert np.all((p > 0) & (p < 1))


def test_rcgan_empty_dataset_and_checkpoint(rc_data, tmp_path):
    from drivegen.trajectory import Dataset
    with pytest.raises(ValueError):
        gen.train_rcgan(Dataset(), _rc_cfg())
    m, _ = gen.train_rcgan(rc_data, _rc_cfg(iters=3))
    save_checkpoint(m.to_checkpoint(), tmp_path / "rc.sfck")
    ck = load_checkpoint(tmp_path / "rc.sfck")
    assert all(k.startswith("rcgan.") for k in ck.arrays)
    back = gen.RcganModel.from_checkpoint(ck)
    a = gen.sample_rcgan(back, 50, 2, stream(0, "s"))
    b = gen.sample_rcgan(m, 50, 2, stream(0, "s"))
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.points, y.points, atol=1e-3)
