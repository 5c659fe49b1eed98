"""
Sampling from the latent space and scoring the samples
======================================================

Autoencoder, length estimator and WGAN-GP on the latent vectors, then the
matching / coverage / Hungarian protocol against the real set, next to the
real-vs-real baseline.
"""

from drivegen.autoencoder import (AeConfig, LenConfig, latent_dataset, train_autoencoder,
                                  train_length_estimator)
from drivegen.generators import (LatentGanConfig, ae_digest, generate_trajectories,
                                 train_latent_gan)
from drivegen.metrics import baseline_split_eval, evaluate_sets, format_tables
from drivegen.nn import stream
from drivegen.trajectory import (ScenarioLabel, SynthParams, fit_normalization, normalize,
                                 rule_label, synth_dataset)

real = synth_dataset({ScenarioLabel.CutIn: 200}, SynthParams(), seed=4)
stats = fit_normalization(real)
nreal = normalize(real, stats)

ae, _ = train_autoencoder(nreal, AeConfig(hidden_size=32, latent_size=16, epochs=30, seed=0))
ld = latent_dataset(ae, nreal)
lm = train_length_estimator(ld, LenConfig(iters=1500))
print("length estimator holdout:", lm.report["holdout"])

gan, report = train_latent_gan(ld, LatentGanConfig(iters=500, width=32, seed=0), ae_digest(ae))
print("last critic loss", round(report.d_loss[-1], 4), "mean grad norm", round(report.grad_norm[-1], 3))

base = baseline_split_eval(real, runs=3, seed=0)
n = base.runs[0].n
gen = generate_trajectories(gan, ae, lm, 4 * n, stream(0, "demo"), stats)
print(sum(rule_label(t) is ScenarioLabel.CutIn for t in gen), "of", len(gen), "samples look like cut-ins")
print(format_tables([base, evaluate_sets(gen, real, runs=3, n=n, label="AE-WGAN-GP")]))
