"""
Recurrent autoencoder as an outlier screen
==========================================

Train a small LSTM autoencoder on cut-ins, then plant a few trajectories
with a single displaced point and see where they land in the ranking.
"""

import numpy as np

from drivegen import analysis, plot
from drivegen.autoencoder import AeConfig, reconstruction_losses, train_autoencoder
from drivegen.trajectory import (Dataset, ScenarioLabel, SynthParams, Trajectory,
                                 fit_normalization, normalize, synth_dataset)

train = synth_dataset({ScenarioLabel.CutIn: 300}, SynthParams(), seed=2)
stats = fit_normalization(train)
cfg = AeConfig(hidden_size=32, latent_size=16, epochs=25, seed=0)
ae, hist = train_autoencoder(normalize(train, stats), cfg,
                             on_epoch=lambda r: print("epoch", r["epoch"], "val", round(r["val_loss"], 4)))

# Fresh data, five of which get a +30 m jump in one frame.
fresh = synth_dataset({ScenarioLabel.CutIn: 500}, SynthParams(), seed=3)
rng = np.random.default_rng(0)
planted = set(rng.choice(len(fresh), 5, replace=False).tolist())
trajs = []
for k, t in enumerate(fresh):
    if k in planted:
        pts = t.points.copy()
        pts[len(pts) // 2, 1] += 30.0
        t = Trajectory(t.id + "-jump", pts, t.label)
    trajs.append(t)
screen = Dataset(tuple(trajs))

losses = reconstruction_losses(ae, normalize(screen, stats))
scores = analysis.outlier_probabilities(zip(screen.ids, losses))
for rank, s in enumerate(scores[:10], 1):
    print(f"{rank:3d} {s.id:<22} loss {s.loss:.4f} prob {s.prob:.3f}")

by_id = {t.id: t for t in screen}
with open("outliers.svg", "w") as fh:
    fh.write(plot.trajectory_lines([by_id[s.id] for s in scores[:10]], title="top 10 outliers"))
