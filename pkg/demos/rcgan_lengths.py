"""
Length-conditioned recurrent GAN
================================

The generator gets the requested length at every step, so every sample has
exactly that many points.  A short run is enough to see the shape emerge;
the acceptance suite trains for 5000 iterations.
"""

import numpy as np

from drivegen import plot
from drivegen.generators import RcganConfig, sample_rcgan, train_rcgan
from drivegen.nn import stream
from drivegen.trajectory import ScenarioLabel, SynthParams, fit_normalization, normalize, synth_dataset

ds = synth_dataset({ScenarioLabel.CutIn: 300}, SynthParams(), seed=5)
nds = normalize(ds, fit_normalization(ds))
m, report = train_rcgan(nds, RcganConfig(iters=800, seed=0, snapshot_every=200))
print("d_loss", np.round(report.d_loss[::100], 3))

for length in (30, 50, 70):
    s = sample_rcgan(m, length, 50, stream(length, "demo"))
    ends = np.array([t.lat[-1] for t in s])
    print(f"L={length}: lengths {set(len(t) for t in s)}, ending in ego lane {np.mean(np.abs(ends) < 0.9):.2f}")
    with open(f"rcgan_L{length}.svg", "w") as fh:
        fh.write(plot.trajectory_lines(list(s)[:20], title=f"RC-GAN samples, {length} frames"))
