"""
Clustering latent vectors
=========================

Encode a three-class set, embed with t-SNE, sweep DBSCAN and check that the
clusters refine the scenario classes.
"""

from drivegen import analysis, plot
from drivegen.autoencoder import AeConfig, encode_dataset, train_autoencoder
from drivegen.trajectory import ScenarioLabel, SynthParams, fit_normalization, normalize, synth_dataset

kinds = (ScenarioLabel.CutIn, ScenarioLabel.DriveByLeft, ScenarioLabel.DriveByRight)
ds = synth_dataset({k: 100 for k in kinds}, SynthParams(), seed=6)
nds = normalize(ds, fit_normalization(ds))
ae, _ = train_autoencoder(nds, AeConfig(hidden_size=32, latent_size=16, epochs=20, seed=0))

lat = encode_dataset(ae, nds)
truth = [t.label for t in ds]
_, ratios = analysis.pca_fit_transform(lat, 2)
print("PCA explained variance of two components:", [round(r, 3) for r in ratios])

emb = analysis.tsne_embed(lat, analysis.TsneConfig(perplexity=30, iters=750))
rows = analysis.sweep_dbscan(emb, truth, [1.0, 2.0, 3.0, 5.0], [5, 10])
for r in rows[:5]:
    print({k: r[k] for k in ("eps", "min_neighbors", "n_clusters", "n_noise", "purity", "refinement")})

with open("tsne_clusters.svg", "w") as fh:
    fh.write(plot.scatter_embedding(emb.points, rows[0]["labels"].labels, title="DBSCAN clusters"))
with open("tsne_truth.svg", "w") as fh:
    fh.write(plot.scatter_embedding(emb.points, [t.value for t in truth], title="scenario classes"))
