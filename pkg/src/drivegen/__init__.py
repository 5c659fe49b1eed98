"""Generation, evaluation and screening of variable-length driving-scenario trajectories.

Submodules:

* ``trajectory``   data model, JSONL I/O, normalization, length batching,
                   synthetic scenarios and the rule-based labeler
* ``nn``           numpy autodiff tape, LSTM/MLP/ResNet layers, Adam, checkpoints
* ``autoencoder``  sequence autoencoder and latent-to-length estimator
* ``generators``   latent GAN / WGAN-GP and the length-conditioned recurrent GAN
* ``metrics``      DTW set metrics: matching, coverage, Hungarian
* ``analysis``     PCA/SVD/t-SNE, DBSCAN, cluster consistency, outlier probabilities
* ``plot``         deterministic SVG figures
* ``cli``          the ``drivegen`` command
"""

__version__ = "0.1.0"
