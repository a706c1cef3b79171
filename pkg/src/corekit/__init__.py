"""corekit: core-set driven active learning for micrograph defect quantification.

Library layout:
  raster      image/mask/probability-map types and PNG/PGM I/O
  features    per-image feature vectors and matrix standardization
  embedding   PCA, exact t-SNE, Isomap
  clustering  k-means, silhouette score, automatic k selection
  selection   SMILE / uncertainty / random round selection, maximin LHS designs
  segment     Otsu baseline, ensemble uncertainty, simulated learner, patch sampler
  metrics     pixel confusion, macro F1, 1-D and sliced Wasserstein coverage
  defects     instance extraction, patch windows, heuristic classes, process maps
  synthgen    seeded synthetic micrograph generator
  ledger      campaign manifest persistence and validation
  campaign    end-to-end active-learning loop driver
  cli         command-line entry point
"""

__version__ = "0.1.0"
