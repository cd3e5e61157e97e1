"""Super-resolve weak labels with each inner classifier and compare to hidden truth.

    python3 demos/pseudo_labels.py [snr_db] [seed]
"""
import sys

import numpy as np

from labelsr.pipeline import INNER_KINDS, BundleFeatures, ExperimentConfig, superresolve, train_inner
from labelsr.postprocess import threshold
from labelsr.synthgen import make_dataset

snr = float(sys.argv[1]) if len(sys.argv) > 1 else -19.8
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
cfg = ExperimentConfig()

bf = BundleFeatures.from_bundle(make_dataset(cfg.event, cfg.noise, snr, seed))
print(f"SNR {snr:g} dB, {bf.weak_positive_frames.size} frames inside weak class-1 segments, "
      f"{int(bf.weak_truth.sum())} of them event frames")

for kind in INNER_KINDS:
    inner = train_inner(bf, kind, cfg, seed)
    series = superresolve(inner, bf, config=cfg)
    idx, labels = threshold(series)
    truth = bf.weak_truth[idx]
    if kind == "KDE":
        centres = bf.fine.band_centers_hz[list(inner.selected)]
        print("KS bands (Hz):", np.round(centres).astype(int))
    # event frames called 0 are the errors that hurt the CNN most
    print(f"{kind:4s} kept {idx.size:4d} (rejected {series.rejected_fraction:.2f})  "
          f"labelled 1: {int(labels.sum()):4d}  events labelled 0: {int(np.sum(truth & (labels == 0))):4d}  "
          f"noise labelled 1: {int(np.sum(~truth.astype(bool) & (labels == 1))):4d}")
