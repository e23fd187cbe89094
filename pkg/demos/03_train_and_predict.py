"""
Train one model and score a sequence
====================================

Features are extracted once per sequence, merged (115 x frames), min-max
scaled, pushed through the stacked sparse autoencoder and classified into
four quality bins; the expected bin centre is the per-frame score and the
mean over frames the sequence score.

Run:  python demos/03_train_and_predict.py [DATA_DIR]   (after demo 01)
"""
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from avq.config import AblationConfig
from avq.media import load_manifest
from avq.model import load_model, predict_sequence, save_model, select_features, train_model
from avq.pipeline import cached_features

data = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_data")
records = load_manifest(data / "manifest.csv")

t0 = time.perf_counter()
features = cached_features(records, data / "features")  # reused on a second run
print(f"features for {len(records)} sequences in {time.perf_counter() - t0:.1f} s")

# Hold out the last quarter for a quick sanity check.
n_test = len(records) // 4
train, test = records[:-n_test], records[-n_test:]

config = AblationConfig("Baseline", dims=(60, 25))
with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # small-data warnings are expected here
    model = train_model([(select_features(*features[r.id]), r.mos) for r in train], config)
print("dimension chain:", " -> ".join(map(str, model.dims)))

path = save_model(model, data / "baseline.avqmodel")
model = load_model(path)

pred = []
for r in test:
    score, per_frame = predict_sequence(model, select_features(*features[r.id]))
    pred.append(score)
    print(f"  {r.id}  MOS {r.mos:4.2f}  predicted {score:4.2f}  (frames {per_frame.min():.2f}..{per_frame.max():.2f})")
print(f"held-out PCC {np.corrcoef(pred, [r.mos for r in test])[0, 1]:+.3f} on {len(test)} sequences")
