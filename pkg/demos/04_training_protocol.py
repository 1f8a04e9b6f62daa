"""
The training protocol: splits, Adam, repetitions, result table
==============================================================

One experiment = {learning rates} x {repetitions}. Every repetition
draws a fresh seeded train/test split, trains for a fixed number of
epochs with a per-epoch validation re-split, and scores the held-out
test subjects; the table reports mean +/- sample std per learning rate.
Everything is a pure function of the master seed.
"""

import numpy as np

from neuroens.pipeline import load_cohort
from neuroens.results import render_results
from neuroens.synthetic import generate_synthetic_cohort
from neuroens.training import (ExperimentConfig, adam_init, adam_step, holdout_count,
                               run_experiment, split_train_test)

import tempfile
from pathlib import Path

# Step 1 - round-half-up holdout sizes
# ------------------------------------
# 20% of 598 subjects is 120 test subjects, not 119.
for n in (598, 478, 100):
    print(f"n={n}: test={holdout_count(n, 0.2)}")

# Step 2 - seeded, leak-free splits
# ---------------------------------
ids = [f"sub-{i:03d}" for i in range(10)]
train, test = split_train_test(ids, 0.2, seed=3)
print(f"\ntrain {train}\ntest  {test}")

# Step 3 - the optimizer is a pure function too
# ---------------------------------------------
# adam_step(params, grads, state) -> (new_params, new_state); here it
# minimizes (x - 3)^2 from x = 0.
params = [np.array([0.0])]
state = adam_init(params)
for _ in range(200):
    grads = [2.0 * (params[0] - 3.0)]
    params, state = adam_step(params, grads, state, lr=0.1)
print(f"\nargmin of (x-3)^2 after 200 Adam steps: {params[0][0]:.4f}")

# Step 4 - a small experiment end to end
# --------------------------------------
out = Path(tempfile.mkdtemp(prefix="neuroens_demo_"))
manifest = generate_synthetic_cohort(n_subjects=20, dims=(12, 12, 12),
                                     class_effect=0.5, seed=1, out_dir=out)
cfg = ExperimentConfig(model=1, learning_rates=(1e-3,), epochs=12, repetitions=3,
                       master_seed=0, width_scale=0.125, stage_depths=(1,))
data = load_cohort(manifest, cfg.model)
result = run_experiment(data, cfg)

rep = result.repetitions[0]
print(f"\nfirst repetition: seed {rep.rep_seed}, "
      f"test accuracy {rep.test_accuracy:.2f} on {len(rep.test_subjects)} subjects")
print(f"train loss per epoch: {[round(l, 3) for l in rep.history.train_loss]}")

# Step 5 - the result table
# -------------------------
print()
print(render_results(result.table))
