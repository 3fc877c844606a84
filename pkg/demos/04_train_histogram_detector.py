#!/usr/bin/env python3
# Train the histogram-domain detector on a small synthetic scenario, read the
# evaluation report, and classify individual files. Takes about a minute.

import tempfile

from ceforensics.dataset import ScenarioConfig, build_scenario
from ceforensics.nn import TrainConfig
from ceforensics.trainer import detect, evaluate, train

workdir = tempfile.mkdtemp(prefix="cef-demo-")

cfg = ScenarioConfig(scenario="plain", gammas=(0.6,), qualities=(), patch=64,
                     sizes=(200, 50, 100), seed=8)
manifest = build_scenario(cfg, workdir)

# Desk-scale recipe: small batch, few hundred steps. The reference recipe
# (batch 120, 100k iterations) lives behind the same config for full runs.
tc = TrainConfig(batch_size=32, max_iter=400, seed=0, val_every=100, log_every=50)
ckpt, log = train("hcnn", manifest, tc, f"{workdir}/hcnn.ckpt")

print("iteration  train loss")
for it, loss, _ in log.steps:
    print(f"  {it:5d}     {loss:.4f}")
print("\niteration  val accuracy")
for it, _, acc in log.vals:
    print(f"  {it:5d}     {acc:.4f}")

report = evaluate(ckpt, manifest, "test")
print(f"\ntest accuracy {report.overall_acc:.4f}, confusion tp/fp/tn/fn = "
      f"{report.confusion}")

# The deployment surface: label + softmax confidence per file.
paths = [e.path for e in manifest.split_entries("test")[:5]]
truth = [e.label for e in manifest.split_entries("test")[:5]]
print("\nper-file detection:")
for path, (label, conf), want in zip(paths, detect(ckpt, paths, "histogram"), truth):
    mark = "ok " if label == want else "MISS"
    print(f"  {mark} {label:9s} p={conf:.3f}  ({path.split('/')[-2:]})" )
