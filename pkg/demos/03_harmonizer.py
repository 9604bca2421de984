"""
Sifting and projecting one batch of gradients
=============================================

Two stages run before every optimiser step. Instances whose gradient norm
reaches the top few percent of recent history are zeroed. Every remaining
gradient then has its component against each conflicting partner removed.
"""
import numpy as np

from doha.harmonizer import GradientBatch, HarmonizerConfig, NormQueue, harmonize_step

# two conflicting instances: (1,0) and (-1,1) have a negative dot product
g = np.array([[1.0, 0.0], [-1.0, 1.0]])
res = harmonize_step(GradientBatch(g), NormQueue(), HarmonizerConfig())
print("plain mean:      ", g.mean(axis=0))
print("harmonized update:", res.update)  # (0.5,0.5) and (0,1) averaged
for p in res.projections:
    print(f"  instance {p.i} projected off {p.j}: dot {p.dot_before:+.2f} -> {p.dot_after:+.2f}")

# a history of ordinary norms makes an outlier stand out
rng = np.random.default_rng(0)
queue = NormQueue(max_len=150, warmup=20, norms=rng.uniform(0.5, 1.5, 100))
batch = rng.normal(scale=0.3, size=(4, 5))
batch[2] *= 20  # a corrupted label produces a huge gradient
res = harmonize_step(GradientBatch(batch, ["a", "b", "c", "d"]), queue, HarmonizerConfig())
print("norms:", np.round(res.raw_norms, 2), " threshold:", round(res.threshold, 3))
print("zeroed:", res.zeroed_ids(GradientBatch(batch, ["a", "b", "c", "d"])))
print("queue length after the step:", len(queue))
