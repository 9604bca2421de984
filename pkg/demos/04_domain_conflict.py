"""
Conflicting domains in the reference corpus
===========================================

The reference corpus has three synthetic domains. Each one leaks extra pulse
into one channel and pushes an in-band distractor through another, and the
roles rotate. At initialization the average gradients of some domains point
in opposing directions.
"""
import numpy as np

from doha.toy import ToyModel, gradient_conflict_report, reference_corpus, reference_domains

for d in reference_domains():
    print(f"{d.name:7s} pulse mix {d.channel_mix}  distractor {d.distractor_hz} Hz along {d.distractor_mix}")

items = reference_corpus(seed=0)
print(len(items), "clips of shape", items[0].clip.shape)

rep = gradient_conflict_report(ToyModel.init(C=4, seed=0), items)
np.set_printoptions(precision=3, suppress=True)
print("domains:", rep.domains)
print("cosine of domain-mean gradients, raw:\n", rep.before)
print("after projecting conflicting instance pairs:\n", rep.after)
print("projections applied:", len(rep.projections))
