"""
Leave-one-domain-out training under four gradient treatments
============================================================

Train on two domains, measure HR error on 300-frame clips of the third, and
repeat for every held-out domain. One seed takes about half a minute; the
acceptance suite runs five.
"""
import sys

import numpy as np

from doha.toy import MODES, REFERENCE_LR_MAX, TrainConfig, leave_one_out, reference_corpus, reference_eval_set

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
corpus, ev = reference_corpus(seed), reference_eval_set(seed)

for mode in MODES:
    folds = leave_one_out(TrainConfig(mode=mode, seed=seed, lr_max=REFERENCE_LR_MAX), corpus, ev)
    maes = {d: r.metrics[-1].holdout_mae for d, r in folds.items()}
    print(f"{mode:10s} " + "  ".join(f"{d} {v:5.2f}" for d, v in maes.items())
          + f"   mean {np.mean(list(maes.values())):5.2f} bpm")

# the CLI equivalent for one fold:
#   doha corpus --seed 0 --out corpus
#   doha corpus --seed 0 --split eval --out eval
#   doha train --corpus-dir corpus --eval-dir eval --holdout dim --mode all --lr-max 5e-3 --out-dir run
#   doha report run/metrics-*.csv --out-svg run/mae.svg --out-csv run/mae.csv
