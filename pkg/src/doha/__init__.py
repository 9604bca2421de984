"""Self-similarity pulse maps and harmonized multi-domain training.

Submodules:
    signal      synthetic pulses, cardiac band-pass, HR oracle, signal files
    ssp         self-similarity maps, map loss, HR inversion, delay checks
    harmonizer  global norm sifting and instance-wise gradient projection
    toy         a small trainable model, synthetic domains and evaluation
    cli         the ``doha`` command
"""
__version__ = "0.1.0"

from .errors import DataError, DohaError, NumericError, ParameterError, StateError
from .harmonizer import (
    GradientBatch,
    HarmonizeResult,
    HarmonizerConfig,
    NormQueue,
    ggh_sift,
    harmonize_step,
    igh_project,
    top_quantile_threshold,
)
from .signal import Signal, SynthSpec, bandpass, detect_peaks, fft_hr_oracle, synth_ppg
from .ssp import (
    AutocorrSeq,
    SSPMap,
    autocorr_seq,
    build_ssp,
    invert_hr,
    phase_invariance_report,
    ssp_mse_grad,
    ssp_mse_loss,
)
from .toy import (
    MODES,
    DomainSpec,
    ToyModel,
    TrainConfig,
    backward,
    evaluate_hr,
    forward,
    gradient_conflict_report,
    leave_one_out,
    make_corpus,
    reference_corpus,
    reference_domains,
    reference_eval_set,
    train,
)
