"""Synthetic audio-visual sync pretraining: corpus generation, training,
masking, and the synchronization/retrieval evaluation kernels.

The heavy lifting lives in the C++ extension; this package re-exports it.
"""

from synclip._core import (  # noqa: F401
    SynclipError,
    acc_offset,
    audio_featurize,
    estimate_lag,
    evaluate,
    gen_corpus,
    gen_data,
    grad_check,
    inject_lag,
    inspect_checkpoint,
    sample_face_mask,
    sample_uniform_mask,
    similarity_matrix,
    sync_conf,
    train,
    wer,
)

__all__ = [
    "SynclipError",
    "acc_offset",
    "audio_featurize",
    "estimate_lag",
    "evaluate",
    "gen_corpus",
    "gen_data",
    "grad_check",
    "inject_lag",
    "inspect_checkpoint",
    "sample_face_mask",
    "sample_uniform_mask",
    "similarity_matrix",
    "sync_conf",
    "train",
    "wer",
]
