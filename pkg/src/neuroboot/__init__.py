"""Reliability-weighted bootstrap augmentation and decoding for epoched
multichannel time-series data."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    EpochSet,
    SentenceType,
    TimeWindow,
    Topic,
    TrialLabel,
    crop,
    load_epochs,
    save_epochs,
    select_trials,
)
from .bootstrap import (  # noqa: F401
    BootstrapPlan,
    Scheme,
    WeightVector,
    augment,
    build_weight_vector,
    draw_counts,
    estimate_weights,
    sub_average,
)
