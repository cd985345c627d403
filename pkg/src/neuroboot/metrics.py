"""Feature-quality metrics: SNR and the between-type ERP difference.

Both are computed per subject on trial-averaged ERPs; study-level numbers
are means of the per-subject values across subjects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    EpochSet,
    SentenceType,
    TimeWindow,
    by_sentence_type,
    select_trials,
    window_to_slice,
)
from .errors import DegenerateClassError, DegenerateDenominatorError


@dataclass(frozen=True)
class ErpPair:
    """Per-type trial averages (each n_channels x n_samples)."""

    erp_type1: np.ndarray
    erp_type2: np.ndarray
    n_trials_type1: int
    n_trials_type2: int

    def __post_init__(self):
        if self.erp_type1.shape != self.erp_type2.shape:
            raise DegenerateClassError(
                f"ERP shapes differ: {self.erp_type1.shape} vs {self.erp_type2.shape}"
            )
        if self.n_trials_type1 < 1 or self.n_trials_type2 < 1:
            raise DegenerateClassError("each sentence type needs at least one trial")


@dataclass(frozen=True)
class QualityScore:
    snr_db: float
    delta_erp: float
    signal: TimeWindow
    baseline: TimeWindow


def compute_erp(e: EpochSet) -> ErpPair:
    """Elementwise mean over trials, separately per sentence type."""
    t1 = select_trials(e, by_sentence_type(SentenceType.TYPE1))
    t2 = select_trials(e, by_sentence_type(SentenceType.TYPE2))
    if t1.n_trials == 0 or t2.n_trials == 0:
        raise DegenerateClassError(
            f"need trials of both types, got {t1.n_trials} Type1 / {t2.n_trials} Type2"
        )
    return ErpPair(
        erp_type1=t1.data.mean(axis=0),
        erp_type2=t2.data.mean(axis=0),
        n_trials_type1=t1.n_trials,
        n_trials_type2=t2.n_trials,
    )


def grand_erp(e: EpochSet) -> np.ndarray:
    """Trial average over all trials (n_channels x n_samples)."""
    if e.n_trials == 0:
        raise DegenerateClassError("cannot average an empty epoch set")
    return e.data.mean(axis=0)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def snr(erp: np.ndarray, signal: TimeWindow, baseline: TimeWindow,
        fs: float, t0: float) -> float:
    """20*log10(RMS over the signal window / RMS over the baseline window).

    RMS pools over channels and samples within each window.
    """
    n = erp.shape[1]
    sig = erp[:, window_to_slice(signal, t0, fs, n)]
    base = erp[:, window_to_slice(baseline, t0, fs, n)]
    rms_base = _rms(base)
    if rms_base == 0.0:
        raise DegenerateDenominatorError("baseline RMS is zero")
    return 20.0 * np.log10(_rms(sig) / rms_base)


def delta_erp(pair: ErpPair, signal: TimeWindow, fs: float, t0: float) -> float:
    """Signed mean of (ERP_Type1 - ERP_Type2) over the signal window.

    Channels are reduced by an unweighted mean before the time average; see
    :func:`delta_erp_per_channel` for the unreduced variant.
    """
    per_channel = delta_erp_per_channel(pair, signal, fs, t0)
    return float(per_channel.mean())


def delta_erp_per_channel(pair: ErpPair, signal: TimeWindow, fs: float,
                          t0: float) -> np.ndarray:
    """Per-channel windowed mean of (ERP_Type1 - ERP_Type2)."""
    diff = pair.erp_type1 - pair.erp_type2
    sl = window_to_slice(signal, t0, fs, diff.shape[1])
    return diff[:, sl].mean(axis=1)


def quality_score(e: EpochSet, signal: TimeWindow, baseline: TimeWindow) -> QualityScore:
    """Subject-level SNR and delta-ERP for one (possibly topic-restricted) set."""
    return QualityScore(
        snr_db=snr(grand_erp(e), signal, baseline, e.fs, e.t0),
        delta_erp=delta_erp(compute_erp(e), signal, e.fs, e.t0),
        signal=signal,
        baseline=baseline,
    )
