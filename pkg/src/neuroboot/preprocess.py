"""Epoch-level preprocessing: baseline z-scoring, zero-phase low-pass
filtering, and integer-factor downsampling.

All functions are pure and trial-parallel by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, filtfilt

from .core import EpochSet, TimeWindow, window_to_slice
from .errors import ConfigError, DegenerateBaselineError, DimensionMismatchError

_FILTER_KINDS = ("lowpass",)


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float
    order: int = 4
    kind: str = "lowpass"

    def __post_init__(self):
        if self.kind not in _FILTER_KINDS:
            raise ConfigError(f"unsupported filter kind {self.kind!r}")
        if self.order < 2 or self.order % 2 != 0:
            raise ConfigError(f"filter order must be a positive even count, got {self.order}")
        if not self.cutoff_hz > 0:
            raise ConfigError(f"cutoff must be > 0 Hz, got {self.cutoff_hz}")

    def validate_for(self, fs: float) -> None:
        if not self.cutoff_hz < fs / 2:
            raise ConfigError(
                f"cutoff {self.cutoff_hz} Hz must be below Nyquist ({fs / 2} Hz)"
            )


def baseline_zscore(e: EpochSet, baseline: TimeWindow) -> EpochSet:
    """Z-score each trial/channel using its own pre-stimulus baseline.

    out = (x - mean) / sd with mean/sd over the baseline samples of that
    trial-channel (sd uses the n-1 denominator).
    """
    sl = window_to_slice(baseline, e.t0, e.fs, e.n_samples)
    if sl.stop - sl.start < 2:
        raise DegenerateBaselineError(
            f"baseline window holds {sl.stop - sl.start} sample(s); need >= 2"
        )
    base = e.data[:, :, sl]
    mean = base.mean(axis=2, keepdims=True)
    sd = base.std(axis=2, ddof=1, keepdims=True)
    zero = np.argwhere(sd[:, :, 0] == 0.0)
    if zero.size:
        tr, ch = zero[0]
        raise DegenerateBaselineError(
            f"constant baseline in trial={tr} channel={ch}"
        )
    return e.with_data((e.data - mean) / sd)


def lowpass_zerophase(e: EpochSet, spec: FilterSpec) -> EpochSet:
    """Butterworth low-pass applied forward then backward (zero phase).

    The two passes square the magnitude response, so the effective
    attenuation at the cutoff is 0.5 in amplitude. Edges are handled by
    odd-symmetric signal extension of 3 * order samples on each side.
    """
    spec.validate_for(e.fs)
    padlen = 3 * spec.order
    if e.n_samples <= padlen:
        raise DimensionMismatchError(
            f"epoch of {e.n_samples} samples is too short for filter padding ({padlen})"
        )
    b, a = butter(spec.order, spec.cutoff_hz / (e.fs / 2.0), btype="low")
    filtered = filtfilt(b, a, e.data, axis=-1, padtype="odd", padlen=padlen)
    return e.with_data(filtered)


def downsample(e: EpochSet, factor: int) -> EpochSet:
    """Keep samples at indices 0, factor, 2*factor, ...; fs' = fs / factor.

    t0 is unchanged (the first sample is always retained). The caller is
    responsible for having low-passed below the new Nyquist first.
    """
    if factor < 1:
        raise ConfigError(f"downsample factor must be >= 1, got {factor}")
    if factor == 1:
        return e
    return e.with_data(e.data[:, :, ::factor], fs=e.fs / factor)
