"""Shared data model and epoch-file I/O.

An :class:`EpochSet` holds one subject's epoched trials as a
``(n_trials, n_channels, n_samples)`` tensor plus per-trial labels and timing
metadata. Instances are immutable after construction and safe to share across
workers; every operation here is a pure function.

Time windows are half-open ``[start, end)`` everywhere so that crops compose
without duplicating samples.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyWindowError,
    FileFormatError,
    NonFiniteDataError,
    UnknownLabelCodeError,
)

EPB1_MAGIC = b"EPB1"

# Tolerance (in sample units) when mapping window edges to sample indices,
# guarding against float representation of times like 0.2*250.
_EDGE_EPS = 1e-9


class Topic(Enum):
    BIO = "Bio"
    INT = "Int"


class SentenceType(Enum):
    TYPE1 = "Type1"
    TYPE2 = "Type2"


@dataclass(frozen=True)
class TrialLabel:
    """(topic, sentence_type) pair attached to each trial."""

    topic: Topic
    sentence_type: SentenceType

    # single-byte file codes: 0=Bio/Type1, 1=Bio/Type2, 2=Int/Type1, 3=Int/Type2
    def to_code(self) -> int:
        return (2 if self.topic is Topic.INT else 0) + (
            1 if self.sentence_type is SentenceType.TYPE2 else 0
        )

    @staticmethod
    def from_code(code: int) -> "TrialLabel":
        if code not in (0, 1, 2, 3):
            raise UnknownLabelCodeError(f"unknown label code {code!r}")
        topic = Topic.INT if code >= 2 else Topic.BIO
        stype = SentenceType.TYPE2 if code % 2 == 1 else SentenceType.TYPE1
        return TrialLabel(topic, stype)


@dataclass(frozen=True)
class TimeWindow:
    """Half-open time interval [start_s, end_s) in seconds relative to onset."""

    start_s: float
    end_s: float

    def __post_init__(self):
        if not (np.isfinite(self.start_s) and np.isfinite(self.end_s)):
            raise EmptyWindowError("window bounds must be finite")
        if not self.start_s < self.end_s:
            raise EmptyWindowError(
                f"window start {self.start_s} must be < end {self.end_s}"
            )

    @staticmethod
    def parse(text: str) -> "TimeWindow":
        """Parse 'start:end' (seconds), e.g. '-0.2:0' or '0.3:0.6'."""
        parts = text.split(":")
        if len(parts) != 2:
            raise EmptyWindowError(f"cannot parse time window {text!r}")
        return TimeWindow(float(parts[0]), float(parts[1]))


def window_to_slice(w: TimeWindow, t0: float, fs: float, n_samples: int) -> slice:
    """Sample indices whose times t0 + s/fs fall in [w.start_s, w.end_s).

    Raises :class:`EmptyWindowError` when nothing is retained.
    """
    first = int(np.ceil((w.start_s - t0) * fs - _EDGE_EPS))
    stop = int(np.ceil((w.end_s - t0) * fs - _EDGE_EPS))
    first = max(first, 0)
    stop = min(stop, n_samples)
    if first >= stop:
        raise EmptyWindowError(
            f"window [{w.start_s}, {w.end_s}) does not intersect the epoch span"
        )
    return slice(first, stop)


@dataclass(frozen=True)
class EpochSet:
    """One subject's epoched trials.

    data dims: (n_trials, n_channels, n_samples); contiguous per-trial
    matrices so sub-averaging is a single streaming pass. The tensor is
    float64 in memory and marked read-only.
    """

    data: np.ndarray
    fs: float
    t0: float
    labels: tuple[TrialLabel, ...]
    subject_id: str = ""
    _codes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise DimensionMismatchError(
                f"data must be 3-D (trials, channels, samples), got {data.ndim}-D"
            )
        n_trials, n_channels, n_samples = data.shape
        if n_trials != len(self.labels):
            raise DimensionMismatchError(
                f"{len(self.labels)} labels for {n_trials} trials"
            )
        if n_trials > 0 and (n_channels < 1 or n_samples < 1):
            raise DimensionMismatchError(
                f"need n_channels >= 1 and n_samples >= 1, got shape {data.shape}"
            )
        if not self.fs > 0:
            raise DimensionMismatchError(f"fs must be > 0, got {self.fs}")
        if not np.all(np.isfinite(data)):
            bad = np.argwhere(~np.isfinite(data))[0]
            raise NonFiniteDataError(
                f"non-finite value at trial={bad[0]} channel={bad[1]} sample={bad[2]}"
            )
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", tuple(self.labels))
        codes = np.array([lab.to_code() for lab in self.labels], dtype=np.uint8)
        codes.flags.writeable = False
        object.__setattr__(self, "_codes", codes)

    @property
    def n_trials(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    def label_codes(self) -> np.ndarray:
        return self._codes

    def times(self) -> np.ndarray:
        """Sample times in seconds relative to stimulus onset."""
        return self.t0 + np.arange(self.n_samples) / self.fs

    def topics(self) -> set[Topic]:
        return {lab.topic for lab in self.labels}

    def type_signs(self) -> np.ndarray:
        """+1 for Type1, -1 for Type2, per trial."""
        return np.where(self._codes % 2 == 0, 1.0, -1.0)

    def with_data(self, data: np.ndarray, fs: float | None = None,
                  t0: float | None = None) -> "EpochSet":
        """Same labels/metadata with a replaced tensor (and optionally fs/t0)."""
        return EpochSet(
            data=data,
            fs=self.fs if fs is None else fs,
            t0=self.t0 if t0 is None else t0,
            labels=self.labels,
            subject_id=self.subject_id,
        )


LabelPredicate = Callable[[TrialLabel], bool]


def by_topic(topic: Topic) -> LabelPredicate:
    return lambda lab: lab.topic is topic


def by_sentence_type(stype: SentenceType) -> LabelPredicate:
    return lambda lab: lab.sentence_type is stype


def select_trials(e: EpochSet, predicate: LabelPredicate) -> EpochSet:
    """Trials whose labels satisfy the predicate, original order preserved."""
    keep = [i for i, lab in enumerate(e.labels) if predicate(lab)]
    return EpochSet(
        data=e.data[keep] if keep else e.data[:0],
        fs=e.fs,
        t0=e.t0,
        labels=tuple(e.labels[i] for i in keep),
        subject_id=e.subject_id,
    )


def take_trials(e: EpochSet, indices: Sequence[int] | np.ndarray) -> EpochSet:
    """Subset by trial index, preserving the given order."""
    idx = np.asarray(indices, dtype=np.intp)
    return EpochSet(
        data=e.data[idx],
        fs=e.fs,
        t0=e.t0,
        labels=tuple(e.labels[int(i)] for i in idx),
        subject_id=e.subject_id,
    )


def crop(e: EpochSet, w: TimeWindow) -> EpochSet:
    """Samples with t0 + s/fs in [w.start_s, w.end_s); t0 moves to the first
    retained sample."""
    sl = window_to_slice(w, e.t0, e.fs, e.n_samples)
    return e.with_data(e.data[:, :, sl], t0=e.t0 + sl.start / e.fs)


# ---------------------------------------------------------------------------
# EPB1 file format
#
#   4-byte magic "EPB1"
#   u32 little-endian header length
#   UTF-8 JSON header {subject_id, n_trials, n_channels, n_samples, fs, t0,
#                      label_codes: [u8...]}
#   n_trials * n_channels * n_samples little-endian float32, C order
#   (trial-major, then channel, then sample)
# ---------------------------------------------------------------------------


def save_epochs(e: EpochSet, path) -> None:
    header = {
        "subject_id": e.subject_id,
        "n_trials": e.n_trials,
        "n_channels": e.n_channels,
        "n_samples": e.n_samples,
        "fs": e.fs,
        "t0": e.t0,
        "label_codes": [int(c) for c in e.label_codes()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(e.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(EPB1_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_epochs(path) -> EpochSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EPB1_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}, expected {EPB1_MAGIC!r}")
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise FileFormatError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<I", raw_len)
        blob = fh.read(hlen)
        if len(blob) != hlen:
            raise FileFormatError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FileFormatError(f"{path}: header is not valid JSON ({exc})") from exc
        for key in ("subject_id", "n_trials", "n_channels", "n_samples", "fs", "t0",
                    "label_codes"):
            if key not in header:
                raise FileFormatError(f"{path}: header missing field {key!r}")
        n_trials = int(header["n_trials"])
        n_channels = int(header["n_channels"])
        n_samples = int(header["n_samples"])
        codes = header["label_codes"]
        if len(codes) != n_trials:
            raise DimensionMismatchError(
                f"{path}: {len(codes)} label codes for {n_trials} trials"
            )
        labels = tuple(TrialLabel.from_code(int(c)) for c in codes)
        count = n_trials * n_channels * n_samples
        payload = fh.read(count * 4)
        if len(payload) != count * 4:
            raise FileFormatError(
                f"{path}: expected {count * 4} payload bytes, got {len(payload)}"
            )
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(
        n_trials, n_channels, n_samples
    )
    return EpochSet(
        data=data,
        fs=float(header["fs"]),
        t0=float(header["t0"]),
        labels=labels,
        subject_id=str(header["subject_id"]),
    )


def export_csv(e: EpochSet, path) -> None:
    """Debug export: one row per trial x channel, samples as columns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["subject", "trial", "topic", "sentence_type", "channel"]
            + [f"s{i}" for i in range(e.n_samples)]
        )
        for i, lab in enumerate(e.labels):
            for ch in range(e.n_channels):
                writer.writerow(
                    [e.subject_id, i, lab.topic.value, lab.sentence_type.value, ch]
                    + [repr(float(v)) for v in e.data[i, ch]]
                )


def iter_epoch_files(directory) -> Iterable:
    """Sorted .epb files in a directory (deterministic order)."""
    from pathlib import Path

    return sorted(Path(directory).glob("*.epb"))
