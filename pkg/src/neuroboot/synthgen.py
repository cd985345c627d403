"""Synthetic multi-subject ERP dataset generator.

Produces two-topic, two-type cohorts with controllable class-difference
amplitudes and noise so that every downstream claim (weight recovery,
decoding gains, calibration) can be checked against known ground truth.

Signal model per trial::

    x(ch, t) = sum_r pattern_r(ch) * (base_r(t) + sign * 0.5 * effect_topic * bump(t))
               * subject_scale  +  noise(ch, t)

where ``sign`` is +1 for Type1 and -1 for Type2, ``bump`` is a Gaussian pulse
(peak value 1) centred at ``erp_latency_s``, the spatial patterns are fixed
orthonormal vectors derived from the cohort seed, and the base waveforms are
type-independent post-stimulus activity. In each pattern coordinate the
expected Type1-Type2 difference at the bump peak is therefore exactly
``effect_topic`` (subject scaling has unit mean). Baseline samples (t < 0)
carry noise only, up to the negligible Gaussian tails of the post-stimulus
waveforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .core import EpochSet, SentenceType, TimeWindow, Topic, TrialLabel, save_epochs
from .errors import ConfigError
from .rng import derive_rng, validate_seed

# fixed cell order: (Bio,T1), (Bio,T2), (Int,T1), (Int,T2)
_CELLS = (
    TrialLabel(Topic.BIO, SentenceType.TYPE1),
    TrialLabel(Topic.BIO, SentenceType.TYPE2),
    TrialLabel(Topic.INT, SentenceType.TYPE1),
    TrialLabel(Topic.INT, SentenceType.TYPE2),
)


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    n_subjects: int = 20
    n_trials_per_cell: int = 40
    n_channels: int = 47
    fs: float = 250.0
    epoch_span: TimeWindow = TimeWindow(-0.2, 1.5)
    erp_latency_s: float = 0.45
    erp_width_s: float = 0.15
    effect_bio: float = 0.3
    effect_int: float = 0.9
    noise_sd: float = 1.0
    spatial_rank: int = 3
    subject_jitter: float = 0.2
    ar1: float = 0.0

    def __post_init__(self):
        validate_seed(self.seed)
        if self.n_subjects < 1 or self.n_trials_per_cell < 1:
            raise ConfigError("n_subjects and n_trials_per_cell must be >= 1")
        if self.effect_bio < 0 or self.effect_int < 0:
            raise ConfigError("effect amplitudes must be >= 0")
        if not self.noise_sd > 0:
            raise ConfigError("noise_sd must be > 0")
        if not 0 < self.spatial_rank <= self.n_channels:
            raise ConfigError("need 0 < spatial_rank <= n_channels")
        if not 0 <= self.ar1 < 1:
            raise ConfigError("ar1 must be in [0, 1)")
        if self.subject_jitter < 0:
            raise ConfigError("subject_jitter must be >= 0")
        if not self.fs > 0:
            raise ConfigError("fs must be > 0")

    @property
    def n_samples(self) -> int:
        span = self.epoch_span.end_s - self.epoch_span.start_s
        return int(round(span * self.fs))

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["epoch_span"] = [self.epoch_span.start_s, self.epoch_span.end_s]
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "SynthConfig":
        d = dict(d)
        if "epoch_span" in d:
            lo, hi = d["epoch_span"]
            d["epoch_span"] = TimeWindow(float(lo), float(hi))
        try:
            return SynthConfig(**d)
        except TypeError as exc:
            raise ConfigError(f"invalid synth config: {exc}") from exc


def gaussian_bump(t: np.ndarray, center_s: float, width_s: float) -> np.ndarray:
    """Unit-peak Gaussian pulse; width_s is its standard deviation."""
    return np.exp(-0.5 * ((t - center_s) / width_s) ** 2)


def bump_window_mean(w: TimeWindow, center_s: float, width_s: float) -> float:
    """Closed-form mean of the unit-peak Gaussian bump over a window.

    (1/(b-a)) * integral_a^b exp(-(t-c)^2 / (2 s^2)) dt, via the error
    function; used by tests as an analytic expectation.
    """
    from math import erf, sqrt, pi

    a = (w.start_s - center_s) / (width_s * sqrt(2.0))
    b = (w.end_s - center_s) / (width_s * sqrt(2.0))
    integral = width_s * sqrt(pi / 2.0) * (erf(b) - erf(a))
    return integral / (w.end_s - w.start_s)


def spatial_patterns(cfg: SynthConfig) -> np.ndarray:
    """Fixed orthonormal spatial patterns (n_channels x spatial_rank).

    The first pattern is anchored on the all-positive direction so the class
    difference survives an unweighted channel average; the rest are seeded
    random directions, orthonormalized. Signs are fixed so each pattern's
    largest-magnitude entry is positive, and the first pattern's channel mean
    is positive.
    """
    rng = derive_rng(cfg.seed, "patterns")
    c, r = cfg.n_channels, cfg.spatial_rank
    basis = rng.standard_normal((c, r))
    basis[:, 0] = 1.0 + 0.1 * rng.standard_normal(c)
    q, _ = np.linalg.qr(basis)
    q = q[:, :r]
    for j in range(r):
        if q[np.argmax(np.abs(q[:, j])), j] < 0:
            q[:, j] = -q[:, j]
    if q[:, 0].mean() < 0:
        q[:, 0] = -q[:, 0]
    return q


def base_waveforms(cfg: SynthConfig, t: np.ndarray) -> np.ndarray:
    """Type-independent post-stimulus activity per pattern (rank x samples).

    Each is a sum of two Gaussian pulses with seeded latencies, widths and
    signed amplitudes. Centers sit at least 3.5 widths after stimulus onset
    so the pre-stimulus baseline stays noise-only (tail < 0.3% of peak).
    """
    rng = derive_rng(cfg.seed, "base")
    out = np.zeros((cfg.spatial_rank, t.size))
    for r in range(cfg.spatial_rank):
        for _ in range(2):
            width = rng.uniform(0.04, 0.12)
            center = rng.uniform(3.5 * width, 1.1)
            amp = rng.uniform(0.5, 1.5) * (1.0 if rng.random() < 0.5 else -1.0)
            out[r] += amp * gaussian_bump(t, center, width)
    return out


def _subject_scale(cfg: SynthConfig, rng: np.random.Generator) -> float:
    """Lognormal amplitude scaling with unit mean and relative sd = jitter."""
    if cfg.subject_jitter == 0:
        return 1.0
    sigma2 = np.log1p(cfg.subject_jitter**2)
    return float(rng.lognormal(mean=-sigma2 / 2.0, sigma=np.sqrt(sigma2)))


def _noise(cfg: SynthConfig, rng: np.random.Generator, shape: tuple) -> np.ndarray:
    eps = rng.standard_normal(shape) * cfg.noise_sd
    if cfg.ar1 == 0:
        return eps
    # stationary AR(1) along time: x[0] = eps[0], then
    # x[t] = ar1 * x[t-1] + sqrt(1 - ar1^2) * eps[t]
    innov = eps.copy()
    innov[..., 1:] *= np.sqrt(1.0 - cfg.ar1**2)
    return lfilter([1.0], [1.0, -cfg.ar1], innov, axis=-1)


def generate_subject(cfg: SynthConfig, subject_index: int) -> EpochSet:
    """Deterministically generate one subject's epochs.

    Trials are blocked by cell in the order (Bio,T1), (Bio,T2), (Int,T1),
    (Int,T2), ``n_trials_per_cell`` each.
    """
    if not 0 <= subject_index < cfg.n_subjects:
        raise ConfigError(
            f"subject_index {subject_index} out of range [0, {cfg.n_subjects})"
        )
    n_samples = cfg.n_samples
    t = cfg.epoch_span.start_s + np.arange(n_samples) / cfg.fs
    patterns = spatial_patterns(cfg)                       # (C, R)
    base = base_waveforms(cfg, t)                          # (R, S)
    bump = gaussian_bump(t, cfg.erp_latency_s, cfg.erp_width_s)

    rng = derive_rng(cfg.seed, "subject", subject_index)
    scale = _subject_scale(cfg, rng)

    n_cell = cfg.n_trials_per_cell
    n_trials = 4 * n_cell
    data = np.empty((n_trials, cfg.n_channels, n_samples))
    labels: list[TrialLabel] = []
    for ci, lab in enumerate(_CELLS):
        effect = cfg.effect_bio if lab.topic is Topic.BIO else cfg.effect_int
        sign = 1.0 if lab.sentence_type is SentenceType.TYPE1 else -1.0
        waves = base + sign * 0.5 * effect * bump          # (R, S)
        clean = (patterns @ waves) * scale                 # (C, S)
        block = slice(ci * n_cell, (ci + 1) * n_cell)
        data[block] = clean[None, :, :]
        labels.extend([lab] * n_cell)
    data += _noise(cfg, rng, (n_trials, cfg.n_channels, n_samples))

    return EpochSet(
        data=data,
        fs=cfg.fs,
        t0=cfg.epoch_span.start_s,
        labels=tuple(labels),
        subject_id=f"S{subject_index:03d}",
    )


def generate_cohort(cfg: SynthConfig) -> list[EpochSet]:
    return [generate_subject(cfg, i) for i in range(cfg.n_subjects)]


def write_cohort(cfg: SynthConfig, out_dir) -> list[Path]:
    """One EPB1 file per subject plus a manifest JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(cfg.n_subjects):
        e = generate_subject(cfg, i)
        p = out / f"{e.subject_id}.epb"
        save_epochs(e, p)
        paths.append(p)
    manifest = {
        "config": cfg.to_json_dict(),
        "files": [p.name for p in paths],
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
