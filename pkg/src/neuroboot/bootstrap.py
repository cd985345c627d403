"""Reliability-weighted bootstrap augmentation.

Augmented trials are sub-averages of source trials sampled with replacement.
Sampling probabilities come from per-trial weights under one of three
schemes:

* uniform      - every trial weighted 1
* weighted     - trials weighted by topic informativeness (w_bio, w_int),
                 with w_bio anchored at 1 and w_int the cross-subject ratio
                 of absolute between-type ERP differences
* shuffled     - the weighted vector with its entries randomly permuted, a
                 null scheme that keeps the weight multiset but destroys its
                 alignment with informativeness

Each augmented trial b draws its own RNG from hash(seed, b), so generating
trials serially or in parallel yields bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import (
    EpochSet,
    SentenceType,
    TimeWindow,
    Topic,
    TrialLabel,
    by_topic,
    select_trials,
)
from .errors import (
    ConfigError,
    DegenerateClassError,
    DegenerateDenominatorError,
    DimensionMismatchError,
)
from .metrics import compute_erp, delta_erp
from .rng import derive_rng, derive_seed, validate_seed


class Scheme(Enum):
    UNIFORM = "uniform"
    WEIGHTED = "weighted"
    RANDOM_SHUFFLED = "shuffled"

    @staticmethod
    def parse(text: str) -> "Scheme":
        for s in Scheme:
            if s.value == text:
                return s
        raise ConfigError(f"unknown scheme {text!r}; expected one of "
                          f"{[s.value for s in Scheme]}")


@dataclass(frozen=True)
class WeightVector:
    """Per-trial sampling weights and the probability vector they induce."""

    weights: np.ndarray
    scheme: Scheme
    probs: np.ndarray = field(init=False)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ConfigError("weights must be a non-empty 1-D vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("weights must be finite and >= 0")
        total = w.sum()
        if total <= 0:
            raise ConfigError("at least one weight must be > 0")
        p = w / total
        assert abs(p.sum() - 1.0) < 1e-12
        w.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.weights.size

    def restrict(self, indices: np.ndarray) -> "WeightVector":
        """Weights restricted to a trial subset, renormalized on construction."""
        sub = self.weights[indices]
        if sub.sum() <= 0:
            raise DegenerateDenominatorError(
                "restricted weight vector has zero total weight"
            )
        return WeightVector(weights=sub, scheme=self.scheme)


@dataclass(frozen=True)
class BootstrapPlan:
    """How many augmented trials to make (L), from how many draws each (k)."""

    k: int
    L: int
    seed: int
    per_class: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"sub-average size k must be >= 1, got {self.k}")
        if self.L < 1:
            raise ConfigError(f"augmented trial count L must be >= 1, got {self.L}")
        validate_seed(self.seed)


def estimate_weights(others: list[EpochSet], signal: TimeWindow) -> tuple[float, float]:
    """Topic weights (w_bio, w_int) from held-out subjects.

    Per subject, the absolute between-type ERP difference is computed for
    each topic separately; the weights are w_bio = 1 and w_int the ratio of
    the cross-subject means. The decoded subject must not be in ``others``.
    """
    if not others:
        raise ConfigError("need at least one other subject to estimate weights")
    abs_deltas = {Topic.BIO: [], Topic.INT: []}
    for e in others:
        for topic in (Topic.BIO, Topic.INT):
            sub = select_trials(e, by_topic(topic))
            if sub.n_trials == 0:
                raise DegenerateClassError(
                    f"subject {e.subject_id!r} has no {topic.value} trials"
                )
            pair = compute_erp(sub)
            abs_deltas[topic].append(abs(delta_erp(pair, signal, e.fs, e.t0)))
    mean_bio = float(np.mean(abs_deltas[Topic.BIO]))
    mean_int = float(np.mean(abs_deltas[Topic.INT]))
    if mean_bio == 0.0:
        raise DegenerateDenominatorError("mean |delta ERP| for Bio is zero")
    return 1.0, mean_int / mean_bio


def build_weight_vector(labels: tuple[TrialLabel, ...] | list[TrialLabel],
                        w_bio: float, w_int: float, scheme: Scheme,
                        seed: int) -> WeightVector:
    """Assemble the per-trial weight vector for a scheme.

    uniform: all ones. weighted: w_bio / w_int by trial topic. shuffled:
    the weighted vector under a seeded uniformly-random permutation of its
    entries.
    """
    if len(labels) == 0:
        raise ConfigError("labels must be non-empty")
    if scheme is Scheme.UNIFORM:
        w = np.ones(len(labels))
    else:
        w = np.array(
            [w_bio if lab.topic is Topic.BIO else w_int for lab in labels],
            dtype=np.float64,
        )
        if scheme is Scheme.RANDOM_SHUFFLED:
            rng = derive_rng(seed, "shuffle-weights")
            w = w[rng.permutation(len(w))]
    return WeightVector(weights=w, scheme=scheme)


def draw_counts(p: WeightVector, k: int, seed: int) -> np.ndarray:
    """Multinomial counts from k independent categorical draws.

    Inverse-CDF sampling: one uniform per draw against the cumulative
    probability vector. k = 0 is allowed internally and yields the zero
    vector.
    """
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    n = len(p)
    if k == 0:
        return np.zeros(n, dtype=np.int64)
    cum = np.cumsum(p.probs)
    u = derive_rng(seed).random(k)
    idx = np.minimum(np.searchsorted(cum, u, side="right"), n - 1)
    return np.bincount(idx, minlength=n).astype(np.int64)


def sub_average(e: EpochSet, counts: np.ndarray, k: int) -> np.ndarray:
    """(1/k) * sum_i counts_i * trial_i, as a (channels x samples) matrix."""
    counts = np.asarray(counts)
    if counts.shape != (e.n_trials,):
        raise DimensionMismatchError(
            f"counts length {counts.shape} does not match {e.n_trials} trials"
        )
    if k < 1:
        raise ConfigError(f"sub-average size k must be >= 1, got {k}")
    if int(counts.sum()) != k:
        raise ConfigError(f"counts sum to {int(counts.sum())}, expected k={k}")
    return np.tensordot(counts.astype(np.float64), e.data, axes=(0, 0)) / k


def augment(e: EpochSet, wv: WeightVector, plan: BootstrapPlan) -> EpochSet:
    """Produce plan.L augmented trials by weighted bootstrap sub-averaging.

    With per_class (the default), each sentence type gets L/2 augmented
    trials sampled only from its own trials, with weights restricted and
    renormalized over that class; augmented labels inherit the class. The
    pooled mode samples every trial from the full set and labels each
    augmented trial by the dominant sentence type of its draw. An augmented
    trial's topic is the dominant topic of its draw (ties go to Bio), since
    a sub-average may mix topics.
    """
    if len(wv) != e.n_trials:
        raise DimensionMismatchError(
            f"weight vector length {len(wv)} does not match {e.n_trials} trials"
        )
    if e.n_trials == 0:
        raise DegenerateClassError("cannot augment an empty epoch set")

    half = plan.L // 2
    if plan.per_class:
        if plan.L % 2 != 0:
            raise ConfigError(f"per-class augmentation needs an even L, got {plan.L}")
        groups = []
        for gi, stype in enumerate((SentenceType.TYPE1, SentenceType.TYPE2)):
            idx = np.array(
                [i for i, lab in enumerate(e.labels) if lab.sentence_type is stype],
                dtype=np.intp,
            )
            if idx.size == 0:
                raise DegenerateClassError(f"no {stype.value} trials to sample from")
            b_range = range(gi * half, (gi + 1) * half)
            groups.append((stype, idx, wv.restrict(idx), b_range))
    else:
        idx = np.arange(e.n_trials, dtype=np.intp)
        groups = [(None, idx, wv, range(plan.L))]

    flat = e.data.reshape(e.n_trials, -1)
    out = np.empty((plan.L, e.n_channels * e.n_samples))
    labels: list[TrialLabel | None] = [None] * plan.L
    for stype, idx, class_wv, b_range in groups:
        pool_flat = flat[idx]
        pool_labels = tuple(e.labels[int(i)] for i in idx)
        int_mask = np.array([lab.topic is Topic.INT for lab in pool_labels], float)
        t1_mask = np.array(
            [lab.sentence_type is SentenceType.TYPE1 for lab in pool_labels], float
        )
        counts_mat = np.stack(
            [draw_counts(class_wv, plan.k, derive_seed(plan.seed, "trial", b))
             for b in b_range]
        ).astype(np.float64)
        out[list(b_range)] = counts_mat @ pool_flat / plan.k
        n_int = counts_mat @ int_mask
        n_t1 = counts_mat @ t1_mask
        for row, b in enumerate(b_range):
            topic = Topic.INT if 2 * n_int[row] > plan.k else Topic.BIO
            row_type = stype
            if row_type is None:
                row_type = (SentenceType.TYPE1 if 2 * n_t1[row] >= plan.k
                            else SentenceType.TYPE2)
            labels[b] = TrialLabel(topic, row_type)

    return EpochSet(
        data=out.reshape(plan.L, e.n_channels, e.n_samples),
        fs=e.fs,
        t0=e.t0,
        labels=tuple(labels),
        subject_id=e.subject_id,
    )
