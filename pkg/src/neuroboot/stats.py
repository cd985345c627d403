"""Significance machinery: paired t-test, Benjamini-Hochberg FDR, and a
cluster-based permutation test over time for paired samples.

The permutation null is built by randomly sign-flipping each subject's
difference trace, the standard exchangeability argument for paired designs.
When 2^n_subjects fits within the permutation budget the full sign-flip set
is enumerated and p-values are exact; otherwise random flips are drawn with
per-permutation derived seeds and the (1 + count) / (n_perm + 1) estimator
is used, which never returns zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc
from scipy.stats import t as t_dist

from .errors import ConfigError, DegenerateSampleError, DimensionMismatchError
from .rng import derive_rng, validate_seed


@dataclass(frozen=True)
class PairedTResult:
    t: float
    df: int
    p: float


@dataclass(frozen=True)
class Cluster:
    start: int          # first supra-threshold sample
    end: int            # one past the last (half-open)
    mass: float         # sum of t-values inside the cluster


@dataclass(frozen=True)
class ClusterResult:
    clusters: tuple[Cluster, ...]
    p_values: tuple[float, ...]
    n_permutations: int
    threshold: float
    exhaustive: bool

    def significant(self, alpha: float) -> list[tuple[Cluster, float]]:
        return [(c, p) for c, p in zip(self.clusters, self.p_values) if p <= alpha]


def _as_paired(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"paired shapes differ: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ConfigError("paired samples must be finite")
    return a, b


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t via the regularized
    incomplete beta function: p = I_{df/(df+t^2)}(df/2, 1/2)."""
    return float(betainc(df / 2.0, 0.5, df / (df + float(t) ** 2)))


def paired_t(a, b) -> PairedTResult:
    """Two-sided paired t-test on equal-length vectors paired by subject."""
    a, b = _as_paired(a, b)
    if a.ndim != 1 or a.size < 2:
        raise ConfigError("paired_t needs 1-D samples with n >= 2")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0:
        raise DegenerateSampleError("differences have zero variance")
    n = d.size
    t = float(d.mean() / (sd / np.sqrt(n)))
    df = n - 1
    return PairedTResult(t=t, df=df, p=t_sf_two_sided(t, df))


def fdr_bh(p_values, q: float) -> np.ndarray:
    """Benjamini-Hochberg step-up: reject all ranks up to the largest i with
    p_(i) <= i*q/m. Returns a boolean mask in the original order."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1:
        raise ConfigError("p_values must be 1-D")
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise ConfigError("p-values must lie in [0, 1]")
    m = p.size
    reject = np.zeros(m, dtype=bool)
    if m == 0:
        return reject
    order = np.argsort(p, kind="stable")
    ranked = p[order]
    passing = np.flatnonzero(ranked <= (np.arange(1, m + 1) * q) / m)
    if passing.size:
        reject[order[: passing[-1] + 1]] = True
    return reject


def _t_trace(d: np.ndarray) -> np.ndarray:
    """Per-column one-sample t of difference traces (subjects x time)."""
    n = d.shape[0]
    mean = d.mean(axis=0)
    sd = d.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = mean / (sd / np.sqrt(n))
    return np.nan_to_num(t, nan=0.0, posinf=np.inf, neginf=-np.inf)


def _find_clusters(t: np.ndarray, threshold: float) -> list[Cluster]:
    """Maximal runs of temporally contiguous samples with |t| > threshold."""
    above = np.abs(t) > threshold
    clusters: list[Cluster] = []
    padded = np.concatenate([[False], above, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    for start, end in zip(edges[::2], edges[1::2]):
        clusters.append(Cluster(start=int(start), end=int(end),
                                mass=float(t[start:end].sum())))
    return clusters


def _max_cluster_mass(t: np.ndarray, threshold: float) -> float:
    clusters = _find_clusters(t, threshold)
    if not clusters:
        return 0.0
    return max(abs(c.mass) for c in clusters)


def cluster_permutation(a, b, alpha_cluster: float = 0.05, n_perm: int = 1024,
                        seed: int = 0) -> ClusterResult:
    """Cluster-based sign-flip permutation test on paired (subjects x time)
    accuracy or amplitude matrices.

    Cluster-forming threshold: two-sided alpha_cluster quantile of the
    paired t distribution. Cluster statistic: absolute sum of t-values
    within each contiguous supra-threshold run, compared against the null
    distribution of the maximum such mass under sign flips.
    """
    a, b = _as_paired(a, b)
    if a.ndim != 2:
        raise DimensionMismatchError("need 2-D (subjects x time) inputs")
    n_subjects = a.shape[0]
    if n_subjects < 6:
        raise ConfigError(f"need >= 6 subjects, got {n_subjects}")
    if not 0 < alpha_cluster < 1:
        raise ConfigError("alpha_cluster must be in (0, 1)")
    validate_seed(seed)
    exhaustive = 2**n_subjects <= n_perm
    if not exhaustive and n_perm < 100:
        raise ConfigError(f"need n_perm >= 100, got {n_perm}")

    d = a - b
    df = n_subjects - 1
    threshold = float(t_dist.ppf(1.0 - alpha_cluster / 2.0, df))
    observed = _find_clusters(_t_trace(d), threshold)
    if not observed:
        return ClusterResult(clusters=(), p_values=(),
                             n_permutations=(2**n_subjects if exhaustive else n_perm),
                             threshold=threshold, exhaustive=exhaustive)

    if exhaustive:
        total = 2**n_subjects
        signs = np.empty((total, n_subjects))
        for i in range(total):
            bits = (i >> np.arange(n_subjects)) & 1
            signs[i] = np.where(bits == 1, -1.0, 1.0)
    else:
        total = n_perm
        signs = np.empty((total, n_subjects))
        for i in range(total):
            signs[i] = np.where(
                derive_rng(seed, "perm", i).integers(0, 2, n_subjects) == 1,
                -1.0, 1.0,
            )

    # null t-traces, chunked over permutations; the two-pass variance keeps
    # per-column t bit-identical to _t_trace so exhaustive enumeration can
    # be matched exactly by an independent reimplementation
    null_max = np.empty(total)
    chunk_size = max(1, min(total, 64_000_000 // (8 * n_subjects * d.shape[1])))
    for lo in range(0, total, chunk_size):
        chunk_signs = signs[lo:lo + chunk_size]
        flipped = chunk_signs[:, :, None] * d[None, :, :]
        means = flipped.mean(axis=1)
        sd = flipped.std(axis=1, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_null = means / (sd / np.sqrt(n_subjects))
        t_null = np.nan_to_num(t_null, nan=0.0, posinf=np.inf, neginf=-np.inf)
        for i in range(t_null.shape[0]):
            null_max[lo + i] = _max_cluster_mass(t_null[i], threshold)

    p_values = []
    for c in observed:
        count = int(np.sum(null_max >= abs(c.mass)))
        if exhaustive:
            p_values.append(count / total)
        else:
            p_values.append((1 + count) / (total + 1))
    return ClusterResult(clusters=tuple(observed), p_values=tuple(p_values),
                         n_permutations=total, threshold=threshold,
                         exhaustive=exhaustive)
