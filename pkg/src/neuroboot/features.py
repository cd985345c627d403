"""Spatial feature extraction: PCA over channels, fitted on group ERPs.

The projector is fitted on class-average responses concatenated over time
(channels x total-samples), via eigendecomposition of the channel covariance.
Channel-centering offsets estimated at fit time are reapplied at projection
time so held-out data never informs the fit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import EpochSet
from .errors import ConfigError, DimensionMismatchError, NonFiniteDataError


@dataclass(frozen=True)
class SpatialProjector:
    """Row-orthonormal channels-to-components map with centering offsets."""

    components: np.ndarray              # (n_components, n_channels)
    explained_variance_ratio: np.ndarray
    center: np.ndarray                  # per-channel fit-time mean
    fitted_on: str = ""

    def __post_init__(self):
        comps = np.ascontiguousarray(self.components, dtype=np.float64)
        evr = np.ascontiguousarray(self.explained_variance_ratio, dtype=np.float64)
        center = np.ascontiguousarray(self.center, dtype=np.float64)
        if comps.ndim != 2:
            raise DimensionMismatchError("components must be 2-D")
        if center.shape != (comps.shape[1],):
            raise DimensionMismatchError("center length must equal n_channels")
        gram = comps @ comps.T
        if np.max(np.abs(gram - np.eye(comps.shape[0]))) > 1e-9:
            raise ConfigError("projector rows are not orthonormal")
        if evr.shape != (comps.shape[0],):
            raise DimensionMismatchError("one variance ratio per component required")
        if np.any(evr < -1e-12) or np.any(np.diff(evr) > 1e-12) or evr.sum() > 1 + 1e-9:
            raise ConfigError("variance ratios must be non-increasing, in [0, 1], sum <= 1")
        for arr in (comps, evr, center):
            arr.flags.writeable = False
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "explained_variance_ratio", evr)
        object.__setattr__(self, "center", center)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_channels(self) -> int:
        return self.components.shape[1]


def fit_projector(group_erps: list[tuple[str, np.ndarray]], n_components: int,
                  fitted_on: str = "") -> SpatialProjector:
    """Fit the top principal components of channel covariance.

    group_erps: (group-id, channels x samples) pairs, concatenated along the
    time axis before fitting. Components are ordered by descending
    eigenvalue; each component's largest-magnitude entry is made positive;
    exact eigenvalue ties are broken by lexicographic order of the
    sign-normalized eigenvectors.
    """
    if not group_erps:
        raise ConfigError("need at least one group ERP")
    mats = []
    n_channels = None
    for gid, m in group_erps:
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionMismatchError(f"group {gid!r}: ERP must be 2-D")
        if n_channels is None:
            n_channels = m.shape[0]
        elif m.shape[0] != n_channels:
            raise DimensionMismatchError(
                f"group {gid!r}: {m.shape[0]} channels, expected {n_channels}"
            )
        if not np.all(np.isfinite(m)):
            raise NonFiniteDataError(f"group {gid!r}: non-finite ERP values")
        mats.append(m)
    if not 1 <= n_components <= n_channels:
        raise ConfigError(
            f"need 1 <= n_components <= n_channels ({n_channels}), got {n_components}"
        )
    x = np.concatenate(mats, axis=1)
    if x.shape[1] < max(n_components, 2):
        raise DimensionMismatchError(
            f"{x.shape[1]} time column(s) cannot support {n_components} components"
        )
    center = x.mean(axis=1)
    xc = x - center[:, None]
    cov = (xc @ xc.T) / (x.shape[1] - 1)
    vals, vecs = np.linalg.eigh(cov)          # ascending
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    for j in range(vecs.shape[1]):
        if vecs[np.argmax(np.abs(vecs[:, j])), j] < 0:
            vecs[:, j] = -vecs[:, j]
    order = _tie_broken_order(vals, vecs)
    vals = vals[order]
    vecs = vecs[:, order]
    total = vals.sum()
    ratios = np.clip(vals[:n_components], 0.0, None)
    ratios = ratios / total if total > 0 else np.zeros(n_components)
    return SpatialProjector(
        components=vecs[:, :n_components].T,
        explained_variance_ratio=ratios,
        center=center,
        fitted_on=fitted_on,
    )


def _tie_broken_order(vals: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Stable descending order; exact ties resolved lexicographically."""
    order = list(range(len(vals)))
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and vals[order[j + 1]] == vals[order[i]]:
            j += 1
        if j > i:
            order[i:j + 1] = sorted(order[i:j + 1], key=lambda c: tuple(vecs[:, c]))
        i = j + 1
    return np.array(order, dtype=np.intp)


def project(e: EpochSet, p: SpatialProjector) -> np.ndarray:
    """Apply the projector per trial: (n_trials, n_components, n_samples).

    Fit-time channel means are subtracted before the linear map.
    """
    if e.n_channels != p.n_channels:
        raise DimensionMismatchError(
            f"epoch set has {e.n_channels} channels, projector expects {p.n_channels}"
        )
    centered = e.data - p.center[None, :, None]
    return np.matmul(p.components, centered)


def save_projector(p: SpatialProjector, path) -> None:
    doc = {
        "components": p.components.tolist(),
        "explained_variance_ratio": p.explained_variance_ratio.tolist(),
        "center": p.center.tolist(),
        "fitted_on": p.fitted_on,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_projector(path) -> SpatialProjector:
    with open(path) as fh:
        doc = json.load(fh)
    return SpatialProjector(
        components=np.array(doc["components"], dtype=np.float64),
        explained_variance_ratio=np.array(doc["explained_variance_ratio"]),
        center=np.array(doc["center"], dtype=np.float64),
        fitted_on=doc.get("fitted_on", ""),
    )
