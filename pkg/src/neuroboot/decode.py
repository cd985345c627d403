"""Within-subject decoding harness.

Stratified k-fold cross-validation with per-fold, per-split bootstrap
augmentation, spatial projection fitted on training trials only, and a
linear max-margin classifier, evaluated either per time sample or on a
flattened time window.

The classifier solves the standard soft-margin problem

    min_{w,b}  0.5 ||w||^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))

exactly (unregularized bias) via SMO on the dual with second-order working
set selection. Training is deterministic in the data order; prediction ties
(w.x + b == 0) resolve to the +1 class.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numba
import numpy as np

from .bootstrap import BootstrapPlan, Scheme, augment, build_weight_vector
from .core import EpochSet, SentenceType, TimeWindow, Topic, crop, take_trials, window_to_slice
from .errors import ConfigError, DegenerateClassError, DimensionMismatchError, NonFiniteDataError
from .features import SpatialProjector, fit_projector, project
from .metrics import compute_erp
from .rng import derive_rng, derive_seed, validate_seed


# ---------------------------------------------------------------------------
# fold planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    assignments: np.ndarray       # per-trial fold index
    stratified_by: str

    def __post_init__(self):
        a = np.ascontiguousarray(self.assignments, dtype=np.int64)
        a.flags.writeable = False
        object.__setattr__(self, "assignments", a)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)


def make_folds(e: EpochSet, n_folds: int, seed: int) -> FoldPlan:
    """Stratified fold assignment: within each sentence type, trials are
    shuffled within their (topic, type) cell and dealt round-robin, so both
    class and topic counts differ by at most one across folds."""
    if n_folds < 2:
        raise ConfigError(f"need n_folds >= 2, got {n_folds}")
    validate_seed(seed)
    rng = derive_rng(seed, "folds")
    codes = e.label_codes()
    assignments = np.full(e.n_trials, -1, dtype=np.int64)
    multi_topic = len(e.topics()) > 1
    for stype_bit in (0, 1):                     # Type1, Type2
        ordered: list[int] = []
        for topic_bit in (0, 2):                 # Bio, Int cells in code order
            cell = np.flatnonzero(codes == topic_bit + stype_bit)
            ordered.extend(cell[rng.permutation(cell.size)])
        if len(ordered) < n_folds:
            raise DegenerateClassError(
                f"class has {len(ordered)} trials, need >= {n_folds} for "
                f"{n_folds}-fold CV"
            )
        offset = int(rng.integers(n_folds))
        for pos, trial in enumerate(ordered):
            assignments[trial] = (pos + offset) % n_folds
    return FoldPlan(
        n_folds=n_folds,
        assignments=assignments,
        stratified_by="sentence_type+topic" if multi_topic else "sentence_type",
    )


# ---------------------------------------------------------------------------
# linear max-margin classifier
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _smo(K, y, C, tol, max_iter):  # pragma: no cover - exercised via train_linear
    """SMO on the dual: min 0.5 a'Qa - e'a, 0 <= a <= C, y'a = 0,
    with Q_ij = y_i y_j K_ij. Maximal-violating-pair selection for i,
    second-order selection for j; stops when the KKT gap drops below tol."""
    n = K.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    tau = 1e-12
    it = 0
    while it < max_iter:
        gmax = -1e300
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v >= gmax:
                    gmax = v
                    i = t
        gmin = 1e300
        obj_min = 1e300
        j = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * G[t]
                if v < gmin:
                    gmin = v
                diff = gmax + y[t] * G[t]
                if diff > 0:
                    quad = K[i, i] + K[t, t] - 2.0 * y[i] * y[t] * K[i, t]
                    if quad <= 0:
                        quad = tau
                    ov = -(diff * diff) / quad
                    if ov <= obj_min:
                        obj_min = ov
                        j = t
        if gmax - gmin < tol or j == -1:
            break
        qii = K[i, i]
        qjj = K[j, j]
        qij = y[i] * y[j] * K[i, j]
        ai_old = alpha[i]
        aj_old = alpha[j]
        if y[i] != y[j]:
            quad = qii + qjj + 2.0 * qij
            if quad <= 0:
                quad = tau
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = qii + qjj - 2.0 * qij
            if quad <= 0:
                quad = tau
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        di = alpha[i] - ai_old
        dj = alpha[j] - aj_old
        for t in range(n):
            G[t] += y[t] * (y[i] * K[i, t] * di + y[j] * K[j, t] * dj)
        it += 1
    return alpha, it


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    hyper_c: float
    n_iterations: int
    objective: float

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weights + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        z = self.decision_function(features)
        return np.where(z >= 0.0, 1.0, -1.0)


def train_linear(features: np.ndarray, labels: np.ndarray, hyper_c: float = 1.0,
                 tol: float = 1e-6, max_iter: int = 200_000) -> LinearModel:
    """Train the soft-margin linear classifier on (n x d) features and +/-1
    labels. Deterministic given the data order; no RNG involved."""
    x = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise DimensionMismatchError(
            f"features {x.shape} incompatible with {y.size} labels"
        )
    if not np.all(np.isfinite(x)):
        raise NonFiniteDataError("non-finite feature values")
    if not np.all(np.abs(y) == 1.0):
        raise ConfigError("labels must be +/-1")
    if np.all(y > 0) or np.all(y < 0):
        raise DegenerateClassError("training data contains a single class")
    if not hyper_c > 0:
        raise ConfigError(f"hyper_c must be > 0, got {hyper_c}")
    gram = x @ x.T
    alpha, iterations = _smo(gram, y, float(hyper_c), float(tol), int(max_iter))
    w = (alpha * y) @ x
    z = x @ w
    eps = 1e-9 * max(1.0, hyper_c)
    free = (alpha > eps) & (alpha < hyper_c - eps)
    if free.any():
        bias = float(np.mean(y[free] - z[free]))
    else:
        # no free support vectors: bias from the KKT inequality bounds
        margins = y - z
        lower = [margins[t] for t in range(y.size)
                 if (alpha[t] <= eps and y[t] > 0) or (alpha[t] >= hyper_c - eps and y[t] < 0)]
        upper = [margins[t] for t in range(y.size)
                 if (alpha[t] <= eps and y[t] < 0) or (alpha[t] >= hyper_c - eps and y[t] > 0)]
        lo = max(lower) if lower else -np.inf
        hi = min(upper) if upper else np.inf
        if np.isfinite(lo) and np.isfinite(hi):
            bias = float((lo + hi) / 2.0)
        else:
            bias = float(lo if np.isfinite(lo) else hi)
    hinge = np.maximum(0.0, 1.0 - y * (z + bias)).sum()
    objective = float(0.5 * w @ w + hyper_c * hinge)
    return LinearModel(weights=w, bias=bias, hyper_c=float(hyper_c),
                       n_iterations=int(iterations), objective=objective)


# ---------------------------------------------------------------------------
# decoding reports
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("subject", "condition", "scheme", "source", "k", "fold",
                  "t_or_window", "accuracy", "seed")


@dataclass(frozen=True)
class ReportRow:
    subject: str
    condition: str
    scheme: str
    source: int
    k: int
    fold: int
    t_or_window: str
    accuracy: float
    seed: int

    def sort_key(self):
        return (self.subject, self.condition, self.scheme, self.source, self.k,
                self.seed, self.fold, _window_sort_key(self.t_or_window))


def _window_sort_key(text: str) -> float:
    return float(text.split(":")[0])


@dataclass
class DecodingReport:
    rows: list[ReportRow] = field(default_factory=list)

    def extend(self, other: "DecodingReport") -> None:
        self.rows.extend(other.rows)

    def sorted(self) -> "DecodingReport":
        return DecodingReport(rows=sorted(self.rows, key=ReportRow.sort_key))

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for r in self.rows:
                writer.writerow([r.subject, r.condition, r.scheme, r.source, r.k,
                                 r.fold, r.t_or_window, repr(r.accuracy), r.seed])

    @staticmethod
    def from_csv(path) -> "DecodingReport":
        import csv

        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                rows.append(ReportRow(
                    subject=rec["subject"], condition=rec["condition"],
                    scheme=rec["scheme"], source=int(rec["source"]),
                    k=int(rec["k"]), fold=int(rec["fold"]),
                    t_or_window=rec["t_or_window"],
                    accuracy=float(rec["accuracy"]), seed=int(rec["seed"]),
                ))
        return DecodingReport(rows=rows)

    def subject_means(self) -> dict[str, float]:
        """Mean accuracy per subject over every row (folds, seeds, times)."""
        acc: dict[str, list[float]] = {}
        for r in self.rows:
            acc.setdefault(r.subject, []).append(r.accuracy)
        return {s: float(np.mean(v)) for s, v in sorted(acc.items())}

    def subject_time_matrix(self) -> tuple[list[str], np.ndarray, np.ndarray]:
        """(subjects, times, accuracy matrix) with fold/seed means per cell."""
        subjects = sorted({r.subject for r in self.rows})
        times = sorted({_window_sort_key(r.t_or_window) for r in self.rows})
        t_index = {t: i for i, t in enumerate(times)}
        s_index = {s: i for i, s in enumerate(subjects)}
        sums = np.zeros((len(subjects), len(times)))
        counts = np.zeros((len(subjects), len(times)))
        for r in self.rows:
            i, j = s_index[r.subject], t_index[_window_sort_key(r.t_or_window)]
            sums[i, j] += r.accuracy
            counts[i, j] += 1
        if np.any(counts == 0):
            raise DimensionMismatchError("missing (subject, time) cells in report")
        return subjects, np.array(times), sums / counts


def mean_se(values: np.ndarray) -> tuple[float, float]:
    """Mean and standard error (n-1 denominator) across subjects."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


# ---------------------------------------------------------------------------
# decoding harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecodeConfig:
    scheme: Scheme
    k: int
    L: int
    seeds: tuple[int, ...]
    weights: tuple[float, float] = (1.0, 1.0)     # (w_bio, w_int)
    n_folds: int = 5
    hyper_c: float = 1.0
    n_components: int = 3
    source_trials: int | None = None
    per_class: bool = True
    condition: str | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("need at least one seed")
        for s in self.seeds:
            validate_seed(s)
        if self.source_trials is not None and self.source_trials < 1:
            raise ConfigError("source_trials must be >= 1")


def _condition_name(e: EpochSet, cfg: DecodeConfig) -> str:
    if cfg.condition is not None:
        return cfg.condition
    topics = e.topics()
    if topics == {Topic.BIO}:
        return "Bio"
    if topics == {Topic.INT}:
        return "Int"
    return "BI"


def _subsample_sources(e: EpochSet, n_source: int, seed: int) -> EpochSet:
    """Seeded, cell-stratified subset of n_source trials (original order)."""
    if n_source > e.n_trials:
        raise ConfigError(
            f"source_trials={n_source} exceeds available {e.n_trials} trials"
        )
    if n_source == e.n_trials:
        return e
    codes = e.label_codes()
    cells = [np.flatnonzero(codes == c) for c in sorted(set(int(c) for c in codes))]
    if n_source % len(cells) != 0:
        raise ConfigError(
            f"source_trials={n_source} not divisible by {len(cells)} label cells"
        )
    per_cell = n_source // len(cells)
    rng = derive_rng(seed, "subsample")
    chosen: list[int] = []
    for cell in cells:
        if per_cell > cell.size:
            raise ConfigError(
                f"cell has {cell.size} trials, cannot take {per_cell}"
            )
        chosen.extend(cell[rng.permutation(cell.size)[:per_cell]])
    return take_trials(e, np.sort(np.array(chosen, dtype=np.intp)))


def _fit_fold_projector(train: EpochSet, cfg: DecodeConfig, provenance: str) -> SpatialProjector:
    pair = compute_erp(train)
    return fit_projector(
        [("Type1", pair.erp_type1), ("Type2", pair.erp_type2)],
        n_components=cfg.n_components,
        fitted_on=provenance,
    )


def _augmented_split(split: EpochSet, cfg: DecodeConfig, seed: int, fold: int,
                     role: str) -> EpochSet:
    w_bio, w_int = cfg.weights
    wv = build_weight_vector(split.labels, w_bio, w_int, cfg.scheme,
                             derive_seed(seed, "weights", fold, role))
    plan = BootstrapPlan(k=cfg.k, L=cfg.L,
                         seed=derive_seed(seed, "augment", fold, role),
                         per_class=cfg.per_class)
    return augment(split, wv, plan)


def _decode_one_seed(e: EpochSet, cfg: DecodeConfig, seed: int,
                     window: TimeWindow | None,
                     time_range: TimeWindow | None = None) -> list[ReportRow]:
    """One full CV repetition. window=None decodes per time sample,
    optionally restricted to time_range.

    All randomness is derived from (seed, subject_id) so that subjects do
    not share fold assignments or draw patterns: sharing them would couple
    the pattern-conditional accuracy bias across the whole cohort instead
    of averaging it out. Schemes deliberately share the derivation (minus
    the weights), keeping scheme comparisons paired through common random
    numbers.
    """
    condition = _condition_name(e, cfg)
    base_seed = derive_seed(seed, "subject", e.subject_id)
    src = e if cfg.source_trials is None else _subsample_sources(
        e, cfg.source_trials, derive_seed(base_seed, "sources"))
    plan = make_folds(src, cfg.n_folds, derive_seed(base_seed, "folds"))
    rows: list[ReportRow] = []
    for fold in range(cfg.n_folds):
        train_idx = plan.train_indices(fold)
        test_idx = plan.test_indices(fold)
        # leakage guard: folds must partition the source trials
        assert np.intersect1d(train_idx, test_idx).size == 0
        assert train_idx.size + test_idx.size == src.n_trials
        train = take_trials(src, train_idx)
        test = take_trials(src, test_idx)
        digest = hashlib.sha1(train_idx.tobytes()).hexdigest()[:12]
        projector = _fit_fold_projector(
            train, cfg,
            provenance=f"subject={src.subject_id} seed={seed} fold={fold} "
                       f"train_sha1={digest}",
        )
        if window is not None:
            # cropping commutes with sub-averaging (draws depend on labels
            # only, averaging is per-sample), so crop first for speed
            train = crop(train, window)
            test = crop(test, window)
        aug_train = _augmented_split(train, cfg, base_seed, fold, "train")
        aug_test = _augmented_split(test, cfg, base_seed, fold, "test")
        feats_train = project(aug_train, projector)
        feats_test = project(aug_test, projector)
        y_train = aug_train.type_signs()
        y_test = aug_test.type_signs()
        if window is not None:
            model = train_linear(feats_train.reshape(feats_train.shape[0], -1),
                                 y_train, hyper_c=cfg.hyper_c)
            pred = model.predict(feats_test.reshape(feats_test.shape[0], -1))
            rows.append(ReportRow(
                subject=src.subject_id, condition=condition,
                scheme=cfg.scheme.value, source=src.n_trials, k=cfg.k,
                fold=fold, t_or_window=f"{window.start_s!r}:{window.end_s!r}",
                accuracy=float(np.mean(pred == y_test)), seed=seed,
            ))
        else:
            times = aug_train.times()
            if time_range is None:
                t_indices = range(feats_train.shape[2])
            else:
                sl = window_to_slice(time_range, aug_train.t0, aug_train.fs,
                                     aug_train.n_samples)
                t_indices = range(sl.start, sl.stop)
            for t_idx in t_indices:
                model = train_linear(
                    np.ascontiguousarray(feats_train[:, :, t_idx]), y_train,
                    hyper_c=cfg.hyper_c)
                pred = model.predict(feats_test[:, :, t_idx])
                rows.append(ReportRow(
                    subject=src.subject_id, condition=condition,
                    scheme=cfg.scheme.value, source=src.n_trials, k=cfg.k,
                    fold=fold, t_or_window=repr(float(times[t_idx])),
                    accuracy=float(np.mean(pred == y_test)), seed=seed,
                ))
    return rows


def decode_timecourse(e: EpochSet, cfg: DecodeConfig,
                      time_range: TimeWindow | None = None) -> DecodingReport:
    """Time-resolved decoding: an accuracy per fold and time sample.

    The full epoch span is decoded unless time_range restricts it; the
    projector and augmentation always use the full epoch either way.
    """
    rows: list[ReportRow] = []
    for seed in cfg.seeds:
        rows.extend(_decode_one_seed(e, cfg, seed, window=None,
                                     time_range=time_range))
    return DecodingReport(rows=rows)


def decode_window(e: EpochSet, window: TimeWindow, cfg: DecodeConfig) -> DecodingReport:
    """Window decoding: components x window samples flattened into one
    feature vector per augmented trial."""
    window_to_slice(window, e.t0, e.fs, e.n_samples)   # validate early
    rows: list[ReportRow] = []
    for seed in cfg.seeds:
        rows.extend(_decode_one_seed(e, cfg, seed, window=window))
    return DecodingReport(rows=rows)
