"""End-to-end experiment orchestration.

Composes synth -> preprocess -> metrics -> decode -> stats into a single
reproducible run that emits plot-ready CSVs:

* quality.csv       per-subject SNR and between-type ERP difference per topic
* window_report.csv raw window-decoding rows (one per subject/cell/seed/fold)
* table1.csv        mean +/- SE accuracy per (condition, source, k, scheme)
* timecourse.csv    raw time-resolved decoding rows
* stats.csv         paired scheme comparisons (FDR-corrected) and cluster tests
* manifest.json     config hash, seeds and artifact list

Stages are restartable: a stage whose outputs exist under the current config
hash is skipped, so deleting a downstream artifact and rerunning regenerates
it (identically, by the determinism contract). Independent (subject, cell,
seed) decode tasks run on a bounded process pool; results are merged by
sort key, so thread count never changes the output bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .bootstrap import Scheme, estimate_weights
from .core import EpochSet, TimeWindow, Topic, by_topic, load_epochs, select_trials
from .decode import (
    DecodeConfig,
    DecodingReport,
    ReportRow,
    decode_timecourse,
    decode_window,
    mean_se,
)
from .errors import ConfigError, DegenerateSampleError
from .metrics import quality_score
from .preprocess import FilterSpec, baseline_zscore, downsample, lowpass_zerophase
from .rng import derive_seed, validate_seed
from .stats import cluster_permutation, fdr_bh, paired_t
from .synthgen import SynthConfig, write_cohort

SEED_ENV_VAR = "NEUROBOOT_SEED"

_SCHEMA = {
    "type": "object",
    "required": ["synth", "seeds", "table_grid"],
    "properties": {
        "synth": {"type": "object", "required": ["seed"]},
        "preprocess": {
            "type": "object",
            "properties": {
                "baseline": {"type": "array", "minItems": 2, "maxItems": 2},
                "lowpass_hz": {"type": ["number", "null"]},
                "filter_order": {"type": "integer", "minimum": 2},
                "downsample_factor": {"type": "integer", "minimum": 1},
            },
        },
        "windows": {
            "type": "object",
            "properties": {
                "signal": {"type": "array", "minItems": 2, "maxItems": 2},
                "baseline": {"type": "array", "minItems": 2, "maxItems": 2},
            },
        },
        "decode": {
            "type": "object",
            "properties": {
                "L": {"type": "integer", "minimum": 1},
                "n_folds": {"type": "integer", "minimum": 2},
                "hyper_c": {"type": "number", "exclusiveMinimum": 0},
                "n_components": {"type": "integer", "minimum": 1},
            },
        },
        "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer"}},
        "table_grid": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["condition", "source", "k", "schemes"],
                "properties": {
                    "condition": {"enum": ["Bio", "Int", "BI"]},
                    "source": {"type": "integer", "minimum": 1},
                    "k": {"type": "integer", "minimum": 1},
                    "schemes": {"type": "array", "minItems": 1,
                                "items": {"enum": ["uniform", "weighted", "shuffled"]}},
                },
            },
        },
        "timecourse": {
            "type": "object",
            "required": ["cells"],
            "properties": {
                "cells": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["condition", "scheme"],
                        "properties": {
                            "condition": {"enum": ["Bio", "Int", "BI"]},
                            "scheme": {"enum": ["uniform", "weighted", "shuffled"]},
                        },
                    },
                },
                "source": {"type": "integer", "minimum": 1},
                "k": {"type": "integer", "minimum": 1},
                "seeds": {"type": "array", "minItems": 1,
                          "items": {"type": "integer"}},
                "time_range": {"type": "array", "minItems": 2, "maxItems": 2},
            },
        },
        "stats": {
            "type": "object",
            "properties": {
                "q": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "alpha_cluster": {"type": "number", "exclusiveMinimum": 0,
                                  "exclusiveMaximum": 1},
                "n_perm": {"type": "integer", "minimum": 100},
                "seed": {"type": "integer", "minimum": 0},
                "cluster_pairs": {
                    "type": "array",
                    "items": {"type": "array", "minItems": 2, "maxItems": 2,
                              "items": {"type": "string"}},
                },
            },
        },
    },
}

_DEFAULTS = {
    "preprocess": {"baseline": [-0.2, 0.0], "lowpass_hz": 20.0,
                   "filter_order": 4, "downsample_factor": 1},
    "windows": {"signal": [0.3, 0.6], "baseline": [-0.2, 0.0]},
    "decode": {"L": 250, "n_folds": 5, "hyper_c": 1.0, "n_components": 3},
    "stats": {"q": 0.05, "alpha_cluster": 0.05, "n_perm": 1024, "seed": 0,
              "cluster_pairs": []},
}


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    return normalize_config(cfg)


def normalize_config(cfg: dict) -> dict:
    """Validate the experiment document and fill in defaults.

    The NEUROBOOT_SEED environment variable, when set, replaces the synth
    seed and re-derives every stage seed from it (smoke-test override).
    """
    try:
        jsonschema.validate(cfg, _SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"experiment config: {exc.message}") from exc
    cfg = json.loads(json.dumps(cfg))       # deep copy, JSON-clean
    for section, defaults in _DEFAULTS.items():
        block = dict(defaults)
        block.update(cfg.get(section, {}))
        cfg[section] = block

    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        master = validate_seed(int(env_seed))
        cfg["synth"]["seed"] = master
        cfg["seeds"] = [derive_seed(master, "decode", i)
                        for i in range(len(cfg["seeds"]))]
        if "timecourse" in cfg:
            n = len(cfg["timecourse"].get("seeds", cfg["seeds"]))
            cfg["timecourse"]["seeds"] = [derive_seed(master, "timecourse", i)
                                          for i in range(n)]
        cfg["stats"]["seed"] = derive_seed(master, "stats")

    for s in cfg["seeds"]:
        validate_seed(s)
    synth = SynthConfig.from_json_dict(cfg["synth"])
    for wname in ("signal", "baseline"):
        lo, hi = cfg["windows"][wname]
        TimeWindow(float(lo), float(hi))
    available = 4 * synth.n_trials_per_cell
    for cell in cfg["table_grid"]:
        per_topic = 2 * synth.n_trials_per_cell
        cap = available if cell["condition"] == "BI" else per_topic
        if cell["source"] > cap:
            raise ConfigError(
                f"grid cell {cell}: source exceeds available trials ({cap})"
            )
    if "timecourse" in cfg:
        tc = cfg["timecourse"]
        tc.setdefault("source", None)
        tc.setdefault("k", 8)
        tc.setdefault("seeds", list(cfg["seeds"]))
        tc.setdefault("time_range", None)
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# stage helpers
# ---------------------------------------------------------------------------


def _stage_current(stage_dir: Path, key: str) -> bool:
    marker = stage_dir / "stage.json"
    if not marker.exists():
        return False
    try:
        with open(marker) as fh:
            return json.load(fh).get("config_hash") == key
    except (OSError, json.JSONDecodeError):
        return False


def _mark_stage(stage_dir: Path, key: str) -> None:
    with open(stage_dir / "stage.json", "w") as fh:
        json.dump({"config_hash": key}, fh, sort_keys=True)
        fh.write("\n")


def _preprocess_one(e: EpochSet, pp: dict) -> EpochSet:
    lo, hi = pp["baseline"]
    out = baseline_zscore(e, TimeWindow(float(lo), float(hi)))
    if pp.get("lowpass_hz") is not None:
        out = lowpass_zerophase(out, FilterSpec(cutoff_hz=float(pp["lowpass_hz"]),
                                                order=int(pp["filter_order"])))
    factor = int(pp.get("downsample_factor", 1))
    if factor > 1:
        out = downsample(out, factor)
    return out


def _load_cohort(directory: Path) -> list[EpochSet]:
    from .core import iter_epoch_files

    files = list(iter_epoch_files(directory))
    if not files:
        raise ConfigError(f"no .epb files in {directory}")
    return [load_epochs(p) for p in files]


def loso_weights(cohort: list[EpochSet], signal: TimeWindow) -> dict[str, tuple[float, float]]:
    """Leave-one-subject-out topic weights for every subject in the cohort."""
    weights = {}
    for i, e in enumerate(cohort):
        others = [o for j, o in enumerate(cohort) if j != i]
        weights[e.subject_id] = estimate_weights(others, signal)
    return weights


# ---------------------------------------------------------------------------
# decode task pool
# ---------------------------------------------------------------------------


def _run_decode_task(task: dict) -> list[ReportRow]:
    e = load_epochs(task["epb_path"])
    if task["condition"] == "Bio":
        e = select_trials(e, by_topic(Topic.BIO))
    elif task["condition"] == "Int":
        e = select_trials(e, by_topic(Topic.INT))
    cfg = DecodeConfig(
        scheme=Scheme.parse(task["scheme"]),
        k=task["k"],
        L=task["L"],
        seeds=(task["seed"],),
        weights=tuple(task["weights"]),
        n_folds=task["n_folds"],
        hyper_c=task["hyper_c"],
        n_components=task["n_components"],
        source_trials=task["source"],
        condition=task["condition"],
    )
    if task["mode"] == "window":
        lo, hi = task["window"]
        return decode_window(e, TimeWindow(lo, hi), cfg).rows
    tr = task.get("time_range")
    time_range = TimeWindow(tr[0], tr[1]) if tr else None
    return decode_timecourse(e, cfg, time_range=time_range).rows


def run_tasks(tasks: list[dict], threads: int) -> list[ReportRow]:
    """Execute decode tasks and return their rows merged in sort order."""
    rows: list[ReportRow] = []
    if threads <= 1 or len(tasks) <= 1:
        for t in tasks:
            rows.extend(_run_decode_task(t))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(_run_decode_task, tasks, chunksize=1):
                rows.extend(result)
    return sorted(rows, key=ReportRow.sort_key)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def write_quality_csv(cohort: list[EpochSet], windows: dict, path: Path) -> None:
    signal = TimeWindow(*map(float, windows["signal"]))
    baseline = TimeWindow(*map(float, windows["baseline"]))
    rows = []
    for e in sorted(cohort, key=lambda s: s.subject_id):
        for toi, subset in (("Bio", select_trials(e, by_topic(Topic.BIO))),
                            ("Int", select_trials(e, by_topic(Topic.INT))),
                            ("BI", e)):
            score = quality_score(subset, signal, baseline)
            rows.append([e.subject_id, toi, _fmt(score.snr_db), _fmt(score.delta_erp)])
    _write_csv(path, ["subject", "toi", "snr_db", "delta_erp"], rows)


def write_table_csv(report: DecodingReport, path: Path) -> None:
    """Mean +/- SE accuracy across subjects per (condition, source, k, scheme)."""
    cells: dict[tuple, dict[str, list[float]]] = {}
    for r in report.rows:
        cell = (r.condition, r.source, r.k, r.scheme)
        cells.setdefault(cell, {}).setdefault(r.subject, []).append(r.accuracy)
    out = []
    for cell in sorted(cells):
        per_subject = [float(np.mean(v)) for _, v in sorted(cells[cell].items())]
        mean, se = mean_se(np.array(per_subject))
        out.append([cell[0], cell[1], cell[2], cell[3], len(per_subject),
                    _fmt(mean), _fmt(se)])
    _write_csv(path, ["condition", "source", "k", "scheme", "n_subjects",
                      "mean_accuracy", "se_accuracy"], out)


STATS_COLUMNS = ["test", "comparison", "condition", "source", "k", "n",
                 "mean_a", "mean_b", "t", "df", "p", "reject_fdr",
                 "cluster_start_s", "cluster_end_s", "mass", "n_permutations"]


def _subject_cell_means(report: DecodingReport) -> dict[tuple, dict[str, float]]:
    cells: dict[tuple, dict[str, list[float]]] = {}
    for r in report.rows:
        cell = (r.condition, r.source, r.k, r.scheme)
        cells.setdefault(cell, {}).setdefault(r.subject, []).append(r.accuracy)
    return {cell: {s: float(np.mean(v)) for s, v in sorted(subj.items())}
            for cell, subj in cells.items()}


def write_stats_csv(window_report: DecodingReport, timecourse_report: DecodingReport,
                    stats_cfg: dict, path: Path) -> None:
    """Scheme comparisons per grid cell (paired t, BH-corrected at q) plus
    cluster-based permutation tests between timecourse cells."""
    by_cell = _subject_cell_means(window_report)
    paired_rows = []
    keys = sorted({(c, s, k) for (c, s, k, _) in by_cell})
    for condition, source, k in keys:
        base = by_cell.get((condition, source, k, "uniform"))
        if base is None:
            continue
        for other in ("weighted", "shuffled"):
            cand = by_cell.get((condition, source, k, other))
            if cand is None:
                continue
            subjects = sorted(set(base) & set(cand))
            if len(subjects) < 2:
                continue
            a = np.array([cand[s] for s in subjects])
            b = np.array([base[s] for s in subjects])
            try:
                res = paired_t(a, b)
                t, df, p = res.t, res.df, res.p
            except DegenerateSampleError:
                t = df = p = None     # identical per-subject means; no test
            paired_rows.append({
                "comparison": f"{other}_vs_uniform", "condition": condition,
                "source": source, "k": k, "n": len(subjects),
                "mean_a": float(a.mean()), "mean_b": float(b.mean()),
                "t": t, "df": df, "p": p,
            })
    testable = [r for r in paired_rows if r["p"] is not None]
    rejected = fdr_bh(np.array([r["p"] for r in testable]), stats_cfg["q"]) \
        if testable else np.zeros(0, bool)
    reject_by_id = {id(r): bool(rej) for r, rej in zip(testable, rejected)}

    out = []
    for row in paired_rows:
        degenerate = row["p"] is None
        out.append(["paired_t", row["comparison"], row["condition"],
                    row["source"], row["k"], row["n"], _fmt(row["mean_a"]),
                    _fmt(row["mean_b"]),
                    "" if degenerate else _fmt(row["t"]),
                    "" if degenerate else row["df"],
                    "" if degenerate else _fmt(row["p"]),
                    "" if degenerate else str(reject_by_id[id(row)]),
                    "", "", "", ""])

    tc_cells: dict[str, DecodingReport] = {}
    for r in timecourse_report.rows:
        tc_cells.setdefault(f"{r.condition}:{r.scheme}", DecodingReport()).rows.append(r)
    for pair in stats_cfg.get("cluster_pairs", []):
        name_a, name_b = pair
        if name_a not in tc_cells or name_b not in tc_cells:
            continue
        subj_a, times_a, mat_a = tc_cells[name_a].subject_time_matrix()
        subj_b, times_b, mat_b = tc_cells[name_b].subject_time_matrix()
        if subj_a != subj_b or not np.array_equal(times_a, times_b):
            raise ConfigError(f"cluster pair {pair}: mismatched subjects or times")
        if len(subj_a) < 6:
            continue
        result = cluster_permutation(mat_a, mat_b,
                                     alpha_cluster=stats_cfg["alpha_cluster"],
                                     n_perm=stats_cfg["n_perm"],
                                     seed=stats_cfg["seed"])
        for cluster, p in zip(result.clusters, result.p_values):
            out.append(["cluster", f"{name_a}_vs_{name_b}", "", "", "",
                        len(subj_a), "", "", "", "", _fmt(p), "",
                        _fmt(float(times_a[cluster.start])),
                        _fmt(float(times_a[cluster.end - 1])),
                        _fmt(cluster.mass), result.n_permutations])
    _write_csv(path, STATS_COLUMNS, out)


# ---------------------------------------------------------------------------
# top-level run
# ---------------------------------------------------------------------------


def run_experiment(cfg: dict, out_dir, threads: int = 1) -> dict:
    """Run the full pipeline into ``out_dir`` and return the manifest."""
    cfg = normalize_config(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    key = config_hash(cfg)
    synth_cfg = SynthConfig.from_json_dict(cfg["synth"])

    cohort_dir = out / "cohort"
    if not _stage_current(cohort_dir, key):
        write_cohort(synth_cfg, cohort_dir)
        _mark_stage(cohort_dir, key)

    prep_dir = out / "preprocessed"
    if not _stage_current(prep_dir, key):
        prep_dir.mkdir(parents=True, exist_ok=True)
        from .core import iter_epoch_files, save_epochs

        for p in iter_epoch_files(cohort_dir):
            save_epochs(_preprocess_one(load_epochs(p), cfg["preprocess"]),
                        prep_dir / p.name)
        _mark_stage(prep_dir, key)

    cohort = _load_cohort(prep_dir)
    signal = TimeWindow(*map(float, cfg["windows"]["signal"]))

    quality_path = out / "quality.csv"
    if not quality_path.exists():
        write_quality_csv(cohort, cfg["windows"], quality_path)

    weights = loso_weights(cohort, signal)
    dec = cfg["decode"]
    epb_by_subject = {e.subject_id: str(prep_dir / f"{e.subject_id}.epb")
                      for e in cohort}

    window_path = out / "window_report.csv"
    table_path = out / "table1.csv"
    tc_path = out / "timecourse.csv"
    stats_path = out / "stats.csv"

    need_decode = not (window_path.exists() and table_path.exists()
                       and tc_path.exists() and stats_path.exists())
    if need_decode:
        window_tasks = []
        for cell in cfg["table_grid"]:
            for scheme in cell["schemes"]:
                for sid in sorted(epb_by_subject):
                    for seed in cfg["seeds"]:
                        window_tasks.append({
                            "epb_path": epb_by_subject[sid], "mode": "window",
                            "condition": cell["condition"], "scheme": scheme,
                            "source": cell["source"], "k": cell["k"],
                            "seed": seed, "weights": list(weights[sid]),
                            "L": dec["L"], "n_folds": dec["n_folds"],
                            "hyper_c": dec["hyper_c"],
                            "n_components": dec["n_components"],
                            "window": cfg["windows"]["signal"],
                        })
        window_report = DecodingReport(rows=run_tasks(window_tasks, threads))

        tc_tasks = []
        if "timecourse" in cfg:
            tc = cfg["timecourse"]
            for cell in tc["cells"]:
                for sid in sorted(epb_by_subject):
                    for seed in tc["seeds"]:
                        tc_tasks.append({
                            "epb_path": epb_by_subject[sid], "mode": "timecourse",
                            "condition": cell["condition"],
                            "scheme": cell["scheme"],
                            "source": tc["source"], "k": tc["k"], "seed": seed,
                            "weights": list(weights[sid]),
                            "L": dec["L"], "n_folds": dec["n_folds"],
                            "hyper_c": dec["hyper_c"],
                            "n_components": dec["n_components"],
                            "time_range": tc["time_range"],
                        })
        tc_report = DecodingReport(rows=run_tasks(tc_tasks, threads))

        window_report.to_csv(window_path)
        write_table_csv(window_report, table_path)
        tc_report.to_csv(tc_path)
        write_stats_csv(window_report, tc_report, cfg["stats"], stats_path)

    manifest = {
        "package_version": __version__,
        "config_hash": key,
        "config": cfg,
        "seeds": cfg["seeds"],
        "weights": {sid: list(w) for sid, w in sorted(weights.items())},
        "artifacts": sorted(p.name for p in out.glob("*.csv")),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
