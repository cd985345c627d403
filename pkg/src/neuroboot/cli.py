"""Command-line front-end.

Subcommands mirror the pipeline stages (synth / preprocess / metrics /
augment / decode / stats) plus `run`, which composes them end to end from an
experiment config. Exit code 0 on success; pipeline errors exit 2 with a
stage-tagged diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bootstrap import BootstrapPlan, Scheme, augment, build_weight_vector, estimate_weights
from .core import (
    TimeWindow,
    Topic,
    by_topic,
    iter_epoch_files,
    load_epochs,
    save_epochs,
    select_trials,
)
from .decode import DecodeConfig, DecodingReport
from .errors import ConfigError, NeurobootError
from .experiment import (
    _write_csv,
    _fmt,
    load_config,
    run_experiment,
    run_tasks,
    write_quality_csv,
)
from .metrics import quality_score
from .preprocess import FilterSpec, baseline_zscore, downsample, lowpass_zerophase
from .rng import derive_seed
from .stats import cluster_permutation, fdr_bh, paired_t
from .synthgen import SynthConfig, write_cohort


def parse_seeds(text: str) -> list[int]:
    """'1..5' -> [1,2,3,4,5]; '3,7,9' -> [3,7,9]; '42' -> [42]."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ConfigError(f"bad seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(tok) for tok in text.split(",") if tok]


def _load_dir(directory) -> list:
    files = list(iter_epoch_files(directory))
    if not files:
        raise ConfigError(f"no .epb files found in {directory}")
    return [load_epochs(p) for p in files]


def cmd_synth(args) -> int:
    with open(args.config) as fh:
        cfg = SynthConfig.from_json_dict(json.load(fh))
    paths = write_cohort(cfg, args.out)
    print(f"wrote {len(paths)} subject file(s) to {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for path in iter_epoch_files(args.in_dir):
        e = load_epochs(path)
        if args.baseline:
            e = baseline_zscore(e, TimeWindow.parse(args.baseline))
        if args.lowpass:
            e = lowpass_zerophase(e, FilterSpec(cutoff_hz=args.lowpass,
                                                order=args.lowpass_order))
        if args.downsample > 1:
            e = downsample(e, args.downsample)
        save_epochs(e, out / path.name)
        n += 1
    if n == 0:
        raise ConfigError(f"no .epb files found in {args.in_dir}")
    print(f"preprocessed {n} subject file(s) into {args.out}")
    return 0


def cmd_metrics(args) -> int:
    cohort = _load_dir(args.in_dir)
    windows = {"signal": [w for w in _window_pair(args.signal)],
               "baseline": [w for w in _window_pair(args.baseline)]}
    write_quality_csv(cohort, windows, Path(args.out))
    print(f"wrote {args.out}")
    return 0


def _window_pair(text: str) -> tuple[float, float]:
    w = TimeWindow.parse(text)
    return (w.start_s, w.end_s)


def cmd_augment(args) -> int:
    scheme = Scheme.parse(args.scheme)
    cohort = _load_dir(args.in_dir)
    signal = TimeWindow.parse(args.signal)
    weight_pool = _load_dir(args.weights_from) if args.weights_from else cohort
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for e in cohort:
        if scheme is Scheme.UNIFORM:
            w_bio = w_int = 1.0
        else:
            others = [o for o in weight_pool if o.subject_id != e.subject_id]
            w_bio, w_int = estimate_weights(others, signal)
        wv = build_weight_vector(e.labels, w_bio, w_int, scheme,
                                 derive_seed(args.seed, "weights", e.subject_id))
        plan = BootstrapPlan(k=args.k, L=args.L,
                             seed=derive_seed(args.seed, "augment", e.subject_id),
                             per_class=not args.pooled)
        save_epochs(augment(e, wv, plan), out / f"{e.subject_id}.epb")
    print(f"augmented {len(cohort)} subject file(s) into {args.out}")
    return 0


def cmd_decode(args) -> int:
    cohort = _load_dir(args.in_dir)
    seeds = parse_seeds(args.seeds)
    signal = TimeWindow.parse(args.signal)
    window = _window_pair(args.window) if args.window else None
    if args.mode == "window" and window is None:
        raise ConfigError("--window is required in window mode")

    needs_weights = Scheme.parse(args.scheme) is not Scheme.UNIFORM
    tasks = []
    for e in cohort:
        if needs_weights:
            others = [o for o in cohort if o.subject_id != e.subject_id]
            weights = estimate_weights(others, signal)
        else:
            weights = (1.0, 1.0)
        for seed in seeds:
            tasks.append({
                "epb_path": str(Path(args.in_dir) / f"{e.subject_id}.epb"),
                "mode": args.mode,
                "condition": args.condition or _infer_condition(e),
                "scheme": args.scheme,
                "source": args.source_trials,
                "k": args.k, "seed": seed, "weights": list(weights),
                "L": args.L, "n_folds": args.folds, "hyper_c": args.hyper_c,
                "n_components": args.n_components,
                "window": list(window) if window else None,
                "time_range": list(window) if (window and args.mode == "timecourse") else None,
            })
    report = DecodingReport(rows=run_tasks(tasks, args.threads))
    report.to_csv(args.out)
    print(f"wrote {len(report.rows)} row(s) to {args.out}")
    return 0


def _infer_condition(e) -> str:
    topics = e.topics()
    if topics == {Topic.BIO}:
        return "Bio"
    if topics == {Topic.INT}:
        return "Int"
    return "BI"


def cmd_stats(args) -> int:
    rep_a = DecodingReport.from_csv(args.report)
    rep_b = DecodingReport.from_csv(args.against)
    if args.test == "paired-t":
        _stats_paired(rep_a, rep_b, args.q, Path(args.out))
    else:
        _stats_cluster(rep_a, rep_b, args.alpha_cluster, args.n_perm, args.seed,
                       Path(args.out))
    print(f"wrote {args.out}")
    return 0


def _per_subject_by_key(report: DecodingReport) -> dict[str, dict[str, float]]:
    acc: dict[str, dict[str, list[float]]] = {}
    for r in report.rows:
        acc.setdefault(r.t_or_window, {}).setdefault(r.subject, []).append(r.accuracy)
    return {key: {s: float(np.mean(v)) for s, v in sorted(subj.items())}
            for key, subj in acc.items()}


def _stats_paired(rep_a, rep_b, q: float, out: Path) -> None:
    a_by = _per_subject_by_key(rep_a)
    b_by = _per_subject_by_key(rep_b)
    keys = sorted(set(a_by) & set(b_by),
                  key=lambda k: float(k.split(":")[0]))
    results = []
    for key in keys:
        subjects = sorted(set(a_by[key]) & set(b_by[key]))
        if len(subjects) < 2:
            continue
        a = np.array([a_by[key][s] for s in subjects])
        b = np.array([b_by[key][s] for s in subjects])
        res = paired_t(a, b)
        results.append((key, len(subjects), float(a.mean()), float(b.mean()), res))
    reject = (fdr_bh(np.array([r[4].p for r in results]), q)
              if results else np.zeros(0, bool))
    rows = [[key, n, _fmt(ma), _fmt(mb), _fmt(res.t), res.df, _fmt(res.p),
             str(bool(rej))]
            for (key, n, ma, mb, res), rej in zip(results, reject)]
    _write_csv(out, ["t_or_window", "n", "mean_report", "mean_against",
                     "t", "df", "p", "reject_fdr"], rows)


def _stats_cluster(rep_a, rep_b, alpha: float, n_perm: int, seed: int,
                   out: Path) -> None:
    subj_a, times_a, mat_a = rep_a.subject_time_matrix()
    subj_b, times_b, mat_b = rep_b.subject_time_matrix()
    if subj_a != subj_b or not np.array_equal(times_a, times_b):
        raise ConfigError("cluster test needs matching subjects and time axes")
    result = cluster_permutation(mat_a, mat_b, alpha_cluster=alpha,
                                 n_perm=n_perm, seed=seed)
    rows = [[_fmt(float(times_a[c.start])), _fmt(float(times_a[c.end - 1])),
             _fmt(c.mass), _fmt(p), result.n_permutations,
             _fmt(result.threshold)]
            for c, p in zip(result.clusters, result.p_values)]
    _write_csv(out, ["cluster_start_s", "cluster_end_s", "mass", "p",
                     "n_permutations", "t_threshold"], rows)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    manifest = run_experiment(cfg, args.out, threads=args.threads)
    print(f"experiment complete: {args.out} (config {manifest['config_hash']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuroboot",
        description="Weighted bootstrap augmentation and decoding pipeline "
                    "for epoched multichannel data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth, stage="synth")

    p = sub.add_parser("preprocess", help="baseline z-score, low-pass, downsample")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", default="-0.2:0", help="window 'start:end' (s)")
    p.add_argument("--lowpass", type=float, default=None, help="cutoff (Hz)")
    p.add_argument("--lowpass-order", type=int, default=4)
    p.add_argument("--downsample", type=int, default=1)
    p.set_defaults(func=cmd_preprocess, stage="preprocess")

    p = sub.add_parser("metrics", help="per-subject SNR and delta-ERP table")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--signal", default="0.3:0.6")
    p.add_argument("--baseline", default="-0.2:0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics, stage="metrics")

    p = sub.add_parser("augment", help="write bootstrap-augmented epoch files")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--scheme", required=True,
                   choices=[s.value for s in Scheme])
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--weights-from", default=None,
                   help="cohort dir for leave-one-subject-out weight estimation "
                        "(defaults to the input dir)")
    p.add_argument("--signal", default="0.3:0.6")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--pooled", action="store_true",
                   help="sample across sentence types instead of per class")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment, stage="augment")

    p = sub.add_parser("decode", help="within-subject CV decoding")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--mode", choices=["timecourse", "window"], required=True)
    p.add_argument("--window", default=None, help="window 'start:end' (s)")
    p.add_argument("--scheme", required=True, choices=[s.value for s in Scheme])
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--L", type=int, default=250)
    p.add_argument("--source-trials", type=int, default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seeds", default="1", help="e.g. '1..5' or '3,7'")
    p.add_argument("--signal", default="0.3:0.6",
                   help="window for weight estimation")
    p.add_argument("--hyper-c", type=float, default=1.0)
    p.add_argument("--n-components", type=int, default=3)
    p.add_argument("--condition", default=None, choices=["Bio", "Int", "BI"])
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode, stage="decode")

    p = sub.add_parser("stats", help="compare two decoding reports")
    p.add_argument("--report", required=True)
    p.add_argument("--against", required=True)
    p.add_argument("--test", choices=["paired-t", "cluster"], required=True)
    p.add_argument("--q", type=float, default=0.05)
    p.add_argument("--alpha-cluster", type=float, default=0.05)
    p.add_argument("--n-perm", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats, stage="stats")

    p = sub.add_parser("run", help="full experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_run, stage="run")

    return parser


_WINDOW_FLAGS = {"--baseline", "--signal", "--window"}


def _fold_window_values(argv: list[str]) -> list[str]:
    """Join window flags with their values so 'start:end' values that begin
    with a minus sign (e.g. --baseline -0.2:0) survive argparse."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _WINDOW_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = build_parser().parse_args(_fold_window_values(list(argv)))
    try:
        return args.func(args)
    except NeurobootError as exc:
        print(f"neuroboot {args.stage}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"neuroboot {args.stage}: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
