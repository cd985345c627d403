import json

import numpy as np
import pytest

from neuroboot.cli import main, parse_seeds
from neuroboot.core import load_epochs
from neuroboot.decode import DecodingReport
from neuroboot.errors import ConfigError

SYNTH_CFG = {
    "seed": 4242,
    "n_subjects": 3,
    "n_trials_per_cell": 10,
    "n_channels": 10,
    "spatial_rank": 3,
    "effect_bio": 0.3,
    "effect_int": 0.9,
    "noise_sd": 1.0,
}


@pytest.fixture
def cohort_dir(tmp_path):
    cfg_path = tmp_path / "synth.json"
    cfg_path.write_text(json.dumps(SYNTH_CFG))
    out = tmp_path / "cohort"
    assert main(["synth", "--config", str(cfg_path), "--out", str(out)]) == 0
    return out


def test_parse_seeds():
    assert parse_seeds("1..5") == [1, 2, 3, 4, 5]
    assert parse_seeds("3,7,9") == [3, 7, 9]
    assert parse_seeds("42") == [42]
    with pytest.raises(ConfigError):
        parse_seeds("5..1")


def test_synth_writes_cohort(cohort_dir):
    files = sorted(cohort_dir.glob("*.epb"))
    assert len(files) == 3
    manifest = json.loads((cohort_dir / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 4242
    e = load_epochs(files[0])
    assert e.n_trials == 40 and e.n_channels == 10


def test_preprocess_pipeline(cohort_dir, tmp_path):
    out = tmp_path / "prep"
    rc = main(["preprocess", "--in", str(cohort_dir), "--out", str(out),
               "--baseline", "-0.2:0", "--lowpass", "20"])
    assert rc == 0
    e = load_epochs(sorted(out.glob("*.epb"))[0])
    base = e.data[:, :, :50]
    assert np.abs(base.mean(axis=2)).max() < 0.5     # z-scored then filtered

    out2 = tmp_path / "prep_ds"
    rc = main(["preprocess", "--in", str(cohort_dir), "--out", str(out2),
               "--baseline", "-0.2:0", "--downsample", "5"])
    assert rc == 0
    e2 = load_epochs(sorted(out2.glob("*.epb"))[0])
    assert e2.fs == 50.0
    assert e2.n_samples == 85


def test_metrics_csv(cohort_dir, tmp_path):
    out = tmp_path / "quality.csv"
    rc = main(["metrics", "--in", str(cohort_dir), "--signal", "0.3:0.6",
               "--baseline", "-0.2:0", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "subject,toi,snr_db,delta_erp"
    assert len(lines) == 1 + 3 * 3                     # 3 subjects x 3 TOIs


def test_augment_cli(cohort_dir, tmp_path):
    out = tmp_path / "aug"
    rc = main(["augment", "--in", str(cohort_dir), "--scheme", "weighted",
               "--k", "8", "--L", "50", "--seed", "9", "--out", str(out)])
    assert rc == 0
    e = load_epochs(sorted(out.glob("*.epb"))[0])
    assert e.n_trials == 50


def test_decode_and_stats_cli(cohort_dir, tmp_path):
    rep_u = tmp_path / "uniform.csv"
    rep_w = tmp_path / "weighted.csv"
    for scheme, out in (("uniform", rep_u), ("weighted", rep_w)):
        rc = main(["decode", "--in", str(cohort_dir), "--mode", "window",
                   "--window", "0.3:0.6", "--scheme", scheme, "--k", "4",
                   "--L", "50", "--folds", "5", "--seeds", "2",
                   "--out", str(out)])
        assert rc == 0
    report = DecodingReport.from_csv(rep_u)
    assert len(report.rows) == 3 * 5                   # subjects x folds
    assert all(r.scheme == "uniform" for r in report.rows)

    stats_out = tmp_path / "stats.csv"
    rc = main(["stats", "--report", str(rep_w), "--against", str(rep_u),
               "--test", "paired-t", "--q", "0.05", "--out", str(stats_out)])
    assert rc == 0
    lines = stats_out.read_text().splitlines()
    assert lines[0].startswith("t_or_window,n,mean_report,mean_against")
    assert len(lines) == 2


def test_decode_threads_identical(cohort_dir, tmp_path):
    outs = []
    for threads, name in ((1, "a.csv"), (2, "b.csv")):
        out = tmp_path / name
        rc = main(["decode", "--in", str(cohort_dir), "--mode", "window",
                   "--window", "0.3:0.6", "--scheme", "uniform", "--k", "4",
                   "--L", "50", "--seeds", "1,2", "--threads", str(threads),
                   "--out", str(out)])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_error_exit_code(tmp_path):
    rc = main(["metrics", "--in", str(tmp_path / "nowhere"),
               "--out", str(tmp_path / "x.csv")])
    assert rc == 2
