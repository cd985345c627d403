"""Monte-Carlo fixtures for the synthetic-cohort tests.

Computes, over a large pool of independently generated subjects:

1. the distribution of the per-subject |delta-ERP| ratio Int/Bio on raw
   generated data (the generator-level fixture), and
2. the distribution of the leave-one-subject-out weight estimate w_int on
   the preprocessed chain with 19-subject pools (the pipeline-level
   fixture),

and prints the values to freeze into the test suite. Run from the repo
root:

    python tests/oracles/gen_synth_fixtures.py
"""

import numpy as np

from neuroboot.core import TimeWindow, Topic, by_topic, select_trials
from neuroboot.metrics import compute_erp, delta_erp
from neuroboot.preprocess import FilterSpec, baseline_zscore, lowpass_zerophase
from neuroboot.synthgen import SynthConfig, generate_subject

N_POOL = 400
SIGNAL = TimeWindow(0.3, 0.6)
BASELINE = TimeWindow(-0.2, 0.0)


def abs_deltas(e):
    out = {}
    for topic in (Topic.BIO, Topic.INT):
        sub = select_trials(e, by_topic(topic))
        out[topic] = abs(delta_erp(compute_erp(sub), SIGNAL, e.fs, e.t0))
    return out


def main():
    cfg = SynthConfig(seed=7, n_subjects=N_POOL, n_trials_per_cell=40,
                      effect_bio=0.3, effect_int=0.9, noise_sd=1.0)

    raw_ratios = []
    prep_bio, prep_int = [], []
    for i in range(N_POOL):
        e = generate_subject(cfg, i)
        d = abs_deltas(e)
        raw_ratios.append(d[Topic.INT] / d[Topic.BIO])
        p = lowpass_zerophase(baseline_zscore(e, BASELINE), FilterSpec(20.0))
        dp = abs_deltas(p)
        prep_bio.append(dp[Topic.BIO])
        prep_int.append(dp[Topic.INT])
        if (i + 1) % 50 == 0:
            print(f"... {i + 1}/{N_POOL} subjects")

    raw_ratios = np.array(raw_ratios)
    print("\n[raw generator] per-subject |dERP_Int|/|dERP_Bio| (n=%d)" % N_POOL)
    print("  mean   %.4f" % raw_ratios.mean())
    print("  sd     %.4f" % raw_ratios.std(ddof=1))
    print("  se     %.4f" % (raw_ratios.std(ddof=1) / np.sqrt(N_POOL)))
    qs = np.quantile(raw_ratios, [0.001, 0.999])
    print("  q0.001 %.4f  q0.999 %.4f" % (qs[0], qs[1]))

    # LOSO estimator over random disjoint 19-subject pools drawn from the MC
    # pool (fresh pools per draw; estimator = mean|Int| / mean|Bio|)
    prep_bio = np.array(prep_bio)
    prep_int = np.array(prep_int)
    rng = np.random.default_rng(1)
    loso = []
    for _ in range(4000):
        pick = rng.choice(N_POOL, size=19, replace=False)
        loso.append(prep_int[pick].mean() / prep_bio[pick].mean())
    loso = np.array(loso)
    print("\n[preprocessed chain] 19-subject LOSO w_int (4000 resamples)")
    print("  mean   %.4f" % loso.mean())
    print("  sd     %.4f" % loso.std(ddof=1))
    qs = np.quantile(loso, [0.0005, 0.001, 0.999, 0.9995])
    print("  q0.0005 %.4f  q0.001 %.4f  q0.999 %.4f  q0.9995 %.4f"
          % tuple(qs))

    # per-subject preprocessed ratios, for reference
    prep_ratio = prep_int / prep_bio
    print("\n[preprocessed chain] per-subject ratio: mean %.4f sd %.4f"
          % (prep_ratio.mean(), prep_ratio.std(ddof=1)))


if __name__ == "__main__":
    main()
