import numpy as np
import pytest

from neuroboot.core import EpochSet, SentenceType, Topic, TrialLabel

CELL_LABELS = (
    TrialLabel(Topic.BIO, SentenceType.TYPE1),
    TrialLabel(Topic.BIO, SentenceType.TYPE2),
    TrialLabel(Topic.INT, SentenceType.TYPE1),
    TrialLabel(Topic.INT, SentenceType.TYPE2),
)


def make_epochs(data, fs=250.0, t0=-0.2, labels=None, subject_id="S000"):
    data = np.asarray(data, dtype=np.float64)
    if labels is None:
        labels = tuple(CELL_LABELS[i % 4] for i in range(data.shape[0]))
    return EpochSet(data=data, fs=fs, t0=t0, labels=tuple(labels),
                    subject_id=subject_id)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_epochs(rng):
    """8 trials (2 per label cell), 3 channels, 100 samples at 250 Hz."""
    labels = tuple(CELL_LABELS[i // 2] for i in range(8))
    return make_epochs(rng.normal(size=(8, 3, 100)), labels=labels)
