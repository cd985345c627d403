import numpy as np
import pytest

from neuroboot.core import (
    EpochSet,
    SentenceType,
    TimeWindow,
    Topic,
    TrialLabel,
    by_sentence_type,
    by_topic,
    crop,
    export_csv,
    load_epochs,
    save_epochs,
    select_trials,
    window_to_slice,
)
from neuroboot.errors import (
    DimensionMismatchError,
    EmptyWindowError,
    FileFormatError,
    NonFiniteDataError,
    UnknownLabelCodeError,
)
from neuroboot.rng import derive_rng, derive_seed

from conftest import CELL_LABELS, make_epochs


class TestTrialLabel:
    def test_code_round_trip(self):
        for code in range(4):
            assert TrialLabel.from_code(code).to_code() == code

    def test_code_taxonomy(self):
        assert TrialLabel.from_code(0) == TrialLabel(Topic.BIO, SentenceType.TYPE1)
        assert TrialLabel.from_code(1) == TrialLabel(Topic.BIO, SentenceType.TYPE2)
        assert TrialLabel.from_code(2) == TrialLabel(Topic.INT, SentenceType.TYPE1)
        assert TrialLabel.from_code(3) == TrialLabel(Topic.INT, SentenceType.TYPE2)

    def test_unknown_code(self):
        with pytest.raises(UnknownLabelCodeError):
            TrialLabel.from_code(4)


class TestEpochSetInvariants:
    def test_label_count_mismatch(self, rng):
        with pytest.raises(DimensionMismatchError):
            make_epochs(rng.normal(size=(4, 2, 10)), labels=CELL_LABELS[:3])

    def test_non_finite_rejected(self, rng):
        data = rng.normal(size=(4, 2, 10))
        data[1, 0, 3] = np.nan
        with pytest.raises(NonFiniteDataError):
            make_epochs(data)

    def test_bad_fs(self, rng):
        with pytest.raises(DimensionMismatchError):
            make_epochs(rng.normal(size=(4, 2, 10)), fs=0.0)

    def test_data_is_immutable(self, small_epochs):
        with pytest.raises(ValueError):
            small_epochs.data[0, 0, 0] = 1.0


class TestEpochFileIO:
    def test_round_trip_identity(self, tmp_path, rng):
        # float32-representable payload so load returns the identical tensor
        data = rng.normal(size=(4, 2, 10)).astype(np.float32).astype(np.float64)
        e = make_epochs(data)
        path = tmp_path / "x.epb"
        save_epochs(e, path)
        loaded = load_epochs(path)
        assert np.array_equal(loaded.data, e.data)
        assert loaded.labels == e.labels
        assert loaded.fs == e.fs and loaded.t0 == e.t0
        assert loaded.subject_id == e.subject_id

    def test_load_save_bit_exact_on_files(self, tmp_path, rng):
        e = make_epochs(rng.normal(size=(5, 3, 17)))
        p1 = tmp_path / "a.epb"
        p2 = tmp_path / "b.epb"
        save_epochs(e, p1)
        save_epochs(load_epochs(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.epb"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FileFormatError):
            load_epochs(path)

    def test_label_count_mismatch_in_file(self, tmp_path, rng):
        import json
        import struct

        header = {"subject_id": "S0", "n_trials": 4, "n_channels": 2,
                  "n_samples": 10, "fs": 250.0, "t0": -0.2,
                  "label_codes": [0, 1, 2]}
        blob = json.dumps(header).encode()
        payload = np.zeros(4 * 2 * 10, dtype="<f4").tobytes()
        path = tmp_path / "mismatch.epb"
        path.write_bytes(b"EPB1" + struct.pack("<I", len(blob)) + blob + payload)
        with pytest.raises(DimensionMismatchError):
            load_epochs(path)

    def test_nan_in_file(self, tmp_path):
        import json
        import struct

        header = {"subject_id": "S0", "n_trials": 1, "n_channels": 1,
                  "n_samples": 4, "fs": 250.0, "t0": -0.2, "label_codes": [0]}
        blob = json.dumps(header).encode()
        payload = np.array([0.0, np.nan, 1.0, 2.0], dtype="<f4").tobytes()
        path = tmp_path / "nan.epb"
        path.write_bytes(b"EPB1" + struct.pack("<I", len(blob)) + blob + payload)
        with pytest.raises(NonFiniteDataError):
            load_epochs(path)

    def test_unknown_label_code_in_file(self, tmp_path):
        import json
        import struct

        header = {"subject_id": "S0", "n_trials": 1, "n_channels": 1,
                  "n_samples": 2, "fs": 250.0, "t0": 0.0, "label_codes": [9]}
        blob = json.dumps(header).encode()
        payload = np.zeros(2, dtype="<f4").tobytes()
        path = tmp_path / "code.epb"
        path.write_bytes(b"EPB1" + struct.pack("<I", len(blob)) + blob + payload)
        with pytest.raises(UnknownLabelCodeError):
            load_epochs(path)

    def test_truncated_payload(self, tmp_path, rng):
        e = make_epochs(rng.normal(size=(2, 2, 10)))
        path = tmp_path / "trunc.epb"
        save_epochs(e, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(FileFormatError):
            load_epochs(path)

    def test_csv_export(self, tmp_path, small_epochs):
        path = tmp_path / "debug.csv"
        export_csv(small_epochs, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + small_epochs.n_trials * small_epochs.n_channels


class TestSelectTrials:
    def test_topic_filter_counts(self, rng):
        labels = [CELL_LABELS[2]] * 3 + [CELL_LABELS[0]] * 2    # 3 Int + 2 Bio
        e = make_epochs(rng.normal(size=(5, 2, 10)), labels=labels)
        sel = select_trials(e, by_topic(Topic.INT))
        assert sel.n_trials == 3
        assert all(lab.topic is Topic.INT for lab in sel.labels)

    def test_empty_result(self, rng):
        labels = [CELL_LABELS[0]] * 4
        e = make_epochs(rng.normal(size=(4, 2, 10)), labels=labels)
        sel = select_trials(e, by_topic(Topic.INT))
        assert sel.n_trials == 0
        assert sel.fs == e.fs and sel.t0 == e.t0

    def test_match_all_is_identity(self, small_epochs):
        sel = select_trials(small_epochs, lambda lab: True)
        assert np.array_equal(sel.data, small_epochs.data)
        assert sel.labels == small_epochs.labels

    def test_composition_equals_conjunction(self, small_epochs):
        p1 = by_topic(Topic.INT)
        p2 = by_sentence_type(SentenceType.TYPE2)
        chained = select_trials(select_trials(small_epochs, p1), p2)
        combined = select_trials(small_epochs, lambda lab: p1(lab) and p2(lab))
        assert np.array_equal(chained.data, combined.data)
        assert chained.labels == combined.labels


class TestCrop:
    def test_baseline_sample_count(self, rng):
        e = make_epochs(rng.normal(size=(2, 2, 425)), fs=250.0, t0=-0.2)
        out = crop(e, TimeWindow(-0.2, 0.0))
        assert out.n_samples == 50
        assert out.t0 == -0.2

    def test_full_span_identity(self, small_epochs):
        full = TimeWindow(small_epochs.t0,
                          small_epochs.t0 + small_epochs.n_samples / small_epochs.fs)
        out = crop(small_epochs, full)
        assert np.array_equal(out.data, small_epochs.data)
        assert out.t0 == small_epochs.t0

    def test_empty_intersection(self, rng):
        e = make_epochs(rng.normal(size=(2, 2, 375)), fs=250.0, t0=-0.2)  # 1.5 s
        with pytest.raises(EmptyWindowError):
            crop(e, TimeWindow(2.0, 3.0))

    def test_idempotent(self, small_epochs):
        w = TimeWindow(0.0, 0.2)
        once = crop(small_epochs, w)
        twice = crop(once, w)
        assert np.array_equal(once.data, twice.data)
        assert once.t0 == twice.t0

    def test_window_slice_mapping(self):
        # indices per ceil((start - t0) * fs), boundary-exact at sample times
        sl = window_to_slice(TimeWindow(0.3, 0.6), t0=-0.2, fs=250.0, n_samples=425)
        assert sl.stop - sl.start == 75
        assert sl.start == 125


class TestRngContract:
    def test_derive_seed_stable(self):
        assert derive_seed(42, "a", 1) == derive_seed(42, "a", 1)
        assert derive_seed(42, "a", 1) != derive_seed(42, "a", 2)
        assert derive_seed(42, "a") != derive_seed(43, "a")

    def test_derived_streams_independent(self):
        a = derive_rng(7, "x").random(5)
        b = derive_rng(7, "y").random(5)
        assert not np.allclose(a, b)
        assert np.array_equal(derive_rng(7, "x").random(5), a)
