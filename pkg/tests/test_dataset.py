import csv
import json
import warnings
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalaffect.catalog import FeatureCatalog, audiovisual_catalog, display_name, infer_catalog
from causalaffect.dataset import (
    STD_FLOOR,
    DomainStore,
    FrameSeriesSample,
    IngestError,
    PaddedBatch,
    annotator_agreement,
    apply_standardizer,
    collate,
    export_store,
    filter_by_annotator_correlation,
    fit_standardizer,
    ingest,
    pad_and_mask,
    split_folds,
)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _make_dataset(root, domains=("a", "b"), per_domain=3, D=4, L=6, label_override=None):
    rng = np.random.default_rng(0)
    header = [f"f{j}" for j in range(D)]
    entries = []
    for d in domains:
        for i in range(per_domain):
            sid = f"{d}{i}"
            _write_csv(root / f"{sid}_x.csv", header, rng.normal(size=(L, D)).tolist())
            labels = rng.uniform(size=(L, 2))
            if label_override and sid == label_override[0]:
                labels[label_override[1], 0] = label_override[2]
            _write_csv(root / f"{sid}_y.csv", ["valence", "arousal"], labels.tolist())
            entries.append({"domain": d, "subject": f"s{i}", "sample_id": sid, "features_file": f"{sid}_x.csv", "labels_file": f"{sid}_y.csv"})
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({"samples": entries}))
    return manifest


def _sample(sid="s", L=5, D=3, domain="a", seed=0, labels=True):
    rng = np.random.default_rng(seed)
    return FrameSeriesSample(domain, "subj", sid, rng.normal(size=(L, D)), rng.uniform(size=(L, 2)) if labels else None)


# ingestion ---------------------------------------------------------------------


def test_ingest_counts(tmp_path):
    store = ingest(_make_dataset(tmp_path))
    assert len(store) == 6
    assert store.domains == ["a", "b"]
    assert len(store.by_domain("a")) == 3
    assert len(store.catalog) == 4


def test_ingest_label_out_of_range_names_file_and_row(tmp_path):
    manifest = _make_dataset(tmp_path, label_override=("b1", 3, 1.2))
    with pytest.raises(IngestError, match=r"b1_y\.csv: row 5 valence = 1\.2"):
        ingest(manifest)


def test_ingest_full_audiovisual_width(tmp_path):
    cat = audiovisual_catalog()
    cat.to_csv(tmp_path / "catalog.csv")
    rng = np.random.default_rng(0)
    _write_csv(tmp_path / "x.csv", cat.ids, rng.normal(size=(3, 792)).tolist())
    entry = {"domain": "uk", "subject": "s", "sample_id": "v0", "features_file": "x.csv"}
    (tmp_path / "m.json").write_text(json.dumps({"catalog_file": "catalog.csv", "samples": [entry]}))
    store = ingest(tmp_path / "m.json")
    assert store.samples[0].features.shape == (3, 792)
    assert store.catalog == cat


def test_ingest_errors(tmp_path):
    manifest = _make_dataset(tmp_path)
    with pytest.raises(IngestError, match="manifest not found"):
        ingest(tmp_path / "nope.json")
    (tmp_path / "a0_x.csv").unlink()
    with pytest.raises(IngestError, match="feature file not found"):
        ingest(manifest)


def test_ingest_header_mismatch(tmp_path):
    manifest = _make_dataset(tmp_path)
    _write_csv(tmp_path / "b2_x.csv", ["f0", "f1", "f2", "g3"], [[0, 0, 0, 0]] * 6)
    with pytest.raises(IngestError, match="header does not match"):
        ingest(manifest)


def test_ingest_ragged_rows(tmp_path):
    manifest = _make_dataset(tmp_path)
    with open(tmp_path / "a1_x.csv", "a") as fh:
        fh.write("1,2,3\n")
    with pytest.raises(IngestError, match=r"a1_x\.csv: row 8 has 3 fields"):
        ingest(manifest)


def test_nan_policies(tmp_path):
    manifest = _make_dataset(tmp_path)
    rows = list(csv.reader(open(tmp_path / "a0_x.csv")))
    rows[2][1] = "nan"
    _write_csv(tmp_path / "a0_x.csv", rows[0], rows[1:])
    assert ingest(manifest).get("a0").length == 5
    assert len(ingest(manifest, nan_policy="drop_sample")) == 5
    with pytest.raises(IngestError, match="row 3"):
        ingest(manifest, nan_policy="error")


def test_export_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(1)
    tracks = rng.uniform(size=(4, 3, 2))
    samples = [
        FrameSeriesSample("x", "s0", "x0", rng.normal(size=(4, 3)) * 1e-7, rng.uniform(size=(4, 2)), tracks),
        FrameSeriesSample("y", "s1", "y0", rng.normal(size=(2, 3)), None),
    ]
    store = DomainStore(FeatureCatalog.from_csv(_cat(tmp_path)), samples)
    back = ingest(export_store(store, tmp_path / "out"))
    for a, b in zip(store.samples, back.samples):
        assert a.features.tobytes() == b.features.tobytes()
        assert (a.labels is None and b.labels is None) or a.labels.tobytes() == b.labels.tobytes()
    assert back.samples[0].annotator_tracks.tobytes() == tracks.tobytes()
    assert back.catalog == store.catalog


def _cat(tmp_path):
    path = tmp_path / "cat.csv"
    _write_csv(path, ["feature_id", "modality", "group"], [["p_10", "visual", "PDM"], ["AU23_r", "visual", "FAU"], ["gemaps_F0", "audio", "GeMAPS"]])
    return path


def test_store_rejects_width_mismatch_and_duplicates():
    cat = infer_catalog(["a", "b", "c"])
    with pytest.raises(ValueError, match="catalog has 3"):
        DomainStore(cat, [_sample(D=2)])
    with pytest.raises(ValueError, match="duplicate sample id"):
        DomainStore(cat, [_sample("s"), _sample("s")])


# catalog ---------------------------------------------------------------------


def test_audiovisual_catalog_shape():
    cat = audiovisual_catalog()
    assert len(cat) == 792
    assert sum(e.modality == "audio" for e in cat.entries) == 83
    assert sum(e.modality == "visual" for e in cat.entries) == 709


@pytest.mark.parametrize(
    "fid,name",
    [("p_10", "PDM parameter 10"), ("pose_Rz", "Head pose Rz"), ("AU23_r", "FAU 23 intensity"), ("x_60", "Landmark X 60"), ("gaze_0_x", "Gaze 0 X"), ("zzz", "zzz")],
)
def test_display_names(fid, name):
    assert display_name(fid) == name


def test_infer_catalog_marks_unknown():
    cat = infer_catalog(["p_3", "mystery"])
    assert cat[0].group == "PDM" and cat[1].modality == "unknown"


# annotator agreement ---------------------------------------------------------


def _tracks_from(cols):
    """(L, A) valence columns; arousal copies valence."""
    v = np.stack(cols, axis=1)
    return np.stack([v, v], axis=2)


def test_identical_annotators_kept_anticorrelated_dropped():
    t = np.linspace(0, 1, 10)
    same = FrameSeriesSample("a", "s", "same", np.zeros((10, 1)), None, _tracks_from([t, t]))
    anti = FrameSeriesSample("a", "s", "anti", np.zeros((10, 1)), None, _tracks_from([t, 1 - t]))
    bare = FrameSeriesSample("a", "s", "bare", np.zeros((10, 1)))
    kept = filter_by_annotator_correlation([same, anti, bare])
    assert [s.sample_id for s in kept] == ["same", "bare"]
    assert annotator_agreement(same.annotator_tracks)[0] == pytest.approx(1.0)
    assert annotator_agreement(anti.annotator_tracks)[0] == pytest.approx(-1.0)


def test_three_annotators_mean_pairwise():
    rng = np.random.default_rng(5)
    cols = [rng.normal(size=30) for _ in range(3)]
    cols[1] = cols[0] + rng.normal(size=30)
    tracks = _tracks_from(cols)
    expected = np.mean([np.corrcoef(cols[a], cols[b])[0, 1] for a, b in combinations(range(3), 2)])
    assert annotator_agreement(tracks)[0] == pytest.approx(expected, abs=1e-12)


def test_three_annotators_known_pairwise_values():
    # columns built so that the pairwise correlations are exactly {0.5, 0.2, -0.1}
    C = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, -0.1], [0.2, -0.1, 1.0]])
    z = np.random.default_rng(0).normal(size=(400, 3))
    z = (z - z.mean(0)) @ np.linalg.inv(np.linalg.cholesky(np.cov(z.T, bias=True))).T
    x = z @ np.linalg.cholesky(C).T
    stat, flagged = annotator_agreement(_tracks_from([x[:, 0], x[:, 1], x[:, 2]]))
    assert stat == pytest.approx(0.2, abs=1e-12)
    assert not flagged
    s = FrameSeriesSample("a", "s", "k", np.zeros((400, 1)), None, _tracks_from([x[:, 0], x[:, 1], x[:, 2]]))
    assert filter_by_annotator_correlation([s]) == [s]


def test_constant_track_flagged():
    t = np.linspace(0, 1, 8)
    s = FrameSeriesSample("a", "s", "c", np.zeros((8, 1)), None, _tracks_from([t, np.full(8, 0.5), t]))
    stat, flagged = annotator_agreement(s.annotator_tracks)
    assert len(flagged) == 4  # two pairs per target
    assert stat == pytest.approx(1 / 3)
    with pytest.warns(UserWarning, match="constant annotator"):
        filter_by_annotator_correlation([s])


# padding and standardization ----------------------------------------------------


def test_pad_800_to_1000():
    b = pad_and_mask(_sample(L=800))
    assert b.mask.sum() == 800 and not b.mask[800:].any()
    assert not b.features[800:].any() and not b.labels[800:].any()


def test_pad_identity():
    s = _sample(L=1000)
    b = pad_and_mask(s)
    assert b.mask.all()
    np.testing.assert_array_equal(b.features, s.features)


def test_truncation_warns():
    s = _sample(L=1200)
    with pytest.warns(UserWarning, match="truncating"):
        b = pad_and_mask(s)
    np.testing.assert_array_equal(b.features, s.features[:1000])


@settings(max_examples=30)
@given(st.lists(st.integers(1, 30), min_size=1, max_size=5), st.integers(1, 40))
def test_mask_is_prefix(lengths, L):
    samples = [_sample(f"s{i}", L=n, seed=i) for i, n in enumerate(lengths)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = collate(samples, length=L)
    for i, n in enumerate(lengths):
        m = b.mask[i]
        assert m.sum() == min(n, L)
        assert m[: min(n, L)].all()
        assert not b.features[i][~m].any()


def test_standardize_arithmetic():
    s = FrameSeriesSample("a", "s", "x", np.array([[0.0], [4.0]]), np.zeros((2, 2)))
    stats = fit_standardizer(pad_and_mask(s, 3))
    assert stats.mean[0] == 2.0 and stats.std[0] == 2.0
    t = FrameSeriesSample("a", "s", "y", np.array([[4.0]]), np.zeros((1, 2)))
    out = apply_standardizer(pad_and_mask(t, 3), stats)
    assert out.features[0, 0] == 1.0
    assert not out.features[1:].any()


def test_constant_column_floored():
    s = FrameSeriesSample("a", "s", "x", np.full((5, 1), 3.0))
    stats = fit_standardizer(pad_and_mask(s, 5))
    assert stats.std[0] == STD_FLOOR
    assert np.all(apply_standardizer(pad_and_mask(s, 5), stats).features == 0.0)


def test_standardizer_ignores_padding_and_test_data():
    train = collate([_sample("a", L=4), _sample("b", L=7, seed=1)], length=10)
    stats = fit_standardizer(train)
    valid = np.concatenate([train.features[0, :4], train.features[1, :7]])
    np.testing.assert_allclose(stats.mean, valid.mean(0))
    np.testing.assert_allclose(stats.std, valid.std(0))
    test = collate([_sample("c", L=5, seed=2)])
    out1 = apply_standardizer(test, stats)
    test.features[:] += 100.0
    apply_standardizer(test, stats)
    assert fit_standardizer(train).mean.tobytes() == stats.mean.tobytes()
    assert out1.features.shape == test.features.shape


def test_standardizer_rejects_empty_training_set():
    empty = PaddedBatch(np.zeros((1, 3, 2)), np.zeros((1, 3, 2)), np.zeros((1, 3), bool))
    with pytest.raises(ValueError, match="empty training set"):
        fit_standardizer(empty)


# folds -----------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=4), st.integers(2, 5), st.integers(0, 100))
def test_folds_partition_and_stratify(counts, k, seed):
    samples = [_sample(f"{d}_{i}", L=1, D=1, domain=f"d{d}", labels=False) for d, n in enumerate(counts) for i in range(n)]
    if len(samples) < k:
        with pytest.raises(ValueError):
            split_folds(samples, k, seed)
        return
    folds = split_folds(samples, k, seed)
    assert len(folds) == k
    tests = [set(t) for _, t in folds]
    assert set().union(*tests) == {s.sample_id for s in samples}
    assert sum(len(t) for t in tests) == len(samples)
    sizes = [len(t) for t in tests]
    assert max(sizes) - min(sizes) <= 1
    for train, test in folds:
        assert not set(train) & set(test)
        assert len(train) + len(test) == len(samples)
    for d, n in enumerate(counts):
        per_fold = [sum(1 for sid in t if sid.startswith(f"{d}_")) for t in tests]
        assert max(per_fold) - min(per_fold) <= 1 or n < k and max(per_fold) <= 1
    assert split_folds(samples, k, seed) == folds
