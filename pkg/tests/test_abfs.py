import numpy as np
import pytest

from causalaffect import numkernel as nk
from causalaffect.abfs import (
    AbfsSelection,
    AttentionScores,
    AttentionTcnConfig,
    TrainingDivergedError,
    attention_weights,
    combine,
    init_tcn,
    normalize_scores,
    reshape_batch,
    reshape_domain,
    run_abfs,
    select_features,
    tcn_forward,
    train_attention_tcn,
    write_selection_report,
)
from causalaffect.catalog import audiovisual_catalog
from causalaffect.dataset import FrameSeriesSample, PaddedBatch, apply_standardizer, collate, fit_standardizer
from causalaffect.synthgen import SyntheticSpec, generate

TINY = AttentionTcnConfig(epochs=30, kernel_size=4, dilation_base=2, hidden_levels=1, lr=0.01)


def _batch(N=3, L=30, D=5, seed=0):
    rng = np.random.default_rng(seed)
    mask = np.ones((N, L), bool)
    mask[0, L - 7 :] = False
    x = rng.normal(size=(N, L, D)) * mask[..., None]
    y = rng.uniform(size=(N, L, 2)) * mask[..., None]
    return PaddedBatch(x, y, mask, [f"s{i}" for i in range(N)])


def test_normalize_hand_case():
    norm, degenerate = normalize_scores(np.array([0.1, 0.9, 0.5, 0.3]))
    np.testing.assert_allclose(norm, [0.0, 1.0, 0.5, 0.25])
    assert not degenerate
    # 0.25 sits exactly on the threshold and is excluded
    assert select_features(norm, 0.25) == [1, 2]


def test_constant_scores_select_everything():
    norm, degenerate = normalize_scores(np.full(4, 0.3))
    assert degenerate and norm.tolist() == [1.0] * 4
    assert select_features(norm) == [0, 1, 2, 3]


def test_threshold_one_excludes_all():
    with pytest.raises(ValueError, match="excludes all features"):
        select_features(np.array([0.0, 1.0]), threshold=1.0)


def test_union_of_targets():
    sel = combine([3, 1], [1, 7], audiovisual_catalog())
    assert sel.union == [1, 3, 7]
    assert sel.valence_selected == [1, 3]
    assert len(sel.names()) == 3


def test_attention_weights_are_softmax():
    a = np.array([0.0, np.log(3.0)])
    np.testing.assert_allclose(attention_weights(a, TINY), [0.25, 0.75])
    ident = AttentionTcnConfig(attention="identity")
    np.testing.assert_array_equal(attention_weights(a, ident), a)
    with pytest.raises(ValueError):
        AttentionTcnConfig(attention="sparsemax")


def test_dilations():
    assert AttentionTcnConfig(dilation_base=250, hidden_levels=1).dilations == [1, 250]
    assert AttentionTcnConfig(dilation_base=2, hidden_levels=3).dilations == [1, 2, 4, 8]


@pytest.mark.parametrize("include_present", [False, True])
def test_tcn_is_causal(include_present):
    cfg = AttentionTcnConfig(kernel_size=3, dilation_base=2, hidden_levels=2, include_present=include_present)
    rng = np.random.default_rng(0)
    params = {k: nk.Tensor(v) for k, v in init_tcn(4, cfg, rng).items()}
    x = rng.normal(size=(2, 25, 4))
    base = tcn_forward(params, x, cfg).data
    for t in (0, 7, 23):
        x2 = x.copy()
        x2[:, t + 1 :] = rng.normal(size=x2[:, t + 1 :].shape)
        np.testing.assert_array_equal(tcn_forward(params, x2, cfg).data[:, : t + 1], base[:, : t + 1])
    x3 = x.copy()
    x3[:, 10] += 1.0
    changed = np.abs(tcn_forward(params, x3, cfg).data - base) > 0
    # strict-past input means frame 10 first shows up at frame 11
    assert changed[:, 10].any() == include_present
    assert changed[:, 11].any()


def test_training_reduces_loss_and_is_deterministic():
    b = _batch()
    p1, s1 = train_attention_tcn(b, "valence", TINY)
    p2, s2 = train_attention_tcn(b, "valence", TINY)
    assert s1.loss_curve[-1] < s1.loss_curve[0]
    for k in p1:
        assert p1[k].tobytes() == p2[k].tobytes()
    assert s1.raw.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        train_attention_tcn(b, "dominance", TINY)


def test_padding_does_not_change_training():
    b = _batch()
    L = b.length
    padded = PaddedBatch(
        np.concatenate([b.features, np.zeros((3, 50, 5))], axis=1),
        np.concatenate([b.labels, np.zeros((3, 50, 2))], axis=1),
        np.concatenate([b.mask, np.zeros((3, 50), bool)], axis=1),
        b.sample_ids,
    )
    p1, _ = train_attention_tcn(b, "arousal", TINY)
    p2, _ = train_attention_tcn(padded, "arousal", TINY)
    assert L == 30
    for k in p1:
        np.testing.assert_allclose(p1[k], p2[k], atol=1e-12, rtol=0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    cfg = AttentionTcnConfig(epochs=5, kernel_size=2, dilation_base=2, lr=1e300)
    with pytest.raises(TrainingDivergedError) as info:
        train_attention_tcn(_batch(), "valence", cfg)
    assert info.value.epoch >= 1


def test_run_abfs_recovers_planted_causes_quickly():
    spec = SyntheticSpec(n_domains=1, samples_per_domain=20, D=8, L=120, causal_indices=(1, 5), lags=(1, 2), weights=(1.2, -1.0), spurious_indices=(), seed=3)
    store, causal = generate(spec)
    b = collate(store.samples)
    b = apply_standardizer(b, fit_standardizer(b))
    sel = run_abfs(b, AttentionTcnConfig(epochs=150, kernel_size=8, dilation_base=8, seed=0), store.catalog)
    assert set(causal) <= set(sel.union)
    ranked = np.argsort(-sel.scores["valence"].normalized)
    assert set(ranked[:2]) == set(causal)


def test_reshape_both_domains():
    rng = np.random.default_rng(0)
    samples = [FrameSeriesSample("a", "s", f"x{i}", rng.normal(size=(4, 6))) for i in range(2)]
    out = reshape_domain(samples, [4, 1])
    np.testing.assert_array_equal(out[0].features, samples[0].features[:, [4, 1]])
    assert samples[0].features.shape == (4, 6)
    with pytest.raises(IndexError):
        reshape_domain(samples, [6])
    b = collate(samples)
    assert reshape_batch(b, AbfsSelection([1], [4], [1, 4])).width == 2


def test_selection_report(tmp_path):
    cat = audiovisual_catalog().subset(range(700, 710))
    scores = {
        t: AttentionScores(t, np.linspace(0, 1, 10), normalize_scores(np.linspace(0, 1, 10))[0]) for t in ("valence", "arousal")
    }
    sel = combine([9], [8, 9], cat)
    sel.scores = scores
    csv_path, txt_path = write_selection_report(sel, "German", tmp_path / "sel.csv")
    rows = csv_path.read_text().splitlines()
    assert len(rows) == 1 + 20
    txt = txt_path.read_text()
    assert "German" in txt and cat.display_name(9) in txt
