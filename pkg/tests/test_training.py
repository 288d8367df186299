import json
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from denseav.data import SyntheticSpec, generate_synthetic
from denseav.data.schema import EventInstance
from denseav.errors import ContractError, TrainingDivergedError, ValidationError
from denseav.model.network import RawPredictions
from denseav.numerics import ParamStore, Tensor, backward, ops, seeded_rng
from denseav.selfcheck import tiny_config
from denseav.training import (
    DEFAULT_RANGES,
    Adam,
    Dataset,
    TrainConfig,
    assign_targets,
    decode_targets,
    fit,
    focal_loss,
    giou_loss_1d,
    level_bands,
    lr_at,
    total_loss,
)
from oracles import ref_assign, ref_focal


# ----------------------------------------------------------------- focal loss

def test_focal_worked_example():
    value = focal_loss(np.array([0.9]), np.array([1.0]), 0.25, 2.0).data[0]
    assert value == pytest.approx(0.25 * 0.01 * -math.log(0.9), rel=1e-12)
    assert value == pytest.approx(2.634e-4, rel=1e-3)


def test_focal_confident_positive_vanishes():
    assert focal_loss(np.array([1.0 - 1e-9]), np.array([1.0])).data[0] < 1e-12


def test_focal_reduces_to_half_bce():
    p = np.array([0.1, 0.4, 0.8, 0.95])
    y = np.array([1.0, 0.0, 1.0, 0.0])
    bce = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    np.testing.assert_allclose(focal_loss(p, y, alpha=0.5, gamma=0.0).data, 0.5 * bce, rtol=1e-12)


@given(st.floats(0.0, 1.0), st.sampled_from([0.0, 1.0]), st.floats(0.01, 0.99), st.sampled_from([0.0, 1.0, 2.0, 3.0]))
def test_focal_matches_scalar_oracle(p, y, alpha, gamma):
    got = focal_loss(np.array([p]), np.array([y]), alpha, gamma).data[0]
    assert got >= 0
    assert got == pytest.approx(ref_focal(p, y, alpha, gamma), rel=1e-9, abs=1e-15)


# ------------------------------------------------------------------ giou loss

def test_giou_identity_and_worked_example():
    assert giou_loss_1d(np.array([[1.5, 2.0]]), np.array([[1.5, 2.0]])).data[0] == pytest.approx(0.0, abs=1e-15)
    assert giou_loss_1d(np.array([[1.0, 1.0]]), np.array([[2.0, 2.0]])).data[0] == pytest.approx(0.5, abs=1e-15)


def test_giou_degenerate_target_is_an_error():
    with pytest.raises(ContractError):
        giou_loss_1d(np.array([[1.0, 1.0]]), np.array([[0.0, 0.0]]))


dist = st.floats(0.0, 50.0)


@given(dist, dist, dist, dist)
def test_giou_anchored_loss_bounded_by_one(a, b, c, d):
    if c + d <= 1e-6:
        return
    loss = giou_loss_1d(np.array([[a, b]]), np.array([[c, d]])).data[0]
    # anchored intervals always intersect, so gIoU == IoU
    inter = min(a, c) + min(b, d)
    union = a + b + c + d - inter
    assert -1e-12 <= loss <= 1.0 + 1e-12
    assert loss == pytest.approx(1.0 - inter / union, abs=1e-12)


# --------------------------------------------------------- target assignment

def test_level_bands_truncate_to_open_last_level():
    assert level_bands(DEFAULT_RANGES, 3) == [(0.0, 4.0), (4.0, 8.0), (8.0, math.inf)]
    with pytest.raises(ValueError):
        level_bands([0, 4, 4, 8], 3)


def test_whole_sequence_event_lands_on_its_half_length_level():
    hop, t = 0.5, 64
    a = assign_targets([EventInstance(0.0, t * hop, 0)], t, hop, 6, 1)
    owners = {l for l, lab in enumerate(a.labels) if lab.any()}
    # half-length 32 base steps falls in [32, 64), the fifth band
    assert owners == {4}
    assert a.labels[4][:, 0].sum() == len(a.labels[4])


def test_event_between_centers_is_skipped():
    a = assign_targets([EventInstance(1.05, 1.4, 2)], 10, 1.0, 3, 3)
    assert a.num_positives == 0
    assert a.skipped == 1


def test_overlapping_classes_both_positive():
    a = assign_targets([EventInstance(0.0, 3.0, 0), EventInstance(1.0, 2.5, 1)], 8, 1.0, 2, 2)
    both = a.labels[0][:, 0] * a.labels[0][:, 1]
    assert both.any()
    i = int(np.argmax(both))
    assert a.offsets[0][i, :, 0].tolist() != a.offsets[0][i, :, 1].tolist()


def test_event_outside_window_dropped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        a = assign_targets([EventInstance(50.0, 60.0, 0), EventInstance(0.0, 2.0, 0)], 10, 1.0, 2, 1)
    assert a.dropped == 1
    assert "dropped" in caplog.text


def test_shortest_same_class_event_wins():
    a = assign_targets([EventInstance(0.0, 3.0, 0), EventInstance(1.0, 2.0, 0)], 8, 1.0, 1, 1)
    # step 1 (center 1.5) sits in both; the 1 s event owns it
    np.testing.assert_allclose(a.offsets[0][1, :, 0], [0.5, 0.5])


def test_equal_length_tie_goes_to_first_annotation():
    a = assign_targets([EventInstance(0.0, 2.0, 0), EventInstance(1.0, 3.0, 0)], 8, 1.0, 1, 1)
    # center 1.5 lies in both 2 s events
    np.testing.assert_allclose(a.offsets[0][1, :, 0], [1.5, 0.5])
    b = assign_targets([EventInstance(1.0, 3.0, 0), EventInstance(0.0, 2.0, 0)], 8, 1.0, 1, 1)
    np.testing.assert_allclose(b.offsets[0][1, :, 0], [0.5, 1.5])


events_strategy = st.lists(
    st.tuples(st.floats(0.0, 30.0), st.floats(0.05, 20.0), st.integers(0, 2)), min_size=0, max_size=6
)


@settings(max_examples=150, deadline=None)
@given(events_strategy, st.integers(4, 48), st.integers(1, 4))
def test_assignment_matches_brute_force(raw_events, valid_len, levels):
    hop, t_max = 0.5, 48
    events = [EventInstance(s, s + d, c) for s, d, c in raw_events if s < valid_len * hop]
    lengths = [e.end_s - e.start_s for e in events]
    if len(set(lengths)) != len(lengths):
        return  # equal-length same-class ties are order dependent
    a = assign_targets(events, valid_len, hop, levels, 3, t_max=t_max)
    ref = ref_assign(events, valid_len, hop, levels, 3, t_max, level_bands(DEFAULT_RANGES, levels))
    got = {(l, int(i), int(c)) for l, lab in enumerate(a.labels) for i, c in zip(*np.nonzero(lab))}
    assert got == set(ref)
    for (l, i, c), (ds, de) in ref.items():
        np.testing.assert_allclose(a.offsets[l][i, :, c], [ds, de], rtol=1e-5)
    for lab, off in zip(a.labels, a.offsets):
        assert np.all(off >= 0)
        assert np.all(off.transpose(0, 2, 1)[lab == 0] == 0)


@settings(max_examples=100, deadline=None)
@given(events_strategy)
def test_positive_assignments_decode_to_their_event(raw_events):
    hop = 0.32
    events = [EventInstance(s, s + d, c) for s, d, c in raw_events]
    a = assign_targets(events, 128, hop, 4, 3)
    by_class = {}
    for e in events:
        by_class.setdefault(e.label_id, []).append((e.start_s, e.end_s))
    for l, i, c, s, e in decode_targets(a, hop):
        tol = 0.5 * hop * 2 ** l
        assert any(abs(s - es) <= tol and abs(e - ee) <= tol for es, ee in by_class[c])


# --------------------------------------------------------------- total loss

def fake_raw(probs, dists, masks):
    return RawPredictions([Tensor(p) for p in probs], [Tensor(d) for d in dists], masks, [2 ** l for l in range(len(probs))])


def toy_case(rng, perfect=False):
    events = [EventInstance(0.5, 3.0, 0), EventInstance(2.0, 7.5, 2), EventInstance(1.0, 1.6, 1)]
    a = assign_targets(events, 8, 1.0, 2, 3)
    probs, dists = [], []
    for lab, off in zip(a.labels, a.offsets):
        if perfect:
            probs.append(np.where(lab > 0, 1.0, 0.0)[None])
            d = off.transpose(1, 2, 0)[None].copy()
            dists.append(np.where(lab.T[None, None] > 0, d, 1.0))
        else:
            probs.append(rng.uniform(0.05, 0.95, (1,) + lab.shape))
            dists.append(rng.uniform(0.1, 3.0, (1, 2, lab.shape[1], lab.shape[0])))
    masks = [np.ones((1, lab.shape[0])) for lab in a.labels]
    return a, probs, dists, masks


def test_total_is_normalized_sum_of_terms():
    a, probs, dists, masks = toy_case(seeded_rng(0))
    loss, parts = total_loss(fake_raw(probs, dists, masks), [a], lam=2.0)
    assert parts.num_steps == 8 + 4
    assert parts.num_pos == a.num_positives
    assert parts.total == pytest.approx(parts.cls / parts.num_steps + 2.0 * parts.reg / parts.num_pos, rel=1e-12)
    assert parts.total >= 0


def test_lambda_zero_leaves_classification_only():
    a, probs, dists, masks = toy_case(seeded_rng(1))
    _, parts = total_loss(fake_raw(probs, dists, masks), [a], lam=0.0)
    assert parts.total == pytest.approx(parts.cls / parts.num_steps, rel=1e-12)


def test_perfect_predictions_near_zero():
    a, probs, dists, masks = toy_case(seeded_rng(2), perfect=True)
    _, parts = total_loss(fake_raw(probs, dists, masks), [a])
    assert parts.cls < 1e-4 * parts.num_steps
    assert parts.reg == pytest.approx(0.0, abs=1e-12)


def test_padded_steps_do_not_count():
    a, probs, dists, masks = toy_case(seeded_rng(3))
    masks = [m.copy() for m in masks]
    base = total_loss(fake_raw(probs, dists, masks), [a])[1]
    probs[0][0, 7] = 0.5  # step 7 is valid, so this changes the loss
    masks[0][0, 7] = 0.0
    a.labels[0][7] = 0.0
    changed = total_loss(fake_raw(probs, dists, masks), [a])[1]
    assert changed.num_steps == base.num_steps - 1


def test_class_relabeling_is_equivariant():
    a, probs, dists, masks = toy_case(seeded_rng(4))
    perm = [2, 0, 1]
    a2 = type(a)([lab[:, perm] for lab in a.labels], [off[:, :, perm] for off in a.offsets], a.valid)
    p2 = [p[..., perm] for p in probs]
    d2 = [d[:, :, perm] for d in dists]
    t1 = total_loss(fake_raw(probs, dists, masks), [a])[1].total
    t2 = total_loss(fake_raw(p2, d2, masks), [a2])[1].total
    assert t1 == pytest.approx(t2, rel=1e-12)


def test_no_positives_gives_exactly_zero_regression_gradient():
    a = assign_targets([], 8, 1.0, 2, 3)
    rng = seeded_rng(5)
    probs = [rng.uniform(0.1, 0.9, (1, 8, 3)), rng.uniform(0.1, 0.9, (1, 4, 3))]
    dist_params = [Tensor(rng.uniform(0.1, 2.0, (1, 2, 3, t)), requires_grad=True) for t in (8, 4)]
    raw = RawPredictions([Tensor(p) for p in probs], dist_params, [np.ones((1, 8)), np.ones((1, 4))], [1, 2])
    loss, parts = total_loss(raw, [a])
    assert parts.num_pos == 0 and parts.reg_term == 0.0
    # make the graph reach the distances too, then check they get nothing
    backward(ops.add(loss, ops.mul(ops.sum(dist_params[0]), 0.0)))
    assert np.all(dist_params[0].grad == 0)
    assert dist_params[1].grad is None or np.all(dist_params[1].grad == 0)


# ------------------------------------------------------------ optimization

def test_schedule_endpoints():
    assert lr_at(50, 1e-3, 50, 500) == pytest.approx(1e-3)
    assert lr_at(25, 1e-3, 50, 500) == pytest.approx(5e-4)
    assert lr_at(500, 1e-3, 50, 500) == pytest.approx(0.0, abs=1e-18)
    mids = [lr_at(s, 1e-3, 50, 500) for s in range(50, 501)]
    assert all(b <= a for a, b in zip(mids, mids[1:]))


def test_adam_minimizes_quadratic_and_decays_only_matrices():
    store = ParamStore(np.float64)
    w = store.add("w", np.full((2, 2), 3.0))
    b = store.add("b", np.full(2, 3.0))
    opt = Adam(store, lr=0.1, weight_decay=0.5)
    for _ in range(300):
        store.zero_grad()
        backward(ops.add(ops.sum(ops.power(ops.sub(w, 1.0), 2)), ops.sum(ops.power(ops.sub(b, 1.0), 2))))
        opt.step()
    # decay pulls w below the unregularized optimum 1; b converges to it
    np.testing.assert_allclose(b.data, 1.0, atol=1e-2)
    assert np.all(w.data < 0.95)


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(lam=-1)
    with pytest.raises(ValidationError):
        TrainConfig(ranges=[0, 8, 4])
    with pytest.raises(ValidationError):
        TrainConfig.from_dict({"epochs": 1, "bogus": 2})
    cfg = TrainConfig(epochs=3)
    assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


# --------------------------------------------------------------- fit

def small_corpus(**kw):
    spec = SyntheticSpec(
        num_classes=3, videos_per_subset={"train": 12, "val": 4, "test": 4},
        min_steps=8, max_steps=8, audio_dim=5, visual_dim=6, mean_events=1.5,
        min_event_steps=1, max_event_steps=4, seed=3, **kw,
    )
    return generate_synthetic(spec)


def test_fit_writes_log_and_checkpoint(tmp_path):
    ds = Dataset.from_corpus(small_corpus())
    res = fit(ds, tiny_config(), TrainConfig(epochs=2, warmup_epochs=1, lr=1e-3, batch_size=4), out_dir=tmp_path)
    lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert set(rec) == {"epoch", "lr", "train_loss", "cls", "reg", "val_avg_mAP"}
    assert (tmp_path / "checkpoint.davt").exists()
    assert 1 <= res.best_epoch <= 2


def test_fit_is_deterministic():
    ds = Dataset.from_corpus(small_corpus())
    cfg = TrainConfig(epochs=1, warmup_epochs=0, lr=1e-3, batch_size=4)
    a = fit(ds, tiny_config(), cfg).store.state_dict()
    b = fit(ds, tiny_config(), cfg).store.state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_fit_aborts_on_non_finite_loss():
    corpus = small_corpus()
    vid = corpus.index.ids("train")[0]
    audio, visual = corpus.features[vid]
    audio = audio.copy()
    audio[0, 0] = np.nan
    corpus.features[vid] = (audio, visual)
    with pytest.raises(TrainingDivergedError) as info:
        fit(Dataset.from_corpus(corpus), tiny_config(), TrainConfig(epochs=1, batch_size=64))
    assert info.value.epoch == 1 and "total" in info.value.terms


def test_fit_rejects_empty_train_subset():
    corpus = small_corpus()
    for v in corpus.index:
        v.subset = "test"
    with pytest.raises(ValidationError):
        fit(Dataset.from_corpus(corpus), tiny_config(), TrainConfig(epochs=1))
