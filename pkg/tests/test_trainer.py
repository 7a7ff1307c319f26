import json

import numpy as np
import pytest

from symassoc import ctc, fusion
from symassoc.align import warp_targets
from symassoc.datagen import DatasetConfig, MultimodalSample, generate_dataset
from symassoc.lstm import TrainConfig, apply_momentum_sgd, lstm_backward, lstm_forward
from symassoc.trainer import (
    MODES,
    SWEEP_HEADER,
    CheckpointError,
    ConfigError,
    ExperimentConfig,
    check_compatible,
    compute_step,
    evaluate,
    init_states,
    load_checkpoint,
    run_sweep,
    save_checkpoint,
    train,
    train_step,
)

DATA = DatasetConfig(vocab_size=5, base_len=4, max_drop=2, n_train=40, n_test=12, seed=3)
TINY = TrainConfig(hidden_size_visual=6, hidden_size_audio=8, learning_rate=1e-3)


@pytest.fixture(scope="module")
def splits():
    return generate_dataset(DATA)[0]


def config(mode="pooled", **kw):
    return ExperimentConfig(mode=mode, train=kw.pop("train", TINY), epochs=kw.pop("epochs", 1),
                            calibration_size=10, **kw)


def fresh(cfg, C=5):
    return init_states(cfg, 32, 16, C)


def arrays_of(states):
    out = {}
    for m in ("visual", "audio"):
        st = states[m]
        for k, v in st.params.arrays().items():
            out[f"{m}.{k}"] = v.copy()
        for k, v in st.velocity.arrays().items():
            out[f"{m}.vel.{k}"] = v.copy()
        out[f"{m}.gamma"] = st.gamma.copy()
    return out


def assert_same(a, b):
    assert a.keys() == b.keys()
    for k in a:
        assert a[k].tobytes() == b[k].tobytes(), k


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="^speed:"):
        ExperimentConfig.from_dict({"speed": 1})
    with pytest.raises(ConfigError, match="^train.depth:"):
        ExperimentConfig.from_dict({"train": {"depth": 3}})
    with pytest.raises(ConfigError, match="^mode:"):
        ExperimentConfig(mode="fancy")
    with pytest.raises(ConfigError, match="momentum"):
        ExperimentConfig.from_dict({"train": {"momentum": 1.5}})
    cfg = ExperimentConfig.from_dict({"mode": "original", "train": {"learning_rate": 0.01}})
    assert cfg.train.learning_rate == 0.01
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_baseline_deltas_are_plain_ctc(splits):
    states = fresh(config("baseline_ctc"))
    s = splits["train"][0]
    res = compute_step(s, states, "baseline_ctc")
    for m, x, t in (("visual", s.x_v, s.transcript_v), ("audio", s.x_a, s.transcript_a)):
        z, _ = lstm_forward(states[m].params, x)
        y = ctc.ctc_target(ctc.ctc_lattice(z, t), z)
        np.testing.assert_array_equal(res.deltas[m], ctc.ctc_delta(z, y))
        np.testing.assert_array_equal(res.perms[m], np.arange(5))


def test_baseline_modalities_independent(splits):
    cfg = config("baseline_ctc")
    states = fresh(cfg)
    s = splits["train"][1]
    # one visual-only update done by hand must match the joint step bitwise
    ref = states.visual.copy()
    z, cache = lstm_forward(ref.params, s.x_v)
    y = ctc.ctc_target(ctc.ctc_lattice(z, s.transcript_v), z)
    grads = lstm_backward(ref.params, cache, ctc.ctc_delta(z, y))
    apply_momentum_sgd(ref.params, grads, ref.velocity, TINY.learning_rate, TINY.momentum)
    train_step(s, states, cfg)
    for k, v in ref.params.arrays().items():
        assert v.tobytes() == states.visual.params.arrays()[k].tobytes()
    np.testing.assert_array_equal(states.visual.gamma, 1.0)


def test_identical_transcripts_full_mask():
    data = DatasetConfig(vocab_size=3, base_len=6, scenario="visual_full", fixed_missing=0,
                         n_train=5, n_test=0, seed=2)
    states = fresh(config(), C=3)
    checked = 0
    for s in generate_dataset(data)[0]["train"]:
        assert s.transcript_v == s.transcript_a
        if set(s.transcript_v) != {0, 1, 2}:
            continue
        res = compute_step(s, states, "pooled")
        for m in ("visual", "audio"):
            assert fusion.shared_channel_mask(s.transcript_v, s.transcript_a, res.perms[m], 3).all()
        checked += 1
    assert checked


def test_raw_channel_pooling_skips_recoding(splits):
    s = splits["train"][4]
    states = fresh(config())
    res = compute_step(s, states, "original")
    warped = warp_targets(res.targets["audio"], res.path, len(s.x_v), "a2v")
    np.testing.assert_array_equal(res.deltas["visual"], res.z["visual"] - warped)


def test_original_mode_uses_recoded_partner_target(splits):
    s = splits["train"][5]
    states = fresh(config())
    res = compute_step(s, states, "original", recode=True)
    y_a = fusion.recode_channels(res.targets["audio"], res.perms["audio"], res.perms["visual"])
    warped = warp_targets(y_a, res.path, len(s.x_v), "a2v")
    np.testing.assert_array_equal(res.deltas["visual"], res.z["visual"] - warped)


@pytest.mark.parametrize("mode", MODES)
def test_zero_learning_rates_leave_states(splits, mode):
    tc = TrainConfig(6, 8, learning_rate=0.0, concept_learning_rate=0.0)
    cfg = config(mode, train=tc)
    states = fresh(cfg)
    before = arrays_of(states)
    rec = train_step(splits["train"][2], states, cfg)
    assert_same(before, arrays_of(states))
    for key in ("loss_v", "loss_a", "assignment_churn_v", "assignment_churn_a"):
        assert np.isfinite(rec[key])
    assert rec["step"] == 0 and states.step == 1


@pytest.mark.parametrize("mode", MODES)
def test_loss_decreases_over_first_epoch(mode):
    data = DatasetConfig(vocab_size=5, base_len=4, max_drop=2, n_train=150, n_test=1, seed=0)
    samples = generate_dataset(data)[0]["train"]
    cfg = config(mode, train=TrainConfig(16, 24, 1e-3))
    recs = []
    train(cfg, samples, fresh(cfg), on_step=recs.append)
    loss = np.array([(r["loss_v"] + r["loss_a"]) / 2 for r in recs])
    third = len(loss) // 3
    assert loss[-third:].mean() < loss[:third].mean()


def test_training_is_deterministic(splits):
    cfg = config("pooled", epochs=2)
    runs = []
    for _ in range(2):
        recs = []
        states = train(cfg, splits["train"], fresh(cfg), on_step=recs.append)
        runs.append((json.dumps(recs), arrays_of(states)))
    assert runs[0][0] == runs[1][0]
    assert_same(runs[0][1], runs[1][1])


def test_infeasible_sample_is_skipped():
    cfg = config("pooled")
    states = fresh(cfg)
    x_v = np.zeros((12, 32))
    x_a = np.zeros((2, 16))  # three labels cannot fit two frames
    bad = MultimodalSample(x_v, x_a, [0, 1, 2], [0, 1, 2], [0, 1, 2], "both", "bad")
    before = arrays_of(states)
    rec = train_step(bad, states, cfg)
    assert rec["skipped"] is True and states.skipped == 1 and states.step == 1
    assert_same(before, arrays_of(states))


def test_checkpoint_round_trip(tmp_path, splits):
    cfg = config("pooled")
    states = train(cfg, splits["train"][:5], fresh(cfg))
    save_checkpoint(tmp_path / "ck", states, cfg)
    back, cfg2, meta = load_checkpoint(tmp_path / "ck")
    assert cfg2 == cfg and meta["epoch"] == 1 and meta["step"] == 5
    assert_same(arrays_of(states), arrays_of(back))
    for m in ("visual", "audio"):
        np.testing.assert_array_equal(back[m].perm, states[m].perm)
    assert (tmp_path / "ck" / "params_visual" / "fwd.W_xi.mmt").exists()
    assert json.loads((tmp_path / "ck" / "binding.json").read_text()).keys() == {"visual", "audio"}


def test_resume_matches_uninterrupted(tmp_path, splits):
    cfg = config("pooled", epochs=2)
    full_recs = []
    full = train(cfg, splits["train"], fresh(cfg), on_step=full_recs.append)

    first = config("pooled", epochs=1)
    part_recs = []
    states = train(first, splits["train"], fresh(first), on_step=part_recs.append)
    save_checkpoint(tmp_path / "ck", states, first)
    resumed, _, _ = load_checkpoint(tmp_path / "ck")
    train(cfg, splits["train"], resumed, on_step=part_recs.append)
    assert json.dumps(part_recs) == json.dumps(full_recs)
    assert_same(arrays_of(full), arrays_of(resumed))


def test_corrupt_checkpoint(tmp_path, splits):
    cfg = config()
    save_checkpoint(tmp_path / "ck", fresh(cfg), cfg)
    (tmp_path / "ck" / "params_audio" / "W_hz.mmt").write_bytes(b"MMT1")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "ck")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing")


def test_check_compatible(splits):
    states = fresh(config())
    check_compatible(states, splits["test"])
    with pytest.raises(CheckpointError):
        check_compatible(init_states(config(), 31, 16, 5), splits["test"])
    with pytest.raises(CheckpointError):
        check_compatible(init_states(config(), 32, 16, 3), splits["test"])


def test_perfect_decoder_stub(splits):
    states = fresh(config())
    report = evaluate(splits["test"], states, config(),
                      decoder=lambda s: (s.transcript_v, s.transcript_a))
    assert report.aacc == 1.0 and report.ler_visual == 0.0 and report.ler_audio == 0.0
    assert report.aacc_std == 0.0


def test_untrained_evaluation_is_reproducible(splits):
    cfg = config()
    r1 = evaluate(splits["test"], fresh(cfg), cfg, calibration=splits["train"])
    r2 = evaluate(splits["test"], fresh(cfg), cfg, calibration=splits["train"])
    assert r1.to_json() == r2.to_json()
    assert 0.0 <= r1.aacc <= 1.0 and r1.repeats == 5
    assert r1.n_samples == len(splits["test"])


def test_sweep_rows():
    data = DatasetConfig(vocab_size=5, base_len=4, n_train=6, n_test=4, seed=1)
    rows = run_sweep(data, config(), [0, 1], "visual_full")
    assert [(r["mode"], r["missing"]) for r in rows] == [
        ("original", 0), ("pooled", 0), ("original", 1), ("pooled", 1)]
    assert all(tuple(r) == SWEEP_HEADER for r in rows)
    with pytest.raises(ConfigError):
        run_sweep(data, config(), [1], "both")
