import json
import math

import numpy as np
import pytest

from histnorm import training
from histnorm.data import TokenPair
from histnorm.models import Seq2Seq, load_checkpoint, make_config
from histnorm.segmentation import Segmenter
from histnorm.training import (
    CheckpointMeta, EarlyStopping, TrainConfig, TrainingDiverged, evaluate_dev, iterate_batches,
    select_best, train,
)

TINY = dict(num_layers=1, embed_dim=16, hidden_dim=16, num_heads=2, ffn_dim=32, dropout=0.0)
PAIRS = [TokenPair(h, m) for h, m in [("gyf", "gif"), ("late", "late"), ("citty", "city"),
                                      ("vnto", "vnto"), ("loue", "loue"), ("wyfe", "wife")]]


def setup(preset="Att-GRU", seed=0, pairs=PAIRS, **kw):
    seg = Segmenter.fit([p.historical for p in pairs] + [p.modern for p in pairs])
    return Seq2Seq(make_config(preset, len(seg.vocab), "toy", **{**TINY, **kw}), seed=seed), seg


def meta(ppls):
    return [CheckpointMeta(100 * (i + 1), math.log(p), p) for i, p in enumerate(ppls)]


def test_train_config_defaults_and_validation():
    c = TrainConfig()
    assert (c.base_lr, c.warmup_steps, c.checkpoint_every, c.patience) == (3e-4, 16_000, 500, 8)
    small = TrainConfig.scaled(0.1)
    assert (small.warmup_steps, small.checkpoint_every) == (1_600, 50)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    with pytest.raises(NotImplementedError):
        TrainConfig(label_smoothing=0.1)


def test_select_best():
    assert select_best(meta([3.1, 2.4, 2.9])).update_step == 200
    assert select_best(meta([2.4, 2.4])).update_step == 100
    one = meta([5.0])
    assert select_best(one) is one[0]
    with pytest.raises(ValueError):
        select_best([])


def test_patience_counts_checkpoints():
    stop = EarlyStopping(8)
    flags = [stop.update(v) for v in [1.0] + [1.0 + 0.1 * k for k in range(1, 9)]]
    assert flags == [False] * 8 + [True]


def test_training_halts_at_the_ninth_checkpoint(monkeypatch):
    worse = iter([2.0 + 0.1 * k for k in range(100)])

    def fake_eval(*a, **k):
        p = next(worse)
        return math.log(p), p

    monkeypatch.setattr(training, "evaluate_dev", fake_eval)
    m, seg = setup()
    res = train(m, seg, PAIRS, PAIRS, TrainConfig(checkpoint_every=1, warmup_steps=1, max_updates=50))
    assert res.stopped_early
    assert len(res.checkpoints) == 9 and res.updates == 9
    assert res.best.update_step == 1


def test_cross_entropy_arithmetic():
    m, seg = setup()
    for p in m.params.values():
        p.data[...] = 0
    # constant output distribution: P(x) = 0.5, P(EOS) = 0.25
    V = len(seg.vocab)
    x = seg.vocab.symbol_to_id["g"]
    probs = np.full(V, 0.25 / (V - 2))
    probs[x], probs[2] = 0.5, 0.25
    m.params["out.bias"].data[...] = np.log(probs)
    ce, ppl = evaluate_dev(m, seg, [TokenPair("a", "g")])
    assert ce == pytest.approx((math.log(2) + math.log(4)) / 2, rel=1e-6)
    assert round(ce, 4) == 1.0397
    assert ppl == pytest.approx(math.exp(ce), rel=1e-9)


def test_uniform_model_perplexity_is_vocab_size():
    m, seg = setup("NoAtt-LSTM")
    for p in m.params.values():
        p.data[...] = 0
    ce, ppl = evaluate_dev(m, seg, PAIRS)
    assert ppl == pytest.approx(len(seg.vocab), rel=1e-5)
    assert ce == pytest.approx(math.log(len(seg.vocab)), rel=1e-5)


@pytest.mark.parametrize("preset", ["Att-RNN", "Att-GRU", "NoAtt-LSTM"])
def test_initial_cross_entropy_near_log_v(preset):
    m, seg = setup(preset, embed_dim=64, hidden_dim=64)
    ce, _ = evaluate_dev(m, seg, PAIRS)
    assert abs(ce - math.log(len(seg.vocab))) < 0.15 * math.log(len(seg.vocab))


def test_evaluate_dev_empty():
    m, seg = setup()
    with pytest.raises(ValueError):
        evaluate_dev(m, seg, [])


def test_batches_cover_each_epoch():
    srcs = [[4] * n for n in range(1, 11)]
    gen = iterate_batches(srcs, srcs, 3, np.random.default_rng(0))
    seen = []
    for _ in range(4):
        b = next(gen)
        seen.extend(int(r.sum()) // 4 for r in b.src)
    assert sorted(seen) == list(range(1, 11))


def test_training_is_deterministic(tmp_path):
    logs = []
    for run in ("a", "b"):
        m, seg = setup(seed=3, dropout=0.1)
        train(m, seg, PAIRS, PAIRS, TrainConfig(checkpoint_every=5, warmup_steps=5, max_updates=20,
                                                 batch_size=4, seed=7),
              out_dir=tmp_path / run, log_file=tmp_path / f"{run}.log")
        logs.append((tmp_path / f"{run}.log").read_text())
    assert logs[0] == logs[1]
    lines = [json.loads(line) for line in logs[0].splitlines()]
    assert [r["update"] for r in lines] == [5, 10, 15, 20]
    assert set(lines[0]) == {"update", "lr", "train_loss", "dev_cross_entropy", "dev_perplexity"}


def test_checkpoints_written_and_best_selected(tmp_path):
    m, seg = setup()
    res = train(m, seg, PAIRS, PAIRS, TrainConfig(checkpoint_every=10, warmup_steps=5,
                                                   max_updates=35, base_lr=3e-3),
                out_dir=tmp_path)
    assert [c.update_step for c in res.checkpoints] == [10, 20, 30, 35]
    assert all(c.dev_perplexity >= res.best.dev_perplexity for c in res.checkpoints)
    for c in res.checkpoints:
        assert c.dev_perplexity == pytest.approx(math.exp(c.dev_cross_entropy), rel=1e-9)
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "ckpt-0000010.bin", "ckpt-0000020.bin", "ckpt-0000030.bin", "ckpt-0000035.bin"]
    # the model holds the best checkpoint's weights
    _, ppl = evaluate_dev(m, seg, PAIRS)
    assert ppl == res.best.dev_perplexity


def test_checkpoint_reload_reproduces_perplexity(tmp_path):
    m, seg = setup()
    res = train(m, seg, PAIRS, PAIRS, TrainConfig(checkpoint_every=10, warmup_steps=5, max_updates=20),
                out_dir=tmp_path)
    for c in res.checkpoints:
        model, segmenter, info = load_checkpoint(c.path)
        assert evaluate_dev(model, segmenter, PAIRS)[1] == c.dev_perplexity
        assert info["update_step"] == c.update_step


def test_divergence_names_the_update():
    m, seg = setup()
    m.params["out.bias"].data[...] = np.nan
    with pytest.raises(TrainingDiverged, match="update 1"):
        train(m, seg, PAIRS, PAIRS, TrainConfig(checkpoint_every=5, warmup_steps=5, max_updates=10))


def test_one_pair_loss_decreases_after_warmup():
    pair = [TokenPair("wyfe", "wife")]
    curves = []
    for seed in range(5):
        m, seg = setup(seed=seed, pairs=pair)
        res = train(m, seg, pair, pair, TrainConfig(checkpoint_every=1, warmup_steps=10,
                                                     max_updates=60, base_lr=3e-3, seed=seed,
                                                     patience=100))
        curves.append([c.train_loss for c in res.checkpoints])
    mean = np.mean(curves, axis=0)[10:]
    assert np.all(np.diff(mean) <= 0)
