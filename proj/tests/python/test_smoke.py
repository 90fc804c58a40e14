import json
import math

import numpy as np
import pytest

import tabret


def test_losses():
    assert tabret.contrastive_loss(0.3, [0.3, 0.3]) == pytest.approx(math.log(3), abs=1e-12)
    assert tabret.bce_loss(0.5, 1) == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(tabret.Error):
        tabret.contrastive_loss(1.0, [])


def test_bm25_topk_and_reload(tmp_path):
    texts = ["sydney 30 points", "beijing 32 points", "manchester 11", "sydney again"]
    ix = tabret.Bm25Index.build(texts)
    assert len(ix) == 4
    assert ix.df("sydney") == 2
    hits = ix.topk("sydney points", 3)
    assert hits[0][0] == 0
    assert all(a[1] >= b[1] for a, b in zip(hits, hits[1:]))
    path = str(tmp_path / "bm25.idx")
    ix.save(path)
    assert tabret.Bm25Index.load(path).topk("sydney points", 3) == hits


def test_dense_index_matches_numpy(tmp_path):
    rng = np.random.default_rng(3)
    m = rng.standard_normal((200, 8)).astype(np.float32)
    q = rng.standard_normal(8)
    ix = tabret.DenseIndex([f"b{i}" for i in range(200)], m)
    got = [o for o, _ in ix.topk(q, 10)]
    scores = m.astype(np.float64) @ q
    want = sorted(range(200), key=lambda i: (-scores[i], i))[:10]
    assert got == want
    path = str(tmp_path / "dense.idx")
    ix.save(path)
    assert tabret.DenseIndex.load(path).topk(q, 10) == ix.topk(q, 10)
    with pytest.raises(tabret.Error):
        tabret.DenseIndex(["a"], m)


def test_rank_encoder_heads():
    cols = tabret.numeric_columns(1500, 9)
    enc = tabret.RankEncoder.train(cols)
    max_acc, min_acc, n = enc.head_accuracy(tabret.numeric_columns(300, 10))
    assert n > 200
    assert max_acc > 0.9 and min_acc > 0.9
    logits = enc.max_logits([3.0, 40.0, 7.0])
    assert int(np.argmax(logits)) == 1
    assert len(enc.embeddings([1.0, 2.0])[0]) == enc.dim


def test_small_pipeline(tmp_path):
    cfg = json.loads(tabret.default_config())
    cfg["paths"]["data_dir"] = str(tmp_path / "data")
    cfg["paths"]["artifacts"] = str(tmp_path / "artifacts")
    cfg["synth"].update(n_tables=60, n_questions=700)
    cfg["retriever"].update(d=32, epochs=2)
    cfg["text"]["feature_dim"] = 1 << 14
    p = tabret.Pipeline(json.dumps(cfg))
    p.synth()
    p.build_all()
    reports = p.evaluate("dense")
    overall = reports[0]
    assert overall["name"] == "dense/all"
    for k in (1, 10, 15, 20):
        assert overall["block_recall"][k] <= overall["table_recall"][k]
    hits = p.retrieve("bm25", ["highest points"], k=5)
    assert len(hits) == 1 and len(hits[0]) <= 5
    assert p.block_id(hits[0][0][0])
    with pytest.raises(tabret.Error):
        tabret.Pipeline('{"bogus": 1}')
