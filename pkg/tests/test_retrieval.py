import numpy as np
import pytest

from biotopics.corpus import AbstractDoc, DocumentStore
from biotopics.errors import DimensionMismatch, EmptyIndex
from biotopics.ovblda import LdaHyperParams, init_model, train
from biotopics.retrieval import (
    TopicIndex,
    build_index,
    load_run,
    query,
    rank_by_similarity,
    save_run,
)
from biotopics.textprep import PipelineConfig
from biotopics.vocab import build_vocab, to_bow, corpus_to_bows
from biotopics.textprep import preprocess


PREP = PipelineConfig(stopword_list=frozenset({"the", "a", "of"}), stemmer="none")

DOCS = [
    ("d1", "BRCA1 repair", "brca1 gene dna repair pathway brca1 damage"),
    ("d2", "p53 apoptosis", "p53 apoptosis tumor suppressor p53 cell death"),
    ("d3", "glucose", "glucose insulin metabolism pancreas blood sugar"),
]


def _store():
    store = DocumentStore()
    for doc_id, title, text in DOCS:
        store.add(AbstractDoc(doc_id=doc_id, title=title, abstract_text=text))
    return store


def _trained_setup():
    store = _store()
    token_docs = [
        preprocess(f"{d.title} {d.abstract_text}", PREP) for d in store
    ]
    vocab = build_vocab(token_docs)
    corpus = list(corpus_to_bows(token_docs, vocab))
    hyper = LdaHyperParams(num_topics=3, chunksize=3, passes=20, eval_every=0)
    model = init_model(hyper, vocab_size=len(vocab), seed=3)
    train(model, corpus)
    return store, vocab, model


def _manual_index(thetas, ids=None):
    thetas = np.asarray(thetas, dtype=float)
    ids = ids or [f"d{i}" for i in range(len(thetas))]
    return TopicIndex(
        doc_ids=list(ids), thetas=thetas, norms=np.linalg.norm(thetas, axis=1)
    )


def test_build_index_empty_store():
    _, vocab, model = _trained_setup()
    index = build_index(model, DocumentStore(), PREP, vocab)
    assert len(index) == 0


def test_build_index_rows_sum_to_one():
    store, vocab, model = _trained_setup()
    index = build_index(model, store, PREP, vocab)
    assert index.doc_ids == ["d1", "d2", "d3"]
    assert np.allclose(index.thetas.sum(axis=1), 1.0, atol=1e-9)
    assert np.allclose(index.norms, np.linalg.norm(index.thetas, axis=1))


def test_build_index_deterministic():
    store, vocab, model = _trained_setup()
    a = build_index(model, store, PREP, vocab)
    b = build_index(model, store, PREP, vocab)
    assert np.array_equal(a.thetas, b.thetas)


def test_build_index_dimension_mismatch():
    _, vocab, model = _trained_setup()
    other_vocab = build_vocab([["x", "y"]])
    with pytest.raises(DimensionMismatch):
        build_index(model, _store(), PREP, other_vocab)


def test_query_identical_text_scores_one():
    store, vocab, model = _trained_setup()
    index = build_index(model, store, PREP, vocab)
    body = f"{DOCS[0][1]} {DOCS[0][2]}"  # exactly document d1's text
    ranked = query(index, model, vocab, PREP, body, k=3)
    assert ranked[0][0] == "d1"
    assert ranked[0][1] == pytest.approx(1.0, abs=1e-12)


def test_orthogonal_one_hot_scores_zero():
    index = _manual_index([[1.0, 0.0], [0.0, 1.0]], ids=["x", "y"])
    ranked = rank_by_similarity(index, np.array([1.0, 0.0]), k=2)
    assert ranked[0] == ("x", 1.0)
    assert ranked[1][0] == "y"
    assert ranked[1][1] == 0.0


def test_rank_matches_bruteforce_oracle():
    rng = np.random.default_rng(42)
    for trial in range(100):
        n, k_topics = 50, 6
        thetas = rng.dirichlet(np.ones(k_topics), size=n)
        # inject duplicate rows to force score ties
        thetas[7] = thetas[3]
        thetas[19] = thetas[3]
        index = _manual_index(thetas, ids=[f"doc{i:03d}" for i in range(n)])
        theta_q = rng.dirichlet(np.ones(k_topics))
        k = int(rng.integers(1, 12))
        got = rank_by_similarity(index, theta_q, k)

        # independent full-sort oracle with explicit python arithmetic
        qn = sum(v * v for v in theta_q) ** 0.5
        scored = []
        for i in range(n):
            dot = sum(a * b for a, b in zip(index.thetas[i], theta_q))
            dn = sum(v * v for v in index.thetas[i]) ** 0.5
            scored.append((index.doc_ids[i], min(1.0, max(0.0, dot / (dn * qn)))))
        scored.sort(key=lambda e: (-e[1], e[0]))
        expected = scored[:k]
        assert [d for d, _ in got] == [d for d, _ in expected], trial
        assert np.allclose([s for _, s in got], [s for _, s in expected], atol=1e-12)


def test_rank_scale_invariance():
    # cosine has homogeneity degree 0; rescaling theta_q changes scores
    # only by float rounding (scaling each element rounds independently)
    rng = np.random.default_rng(1)
    index = _manual_index(rng.dirichlet(np.ones(4), size=20))
    theta_q = rng.dirichlet(np.ones(4))
    base = rank_by_similarity(index, theta_q, k=20)
    scaled = rank_by_similarity(index, 7.3 * theta_q, k=20)
    assert [d for d, _ in base] == [d for d, _ in scaled]
    assert np.allclose(
        [s for _, s in base], [s for _, s in scaled], rtol=0, atol=1e-12
    )


def test_rank_k_exceeding_n_returns_all():
    index = _manual_index(np.eye(3))
    assert len(rank_by_similarity(index, np.array([1.0, 1.0, 1.0]), k=10)) == 3


def test_query_empty_index_raises():
    _, vocab, model = _trained_setup()
    index = _manual_index(np.empty((0, 3)))
    with pytest.raises(EmptyIndex):
        query(index, model, vocab, PREP, "anything", k=5)


def test_rank_rejects_bad_k():
    index = _manual_index(np.eye(2))
    with pytest.raises(ValueError):
        rank_by_similarity(index, np.array([1.0, 0.0]), k=0)


def test_run_file_roundtrip(tmp_path):
    run = {
        "q1": [("d1", 0.9), ("d2", 0.25)],
        "q2": [("d3", 1.0)],
    }
    path = tmp_path / "run.json"
    save_run(run, path)
    assert load_run(path) == run
