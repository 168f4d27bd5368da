import json

import numpy as np
import pytest

PUBMED_PREFIX = "http://www.ncbi.nlm.nih.gov/pubmed"

TOPIC_POOLS = [
    ["cardiac", "myocardial", "infarction", "heart", "ventricular",
     "arrhythmia", "ischemia", "coronary", "troponin"],
    ["tumor", "oncogene", "carcinoma", "metastasis", "apoptosis",
     "suppressor", "chemotherapy", "mutation", "proliferation"],
    ["neuron", "synaptic", "dopamine", "alzheimer", "amyloid",
     "cognition", "hippocampus", "tau", "neurodegeneration"],
    ["insulin", "glucose", "diabetes", "metabolism", "pancreatic",
     "glycogen", "obesity", "lipid", "glucagon"],
]

FILLER_TOKENS = ["study", "patients", "results", "analysis", "effect",
                 "clinical", "treatment", "baseline"]

_ANSWER_SENTENCES = {
    0: "Serum troponin rises within hours.",
    1: "The BRCA1 gene drives this effect.",
    2: "Deposits of amyloid beta accumulate early.",
    3: "Both insulin and glucagon regulate this balance.",
}


def make_micro_fixture(dirpath, docs_per_topic=5, doc_len=40, seed=77):
    """A tiny retrieval/QA corpus: 20 abstracts in 4 topics, 5 questions.

    Writes a BioASQ-shaped dataset JSON and a filled document store
    (NDJSON); returns their paths plus the raw structures.
    """
    rng = np.random.default_rng(seed)
    doc_ids_by_topic = []
    store_lines = []
    for t, pool in enumerate(TOPIC_POOLS):
        ids = []
        for j in range(docs_per_topic):
            doc_id = str(1000 + t * 100 + j)
            ids.append(doc_id)
            words = []
            for i in range(doc_len):
                if i % 5 == 4:
                    words.append(FILLER_TOKENS[int(rng.integers(len(FILLER_TOKENS)))])
                else:
                    words.append(pool[int(rng.integers(len(pool)))])
            abstract = " ".join(words) + ". " + _ANSWER_SENTENCES[t]
            store_lines.append(
                {"doc_id": doc_id, "title": f"{pool[t % len(pool)]} report {j}",
                 "abstract_text": abstract}
            )
        doc_ids_by_topic.append(ids)

    def urls(topic):
        return [f"{PUBMED_PREFIX}/{d}" for d in doc_ids_by_topic[topic]]

    def snippet(topic):
        return {
            "text": _ANSWER_SENTENCES[topic],
            "document": urls(topic)[0],
            "offsetInBeginSection": 0,
            "offsetInEndSection": len(_ANSWER_SENTENCES[topic]),
        }

    questions = [
        {"id": "fq-cardio", "type": "factoid",
         "body": "Which serum marker rises after myocardial infarction and coronary ischemia?",
         "documents": urls(0), "snippets": [snippet(0)],
         "exact_answer": [["troponin"]]},
        {"id": "fq-onco", "type": "factoid",
         "body": "Which oncogene drives carcinoma metastasis and apoptosis escape?",
         "documents": urls(1), "snippets": [snippet(1)],
         "exact_answer": [["BRCA1"]]},
        {"id": "fq-neuro", "type": "factoid",
         "body": "Which deposits accumulate in alzheimer hippocampus cognition decline?",
         "documents": urls(2), "snippets": [snippet(2)],
         "exact_answer": [["amyloid beta"]]},
        {"id": "lq-metab", "type": "list",
         "body": "List hormones regulating glucose metabolism and glycogen balance.",
         "documents": urls(3), "snippets": [snippet(3)],
         "exact_answer": [["insulin"], ["glucagon"]]},
        {"id": "lq-cardio", "type": "list",
         "body": "List markers of ventricular arrhythmia and cardiac ischemia.",
         "documents": urls(0), "snippets": [snippet(0)],
         "exact_answer": [["troponin"]]},
    ]

    dataset_path = dirpath / "dataset.json"
    dataset_path.write_text(
        json.dumps({"questions": questions}, indent=1), encoding="utf-8"
    )
    store_path = dirpath / "store.ndjson"
    store_path.write_text(
        "\n".join(json.dumps(line) for line in store_lines) + "\n", encoding="utf-8"
    )
    return {
        "dataset": dataset_path,
        "store": store_path,
        "doc_ids_by_topic": doc_ids_by_topic,
        "questions": questions,
    }


@pytest.fixture
def micro_fixture(tmp_path):
    return make_micro_fixture(tmp_path)


def make_topic_corpus(
    rng: np.random.Generator,
    num_topics: int = 3,
    vocab_size: int = 30,
    num_docs: int = 200,
    doc_len: int = 50,
    mixing: float = 0.2,
):
    """Synthetic corpus with block-structured true topics.

    Each topic concentrates 90% of its mass on its own vocabulary block
    and spreads the rest uniformly. Document topic weights are Dirichlet
    draws; tokens are multinomial. Returns (bow_corpus, true_topics).
    """
    block = vocab_size // num_topics
    beta = np.full((num_topics, vocab_size), 0.1 / vocab_size)
    for k in range(num_topics):
        beta[k, k * block : (k + 1) * block] += 0.9 / block
    beta /= beta.sum(axis=1, keepdims=True)

    corpus = []
    for _ in range(num_docs):
        theta = rng.dirichlet(np.full(num_topics, mixing))
        word_probs = theta @ beta
        counts = rng.multinomial(doc_len, word_probs)
        bow = [(int(w), int(c)) for w, c in enumerate(counts) if c > 0]
        corpus.append(bow)
    return corpus, beta


@pytest.fixture
def topic_corpus():
    rng = np.random.default_rng(2024)
    return make_topic_corpus(rng)
