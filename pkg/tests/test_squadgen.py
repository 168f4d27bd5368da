import json

import pytest

from biotopics.corpus import Question
from biotopics.errors import MalformedDataset
from biotopics.evalmetrics import SynonymLexicon
from biotopics.squadgen import SpanRecord, SpanAnswer, annotate, export, load_records


def _q(answers, qid="q1", qtype="factoid"):
    return Question(
        id=qid, body="What gene?", qtype=qtype,
        exact_answers=[list(g) for g in answers],
    )


def test_annotate_simple_substring():
    rec = annotate(_q([["BRCA1"]]), "the BRCA1 gene regulates", SynonymLexicon())
    assert not rec.is_impossible
    assert rec.answers == [SpanAnswer(text="BRCA1", answer_start=4)]


def test_annotate_absent_is_impossible():
    rec = annotate(_q([["XYZ99"]]), "nothing relevant here", SynonymLexicon())
    assert rec.is_impossible
    assert rec.answers == []


def test_annotate_synonym_fallback_with_independent_scan():
    lex = SynonymLexicon({"heart attack": {"myocardial infarction"}})
    context = "Patients had myocardial infarction after surgery."
    rec = annotate(_q([["heart attack"]]), context, lex)
    assert len(rec.answers) == 1
    expected_start = context.lower().index("myocardial infarction")
    assert rec.answers[0].answer_start == expected_start
    assert rec.answers[0].text == "myocardial infarction"


def test_annotate_word_boundary():
    rec = annotate(_q([["BRCA1"]]), "the BRCA12 gene", SynonymLexicon())
    assert rec.is_impossible


def test_annotate_records_all_nonoverlapping_occurrences():
    context = "BRCA1 binds BRCA1 and regulates BRCA1."
    rec = annotate(_q([["BRCA1"]]), context, SynonymLexicon())
    assert [a.answer_start for a in rec.answers] == [0, 12, 32]


def test_annotate_earliest_variant_wins():
    context = "TP53 also known as p53 is a suppressor."
    rec = annotate(_q([["p53", "TP53"]]), context, SynonymLexicon())
    # TP53 occurs first in the context, so its occurrences are recorded
    assert [a.text for a in rec.answers] == ["TP53"]
    assert rec.answers[0].answer_start == 0


def test_annotate_copies_surface_form_from_context():
    rec = annotate(_q([["brca1"]]), "The BRCA1 gene", SynonymLexicon())
    assert rec.answers[0].text == "BRCA1"


def test_annotate_flexible_whitespace_in_multiword():
    context = "chronic  kidney\ndisease progression"
    rec = annotate(_q([["chronic kidney disease"]]), context, SynonymLexicon())
    assert len(rec.answers) == 1
    ans = rec.answers[0]
    assert context[ans.answer_start : ans.answer_start + len(ans.text)] == ans.text


def test_annotate_unicode_offsets():
    context = "Aβ-42 peptide: α-synuclein aggregates."
    rec = annotate(_q([["α-synuclein"]]), context, SynonymLexicon())
    ans = rec.answers[0]
    assert context[ans.answer_start : ans.answer_start + len(ans.text)] == "α-synuclein"


def test_annotate_requires_context():
    with pytest.raises(ValueError):
        annotate(_q([["x"]]), "", SynonymLexicon())


def test_export_empty(tmp_path):
    path = tmp_path / "train.json"
    export([], path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert payload["data"] == []
    assert "Unicode code point" in payload["comment"]


def test_export_roundtrip_and_slice_fidelity(tmp_path):
    rec = annotate(_q([["BRCA1"]]), "the BRCA1 gene regulates", SynonymLexicon())
    path = tmp_path / "train.json"
    export([rec], path)
    loaded = load_records(path)
    assert len(loaded) == 1
    ans = loaded[0].answers[0]
    assert loaded[0].context[ans.answer_start : ans.answer_start + len(ans.text)] == ans.text


def test_export_byte_stable(tmp_path):
    recs = [
        annotate(_q([["BRCA1"]], qid=f"q{i}"), "the BRCA1 gene", SynonymLexicon())
        for i in range(3)
    ]
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    export(recs, p1)
    export(recs, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_export_unique_ids_for_repeated_questions(tmp_path):
    recs = [
        annotate(_q([["BRCA1"]]), "the BRCA1 gene", SynonymLexicon()),
        annotate(_q([["BRCA1"]]), "another BRCA1 context", SynonymLexicon()),
    ]
    path = tmp_path / "train.json"
    export(recs, path)
    loaded = load_records(path)
    assert loaded[0].question_id != loaded[1].question_id


def test_export_rejects_corrupt_offsets(tmp_path):
    rec = SpanRecord(
        question_id="q", question="?", context="abcdef",
        answers=[SpanAnswer(text="zzz", answer_start=0)],
    )
    with pytest.raises(MalformedDataset):
        export([rec], tmp_path / "x.json")


def test_load_records_rejects_bad_shape(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"data": [{"nope": 1}]}', encoding="utf-8")
    with pytest.raises(MalformedDataset):
        load_records(path)
