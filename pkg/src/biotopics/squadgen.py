"""Span-annotated training records from question/context pairs.

Golden answer variants are located in the context by case-insensitive,
word-boundary search (whitespace inside multiword forms is flexible).
When no variant occurs, lexicon synonyms are tried. The earliest-occurring
form wins and all of its non-overlapping occurrences are recorded; the
recorded text is always copied from the context, never from the variant,
so slicing the context at (answer_start, len(text)) reproduces it exactly.
Offsets count Unicode code points.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .corpus import Question
from .errors import MalformedDataset
from .evalmetrics import SynonymLexicon

OFFSET_COMMENT = "answer_start offsets are Unicode code point indices into context"


@dataclass
class SpanAnswer:
    text: str
    answer_start: int


@dataclass
class SpanRecord:
    question_id: str
    question: str
    context: str
    answers: List[SpanAnswer] = field(default_factory=list)

    @property
    def is_impossible(self) -> bool:
        return not self.answers

    def validate(self) -> None:
        for ans in self.answers:
            got = self.context[ans.answer_start : ans.answer_start + len(ans.text)]
            if got != ans.text:
                raise MalformedDataset(
                    f"{self.question_id}: answer slice mismatch at {ans.answer_start}: "
                    f"{got!r} != {ans.text!r}"
                )


def _form_pattern(form: str) -> Optional[re.Pattern]:
    tokens = form.split()
    if not tokens:
        return None
    body = r"\s+".join(re.escape(t) for t in tokens)
    return re.compile(rf"(?<!\w){body}(?!\w)", re.IGNORECASE)


def _earliest_match(context: str, forms: Sequence[str]) -> Optional[Tuple[int, re.Pattern]]:
    """First-occurring form (ties broken by form order); None if no hits."""
    best: Optional[Tuple[int, re.Pattern]] = None
    for form in forms:
        pattern = _form_pattern(form)
        if pattern is None:
            continue
        m = pattern.search(context)
        if m and (best is None or m.start() < best[0]):
            best = (m.start(), pattern)
    return best


def annotate(question: Question, context: str, lex: SynonymLexicon) -> SpanRecord:
    """Locate the question's golden answer in `context`.

    Direct variants are preferred; lexicon synonyms are a fallback. With
    no match at all the record is impossible (no answers).
    """
    if not context:
        raise ValueError("context must be non-empty")
    record = SpanRecord(
        question_id=question.id, question=question.body, context=context
    )

    direct: List[str] = []
    for group in question.exact_answers:
        for variant in group:
            if variant not in direct:
                direct.append(variant)
    hit = _earliest_match(context, direct)
    if hit is None:
        fallback: List[str] = []
        for variant in direct:
            for syn in sorted(lex.synonyms_of(variant)):
                if syn not in fallback and syn.lower() not in (v.lower() for v in direct):
                    fallback.append(syn)
        hit = _earliest_match(context, fallback)
    if hit is None:
        return record

    _, pattern = hit
    for m in pattern.finditer(context):
        record.answers.append(SpanAnswer(text=m.group(0), answer_start=m.start()))
    return record


def export(records: Sequence[SpanRecord], path) -> None:
    """Write SQuAD-v2-shaped JSON; byte-stable for identical input."""
    seen: Dict[str, int] = {}
    data = []
    for rec in records:
        rec.validate()
        n = seen.get(rec.question_id, 0)
        seen[rec.question_id] = n + 1
        qa_id = rec.question_id if n == 0 else f"{rec.question_id}#{n}"
        data.append(
            {
                "title": "",
                "paragraphs": [
                    {
                        "context": rec.context,
                        "qas": [
                            {
                                "id": qa_id,
                                "question": rec.question,
                                "answers": [
                                    {"text": a.text, "answer_start": a.answer_start}
                                    for a in rec.answers
                                ],
                                "is_impossible": rec.is_impossible,
                            }
                        ],
                    }
                ],
            }
        )
    payload = {"comment": OFFSET_COMMENT, "version": "v2.0", "data": data}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")


def load_records(path) -> List[SpanRecord]:
    """Reload an exported file into records, re-verifying slice fidelity."""
    with open(path, encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise MalformedDataset(f"{path}: invalid JSON: {exc}") from exc
    records: List[SpanRecord] = []
    try:
        for article in payload["data"]:
            for para in article["paragraphs"]:
                for qa in para["qas"]:
                    rec = SpanRecord(
                        question_id=qa["id"],
                        question=qa["question"],
                        context=para["context"],
                        answers=[
                            SpanAnswer(text=a["text"], answer_start=int(a["answer_start"]))
                            for a in qa["answers"]
                        ],
                    )
                    if bool(qa.get("is_impossible")) != rec.is_impossible:
                        raise MalformedDataset(
                            f"{qa['id']}: is_impossible flag disagrees with answers"
                        )
                    rec.validate()
                    records.append(rec)
    except (KeyError, TypeError) as exc:
        raise MalformedDataset(f"{path}: not SQuAD-v2 shaped: {exc}") from exc
    return records
