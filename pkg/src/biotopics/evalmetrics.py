"""Retrieval and answer metrics with synonym-aware matching.

Precision/recall/F1 cover document ranking and list answers; strict and
lenient accuracy plus reciprocal rank cover factoid answers. Matching
normalizes case and whitespace and honors a synonym lexicon: a candidate
counts as correct when it equals a golden surface form or any lexicon
synonym of one.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Set, Tuple

from .corpus import AnswerVariantGroup, Question
from .errors import MalformedLexicon

MAX_FACTOID_CANDIDATES = 5


def normalize_answer(text: str) -> str:
    """Lowercase and collapse runs of whitespace."""
    return " ".join(text.lower().split())


class SynonymLexicon:
    """Groups of interchangeable surface forms, keyed by canonical term."""

    def __init__(self, groups: Dict[str, Set[str]] | None = None):
        self.groups: Dict[str, Set[str]] = {}
        self._by_form: Dict[str, Set[str]] = {}
        if groups:
            for canonical, forms in groups.items():
                self.add_group(canonical, forms)

    def add_group(self, canonical: str, forms: Iterable[str]) -> None:
        canonical = normalize_answer(canonical)
        if not canonical:
            raise MalformedLexicon("empty canonical term")
        members = {normalize_answer(f) for f in forms}
        members.discard("")
        members.add(canonical)  # reflexive closure
        merged = self.groups.setdefault(canonical, set())
        merged.update(members)
        for form in members:
            self._by_form.setdefault(form, set()).add(canonical)

    def synonyms_of(self, form: str) -> Set[str]:
        """All forms sharing a group with `form`, including itself."""
        form = normalize_answer(form)
        out = {form}
        for canonical in self._by_form.get(form, ()):
            out.update(self.groups[canonical])
        return out

    def __len__(self) -> int:
        return len(self.groups)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SynonymLexicon):
            return NotImplemented
        return self.groups == other.groups


def load_lexicon(path) -> SynonymLexicon:
    """Read a TSV lexicon: canonical TAB synonym TAB synonym..."""
    lex = SynonymLexicon()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            try:
                lex.add_group(fields[0], fields[1:])
            except MalformedLexicon as exc:
                raise MalformedLexicon(f"{path}:{lineno}: {exc}") from exc
    return lex


def save_lexicon(lex: SynonymLexicon, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for canonical in sorted(lex.groups):
            synonyms = sorted(lex.groups[canonical] - {canonical})
            f.write("\t".join([canonical] + synonyms))
            f.write("\n")


def _expand_variants(variants: AnswerVariantGroup, lex: SynonymLexicon) -> Set[str]:
    accepted: Set[str] = set()
    for v in variants:
        accepted.update(lex.synonyms_of(v))
    return accepted


def prf(retrieved: Sequence[str], golden: Iterable[str]) -> Tuple[float, float, float]:
    """Precision, recall and F1 of a retrieved id list against a golden set.

    Duplicate retrieved ids are collapsed. Empty retrieved gives P=0;
    empty golden gives R=0 (callers exclude such questions from
    aggregates). F1 is 0 when P + R is 0.
    """
    seen: Set[str] = set()
    unique: List[str] = []
    for r in retrieved:
        if r not in seen:
            seen.add(r)
            unique.append(r)
    golden = set(golden)
    hits = sum(1 for r in unique if r in golden)
    p = hits / len(unique) if unique else 0.0
    r = hits / len(golden) if golden else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return p, r, f1


def factoid_scores(
    candidates: Sequence[str],
    golden: AnswerVariantGroup,
    lex: SynonymLexicon,
) -> Tuple[bool, bool, float]:
    """(strict, lenient, reciprocal rank) of ranked factoid candidates.

    strict: match at rank 1; lenient: match anywhere; reciprocal rank is
    1/r for the first match, else 0.
    """
    if len(candidates) > MAX_FACTOID_CANDIDATES:
        raise ValueError(
            f"at most {MAX_FACTOID_CANDIDATES} candidates allowed, got {len(candidates)}"
        )
    accepted = _expand_variants(golden, lex)
    for rank, cand in enumerate(candidates, start=1):
        if normalize_answer(cand) in accepted:
            return rank == 1, True, 1.0 / rank
    return False, False, 0.0


def list_scores(
    predicted: Iterable[str],
    golden: Sequence[AnswerVariantGroup],
    lex: SynonymLexicon,
) -> Tuple[float, float, float]:
    """Precision, recall and F1 of predicted entities against golden groups.

    Each golden group may be matched at most once; matching is greedy in
    prediction order. Predictions matching no (remaining) group count as
    false positives; duplicates collapse to one prediction.
    """
    seen: Set[str] = set()
    preds: List[str] = []
    for p in predicted:
        norm = normalize_answer(p)
        if norm and norm not in seen:
            seen.add(norm)
            preds.append(norm)

    expansions = [_expand_variants(g, lex) for g in golden]
    matched = [False] * len(golden)
    tp = 0
    for pred in preds:
        for gi, accepted in enumerate(expansions):
            if not matched[gi] and pred in accepted:
                matched[gi] = True
                tp += 1
                break
    fp = len(preds) - tp
    fn = len(golden) - tp
    p = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    r = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return p, r, f1


def mrr(rr_values: Sequence[float]) -> float:
    """Mean of reciprocal ranks; misses contribute 0."""
    if not rr_values:
        raise ValueError("mrr requires at least one value")
    return sum(rr_values) / len(rr_values)


@dataclass
class EvalReport:
    """Per-question scores plus their arithmetic-mean aggregates."""

    per_question: Dict[str, Dict[str, float]] = field(default_factory=dict)
    aggregates: Dict[str, float] = field(default_factory=dict)
    excluded: List[str] = field(default_factory=list)

    def to_json(self, path) -> None:
        payload = {
            "per_question": self.per_question,
            "aggregates": self.aggregates,
            "excluded": self.excluded,
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")

    def append_csv_row(self, path, run_id: str) -> None:
        """One summary row per run, for spreadsheet diffing."""
        keys = sorted(self.aggregates)
        exists = False
        try:
            with open(path, encoding="utf-8") as f:
                exists = bool(f.readline())
        except FileNotFoundError:
            pass
        with open(path, "a", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            if not exists:
                writer.writerow(["run_id"] + keys)
            writer.writerow([run_id] + [f"{self.aggregates[k]:.6f}" for k in keys])


def evaluate_retrieval(
    run: Dict[str, Sequence[Tuple[str, float]]],
    questions: Sequence[Question],
) -> EvalReport:
    """Score ranked document lists against golden documents.

    Questions with no golden documents are excluded from aggregates and
    listed separately.
    """
    report = EvalReport()
    ps, rs, f1s = [], [], []
    for q in questions:
        if not q.golden_doc_ids:
            report.excluded.append(q.id)
            continue
        ranked = run.get(q.id, [])
        retrieved = [doc_id for doc_id, _ in ranked]
        p, r, f1 = prf(retrieved, q.golden_doc_ids)
        report.per_question[q.id] = {"precision": p, "recall": r, "f1": f1}
        ps.append(p)
        rs.append(r)
        f1s.append(f1)
    if ps:
        report.aggregates = {
            "mean_precision": sum(ps) / len(ps),
            "mean_recall": sum(rs) / len(rs),
            "mean_f1": sum(f1s) / len(f1s),
            "questions": float(len(ps)),
        }
    else:
        report.aggregates = {
            "mean_precision": 0.0, "mean_recall": 0.0, "mean_f1": 0.0,
            "questions": 0.0,
        }
    return report


def evaluate_answers(
    predictions: Dict[str, Sequence[str]],
    questions: Sequence[Question],
    lex: SynonymLexicon,
) -> EvalReport:
    """Score factoid and list answers from candidate strings per question.

    `predictions` maps question id to ranked candidate texts. Factoid
    questions use the top five; list questions use every candidate.
    Questions without golden answers are excluded.
    """
    report = EvalReport()
    stricts, lenients, rrs = [], [], []
    ps, rs, f1s = [], [], []
    for q in questions:
        if not q.exact_answers:
            report.excluded.append(q.id)
            continue
        candidates = list(predictions.get(q.id, []))
        if q.qtype == "factoid":
            strict, lenient, rr = factoid_scores(
                candidates[:MAX_FACTOID_CANDIDATES], q.exact_answers[0], lex
            )
            report.per_question[q.id] = {
                "strict": float(strict), "lenient": float(lenient),
                "reciprocal_rank": rr,
            }
            stricts.append(strict)
            lenients.append(lenient)
            rrs.append(rr)
        else:
            p, r, f1 = list_scores(candidates, q.exact_answers, lex)
            report.per_question[q.id] = {"precision": p, "recall": r, "f1": f1}
            ps.append(p)
            rs.append(r)
            f1s.append(f1)
    aggregates: Dict[str, float] = {}
    if stricts:
        aggregates["sacc"] = sum(stricts) / len(stricts)
        aggregates["lacc"] = sum(lenients) / len(lenients)
        aggregates["mrr"] = mrr(rrs)
        aggregates["factoid_questions"] = float(len(stricts))
    if ps:
        aggregates["list_mean_precision"] = sum(ps) / len(ps)
        aggregates["list_mean_recall"] = sum(rs) / len(rs)
        aggregates["list_mean_f1"] = sum(f1s) / len(f1s)
        aggregates["list_questions"] = float(len(ps))
    report.aggregates = aggregates
    return report
