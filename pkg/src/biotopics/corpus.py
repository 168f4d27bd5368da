"""BioASQ-style dataset ingestion, PubMed abstract fetching, document store.

Document references in the input JSON are full PubMed URLs; the engine keys
everything on the bare ID (trailing path segment). Exact answers are
normalized into variant groups: one group per entity, each group holding the
accepted surface forms of that entity.
"""
from __future__ import annotations

import json
import os
import threading
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

import requests

from .errors import MalformedDataset, NetworkError

SUPPORTED_QTYPES = ("factoid", "list")

EUTILS_EFETCH_URL = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi"
API_KEY_ENV_VAR = "NCBI_API_KEY"

# Surface forms of one answer entity.
AnswerVariantGroup = List[str]


@dataclass
class Snippet:
    doc_id: str
    text: str
    begin_offset: Optional[int] = None
    end_offset: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.text:
            raise MalformedDataset("snippet with empty text")
        if (
            self.begin_offset is not None
            and self.end_offset is not None
            and self.end_offset <= self.begin_offset
        ):
            raise MalformedDataset(
                f"snippet offsets out of order: [{self.begin_offset}, {self.end_offset})"
            )


@dataclass
class Question:
    id: str
    body: str
    qtype: str
    golden_doc_ids: List[str] = field(default_factory=list)
    snippets: List[Snippet] = field(default_factory=list)
    exact_answers: List[AnswerVariantGroup] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.id:
            raise MalformedDataset("question with empty id")
        if self.qtype not in SUPPORTED_QTYPES:
            raise MalformedDataset(f"unsupported question type: {self.qtype!r}")


@dataclass
class AbstractDoc:
    doc_id: str
    title: str = ""
    abstract_text: str = ""


class DocumentStore:
    """doc_id -> AbstractDoc map that remembers insertion order."""

    def __init__(self) -> None:
        self._docs: Dict[str, AbstractDoc] = {}
        self._order: List[str] = []

    def __len__(self) -> int:
        return len(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def __iter__(self) -> Iterator[AbstractDoc]:
        for doc_id in self._order:
            yield self._docs[doc_id]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DocumentStore):
            return NotImplemented
        return self._order == other._order and self._docs == other._docs

    @property
    def doc_ids(self) -> List[str]:
        return list(self._order)

    def get(self, doc_id: str) -> Optional[AbstractDoc]:
        return self._docs.get(doc_id)

    def add(self, doc: AbstractDoc) -> None:
        """Insert or replace; replacement keeps the original position."""
        if doc.doc_id not in self._docs:
            self._order.append(doc.doc_id)
        self._docs[doc.doc_id] = doc

    def missing_text_ids(self) -> List[str]:
        """Registered ids whose abstracts have not been filled in yet."""
        return [d for d in self._order if not self._docs[d].abstract_text]

    def validate_filled(self) -> None:
        missing = self.missing_text_ids()
        if missing:
            raise MalformedDataset(
                f"{len(missing)} document(s) lack abstract text, e.g. {missing[:5]}"
            )


def normalize_doc_id(ref: str) -> str:
    """Bare PubMed ID from a URL or an already-bare reference."""
    return ref.rstrip("/").rsplit("/", 1)[-1].strip()


def _normalize_exact_answer(raw, qtype: str) -> List[AnswerVariantGroup]:
    """Flatten the dataset's exact_answer shapes into variant groups.

    Factoid: all listed strings are surface forms of a single entity.
    List: one group per entity (a bare string becomes a singleton group).
    """
    if raw is None:
        return []

    def clean_group(items) -> AnswerVariantGroup:
        return [s.strip() for s in items if isinstance(s, str) and s.strip()]

    if isinstance(raw, str):
        return [[raw.strip()]] if raw.strip() else []
    if not isinstance(raw, list):
        raise MalformedDataset(f"unsupported exact_answer shape: {type(raw).__name__}")

    groups: List[AnswerVariantGroup] = []
    flat_strings: List[str] = []
    for item in raw:
        if isinstance(item, str):
            flat_strings.append(item)
        elif isinstance(item, list):
            g = clean_group(item)
            if g:
                groups.append(g)
    if flat_strings:
        if qtype == "factoid":
            groups.insert(0, clean_group(flat_strings))
        else:
            groups.extend([s.strip()] for s in flat_strings if s.strip())

    if qtype == "factoid" and len(groups) > 1:
        # a factoid answer is one entity; merge stray nesting into one group
        merged: AnswerVariantGroup = []
        for g in groups:
            for v in g:
                if v not in merged:
                    merged.append(v)
        groups = [merged]
    return [g for g in groups if g]


def _parse_question(entry: dict) -> Optional[Question]:
    if not isinstance(entry, dict):
        raise MalformedDataset("question entry is not an object")
    qtype = entry.get("type")
    if qtype not in SUPPORTED_QTYPES:
        return None
    try:
        qid = entry["id"]
        body = entry["body"]
    except KeyError as exc:
        raise MalformedDataset(f"question missing required field {exc}") from exc
    if not isinstance(qid, str) or not qid:
        raise MalformedDataset("question id must be a non-empty string")

    golden: List[str] = []
    for ref in entry.get("documents", []) or []:
        doc_id = normalize_doc_id(str(ref))
        if doc_id and doc_id not in golden:
            golden.append(doc_id)

    snippets: List[Snippet] = []
    for raw in entry.get("snippets", []) or []:
        if not isinstance(raw, dict):
            continue
        text = raw.get("text") or ""
        doc_id = normalize_doc_id(str(raw.get("document", "")))
        if not text or doc_id not in golden:
            # snippets must point at one of the question's golden documents
            continue
        snippets.append(
            Snippet(
                doc_id=doc_id,
                text=text,
                begin_offset=raw.get("offsetInBeginSection"),
                end_offset=raw.get("offsetInEndSection"),
            )
        )

    return Question(
        id=qid,
        body=str(body),
        qtype=qtype,
        golden_doc_ids=golden,
        snippets=snippets,
        exact_answers=_normalize_exact_answer(entry.get("exact_answer"), qtype),
    )


def load_bioasq(
    path, allowed_types: Iterable[str] = SUPPORTED_QTYPES
) -> Tuple[List[Question], DocumentStore]:
    """Parse a BioASQ-style JSON file into questions and a document store.

    Questions of other types are silently filtered. The returned store
    registers every referenced document id; abstract text is filled in
    later by fetching or by merging a saved store.
    """
    allowed = set(allowed_types)
    unknown = allowed - set(SUPPORTED_QTYPES)
    if unknown:
        raise ValueError(f"unsupported question types requested: {sorted(unknown)}")
    with open(path, encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise MalformedDataset(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("questions"), list):
        raise MalformedDataset(f"{path}: expected an object with a 'questions' array")

    questions: List[Question] = []
    seen_ids: Set[str] = set()
    store = DocumentStore()
    for entry in payload["questions"]:
        q = _parse_question(entry)
        if q is None or q.qtype not in allowed:
            continue
        if q.id in seen_ids:
            raise MalformedDataset(f"duplicate question id {q.id!r}")
        seen_ids.add(q.id)
        questions.append(q)
        for doc_id in q.golden_doc_ids:
            if doc_id not in store:
                store.add(AbstractDoc(doc_id=doc_id))
    return questions, store


@dataclass
class FetchResult:
    docs: Dict[str, AbstractDoc]
    missing: List[str]


class PubMedFetcher:
    """E-utilities efetch client with batching, delay and bounded retries.

    An API key is read from the NCBI_API_KEY environment variable when
    present. Batches are capped at 200 ids and requests are spaced by at
    least 340 ms, matching the public rate limits.
    """

    def __init__(
        self,
        base_url: str = EUTILS_EFETCH_URL,
        batch_size: int = 200,
        delay_s: float = 0.34,
        max_retries: int = 3,
        timeout_s: float = 30.0,
        session: Optional[requests.Session] = None,
    ):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.base_url = base_url
        self.batch_size = min(batch_size, 200)
        self.delay_s = max(delay_s, 0.0)
        self.max_retries = max_retries
        self.timeout_s = timeout_s
        self.session = session or requests.Session()
        self._last_request = 0.0
        self._throttle_lock = threading.Lock()

    def _throttle(self) -> None:
        with self._throttle_lock:
            wait = self._last_request + self.delay_s - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()

    def fetch_batch(self, ids: Sequence[str]) -> FetchResult:
        params = {"db": "pubmed", "retmode": "xml", "id": ",".join(ids)}
        api_key = os.environ.get(API_KEY_ENV_VAR)
        if api_key:
            params["api_key"] = api_key

        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(min(0.5 * 2 ** (attempt - 1), 8.0))
            self._throttle()
            try:
                resp = self.session.get(
                    self.base_url, params=params, timeout=self.timeout_s
                )
                if resp.status_code >= 500:
                    last_error = NetworkError(f"server error {resp.status_code}")
                    continue
                resp.raise_for_status()
                return _parse_efetch_xml(resp.text, ids)
            except requests.RequestException as exc:
                last_error = exc
        raise NetworkError(
            f"efetch failed after {self.max_retries + 1} attempts: {last_error}"
        )


def _parse_efetch_xml(xml_text: str, requested: Sequence[str]) -> FetchResult:
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise NetworkError(f"unparseable efetch response: {exc}") from exc
    docs: Dict[str, AbstractDoc] = {}
    for article in root.iter("PubmedArticle"):
        pmid_el = article.find(".//MedlineCitation/PMID")
        if pmid_el is None or not (pmid_el.text or "").strip():
            continue
        pmid = pmid_el.text.strip()
        title_el = article.find(".//Article/ArticleTitle")
        title = "".join(title_el.itertext()).strip() if title_el is not None else ""
        sections = [
            "".join(el.itertext()).strip()
            for el in article.findall(".//Article/Abstract/AbstractText")
        ]
        abstract = " ".join(s for s in sections if s).strip()
        if not abstract:
            continue  # articles without abstracts are reported as missing
        docs[pmid] = AbstractDoc(doc_id=pmid, title=title, abstract_text=abstract)
    missing = sorted(set(requested) - set(docs))
    return FetchResult(docs=docs, missing=missing)


def fetch_abstracts(ids: Sequence[str], client, max_workers: int = 1) -> FetchResult:
    """Fetch abstracts for unique ids through `client`, batch by batch.

    The result only ever contains fully parsed abstracts; a hard network
    failure raises without returning partial data. Missing ids (unknown or
    abstract-less) are collected, not fatal. Batches may run concurrently
    up to max_workers; results merge deterministically in ascending
    doc_id order.
    """
    unique = sorted(set(ids))
    if not unique:
        raise ValueError("fetch_abstracts requires at least one id")
    batch_size = getattr(client, "batch_size", 200)
    batches = [unique[s : s + batch_size] for s in range(0, len(unique), batch_size)]
    docs: Dict[str, AbstractDoc] = {}
    missing: Set[str] = set()
    if max_workers <= 1 or len(batches) == 1:
        results = [client.fetch_batch(batch) for batch in batches]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(client.fetch_batch, batches))
    for result in results:
        docs.update(result.docs)
        missing.update(result.missing)
    ordered = {doc_id: docs[doc_id] for doc_id in sorted(docs)}
    return FetchResult(docs=ordered, missing=sorted(missing))


def questions_save(questions: Sequence[Question], path) -> None:
    """Write normalized questions as JSON (stable key order)."""
    payload = {
        "questions": [
            {
                "id": q.id,
                "body": q.body,
                "qtype": q.qtype,
                "golden_doc_ids": q.golden_doc_ids,
                "snippets": [
                    {
                        "doc_id": s.doc_id,
                        "text": s.text,
                        "begin_offset": s.begin_offset,
                        "end_offset": s.end_offset,
                    }
                    for s in q.snippets
                ],
                "exact_answers": q.exact_answers,
            }
            for q in questions
        ]
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")


def questions_load(path) -> List[Question]:
    """Read questions written by questions_save."""
    with open(path, encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise MalformedDataset(f"{path}: invalid JSON: {exc}") from exc
    try:
        return [
            Question(
                id=raw["id"],
                body=raw["body"],
                qtype=raw["qtype"],
                golden_doc_ids=list(raw.get("golden_doc_ids", [])),
                snippets=[
                    Snippet(
                        doc_id=s["doc_id"],
                        text=s["text"],
                        begin_offset=s.get("begin_offset"),
                        end_offset=s.get("end_offset"),
                    )
                    for s in raw.get("snippets", [])
                ],
                exact_answers=[list(g) for g in raw.get("exact_answers", [])],
            )
            for raw in payload["questions"]
        ]
    except (KeyError, TypeError) as exc:
        raise MalformedDataset(f"{path}: bad questions file: {exc}") from exc


def store_save(store: DocumentStore, path) -> None:
    """Newline-delimited JSON, one document per line, insertion order."""
    with open(path, "w", encoding="utf-8") as f:
        for doc in store:
            f.write(
                json.dumps(
                    {
                        "doc_id": doc.doc_id,
                        "title": doc.title,
                        "abstract_text": doc.abstract_text,
                    },
                    ensure_ascii=False,
                )
            )
            f.write("\n")


def store_load(path) -> DocumentStore:
    store = DocumentStore()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                doc = AbstractDoc(
                    doc_id=raw["doc_id"],
                    title=raw.get("title", ""),
                    abstract_text=raw.get("abstract_text", ""),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedDataset(f"{path}:{lineno}: bad store line: {exc}") from exc
            if not doc.doc_id or not isinstance(doc.doc_id, str):
                raise MalformedDataset(f"{path}:{lineno}: missing doc_id")
            store.add(doc)
    return store
