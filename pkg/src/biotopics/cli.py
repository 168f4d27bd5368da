"""Command-line pipeline: ingest -> fetch -> train -> tune -> retrieve -> eval.

Every command resolves its settings as: explicit flag > config file value >
built-in default. Outputs are written atomically (temp file + rename) and
each run leaves a manifest (resolved config, config hash, seed, versions,
wall time) next to its primary output. Errors print as `ERROR <code>: ...`
on stderr; exit status is 0 on success, 1 for validation problems, 2 for
runtime failures.
"""
from __future__ import annotations

import functools
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Dict, List, Optional

import click
import numpy as np
import scipy

from . import __version__, corpus, evalmetrics, ovblda, retrieval, squadgen, textprep
from .cmaes import (
    SearchSpace,
    ParamSpec,
    decode,
    default_search_space,
    estimate_importance,
    optimize,
)
from .errors import (
    BiotopicsError,
    EmptyCorpus,
    EmptyIndex,
    EmptyVocabulary,
    InvalidHyperParams,
    MalformedDataset,
    MalformedLexicon,
    NetworkError,
)
from .ovblda import LdaHyperParams
from .vocab import Vocabulary, build_vocab, corpus_to_bows, to_bow

_VALIDATION_ERRORS = (
    MalformedDataset,
    MalformedLexicon,
    InvalidHyperParams,
    EmptyVocabulary,
    EmptyCorpus,
    EmptyIndex,
    ValueError,
    FileNotFoundError,
)


def _fail(code: str, message: str, status: int) -> None:
    click.echo(f"ERROR {code}: {message}", err=True)
    sys.exit(status)


def cli_command(func):
    """Map exceptions onto the documented exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except _VALIDATION_ERRORS as exc:
            _fail(type(exc).__name__, str(exc), 1)
        except NetworkError as exc:
            _fail("NetworkError", str(exc), 2)
        except BiotopicsError as exc:
            _fail(type(exc).__name__, str(exc), 2)
        except OSError as exc:
            _fail("IoError", str(exc), 2)

    return wrapper


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_output(write_fn, path) -> None:
    """Run write_fn against a temp path, then rename over `path`."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _config_from(ctx) -> Dict:
    return ctx.obj.get("config", {}) if ctx.obj else {}


def resolve(ctx, name: str, flag_value, default=None):
    """flag > config file > default."""
    if flag_value is not None:
        return flag_value
    cfg = _config_from(ctx)
    if name in cfg:
        return cfg[name]
    return default


def write_manifest(output_path, command: str, resolved: Dict, started: float) -> None:
    canonical = json.dumps(resolved, sort_keys=True, ensure_ascii=False)
    manifest = {
        "command": command,
        "config": resolved,
        "config_hash": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "versions": {
            "biotopics": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    atomic_write_text(
        str(output_path) + ".manifest.json",
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _prep_from(ctx, stopwords_flag, stemmer_flag) -> textprep.PipelineConfig:
    stopwords_path = resolve(ctx, "stopwords", stopwords_flag)
    stemmer = resolve(ctx, "stemmer", stemmer_flag, "porter")
    if stopwords_path:
        words = textprep.load_stopwords(stopwords_path)
    else:
        words = textprep.default_stopwords()
    return textprep.PipelineConfig(stopword_list=frozenset(words), stemmer=stemmer)


def _doc_token_stream(store, prep):
    for doc in store:
        text = f"{doc.title} {doc.abstract_text}".strip()
        yield textprep.preprocess(text, prep)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; explicit flags override its values.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Upper bound on internal parallelism (fetch batches).")
@click.pass_context
def main(ctx, config_path, threads):
    """Topic-model retrieval and QA evaluation pipeline."""
    ctx.ensure_object(dict)
    if config_path:
        with open(config_path, encoding="utf-8") as f:
            try:
                ctx.obj["config"] = json.load(f)
            except json.JSONDecodeError as exc:
                _fail("MalformedConfig", f"{config_path}: {exc}", 1)
    ctx.obj["threads"] = max(1, threads)


@main.command("ingest")
@click.option("--dataset", type=click.Path(), default=None, help="BioASQ-style JSON file.")
@click.option("--types", "types_csv", default=None,
              help="Comma-separated question types to keep [default: factoid,list].")
@click.option("--questions-out", type=click.Path(), default=None)
@click.option("--store-out", type=click.Path(), default=None)
@click.pass_context
@cli_command
def cmd_ingest(ctx, dataset, types_csv, questions_out, store_out):
    """Normalize a dataset into a questions file and a document store."""
    started = time.monotonic()
    dataset = resolve(ctx, "dataset", dataset)
    types_csv = resolve(ctx, "types", types_csv, "factoid,list")
    questions_out = resolve(ctx, "questions_out", questions_out)
    store_out = resolve(ctx, "store_out", store_out)
    if not dataset or not questions_out or not store_out:
        raise ValueError("ingest requires --dataset, --questions-out and --store-out")
    allowed = {t.strip() for t in types_csv.split(",") if t.strip()}
    questions, store = corpus.load_bioasq(dataset, allowed)
    atomic_output(lambda p: corpus.questions_save(questions, p), questions_out)
    atomic_output(lambda p: corpus.store_save(store, p), store_out)
    counts = {t: sum(1 for q in questions if q.qtype == t) for t in sorted(allowed)}
    click.echo(f"questions: {len(questions)} {counts}; documents: {len(store)}")
    write_manifest(
        questions_out, "ingest",
        {"dataset": str(dataset), "types": sorted(allowed),
         "questions_out": str(questions_out), "store_out": str(store_out)},
        started,
    )


@main.command("fetch")
@click.option("--store", "store_path", type=click.Path(), default=None,
              help="Store whose missing abstracts should be fetched.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--endpoint", default=None, help="Override the efetch endpoint URL.")
@click.option("--batch-size", type=int, default=None)
@click.option("--delay", "delay_s", type=float, default=None,
              help="Seconds between requests [default: 0.34].")
@click.option("--max-retries", type=int, default=None)
@click.pass_context
@cli_command
def cmd_fetch(ctx, store_path, out_path, endpoint, batch_size, delay_s, max_retries):
    """Fill in missing abstracts from the PubMed efetch service.

    Set the NCBI_API_KEY environment variable to authenticate (optional;
    raises the public rate limit).
    """
    started = time.monotonic()
    store_path = resolve(ctx, "store", store_path)
    out_path = resolve(ctx, "out", out_path)
    if not store_path or not out_path:
        raise ValueError("fetch requires --store and --out")
    endpoint = resolve(ctx, "endpoint", endpoint, corpus.EUTILS_EFETCH_URL)
    batch_size = int(resolve(ctx, "batch_size", batch_size, 200))
    delay_s = float(resolve(ctx, "delay", delay_s, 0.34))
    max_retries = int(resolve(ctx, "max_retries", max_retries, 3))

    store = corpus.store_load(store_path)
    missing_ids = store.missing_text_ids()
    if not missing_ids:
        click.echo("nothing to fetch; store is complete")
    else:
        client = corpus.PubMedFetcher(
            base_url=endpoint, batch_size=batch_size, delay_s=delay_s,
            max_retries=max_retries,
        )
        result = corpus.fetch_abstracts(
            missing_ids, client, max_workers=ctx.obj["threads"]
        )
        for doc in result.docs.values():
            store.add(doc)
        click.echo(
            f"fetched: {len(result.docs)}; still missing: {len(result.missing)}"
        )
        if result.missing:
            click.echo("missing ids: " + ",".join(result.missing))
    atomic_output(lambda p: corpus.store_save(store, p), out_path)
    write_manifest(
        out_path, "fetch",
        {"store": str(store_path), "out": str(out_path), "endpoint": endpoint,
         "batch_size": batch_size, "delay": delay_s, "max_retries": max_retries,
         "api_key_env": corpus.API_KEY_ENV_VAR},
        started,
    )


_HYPER_FLAGS = [
    ("num_topics", int), ("chunksize", int), ("passes", int), ("decay", float),
    ("eval_every", int), ("iterations", int), ("offset", float),
    ("alpha", float), ("eta", float),
]


def _hyper_from(ctx, kwargs) -> LdaHyperParams:
    values = {}
    for name, cast in _HYPER_FLAGS:
        v = resolve(ctx, name, kwargs.get(name))
        if v is not None:
            values[name] = cast(v)
    return LdaHyperParams(**values)


def _hyper_options(func):
    for name, cast in reversed(_HYPER_FLAGS):
        func = click.option(
            f"--{name.replace('_', '-')}", name,
            type=int if cast is int else float, default=None,
        )(func)
    return func


@main.command("train")
@click.option("--store", "store_path", type=click.Path(), default=None)
@click.option("--model-out", type=click.Path(), default=None)
@click.option("--vocab-out", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None, help="Required: model init seed.")
@click.option("--stopwords", "stopwords_flag", type=click.Path(), default=None)
@click.option("--stemmer", "stemmer_flag", type=click.Choice(["porter", "none"]),
              default=None)
@click.option("--min-df", type=int, default=None)
@click.option("--max-df-frac", type=float, default=None)
@_hyper_options
@click.pass_context
@cli_command
def cmd_train(ctx, store_path, model_out, vocab_out, seed, stopwords_flag,
              stemmer_flag, min_df, max_df_frac, **hyper_kwargs):
    """Train a topic model over the stored abstracts."""
    started = time.monotonic()
    store_path = resolve(ctx, "store", store_path)
    model_out = resolve(ctx, "model_out", model_out)
    vocab_out = resolve(ctx, "vocab_out", vocab_out)
    seed = resolve(ctx, "seed", seed)
    if not store_path or not model_out or not vocab_out:
        raise ValueError("train requires --store, --model-out and --vocab-out")
    if seed is None:
        raise ValueError("train requires an explicit --seed")
    min_df = int(resolve(ctx, "min_df", min_df, 1))
    max_df_frac = float(resolve(ctx, "max_df_frac", max_df_frac, 1.0))

    store = corpus.store_load(store_path)
    store.validate_filled()
    prep = _prep_from(ctx, stopwords_flag, stemmer_flag)
    token_docs = list(_doc_token_stream(store, prep))
    vocab = build_vocab(token_docs, min_df=min_df, max_df_frac=max_df_frac)
    bows = list(corpus_to_bows(token_docs, vocab))
    hyper = _hyper_from(ctx, hyper_kwargs)
    model = ovblda.init_model(hyper, len(vocab), int(seed))
    log = ovblda.train(model, bows)
    atomic_output(lambda p: vocab.save(p), vocab_out)

    def save_with_sidecar(tmp):
        ovblda.save_model(model, tmp)
        os.replace(tmp + ".json", str(model_out) + ".json")

    atomic_output(save_with_sidecar, model_out)
    click.echo(
        f"trained K={hyper.num_topics} on {len(bows)} docs, |V|={len(vocab)}, "
        f"{log.updates} updates"
    )
    write_manifest(
        model_out, "train",
        {"store": str(store_path), "model_out": str(model_out),
         "vocab_out": str(vocab_out), "seed": int(seed),
         "min_df": min_df, "max_df_frac": max_df_frac,
         "stemmer": prep.stemmer,
         "hyper": {k: getattr(hyper, k) for k, _ in _HYPER_FLAGS}},
        started,
    )


def _load_model_and_vocab(model_path, vocab_path):
    model = ovblda.load_model(model_path)
    vocab = Vocabulary.load(vocab_path)
    if len(vocab) != model.vocab_size:
        raise MalformedDataset(
            f"model expects |V|={model.vocab_size} but vocabulary has {len(vocab)}"
        )
    return model, vocab


@main.command("retrieve")
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--vocab", "vocab_path", type=click.Path(), default=None)
@click.option("--store", "store_path", type=click.Path(), default=None)
@click.option("--questions", "questions_path", type=click.Path(), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--k", type=int, default=None, help="Documents per question [default: 10].")
@click.option("--doc-filter", type=click.Choice(["all", "golden"]), default=None,
              help="Rank over the whole store or within each question's golden set.")
@click.option("--stopwords", "stopwords_flag", type=click.Path(), default=None)
@click.option("--stemmer", "stemmer_flag", type=click.Choice(["porter", "none"]),
              default=None)
@click.pass_context
@cli_command
def cmd_retrieve(ctx, model_path, vocab_path, store_path, questions_path,
                 out_path, k, doc_filter, stopwords_flag, stemmer_flag):
    """Rank stored documents for each question by topic similarity."""
    started = time.monotonic()
    model_path = resolve(ctx, "model", model_path)
    vocab_path = resolve(ctx, "vocab", vocab_path)
    store_path = resolve(ctx, "store", store_path)
    questions_path = resolve(ctx, "questions", questions_path)
    out_path = resolve(ctx, "out", out_path)
    if not all([model_path, vocab_path, store_path, questions_path, out_path]):
        raise ValueError(
            "retrieve requires --model, --vocab, --store, --questions and --out"
        )
    k = int(resolve(ctx, "k", k, retrieval.DEFAULT_TOP_K))
    doc_filter = resolve(ctx, "doc_filter", doc_filter, "all")

    model, vocab = _load_model_and_vocab(model_path, vocab_path)
    store = corpus.store_load(store_path)
    store.validate_filled()
    questions = corpus.questions_load(questions_path)
    prep = _prep_from(ctx, stopwords_flag, stemmer_flag)
    index = retrieval.build_index(model, store, prep, vocab)

    run: Dict[str, retrieval.RankedList] = {}
    for q in questions:
        theta_q = ovblda.infer(model, to_bow(textprep.preprocess(q.body, prep), vocab))
        target = index if doc_filter == "all" else index.subset(q.golden_doc_ids)
        run[q.id] = (
            retrieval.rank_by_similarity(target, theta_q, k) if len(target) else []
        )
    atomic_output(lambda p: retrieval.save_run(run, p), out_path)
    click.echo(f"ranked {len(run)} questions over {len(index)} documents (k={k})")
    write_manifest(
        out_path, "retrieve",
        {"model": str(model_path), "vocab": str(vocab_path),
         "store": str(store_path), "questions": str(questions_path),
         "out": str(out_path), "k": k, "doc_filter": doc_filter},
        started,
    )


@main.command("eval")
@click.option("--questions", "questions_path", type=click.Path(), default=None)
@click.option("--run", "run_path", type=click.Path(), default=None,
              help="Retrieval run file to score against golden documents.")
@click.option("--predictions", "predictions_path", type=click.Path(), default=None,
              help="Answer predictions file to score against exact answers.")
@click.option("--lexicon", "lexicon_path", type=click.Path(), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Append a one-line summary to this CSV file.")
@click.option("--run-id", default=None, help="Label for the CSV summary row.")
@click.pass_context
@cli_command
def cmd_eval(ctx, questions_path, run_path, predictions_path, lexicon_path,
             out_path, csv_path, run_id):
    """Score retrieval runs and/or answer predictions."""
    started = time.monotonic()
    questions_path = resolve(ctx, "questions", questions_path)
    run_path = resolve(ctx, "run", run_path)
    predictions_path = resolve(ctx, "predictions", predictions_path)
    lexicon_path = resolve(ctx, "lexicon", lexicon_path)
    out_path = resolve(ctx, "out", out_path)
    csv_path = resolve(ctx, "csv", csv_path)
    run_id = resolve(ctx, "run_id", run_id, "run")
    if not questions_path or not out_path:
        raise ValueError("eval requires --questions and --out")
    if not run_path and not predictions_path:
        raise ValueError("eval needs --run and/or --predictions")

    questions = corpus.questions_load(questions_path)
    lex = (
        evalmetrics.load_lexicon(lexicon_path)
        if lexicon_path
        else evalmetrics.SynonymLexicon()
    )
    payload: Dict[str, Dict] = {}
    merged: Dict[str, float] = {}
    if run_path:
        run = retrieval.load_run(run_path)
        report = evalmetrics.evaluate_retrieval(run, questions)
        payload["retrieval"] = {
            "per_question": report.per_question,
            "aggregates": report.aggregates,
            "excluded": report.excluded,
        }
        merged.update({f"retrieval_{k}": v for k, v in report.aggregates.items()})
    if predictions_path:
        with open(predictions_path, encoding="utf-8") as f:
            raw = json.load(f)
        candidate_texts = {
            qid: [c["text"] for c in entry.get("candidates", [])]
            for qid, entry in raw.items()
        }
        report = evalmetrics.evaluate_answers(candidate_texts, questions, lex)
        payload["answers"] = {
            "per_question": report.per_question,
            "aggregates": report.aggregates,
            "excluded": report.excluded,
        }
        merged.update({f"answers_{k}": v for k, v in report.aggregates.items()})

    atomic_write_text(
        out_path, json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    for key in sorted(merged):
        click.echo(f"{key}: {merged[key]:.4f}")
    if csv_path:
        summary = evalmetrics.EvalReport(aggregates=merged)
        summary.append_csv_row(csv_path, run_id)
    write_manifest(
        out_path, "eval",
        {"questions": str(questions_path), "run": run_path,
         "predictions": predictions_path, "lexicon": lexicon_path,
         "out": str(out_path), "csv": csv_path, "run_id": run_id},
        started,
    )


def _space_with_overrides(overrides: Optional[Dict]) -> SearchSpace:
    space = default_search_space()
    if not overrides:
        return space
    by_name = {d.name: d for d in space.dims}
    for name, bounds in overrides.items():
        if name not in by_name:
            raise ValueError(f"unknown search-space parameter {name!r}")
        low, high = float(bounds[0]), float(bounds[1])
        by_name[name] = ParamSpec(name, by_name[name].kind, low, high)
    return SearchSpace(dims=tuple(by_name[d.name] for d in space.dims))


def make_tuning_objective(doc_ids, token_docs, question_tokens, question_goldens,
                          k: int, init_seed: int, space: SearchSpace):
    """(1 - mean F1@k) over golden questions as a unit-cube objective.

    Trains a fresh model per distinct decoded configuration (cached on the
    fitness-relevant integer tuple; eval_every only affects logging and is
    both excluded from the key and forced to 0 during fitness training).
    """
    vocab = build_vocab(token_docs)
    bows = list(corpus_to_bows(token_docs, vocab))
    eligible = [
        (to_bow(toks, vocab), golden)
        for toks, golden in zip(question_tokens, question_goldens)
        if golden
    ]
    if not eligible:
        raise ValueError("tuning requires questions with golden documents")
    cache: Dict[tuple, float] = {}

    def objective(point) -> float:
        params = decode(point, space)
        key = (
            params.num_topics, params.chunksize, params.passes,
            round(params.decay, 12), params.iterations,
        )
        if key in cache:
            return cache[key]
        hyper = params.with_overrides(eval_every=0)
        model = ovblda.init_model(hyper, len(vocab), init_seed)
        ovblda.train(model, bows)
        index = retrieval.index_from_bows(model, doc_ids, bows)
        f1s = []
        for bow_q, golden in eligible:
            theta_q = ovblda.infer(model, bow_q)
            ranked = retrieval.rank_by_similarity(index, theta_q, k)
            _, _, f1 = evalmetrics.prf([d for d, _ in ranked], golden)
            f1s.append(f1)
        fitness = 1.0 - sum(f1s) / len(f1s)
        cache[key] = fitness
        return fitness

    return objective


@main.command("tune")
@click.option("--questions", "questions_path", type=click.Path(), default=None)
@click.option("--store", "store_path", type=click.Path(), default=None)
@click.option("--budget", type=int, default=None, help="Objective evaluations.")
@click.option("--seed", type=int, default=None, help="Required: search + init seed.")
@click.option("--k", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--space", "space_json", default=None,
              help='Range overrides, e.g. {"num_topics": [20, 200]}.')
@click.option("--stopwords", "stopwords_flag", type=click.Path(), default=None)
@click.option("--stemmer", "stemmer_flag", type=click.Choice(["porter", "none"]),
              default=None)
@click.pass_context
@cli_command
def cmd_tune(ctx, questions_path, store_path, budget, seed, k, out_path,
             space_json, stopwords_flag, stemmer_flag):
    """Tune LDA hyperparameters against retrieval F1 with BIPOP CMA-ES."""
    started = time.monotonic()
    questions_path = resolve(ctx, "questions", questions_path)
    store_path = resolve(ctx, "store", store_path)
    out_path = resolve(ctx, "out", out_path)
    budget = resolve(ctx, "budget", budget)
    seed = resolve(ctx, "seed", seed)
    k = int(resolve(ctx, "k", k, retrieval.DEFAULT_TOP_K))
    space_json = resolve(ctx, "space", space_json)
    if not questions_path or not store_path or not out_path:
        raise ValueError("tune requires --questions, --store and --out")
    if seed is None:
        raise ValueError("tune requires an explicit --seed")
    if budget is None:
        raise ValueError("tune requires --budget")
    overrides = json.loads(space_json) if isinstance(space_json, str) else space_json
    space = _space_with_overrides(overrides)

    store = corpus.store_load(store_path)
    store.validate_filled()
    questions = corpus.questions_load(questions_path)
    prep = _prep_from(ctx, stopwords_flag, stemmer_flag)
    token_docs = list(_doc_token_stream(store, prep))
    question_tokens = [textprep.preprocess(q.body, prep) for q in questions]
    question_goldens = [q.golden_doc_ids for q in questions]

    objective = make_tuning_objective(
        store.doc_ids, token_docs, question_tokens, question_goldens,
        k, int(seed), space,
    )
    result = optimize(objective, space, int(budget), int(seed))
    try:
        importance = estimate_importance(result.archive)
    except Exception:
        importance = None

    best = result.best_params
    report = {
        "best": {
            "params": {name: getattr(best, name) for name in space.names},
            "fitness": result.best_fitness,
            "mean_f1": 1.0 - result.best_fitness,
        },
        "budget": int(budget),
        "seed": int(seed),
        "k": k,
        "space": [
            {"name": d.name, "kind": d.kind, "low": d.low, "high": d.high}
            for d in space.dims
        ],
        "importance": importance,
        "generations": [
            {"evals": g.evals_total, "run": g.run_index, "best": g.best,
             "median": g.median}
            for g in result.generation_log
        ],
        "restarts": [
            {"regime": r.regime, "pop_size": r.pop_size, "sigma0": r.sigma0,
             "evals": r.evals, "generations": r.generations,
             "best": r.best_fitness, "reason": r.reason}
            for r in result.restart_log
        ],
        "evaluations": [
            {
                "point": [round(float(x), 17) for x in rec.point],
                "params": {name: getattr(rec.params, name) for name in space.names},
                "fitness": rec.fitness,
            }
            for rec in result.archive.records
        ],
    }
    atomic_write_text(out_path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    click.echo(
        f"best mean F1@{k} = {1.0 - result.best_fitness:.4f} "
        f"({len(result.archive)} evaluations)"
    )
    write_manifest(
        out_path, "tune",
        {"questions": str(questions_path), "store": str(store_path),
         "out": str(out_path), "budget": int(budget), "seed": int(seed),
         "k": k, "space_overrides": overrides},
        started,
    )


@main.command("makesquad")
@click.option("--questions", "questions_path", type=click.Path(), default=None)
@click.option("--store", "store_path", type=click.Path(), default=None)
@click.option("--lexicon", "lexicon_path", type=click.Path(), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--source", type=click.Choice(["abstracts", "snippets"]), default=None,
              help="Use golden documents' abstracts or golden snippets as contexts.")
@click.pass_context
@cli_command
def cmd_makesquad(ctx, questions_path, store_path, lexicon_path, out_path, source):
    """Export span-annotated reader training data (SQuAD-v2 shape)."""
    started = time.monotonic()
    questions_path = resolve(ctx, "questions", questions_path)
    store_path = resolve(ctx, "store", store_path)
    lexicon_path = resolve(ctx, "lexicon", lexicon_path)
    out_path = resolve(ctx, "out", out_path)
    source = resolve(ctx, "source", source, "abstracts")
    if not questions_path or not out_path:
        raise ValueError("makesquad requires --questions and --out")
    if source == "abstracts" and not store_path:
        raise ValueError("makesquad with abstracts needs --store")

    questions = corpus.questions_load(questions_path)
    lex = (
        evalmetrics.load_lexicon(lexicon_path)
        if lexicon_path
        else evalmetrics.SynonymLexicon()
    )
    store = corpus.store_load(store_path) if store_path else None

    records: List[squadgen.SpanRecord] = []
    for q in questions:
        if not q.exact_answers:
            continue
        contexts: List[str] = []
        if source == "snippets":
            contexts = [s.text for s in q.snippets]
        else:
            for doc_id in q.golden_doc_ids:
                doc = store.get(doc_id) if store else None
                if doc and doc.abstract_text:
                    contexts.append(f"{doc.title} {doc.abstract_text}".strip())
        for context in contexts:
            records.append(squadgen.annotate(q, context, lex))
    atomic_output(lambda p: squadgen.export(records, p), out_path)
    answerable = sum(1 for r in records if not r.is_impossible)
    click.echo(
        f"{len(records)} records ({answerable} answerable, "
        f"{len(records) - answerable} impossible)"
    )
    write_manifest(
        out_path, "makesquad",
        {"questions": str(questions_path), "store": store_path,
         "lexicon": lexicon_path, "out": str(out_path), "source": source},
        started,
    )


if __name__ == "__main__":
    main()
