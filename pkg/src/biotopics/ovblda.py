"""Online variational Bayes LDA: mini-batch training, inference, perplexity.

Topic-word statistics live in a K x V matrix of positive reals (`lam`).
Per-document inference iterates the coupled updates

    gamma_k  <-  alpha + sum_w n_w * phi_wk
    phi_wk   ~   exp(E[log theta_k]) * exp(E[log beta_kw])

until the mean absolute change of gamma falls below a threshold or the
configured iteration cap is hit. Mini-batch updates blend new sufficient
statistics into `lam` with learning rate rho_t = (offset + t)^(-decay).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp, psi

from .errors import EmptyCorpus, InvalidHyperParams, MalformedDataset
from .vocab import BowVector

# Mean absolute gamma change below which the per-document loop stops.
GAMMA_CONVERGENCE = 1e-3

_MAGIC = b"BTOPICM1"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LdaHyperParams:
    """Tunable model and schedule parameters.

    alpha and eta default to 1/num_topics when not given. offset is the
    learning-rate delay and is not part of the tuned search space.
    """

    num_topics: int = 100
    chunksize: int = 2000
    passes: int = 1
    decay: float = 0.5
    eval_every: int = 10
    iterations: int = 50
    offset: float = 1.0
    alpha: Optional[float] = None
    eta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.alpha is None:
            object.__setattr__(self, "alpha", 1.0 / self.num_topics)
        if self.eta is None:
            object.__setattr__(self, "eta", 1.0 / self.num_topics)
        if self.num_topics < 2:
            raise InvalidHyperParams(f"num_topics must be >= 2, got {self.num_topics}")
        if self.chunksize < 1:
            raise InvalidHyperParams(f"chunksize must be >= 1, got {self.chunksize}")
        if self.passes < 1:
            raise InvalidHyperParams(f"passes must be >= 1, got {self.passes}")
        if not 0.5 <= self.decay <= 1.0:
            raise InvalidHyperParams(f"decay must lie in [0.5, 1.0], got {self.decay}")
        if self.eval_every < 0:
            raise InvalidHyperParams("eval_every must be >= 0")
        if self.iterations < 1:
            raise InvalidHyperParams("iterations must be >= 1")
        if self.offset < 0:
            raise InvalidHyperParams("offset must be >= 0")
        if self.alpha <= 0 or self.eta <= 0:
            raise InvalidHyperParams("alpha and eta must be positive")

    def with_overrides(self, **kwargs) -> "LdaHyperParams":
        return replace(self, **kwargs)


def dirichlet_expectation(x: np.ndarray) -> np.ndarray:
    """E[log p] for p ~ Dirichlet(x), row-wise for matrices."""
    if x.ndim == 1:
        return psi(x) - psi(np.sum(x))
    return psi(x) - psi(np.sum(x, axis=1))[:, np.newaxis]


class TopicModel:
    """Variational topic-word state plus its training schedule."""

    def __init__(self, lam: np.ndarray, hyper: LdaHyperParams,
                 updates_seen: int = 0, docs_seen: int = 0):
        lam = np.asarray(lam, dtype=np.float64)
        if lam.ndim != 2 or lam.shape[0] != hyper.num_topics:
            raise InvalidHyperParams(
                f"lambda shape {lam.shape} does not match num_topics={hyper.num_topics}"
            )
        if not np.all(lam > 0):
            raise InvalidHyperParams("lambda entries must be strictly positive")
        self.lam = lam
        self.hyper = hyper
        self.updates_seen = updates_seen
        self.docs_seen = docs_seen
        self._cache_version = -1
        self._exp_elog_beta: Optional[np.ndarray] = None

    @property
    def num_topics(self) -> int:
        return self.lam.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.lam.shape[1]

    def invalidate_cache(self) -> None:
        """Must be called after mutating `lam` in place."""
        self._cache_version = -1

    def exp_elog_beta(self) -> np.ndarray:
        """exp E[log beta], cached until the next lambda update."""
        if self._cache_version != self.updates_seen or self._exp_elog_beta is None:
            self._exp_elog_beta = np.exp(dirichlet_expectation(self.lam))
            self._cache_version = self.updates_seen
        return self._exp_elog_beta


@dataclass
class TrainLog:
    """Per-run training record; bound entries are diagnostic only."""

    updates: int = 0
    docs_processed: int = 0
    bound_log: List[Tuple[int, float, float]] = field(default_factory=list)


def init_model(hyper: LdaHyperParams, vocab_size: int, seed: int) -> TopicModel:
    """Fresh model with lambda ~ Gamma(100, 1/100) per entry, seeded."""
    if vocab_size < 1:
        raise InvalidHyperParams("vocab_size must be >= 1")
    rng = np.random.default_rng(seed)
    lam = rng.gamma(100.0, 1.0 / 100.0, size=(hyper.num_topics, vocab_size))
    return TopicModel(lam, hyper)


def _doc_arrays(doc: BowVector) -> Tuple[np.ndarray, np.ndarray]:
    if not doc:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.float64)
    ids = np.fromiter((i for i, _ in doc), dtype=np.intp, count=len(doc))
    cts = np.fromiter((c for _, c in doc), dtype=np.float64, count=len(doc))
    return ids, cts


def e_step(
    model: TopicModel,
    doc: BowVector,
    gamma_threshold: float = GAMMA_CONVERGENCE,
) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """Variational inference for one document.

    Returns the converged gamma and the document's contribution to the
    topic-word sufficient statistics as (ids, K x len(ids) counts), where
    contribution[k, j] = n_{ids[j]} * phi_{ids[j], k}.
    """
    K = model.num_topics
    alpha = model.hyper.alpha
    ids, cts = _doc_arrays(doc)
    if ids.size == 0:
        return np.full(K, alpha), (ids, np.zeros((K, 0)))
    if int(ids.max()) >= model.vocab_size:
        raise IndexError(
            f"token id {int(ids.max())} out of range for vocab_size={model.vocab_size}"
        )

    exp_elog_beta_d = model.exp_elog_beta()[:, ids]
    gamma = np.full(K, alpha + cts.sum() / K)
    exp_elog_theta = np.exp(dirichlet_expectation(gamma))
    phinorm = exp_elog_theta @ exp_elog_beta_d + 1e-100

    for _ in range(model.hyper.iterations):
        last_gamma = gamma
        gamma = alpha + exp_elog_theta * ((cts / phinorm) @ exp_elog_beta_d.T)
        exp_elog_theta = np.exp(dirichlet_expectation(gamma))
        phinorm = exp_elog_theta @ exp_elog_beta_d + 1e-100
        if np.mean(np.abs(gamma - last_gamma)) < gamma_threshold:
            break

    contrib = np.outer(exp_elog_theta, cts / phinorm) * exp_elog_beta_d
    return gamma, (ids, contrib)


def m_step(
    model: TopicModel,
    batch_sstats: np.ndarray,
    batch_size: int,
    corpus_size: int,
) -> None:
    """Blend batch sufficient statistics into lambda with rate rho_t."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    h = model.hyper
    rho = learning_rate(h.offset, model.updates_seen, h.decay)
    model.lam = (1.0 - rho) * model.lam + rho * (
        h.eta + (corpus_size / batch_size) * batch_sstats
    )
    model.updates_seen += 1


def learning_rate(offset: float, t: int, decay: float) -> float:
    """rho_t = (offset + t)^(-decay), clamped to at most 1.

    The clamp only matters for offset + t < 1, where the raw power would
    overshoot and could drive lambda entries negative.
    """
    base = float(offset + t)
    if base <= 0.0:
        return 1.0
    return min(1.0, base ** (-decay))


def _chunks(corpus: Sequence[BowVector], size: int):
    for start in range(0, len(corpus), size):
        yield corpus[start : start + size]


def train(model: TopicModel, corpus: Sequence[BowVector],
          shuffle_seed: Optional[int] = None) -> TrainLog:
    """Run `passes` sweeps of mini-batch updates over the corpus.

    Document order is preserved between passes unless shuffle_seed is
    given, in which case each pass shuffles with a seeded generator.
    Bound logging (every `eval_every` updates) never affects the fit.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("train requires a non-empty corpus")
    h = model.hyper
    D = len(corpus)
    log = TrainLog()
    order = np.arange(D)
    shuffle_rng = (
        np.random.default_rng(shuffle_seed) if shuffle_seed is not None else None
    )

    for _ in range(h.passes):
        if shuffle_rng is not None:
            shuffle_rng.shuffle(order)
        swept = [corpus[i] for i in order]
        for chunk in _chunks(swept, h.chunksize):
            sstats = np.zeros((model.num_topics, model.vocab_size))
            gammas = []
            for doc in chunk:
                gamma, (ids, contrib) = e_step(model, doc)
                gammas.append(gamma)
                if ids.size:
                    # ids are unique within a BowVector, so += is exact
                    sstats[:, ids] += contrib
            m_step(model, sstats, len(chunk), D)
            model.docs_seen += len(chunk)
            log.updates += 1
            log.docs_processed += len(chunk)
            if h.eval_every and log.updates % h.eval_every == 0:
                tokens = sum(c for doc in chunk for _, c in doc)
                if tokens > 0:
                    b = variational_bound(model, chunk, np.vstack(gammas))
                    per_word = b / tokens
                    log.bound_log.append(
                        (log.updates, per_word, float(np.exp(-per_word)))
                    )
    return log


def infer(model: TopicModel, doc: BowVector) -> np.ndarray:
    """Document-topic distribution theta = gamma / sum(gamma)."""
    gamma, _ = e_step(model, doc)
    return gamma / gamma.sum()


def variational_bound(
    model: TopicModel,
    docs: Sequence[BowVector],
    gammas: Optional[np.ndarray] = None,
) -> float:
    """Evidence lower bound of `docs` under the model.

    Includes the document terms, the theta prior/entropy terms and the
    topic (beta) prior/entropy terms, with no population rescaling.
    """
    h = model.hyper
    K, V = model.lam.shape
    if gammas is None:
        gammas = np.vstack([e_step(model, doc)[0] for doc in docs])
    elog_beta = dirichlet_expectation(model.lam)
    elog_theta = dirichlet_expectation(gammas)

    score = 0.0
    for d, doc in enumerate(docs):
        ids, cts = _doc_arrays(doc)
        if ids.size == 0:
            continue
        # log-sum-exp over topics of E[log theta_dk] + E[log beta_kw]
        log_phinorm = logsumexp(elog_theta[d][:, np.newaxis] + elog_beta[:, ids], axis=0)
        score += float(cts @ log_phinorm)

    score += float(np.sum((h.alpha - gammas) * elog_theta))
    score += float(np.sum(gammaln(gammas) - gammaln(h.alpha)))
    score += float(np.sum(gammaln(h.alpha * K) - gammaln(np.sum(gammas, axis=1))))

    score += float(np.sum((h.eta - model.lam) * elog_beta))
    score += float(np.sum(gammaln(model.lam) - gammaln(h.eta)))
    score += float(np.sum(gammaln(h.eta * V) - gammaln(np.sum(model.lam, axis=1))))
    return score


def perplexity(model: TopicModel, held_out: Sequence[BowVector]) -> float:
    """exp(-bound / token count) over a held-out set; lower is better."""
    held_out = list(held_out)
    if not held_out:
        raise EmptyCorpus("perplexity requires a non-empty held-out set")
    tokens = sum(c for doc in held_out for _, c in doc)
    if tokens <= 0:
        raise EmptyCorpus("held-out set contains no tokens")
    return float(np.exp(-variational_bound(model, held_out) / tokens))


def save_model(model: TopicModel, path) -> None:
    """Binary dump (header + row-major float64 lambda) plus JSON sidecar."""
    h = model.hyper
    header = _MAGIC + struct.pack(
        "<IIIQQ",
        _FORMAT_VERSION,
        model.num_topics,
        model.vocab_size,
        model.updates_seen,
        model.docs_seen,
    )
    header += struct.pack(
        "<9d",
        float(h.num_topics), float(h.chunksize), float(h.passes), h.decay,
        float(h.eval_every), float(h.iterations), h.offset, h.alpha, h.eta,
    )
    path = str(path)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(model.lam, dtype="<f8").tobytes())
    sidecar = {
        "format_version": _FORMAT_VERSION,
        "num_topics": model.num_topics,
        "vocab_size": model.vocab_size,
        "updates_seen": model.updates_seen,
        "docs_seen": model.docs_seen,
        "hyper": {
            "num_topics": h.num_topics, "chunksize": h.chunksize,
            "passes": h.passes, "decay": h.decay, "eval_every": h.eval_every,
            "iterations": h.iterations, "offset": h.offset,
            "alpha": h.alpha, "eta": h.eta,
        },
    }
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path) -> TopicModel:
    with open(str(path), "rb") as f:
        blob = f.read()
    if blob[:8] != _MAGIC:
        raise MalformedDataset(f"{path}: not a topic model file")
    version, K, V, updates_seen, docs_seen = struct.unpack_from("<IIIQQ", blob, 8)
    if version != _FORMAT_VERSION:
        raise MalformedDataset(f"{path}: unsupported model format version {version}")
    off = 8 + struct.calcsize("<IIIQQ")
    vals = struct.unpack_from("<9d", blob, off)
    off += struct.calcsize("<9d")
    hyper = LdaHyperParams(
        num_topics=int(vals[0]), chunksize=int(vals[1]), passes=int(vals[2]),
        decay=vals[3], eval_every=int(vals[4]), iterations=int(vals[5]),
        offset=vals[6], alpha=vals[7], eta=vals[8],
    )
    expected = K * V * 8
    data = blob[off : off + expected]
    if len(data) != expected:
        raise MalformedDataset(f"{path}: truncated lambda payload")
    lam = np.frombuffer(data, dtype="<f8").reshape(K, V).copy()
    return TopicModel(lam, hyper, updates_seen=updates_seen, docs_seen=docs_seen)
