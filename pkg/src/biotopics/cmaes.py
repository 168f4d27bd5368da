"""CMA-ES with BIPOP restarts for tuning LDA hyperparameters.

The optimizer minimizes; callers tuning retrieval quality pass an adapter
that returns (1 - F-measure). Search runs in the unit cube; `decode` maps
unit points onto the named parameter ranges (integers rounded half away
from zero). Restarts alternate between a doubling large-population regime
and randomized small populations, whichever has consumed less budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateCovariance, InsufficientData
from .ovblda import LdaHyperParams

EIGENVALUE_FLOOR = 1e-20
CONDITION_CAP = 1e14
TOLFUN = 1e-12
TOLX_REL = 1e-12


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str  # "integer" | "real"
    low: float
    high: float

    def __post_init__(self) -> None:
        if self.kind not in ("integer", "real"):
            raise ValueError(f"unknown param kind {self.kind!r}")
        if not self.low < self.high:
            raise ValueError(f"{self.name}: low must be < high")


@dataclass(frozen=True)
class SearchSpace:
    dims: Tuple[ParamSpec, ...]

    def __post_init__(self) -> None:
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in search space")

    @property
    def names(self) -> List[str]:
        return [d.name for d in self.dims]

    def __len__(self) -> int:
        return len(self.dims)


def default_search_space() -> SearchSpace:
    """The six tuned LDA parameters and their ranges."""
    return SearchSpace(
        dims=(
            ParamSpec("num_topics", "integer", 20, 2000),
            ParamSpec("chunksize", "integer", 1, 4096),
            ParamSpec("passes", "integer", 1, 10),
            ParamSpec("decay", "real", 0.5, 1.0),
            ParamSpec("eval_every", "integer", 1, 10),
            ParamSpec("iterations", "integer", 5, 200),
        )
    )


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def decode_values(point: Sequence[float], space: SearchSpace) -> Dict[str, float]:
    """Map a unit-cube point onto the space's parameter values."""
    if len(point) != len(space):
        raise ValueError(f"point has {len(point)} dims, space has {len(space)}")
    out: Dict[str, float] = {}
    for p, spec in zip(point, space.dims):
        p = min(1.0, max(0.0, float(p)))
        raw = spec.low + p * (spec.high - spec.low)
        if spec.kind == "integer":
            out[spec.name] = min(int(spec.high), max(int(spec.low), _round_half_away(raw)))
        else:
            out[spec.name] = raw
    return out


def decode(point: Sequence[float], space: SearchSpace) -> LdaHyperParams:
    """Decode a unit point into LDA hyperparameters.

    The space must consist of LdaHyperParams field names (the default
    six-parameter space or a range-overridden variant of it).
    """
    values = decode_values(point, space)
    return LdaHyperParams(**{k: v for k, v in values.items()})


def encode(values: Dict[str, float], space: SearchSpace) -> np.ndarray:
    """Inverse of decode_values onto the unit cube."""
    point = np.empty(len(space))
    for i, spec in enumerate(space.dims):
        v = float(values[spec.name])
        point[i] = (v - spec.low) / (spec.high - spec.low)
    return point


@dataclass
class ArchiveRecord:
    point: np.ndarray
    params: LdaHyperParams
    fitness: float


class EvalArchive:
    """Append-only log of every objective evaluation."""

    def __init__(self, param_names: Sequence[str]):
        self.param_names = list(param_names)
        self.records: List[ArchiveRecord] = []

    def append(self, point: np.ndarray, params: LdaHyperParams, fitness: float) -> None:
        self.records.append(ArchiveRecord(np.array(point, dtype=float), params, fitness))

    def __len__(self) -> int:
        return len(self.records)

    def best(self) -> ArchiveRecord:
        if not self.records:
            raise InsufficientData("archive is empty")
        best = self.records[0]
        for rec in self.records[1:]:
            if rec.fitness < best.fitness:
                best = rec
        return best


class CmaesState:
    """Strategy state for one CMA-ES run (one restart)."""

    def __init__(self, dim: int, mean: np.ndarray, sigma: float,
                 pop_size: Optional[int] = None, bounded: bool = False):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        n = dim
        self.dim = n
        self.mean = np.array(mean, dtype=float)
        self.sigma = float(sigma)
        self.sigma0 = float(sigma)
        self.bounded = bounded
        self.pop_size = pop_size if pop_size else default_pop_size(n)
        if self.pop_size < 2:
            raise ValueError("population size must be >= 2")
        self.mu = self.pop_size // 2

        raw = np.log(self.pop_size / 2 + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = raw / raw.sum()
        self.mu_eff = 1.0 / np.sum(self.weights**2)

        self.c_c = (4 + self.mu_eff / n) / (n + 4 + 2 * self.mu_eff / n)
        self.c_sigma = (self.mu_eff + 2) / (n + self.mu_eff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mu_eff)
        self.c_mu = min(
            1 - self.c1,
            2 * (self.mu_eff - 2 + 1 / self.mu_eff) / ((n + 2) ** 2 + self.mu_eff),
        )
        self.d_sigma = (
            1 + 2 * max(0.0, math.sqrt((self.mu_eff - 1) / (n + 1)) - 1) + self.c_sigma
        )
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

        self.C = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.generation = 0
        self.best_x: Optional[np.ndarray] = None
        self.best_f = math.inf
        self._eig: Optional[Tuple[np.ndarray, np.ndarray]] = None  # (values, basis)

    def _decompose(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._eig is None:
            if not np.all(np.isfinite(self.C)):
                raise DegenerateCovariance("covariance contains non-finite entries")
            try:
                vals, basis = np.linalg.eigh(self.C)
            except np.linalg.LinAlgError as exc:
                raise DegenerateCovariance(str(exc)) from exc
            if not np.all(np.isfinite(vals)):
                raise DegenerateCovariance("non-finite eigenvalues")
            vals = np.maximum(vals, EIGENVALUE_FLOOR)
            self._eig = (vals, basis)
        return self._eig

    def condition_number(self) -> float:
        vals, _ = self._decompose()
        return float(vals.max() / vals.min())


def default_pop_size(dim: int) -> int:
    return 4 + int(math.floor(3 * math.log(dim)))


def _reflect_unit(x: np.ndarray) -> np.ndarray:
    """Fold coordinates into [0, 1] by reflection at the boundaries."""
    y = np.mod(x, 2.0)
    return np.where(y <= 1.0, y, 2.0 - y)


def ask(state: CmaesState, rng: np.random.Generator) -> List[np.ndarray]:
    """Sample pop_size candidates from N(mean, sigma^2 C), box-repaired."""
    vals, basis = state._decompose()
    scale = np.sqrt(vals)
    out = []
    for _ in range(state.pop_size):
        z = rng.standard_normal(state.dim)
        x = state.mean + state.sigma * (basis @ (scale * z))
        if state.bounded:
            x = _reflect_unit(x)
        out.append(x)
    return out


def tell(state: CmaesState, candidates: Sequence[np.ndarray],
         fitnesses: Sequence[float]) -> None:
    """Rank-mu/rank-one CMA-ES update from one evaluated population.

    Non-finite fitnesses are treated as worst-rank; ties keep candidate
    order (stable sort) so the update is deterministic.
    """
    if len(candidates) != len(fitnesses) or len(candidates) != state.pop_size:
        raise ValueError("candidates/fitnesses must match the population size")
    fit = np.asarray(fitnesses, dtype=float)
    fit = np.where(np.isfinite(fit), fit, math.inf)
    order = np.argsort(fit, kind="stable")
    xs = np.asarray(candidates, dtype=float)[order]

    if fit[order[0]] < state.best_f:
        state.best_f = float(fit[order[0]])
        state.best_x = xs[0].copy()

    n, mu = state.dim, state.mu
    x_old = state.mean
    y = (xs[:mu] - x_old) / state.sigma
    y_w = state.weights @ y
    state.mean = x_old + state.sigma * y_w

    vals, basis = state._decompose()
    inv_sqrt = basis @ ((1.0 / np.sqrt(vals))[:, None] * basis.T)
    state.p_sigma = (1 - state.c_sigma) * state.p_sigma + math.sqrt(
        state.c_sigma * (2 - state.c_sigma) * state.mu_eff
    ) * (inv_sqrt @ y_w)

    state.generation += 1
    ps_norm = float(np.linalg.norm(state.p_sigma))
    h_sig = ps_norm / math.sqrt(
        1 - (1 - state.c_sigma) ** (2 * state.generation)
    ) / state.chi_n < 1.4 + 2 / (n + 1)

    state.p_c = (1 - state.c_c) * state.p_c + h_sig * math.sqrt(
        state.c_c * (2 - state.c_c) * state.mu_eff
    ) * y_w

    rank_mu = (y * state.weights[:, None]).T @ y
    state.C = (
        (1 - state.c1 - state.c_mu) * state.C
        + state.c1
        * (np.outer(state.p_c, state.p_c) + (1 - h_sig) * state.c_c * (2 - state.c_c) * state.C)
        + state.c_mu * rank_mu
    )
    state.C = (state.C + state.C.T) / 2.0
    state._eig = None

    state.sigma *= math.exp(
        min(1.0, (state.c_sigma / state.d_sigma) * (ps_norm / state.chi_n - 1))
    )


def run_terminated(state: CmaesState, history: Sequence[float]) -> Optional[str]:
    """Standard stopping predicates for one run; None while healthy.

    `history` is the per-generation best fitness of the current run.
    """
    n, lam = state.dim, state.pop_size
    window = 10 + int(math.ceil(30 * n / lam))
    if len(history) >= window:
        recent = history[-window:]
        if max(recent) - min(recent) < TOLFUN:
            return "tolfun"
    if state.sigma * float(np.max(np.diag(state.C))) < TOLX_REL * state.sigma0:
        return "tolx"
    try:
        if state.condition_number() > CONDITION_CAP:
            return "condition_cov"
    except DegenerateCovariance:
        return "condition_cov"
    stag_window = int(120 + 30 * n / lam)
    if len(history) >= stag_window + 20:
        head = sorted(history[:20])
        tail = sorted(history[-20:])
        if tail[len(tail) // 2] >= head[len(head) // 2]:
            return "stagnation"
    return None


@dataclass
class RunRecord:
    regime: str
    pop_size: int
    sigma0: float
    evals: int
    generations: int
    best_fitness: float
    reason: str


@dataclass
class GenerationRecord:
    evals_total: int
    run_index: int
    best: float
    median: float


@dataclass
class BipopResult:
    best_point: np.ndarray
    best_fitness: float
    evals: int
    restart_log: List[RunRecord] = field(default_factory=list)
    generation_log: List[GenerationRecord] = field(default_factory=list)


def bipop_minimize(
    f: Callable[[np.ndarray], float],
    dim: int,
    budget: int,
    seed,
    sigma0: float = 0.3,
    initial_mean: Optional[np.ndarray] = None,
) -> BipopResult:
    """Minimize `f` over the unit cube under a BIPOP restart schedule.

    The first run starts from the cube center (or `initial_mean`) with the
    default population; later runs restart from uniform random means,
    alternating doubled large populations with randomized small ones.
    Budget exhaustion is normal termination.
    """
    rng = np.random.default_rng(seed)
    lam_def = default_pop_size(dim)
    result = BipopResult(
        best_point=np.full(dim, 0.5) if initial_mean is None else np.array(initial_mean),
        best_fitness=math.inf,
        evals=0,
    )
    budget_large = 0
    budget_small = 0
    large_count = 0
    run_index = 0

    while result.evals + 2 <= budget:
        if run_index == 0:
            regime, lam, s0 = "first", lam_def, sigma0
            mean = result.best_point.copy()
        elif budget_small < budget_large:
            regime = "small"
            lam_large = lam_def * 2**large_count
            u = rng.uniform()
            lam = max(4, int(math.floor(lam_def * (lam_large / (2 * lam_def)) ** (u * u))))
            s0 = sigma0 * 10 ** (-2 * rng.uniform())
            mean = rng.uniform(size=dim)
        else:
            regime = "large"
            large_count += 1
            lam = lam_def * 2**large_count
            s0 = sigma0
            mean = rng.uniform(size=dim)

        lam = min(lam, budget - result.evals)
        if lam < 2:
            break
        state = CmaesState(dim, mean, s0, pop_size=lam, bounded=True)
        history: List[float] = []
        run_evals = 0
        reason = "max_budget"
        while result.evals + lam <= budget:
            try:
                xs = ask(state, rng)
            except DegenerateCovariance:
                reason = "degenerate"
                break
            fits = [float(f(x)) for x in xs]
            result.evals += lam
            run_evals += lam
            tell(state, xs, fits)
            history.append(state.best_f)
            finite = [v for v in fits if math.isfinite(v)]
            result.generation_log.append(
                GenerationRecord(
                    evals_total=result.evals,
                    run_index=run_index,
                    best=min(fits),
                    median=float(np.median(finite)) if finite else math.inf,
                )
            )
            if state.best_f < result.best_fitness:
                result.best_fitness = state.best_f
                result.best_point = state.best_x.copy()
            stop = run_terminated(state, history)
            if stop:
                reason = stop
                break
        result.restart_log.append(
            RunRecord(
                regime=regime,
                pop_size=lam,
                sigma0=s0,
                evals=run_evals,
                generations=state.generation,
                best_fitness=state.best_f,
                reason=reason,
            )
        )
        if regime == "small":
            budget_small += run_evals
        else:
            budget_large += run_evals
        run_index += 1
        if run_evals == 0:
            break
    return result


@dataclass
class OptimizeResult:
    best_params: LdaHyperParams
    best_fitness: float
    archive: EvalArchive
    restart_log: List[RunRecord]
    generation_log: List[GenerationRecord]


def optimize(
    objective: Callable[[np.ndarray], float],
    space: SearchSpace,
    budget: int,
    seed,
    sigma0: float = 0.3,
) -> OptimizeResult:
    """Tune the search-space parameters against a unit-cube objective.

    Every evaluation is archived; the reported optimum is the archive
    best. The cube center is always evaluated first, so even a budget
    below one generation returns the initial mean's decoded parameters.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    archive = EvalArchive(space.names)

    def wrapped(u: np.ndarray) -> float:
        fit = float(objective(u))
        archive.append(u, decode(u, space), fit)
        return fit

    center = np.full(len(space), 0.5)
    wrapped(center)
    bipop = bipop_minimize(
        wrapped, len(space), budget - 1, seed, sigma0=sigma0, initial_mean=center
    )
    best = archive.best()
    return OptimizeResult(
        best_params=decode(best.point, space),
        best_fitness=best.fitness,
        archive=archive,
        restart_log=bipop.restart_log,
        generation_log=bipop.generation_log,
    )


def estimate_importance(archive: EvalArchive, bins: int = 10) -> Dict[str, float]:
    """Share of fitness variance explained per parameter, summing to 1.

    Uses a one-dimensional binned fit of fitness against each unit
    coordinate; constant fitness falls back to uniform shares.
    """
    if len(archive) < 20:
        raise InsufficientData(
            f"importance needs >= 20 records, archive has {len(archive)}"
        )
    points = np.vstack([r.point for r in archive.records])
    fits = np.array([r.fitness for r in archive.records])
    finite = np.isfinite(fits)
    points, fits = points[finite], fits[finite]
    if len(fits) < 20:
        raise InsufficientData("fewer than 20 finite-fitness records")

    names = archive.param_names
    sst = float(np.sum((fits - fits.mean()) ** 2))
    if sst == 0.0:
        return {name: 1.0 / len(names) for name in names}

    scores = np.zeros(len(names))
    for d in range(len(names)):
        idx = np.clip((points[:, d] * bins).astype(int), 0, bins - 1)
        sse_within = 0.0
        for b in range(bins):
            group = fits[idx == b]
            if group.size:
                sse_within += float(np.sum((group - group.mean()) ** 2))
        scores[d] = max(0.0, 1.0 - sse_within / sst)
    total = scores.sum()
    if total == 0.0:
        return {name: 1.0 / len(names) for name in names}
    return {name: float(s / total) for name, s in zip(names, scores)}
