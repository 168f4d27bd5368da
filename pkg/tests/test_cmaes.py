import itertools
import math

import numpy as np
import pytest

from biotopics.cmaes import (
    CmaesState,
    EvalArchive,
    SearchSpace,
    ParamSpec,
    ask,
    bipop_minimize,
    decode,
    decode_values,
    default_pop_size,
    default_search_space,
    encode,
    estimate_importance,
    optimize,
    run_terminated,
    tell,
)
from biotopics.errors import InsufficientData


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_ask_count_and_box():
    state = CmaesState(4, np.full(4, 0.5), 0.8, pop_size=8, bounded=True)
    xs = ask(state, np.random.default_rng(0))
    assert len(xs) == 8
    for x in xs:
        assert np.all(x >= 0.0) and np.all(x <= 1.0)


def test_ask_identity_cov_matches_direct_draws():
    n = 3
    state = CmaesState(n, np.zeros(n), 0.5, pop_size=5)
    xs = ask(state, np.random.default_rng(99))
    rng = np.random.default_rng(99)
    for x in xs:
        z = rng.standard_normal(n)
        assert np.allclose(x, 0.5 * z)


def test_ask_empirical_covariance():
    state = CmaesState(2, np.zeros(2), 1.0, pop_size=10, bounded=False)
    state.C = np.diag([1.0, 4.0])
    state._eig = None
    rng = np.random.default_rng(randomize := 7)
    draws = []
    while len(draws) < 100_000:
        draws.extend(ask(state, rng))
    sample = np.array(draws[:100_000])
    cov = np.cov(sample.T)
    assert cov[0, 0] == pytest.approx(1.0, rel=0.05)
    assert cov[1, 1] == pytest.approx(4.0, rel=0.05)
    assert abs(cov[0, 1]) < 0.05 * math.sqrt(1.0 * 4.0)


# ---------------------------------------------------------------------------
# update
# ---------------------------------------------------------------------------

def test_tell_equal_fitness_moves_mean_to_weighted_average():
    n = 2
    state = CmaesState(n, np.zeros(n), 1.0, pop_size=4)
    cands = [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
             np.array([-1.0, 0.0]), np.array([0.0, -1.0])]
    tell(state, cands, [3.0, 3.0, 3.0, 3.0])
    w = state.weights
    expected = w[0] * cands[0] + w[1] * cands[1]
    assert np.allclose(state.mean, expected)


def test_tell_single_parent_moves_mean_to_best():
    state = CmaesState(2, np.zeros(2), 1.0, pop_size=2)  # mu = 1
    best = np.array([0.9, 0.0])
    tell(state, [np.array([0.1, 0.5]), best], [0.5, 0.01])
    assert np.allclose(state.mean, best)
    assert state.mean[0] > 0.0


def test_tell_nonfinite_fitness_ranks_worst():
    state = CmaesState(2, np.zeros(2), 1.0, pop_size=4)
    cands = [np.array([9.0, 9.0]), np.array([0.1, 0.0]),
             np.array([0.2, 0.0]), np.array([0.3, 0.0])]
    tell(state, cands, [float("nan"), 1.0, 2.0, 3.0])
    assert state.best_f == 1.0
    assert np.allclose(state.best_x, [0.1, 0.0])


def test_tell_keeps_covariance_symmetric():
    rng = np.random.default_rng(5)
    state = CmaesState(4, np.zeros(4), 0.5, pop_size=8)
    for _ in range(60):
        xs = ask(state, rng)
        fits = [float(np.sum(x**2)) for x in xs]
        tell(state, xs, fits)
        assert np.max(np.abs(state.C - state.C.T)) < 1e-12
        assert state.sigma > 0
        vals = np.linalg.eigvalsh(state.C)
        assert np.all(vals > 0)


def test_sphere_fitness_of_mean_decreases():
    rng = np.random.default_rng(17)
    n = 5
    state = CmaesState(n, np.ones(n), 0.5)
    start = float(np.sum(state.mean**2))
    for _ in range(50):
        xs = ask(state, rng)
        tell(state, xs, [float(np.sum(x**2)) for x in xs])
    end = float(np.sum(state.mean**2))
    assert end < start / 100


# ---------------------------------------------------------------------------
# termination
# ---------------------------------------------------------------------------

def test_run_terminated_fresh_state():
    state = CmaesState(3, np.zeros(3), 0.3)
    assert run_terminated(state, []) is None


def test_run_terminated_tolx():
    state = CmaesState(3, np.zeros(3), 0.3)
    state.sigma = 1e-16
    assert run_terminated(state, [1.0]) == "tolx"


def test_run_terminated_condition():
    state = CmaesState(2, np.zeros(2), 0.3)
    state.C = np.diag([1e15, 1.0])
    state._eig = None
    assert run_terminated(state, [1.0]) == "condition_cov"


def test_run_terminated_tolfun():
    state = CmaesState(2, np.zeros(2), 0.3, pop_size=6)
    window = 10 + int(math.ceil(30 * 2 / 6))
    assert run_terminated(state, [5.0] * window) == "tolfun"


# ---------------------------------------------------------------------------
# decode / encode
# ---------------------------------------------------------------------------

def test_decode_boundaries():
    space = default_search_space()
    lo = decode(np.zeros(6), space)
    hi = decode(np.ones(6), space)
    assert lo.num_topics == 20 and hi.num_topics == 2000
    assert lo.decay == 0.5 and hi.decay == 1.0


def test_decode_midpoint():
    space = default_search_space()
    mid = decode(np.full(6, 0.5), space)
    assert mid.decay == pytest.approx(0.75)
    assert mid.passes == 6  # round(5.5) half away from zero


def test_decode_monotone_per_dimension():
    space = default_search_space()
    grid = np.linspace(0, 1, 101)
    for d in range(6):
        vals = []
        for p in grid:
            point = np.full(6, 0.5)
            point[d] = p
            vals.append(decode_values(point, space)[space.names[d]])
        assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_decode_surjective_on_integer_grid():
    space = SearchSpace(dims=(ParamSpec("passes", "integer", 1, 10),))
    reached = {decode_values([p], space)["passes"] for p in np.linspace(0, 1, 1001)}
    assert reached == set(range(1, 11))


def test_table_codec_roundtrip():
    space = default_search_space()
    target = {
        "num_topics": 1241, "chunksize": 2877, "passes": 5,
        "decay": 0.5, "eval_every": 10, "iterations": 188,
    }
    point = encode(target, space)
    assert np.all(point >= 0) and np.all(point <= 1)
    decoded = decode(point, space)
    assert decoded.num_topics == 1241
    assert decoded.chunksize == 2877
    assert decoded.passes == 5
    assert decoded.decay == 0.5
    assert decoded.eval_every == 10
    assert decoded.iterations == 188


# ---------------------------------------------------------------------------
# optimize / bipop
# ---------------------------------------------------------------------------

def _unit_sphere(target):
    def f(u):
        return float(np.sum((np.asarray(u) - target) ** 2))
    return f


def test_optimize_degenerate_budget_returns_center():
    space = default_search_space()
    result = optimize(_unit_sphere(np.full(6, 0.3)), space, budget=3, seed=0)
    center = decode(np.full(6, 0.5), space)
    assert result.best_params == center
    assert len(result.archive) <= 3


def test_optimize_archives_every_evaluation():
    space = default_search_space()
    result = optimize(_unit_sphere(np.full(6, 0.3)), space, budget=60, seed=1)
    assert len(result.archive) == 60
    best = result.archive.best()
    assert best.fitness == result.best_fitness


def test_optimize_deterministic():
    space = default_search_space()
    r1 = optimize(_unit_sphere(np.full(6, 0.42)), space, budget=150, seed=7)
    r2 = optimize(_unit_sphere(np.full(6, 0.42)), space, budget=150, seed=7)
    assert r1.best_fitness == r2.best_fitness
    assert len(r1.archive) == len(r2.archive)
    for a, b in zip(r1.archive.records, r2.archive.records):
        assert np.array_equal(a.point, b.point)
        assert a.fitness == b.fitness


def test_bipop_restart_regimes_alternate():
    # a deceptive objective that keeps runs short forces restarts
    def f(u):
        return float(np.round(np.sum(u)))  # piecewise constant: tolfun fires

    result = bipop_minimize(f, 3, budget=3000, seed=3)
    regimes = [r.regime for r in result.restart_log]
    assert regimes[0] == "first"
    assert "large" in regimes and "small" in regimes
    lam_def = default_pop_size(3)
    larges = [r.pop_size for r in result.restart_log if r.regime == "large"]
    assert larges[:2] == [2 * lam_def, 4 * lam_def][: len(larges[:2])]
    assert result.evals <= 3000


def test_minimizing_adapter_equals_maximizing_directly():
    # the tuning adapter returns (1 - quality); its argmin must agree with
    # the exhaustive argmax of quality on a small integer grid
    space = SearchSpace(
        dims=(
            ParamSpec("passes", "integer", 1, 10),
            ParamSpec("eval_every", "integer", 1, 10),
        )
    )

    def quality(passes, eval_every):
        return 1.0 - ((passes - 7) ** 2 + (eval_every - 3) ** 2) / 200.0

    def adapter(u):
        vals = decode_values(u, space)
        return 1.0 - quality(vals["passes"], vals["eval_every"])

    result = optimize(adapter, space, budget=400, seed=5)
    grid_best = max(
        itertools.product(range(1, 11), repeat=2), key=lambda pe: quality(*pe)
    )
    assert (result.best_params.passes, result.best_params.eval_every) == grid_best


# ---------------------------------------------------------------------------
# importance
# ---------------------------------------------------------------------------

def _archive_from(points, fits, names):
    space = default_search_space()
    archive = EvalArchive(names)
    for p, f in zip(points, fits):
        archive.append(np.asarray(p), decode(np.asarray(p), space), f)
    return archive


def test_importance_requires_enough_records():
    archive = EvalArchive(default_search_space().names)
    with pytest.raises(InsufficientData):
        estimate_importance(archive)


def test_importance_constant_fitness_uniform():
    rng = np.random.default_rng(0)
    points = rng.uniform(size=(40, 6))
    archive = _archive_from(points, [2.5] * 40, default_search_space().names)
    imp = estimate_importance(archive)
    assert all(v == pytest.approx(1 / 6) for v in imp.values())


def test_importance_identifies_dominant_dimension():
    rng = np.random.default_rng(1)
    points = rng.uniform(size=(200, 6))
    fits = (points[:, 0] - 0.5) ** 2
    archive = _archive_from(points, fits.tolist(), default_search_space().names)
    imp = estimate_importance(archive)
    assert imp["num_topics"] > max(v for k, v in imp.items() if k != "num_topics")
    assert sum(imp.values()) == pytest.approx(1.0, abs=1e-9)
