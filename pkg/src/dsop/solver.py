"""Route construction and improvement under the chance constraint.

The local search anneals over feasible paths: each iteration perturbs the
current path (random exchange of two interior vertices), shrinks it while it
is infeasible or a stagnation-driven coin fires, greedily re-inserts vertices
ranked by an insertion metric, and accepts the result with a simulated
annealing rule on the reward change.  A depth-first branch-and-bound provides
exact solutions (with respect to the chosen estimator) for small instances.

Both solvers score paths through a PathEvaluator, which wraps either the
conservative matrix engine or the sampling engine behind one interface and
keeps the incremental state (prefix distributions, pre-drawn walks) that makes
candidate-insertion sweeps cheap.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import NoFeasibleSolution, SolverTimeout
from .model import (
    Estimator,
    Instance,
    Path,
    SearchConfig,
    Solution,
    SolveRequest,
    VertexId,
)
from .probability import (
    ProbabilityEstimate,
    TransitionMatrixStore,
    WalkSampler,
    build_range_grid,
    initial_arrival_row,
)

# Fixed stream labels so one rng_seed reproducibly fans out into independent
# generators for solver decisions and for the sampling estimator.
_SOLVER_STREAM = 2
_SAMPLER_STREAM = 3


def solver_rng(rng_seed: int) -> np.random.Generator:
    """Decision stream (metric choices, exchanges, removal and acceptance coins)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(rng_seed), _SOLVER_STREAM])))


def derive_sampler_seed(rng_seed: int) -> int:
    """Seed handed to the sampling engine by solvers configured with rng_seed."""
    ss = np.random.SeedSequence([int(rng_seed), _SAMPLER_STREAM])
    return int(ss.generate_state(1, np.uint64)[0])


class InsertionMetric(enum.Enum):
    """Ranking rules for candidate insertions.

    Each rule trades the reward gained against the completion-probability lost
    (the loss is clamped at zero, so an insertion that helps the probability
    counts as lossless).
    """

    REWARD_PER_LOSS = "reward-per-loss"
    INVERSE_LOSS = "inverse-loss"
    REWARD_ONLY = "reward"
    REWARD_SQUARED_PER_LOSS = "reward-squared-per-loss"
    REWARD_PER_SQRT_LOSS = "reward-per-sqrt-loss"

    def score(self, delta_reward: float, probability_loss: float) -> float:
        dp = probability_loss
        if self is InsertionMetric.REWARD_PER_LOSS:
            return delta_reward / (1.0 + dp)
        if self is InsertionMetric.INVERSE_LOSS:
            return 1.0 / (1.0 + dp)
        if self is InsertionMetric.REWARD_ONLY:
            return delta_reward
        if self is InsertionMetric.REWARD_SQUARED_PER_LOSS:
            return delta_reward * delta_reward / (1.0 + dp)
        return delta_reward / math.sqrt(1.0 + dp)


DEFAULT_METRIC = InsertionMetric.REWARD_PER_LOSS
_ALL_METRICS = tuple(InsertionMetric)


@dataclass(frozen=True)
class InsertionEvaluation:
    """Outcome of trying one vertex at one position: reward gained, probability lost."""

    delta_reward: float
    probability_loss: float
    scores: dict

    def score(self, metric: InsertionMetric) -> float:
        return self.scores[metric]


# ---------------------------------------------------------------------------
# Path evaluators
# ---------------------------------------------------------------------------

class MatrixPathEvaluator:
    """Scores paths with the conservative matrix engine.

    Keeps per-edge transition operators cached on one global grid and sweeps
    candidate insertions with prefix distributions and suffix functionals, so
    one candidate costs two operator applications instead of a full product.
    """

    kind = Estimator.MATRIX

    def __init__(self, instance: Instance, request: SolveRequest, config: SearchConfig, probes: int = 3):
        self.instance = instance
        self.request = request
        self.threshold = request.threshold
        self.grid = build_range_grid(request, instance, config.range_count)
        self.store = TransitionMatrixStore(instance, self.grid, probes)
        self._values: dict[tuple, float] = {}
        self._sweeps: dict[tuple, dict] = {}

    def completion(self, seq: tuple) -> float:
        value = self._values.get(seq)
        if value is None:
            row = self.initial_state()
            for a, b in zip(seq[:-1], seq[1:]):
                row = self.advance(row, a, b)
            value = float(np.clip(row[: self.grid.count].sum(), 0.0, 1.0))
            if len(self._values) > 100_000:
                self._values.clear()
            self._values[seq] = value
        return value

    def estimate(self, seq: tuple) -> ProbabilityEstimate:
        return ProbabilityEstimate(value=self.completion(seq), method=Estimator.MATRIX)

    # incremental state for branch-and-bound: the arrival distribution row
    def initial_state(self) -> np.ndarray:
        return initial_arrival_row(self.grid, self.request.start_time)

    def advance(self, state: np.ndarray, a: VertexId, b: VertexId) -> np.ndarray:
        return self.store.operator(a, b).propagate_row(state)

    def value_of_state(self, state: np.ndarray) -> float:
        return float(np.clip(state[: self.grid.count].sum(), 0.0, 1.0))

    def insertion_values(self, seq: tuple, candidates) -> dict:
        """Completion probability of inserting each candidate at each position.

        Returns {(vertex, position): value} for every structurally valid
        insertion (both replacement edges must exist).
        """
        memo_key = (seq, tuple(candidates))
        memo = self._sweeps.get(memo_key)
        if memo is not None:
            return dict(memo)
        inst = self.instance
        m = len(seq)
        n_grid = self.grid.count
        rows = [self.initial_state()]
        for i in range(1, m - 1):
            rows.append(self.advance(rows[i - 1], seq[i - 1], seq[i]))
        tails = [None] * m
        tail = np.concatenate([np.ones(n_grid), [0.0]])
        tails[m - 1] = tail
        for p in range(m - 2, 0, -1):
            tail = self.store.operator(seq[p], seq[p + 1]).propagate_col(tail)
            tails[p] = tail

        out: dict = {}
        for pos in range(1, m):
            a, b = seq[pos - 1], seq[pos]
            rho = rows[pos - 1]
            tv = tails[pos]
            for v in candidates:
                if not (inst.has_edge(a, v) and inst.has_edge(v, b)):
                    continue
                mid = self.store.operator(a, v).propagate_row(rho)
                col = self.store.operator(v, b).propagate_col(tv)
                out[(v, pos)] = float(np.clip(mid @ col, 0.0, 1.0))
        if len(self._sweeps) > 2048:
            self._sweeps.clear()
        self._sweeps[memo_key] = out
        return dict(out)


class SamplingPathEvaluator:
    """Scores paths with the Monte Carlo engine on pre-drawn per-edge samples.

    Because every (walk, edge, band) travel time is fixed by the seed, a
    candidate-insertion sweep replays exactly the draws the from-scratch
    estimate of the edited path would use, so search decisions and later
    re-evaluations agree bit for bit.
    """

    kind = Estimator.SAMPLING

    def __init__(self, instance: Instance, request: SolveRequest, config: SearchConfig):
        self.instance = instance
        self.request = request
        self.threshold = request.threshold
        self.n = config.sample_count
        self.seed = derive_sampler_seed(config.rng_seed)
        self.sampler = WalkSampler(instance, self.n, self.seed)
        self._values: dict[tuple, float] = {}
        self._arrivals: dict[tuple, np.ndarray] = {}
        self._sweeps: dict[tuple, dict] = {}

    def _arrival_matrix(self, seq: tuple) -> np.ndarray:
        arr = self._arrivals.get(seq)
        if arr is None:
            arr = self.sampler.arrivals(seq, self.request.start_time)
            if len(self._arrivals) > 64:
                self._arrivals.clear()
            self._arrivals[seq] = arr
        return arr

    def completion(self, seq: tuple) -> float:
        value = self._values.get(seq)
        if value is None:
            final = self._arrival_matrix(seq)[:, -1]
            value = int(np.count_nonzero(final <= self.request.deadline)) / self.n
            if len(self._values) > 100_000:
                self._values.clear()
            self._values[seq] = value
        return value

    def estimate(self, seq: tuple) -> ProbabilityEstimate:
        value = self.completion(seq)
        return ProbabilityEstimate(
            value=value,
            method=Estimator.SAMPLING,
            sample_count=self.n,
            success_count=round(value * self.n),
        )

    # incremental state for branch-and-bound: realised arrival times per walk
    def initial_state(self) -> np.ndarray:
        return np.full(self.n, float(self.request.start_time))

    def advance(self, state: np.ndarray, a: VertexId, b: VertexId) -> np.ndarray:
        return self.sampler.step(state, a, b)

    def value_of_state(self, state: np.ndarray) -> float:
        return int(np.count_nonzero(state <= self.request.deadline)) / self.n

    def insertion_values(self, seq: tuple, candidates) -> dict:
        memo_key = (seq, tuple(candidates))
        memo = self._sweeps.get(memo_key)
        if memo is not None:
            return dict(memo)
        inst = self.instance
        m = len(seq)
        arr = self._arrival_matrix(seq)
        deadline = self.request.deadline
        entries = []
        for pos in range(1, m):
            a, b = seq[pos - 1], seq[pos]
            valid = [v for v in candidates if inst.has_edge(a, v) and inst.has_edge(v, b)]
            if valid:
                entries.append((pos, valid))
        if not entries:
            self._sweeps[memo_key] = {}
            return {}

        # one row per candidate insertion, grouped so each leg and each
        # shared suffix edge is a single vectorized advance
        pairs_in, pairs_out, starts = [], [], []
        for pos, valid in entries:
            a, b = seq[pos - 1], seq[pos]
            for v in valid:
                pairs_in.append((a, v))
                pairs_out.append((v, b))
                starts.append(arr[:, pos - 1])
        block = self.sampler.step_many(np.array(starts), pairs_in)
        block = self.sampler.step_many(block, pairs_out)

        # rows are ordered by ascending position, so the rows still needing
        # suffix edge k form a prefix of the block
        rows_through = 0
        cum = []
        it = iter(entries)
        pending = next(it, None)
        for k in range(1, m - 1):
            while pending is not None and pending[0] <= k:
                rows_through += len(pending[1])
                pending = next(it, None)
            cum.append(rows_through)
        for k in range(1, m - 1):
            c = cum[k - 1]
            if c:
                block[:c] = self.sampler.step(block[:c], seq[k], seq[k + 1])

        shares = np.count_nonzero(block <= deadline, axis=1) / self.n
        out: dict = {}
        r = 0
        for pos, valid in entries:
            for v in valid:
                out[(v, pos)] = float(shares[r])
                r += 1
        if len(self._sweeps) > 2048:
            self._sweeps.clear()
        self._sweeps[memo_key] = out
        return dict(out)


PathEvaluator = MatrixPathEvaluator | SamplingPathEvaluator


def make_evaluator(instance: Instance, request: SolveRequest, config: SearchConfig) -> PathEvaluator:
    if config.estimator is Estimator.MATRIX:
        return MatrixPathEvaluator(instance, request, config)
    return SamplingPathEvaluator(instance, request, config)


# ---------------------------------------------------------------------------
# Search phases
# ---------------------------------------------------------------------------

def evaluate_insertion(path: Path, vertex: VertexId, position: int, estimator: PathEvaluator) -> InsertionEvaluation:
    """Reward gain, probability loss and all metric scores for one insertion.

    The loss is ``max(0, before - after)``; an insertion that happens to raise
    the completion probability counts as lossless rather than as a bonus.
    """
    seq = path.sequence
    if not (1 <= position <= len(seq) - 1):
        raise ValueError(f"position must lie in 1..{len(seq) - 1}, got {position}")
    if vertex in seq:
        raise ValueError(f"vertex {vertex} is already on the path")
    inst = estimator.instance
    a, b = seq[position - 1], seq[position]
    if not (inst.has_edge(a, vertex) and inst.has_edge(vertex, b)):
        raise ValueError(f"insertion of {vertex} at {position} needs edges {a}->{vertex} and {vertex}->{b}")
    before = estimator.completion(seq)
    after = estimator.completion(seq[:position] + (vertex,) + seq[position:])
    delta_reward = inst.reward(vertex)
    loss = max(0.0, before - after)
    scores = {metric: metric.score(delta_reward, loss) for metric in _ALL_METRICS}
    return InsertionEvaluation(delta_reward=delta_reward, probability_loss=loss, scores=scores)


def _greedy_insertions(seq: tuple, metric: InsertionMetric, estimator: PathEvaluator) -> tuple:
    """Insert the best feasible candidate repeatedly until none remains.

    Best means highest metric score; ties prefer the lower vertex index, then
    the earlier position.  Feasibility of the edited path is always confirmed
    against the estimator's canonical value before committing.
    """
    inst = estimator.instance
    threshold = estimator.threshold
    while True:
        on_path = set(seq)
        candidates = [v for v in range(inst.vertex_count) if v not in on_path]
        if not candidates:
            return seq
        before = estimator.completion(seq)
        values = estimator.insertion_values(seq, candidates)
        ranked = sorted(
            (
                (-metric.score(inst.reward(v), max(0.0, before - after)), v, pos)
                for (v, pos), after in values.items()
                if after >= threshold
            ),
        )
        committed = False
        for _, v, pos in ranked:
            edited = seq[:pos] + (v,) + seq[pos:]
            if estimator.completion(edited) >= threshold:
                seq = edited
                committed = True
                break
        if not committed:
            return seq


def insertion_phase(path: Path, metric: InsertionMetric, estimator: PathEvaluator) -> Path:
    """Greedy feasible insertions by metric until none fits."""
    return Path(_greedy_insertions(path.sequence, metric, estimator))


def construction_heuristic(
    instance: Instance,
    request: SolveRequest,
    config: SearchConfig,
    metric: InsertionMetric = DEFAULT_METRIC,
    estimator: PathEvaluator | None = None,
) -> Path:
    """Grow a feasible path from bare start-exit by greedy metric-ranked insertion.

    Raises
    ------
    NoFeasibleSolution
        When even the direct start-exit path misses the chance constraint
        (or the direct edge does not exist).
    """
    ctx = estimator if estimator is not None else make_evaluator(instance, request, config)
    base = (instance.start, instance.exit)
    if not instance.has_edge(*base) or ctx.completion(base) < ctx.threshold:
        raise NoFeasibleSolution(
            f"start-exit path fails P(arrival <= {request.deadline}) >= {ctx.threshold}"
        )
    return Path(_greedy_insertions(base, metric, ctx))


def two_opt(path: Path, rng: np.random.Generator) -> Path:
    """Exchange two random interior vertices; identity for fewer than two."""
    seq = list(path.sequence)
    interior = len(seq) - 2
    if interior < 2:
        return path
    i, j = rng.choice(interior, size=2, replace=False)
    a, b = 1 + int(i), 1 + int(j)
    seq[a], seq[b] = seq[b], seq[a]
    return Path(tuple(seq))


def removal_phase(path: Path, z: float, rng: np.random.Generator, estimator: PathEvaluator) -> Path:
    """Shrink the path while infeasible, or while a Z-coin keeps firing.

    Each loop test consumes at most one random draw, and only when the path is
    currently feasible; the loop always stops at bare start-exit.

    Raises
    ------
    NoFeasibleSolution
        When even bare start-exit is infeasible.
    """
    seq = path.sequence
    threshold = estimator.threshold
    while True:
        if estimator.completion(seq) < threshold:
            if len(seq) == 2:
                raise NoFeasibleSolution("start-exit path fails the chance constraint")
            seq = seq[:-2] + seq[-1:]
            continue
        if len(seq) == 2:
            break
        if rng.random() <= z:
            seq = seq[:-2] + seq[-1:]
            continue
        break
    return Path(seq)


def temperature_at(config: SearchConfig, iteration: int) -> float:
    """Annealing temperature after ``iteration`` cooling steps: T0 * cooling^t."""
    return config.initial_temperature * config.cooling**iteration


def sa_accept(delta_reward: float, temperature: float, rng: np.random.Generator) -> bool:
    """Accept improving moves outright, worsening ones with the annealing coin.

    A zero reward change is always accepted (the coin succeeds with
    probability one); the draw happens only for non-improving moves.
    """
    if delta_reward > 0:
        return True
    return rng.random() <= math.exp(delta_reward / temperature)


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------

def local_search(instance: Instance, request: SolveRequest, config: SearchConfig) -> Solution:
    """Annealed local search; always runs exactly config.max_iterations iterations.

    Returns the best feasible path seen, which by construction carries at
    least the construction heuristic's reward.  Fully deterministic for a
    fixed config.rng_seed.
    """
    t_start = time.perf_counter()
    ctx = make_evaluator(instance, request, config)
    rng = solver_rng(config.rng_seed)

    current = construction_heuristic(instance, request, config, DEFAULT_METRIC, ctx)
    best = current
    metric = _ALL_METRICS[int(rng.integers(len(_ALL_METRICS)))]
    stale = 0

    for iteration in range(1, config.max_iterations + 1):
        temperature = temperature_at(config, iteration)
        z = stale / (2.0 * config.max_iter_no_improve)

        candidate = two_opt(current, rng)
        candidate = removal_phase(candidate, z, rng, ctx)
        candidate = insertion_phase(candidate, metric, ctx)

        delta = candidate.total_reward(instance) - current.total_reward(instance)
        if sa_accept(delta, temperature, rng):
            current = candidate

        if current.total_reward(instance) > best.total_reward(instance):
            best = current
            stale = 0
        else:
            stale += 1
            if stale > config.max_iter_no_improve:
                others = [m for m in _ALL_METRICS if m is not metric]
                metric = others[int(rng.integers(len(others)))]
                stale = 0

    estimate = ctx.estimate(best.sequence)
    return Solution(
        path=best,
        reward=best.total_reward(instance),
        completion_probability=estimate.value,
        estimator=ctx.kind,
        runtime_s=time.perf_counter() - t_start,
    )


def branch_and_bound(
    instance: Instance,
    request: SolveRequest,
    config: SearchConfig,
    node_budget: int = 10_000_000,
) -> Solution:
    """Depth-first exact search over simple start-exit paths.

    A partial path is pruned exactly when closing it with the exit edge
    violates the chance constraint under the configured estimator; children
    are explored in descending reward order.  With the matrix estimator the
    result is optimal with respect to that estimator whenever inserting an
    extra visit can never raise the closing probability, which holds for
    metric travel times whose later bands are no faster.  On instances that
    violate that structure (for example broken triangle inequalities) the
    pruning can discard profitable detours.

    Raises
    ------
    NoFeasibleSolution
        When bare start-exit is already infeasible.
    SolverTimeout
        When the node budget runs out; carries the best solution so far.
    """
    t_start = time.perf_counter()
    ctx = make_evaluator(instance, request, config)
    threshold = ctx.threshold
    start, exit_ = instance.start, instance.exit

    def close_value(state, last: VertexId) -> float:
        if not instance.has_edge(last, exit_):
            return -1.0
        return ctx.value_of_state(ctx.advance(state, last, exit_))

    root_state = ctx.initial_state()
    if close_value(root_state, start) < threshold:
        raise NoFeasibleSolution("start-exit path fails the chance constraint")

    order = sorted(
        (v for v in range(instance.vertex_count) if v not in (start, exit_)),
        key=lambda v: (-instance.reward(v), v),
    )
    best_seq = (start, exit_)
    best_reward = Path(best_seq).total_reward(instance)
    nodes = 1  # the root has been tested above

    def timeout() -> SolverTimeout:
        sol = _finish(instance, ctx, best_seq, t_start)
        return SolverTimeout(f"node budget of {node_budget} exhausted", best=sol)

    def visit(seq: tuple, state, visited: set) -> None:
        nonlocal nodes, best_seq, best_reward
        last = seq[-1]
        for v in order:
            if v in visited or not instance.has_edge(last, v):
                continue
            child_state = ctx.advance(state, last, v)
            nodes += 1
            if nodes > node_budget:
                raise timeout()
            if close_value(child_state, v) < threshold:
                continue
            child_seq = seq + (v,)
            reward = Path(child_seq + (exit_,)).total_reward(instance)
            if reward > best_reward:
                best_reward = reward
                best_seq = child_seq + (exit_,)
            visited.add(v)
            visit(child_seq, child_state, visited)
            visited.remove(v)

    visit((start,), root_state, {start})
    return _finish(instance, ctx, best_seq, t_start)


def _finish(instance: Instance, ctx: PathEvaluator, seq: tuple, t_start: float) -> Solution:
    estimate = ctx.estimate(seq)
    return Solution(
        path=Path(seq),
        reward=Path(seq).total_reward(instance),
        completion_probability=estimate.value,
        estimator=ctx.kind,
        runtime_s=time.perf_counter() - t_start,
    )
