"""Completion-probability engines.

Three interchangeable ways to judge P(arrival at exit <= deadline) for a path:

* a conservative matrix method that discretizes arrival time into one global
  grid of equal-width ranges, builds a sub-stochastic transition matrix per
  edge (each entry is a lower bound valid for every arrival time inside the
  source range), and multiplies the matrices along the path.  Its value never
  exceeds the true probability, so feasibility decisions made with it are safe;
* a Monte Carlo sampler that walks the path, picking each edge's travel-time
  band from the realised arrival time at the edge's source;
* an exact enumerator for paths whose edges are all finite (discrete)
  distributions, used as ground truth in tests.

Per-edge transition matrices are band-blocked Toeplitz: all ranges share one
width, so within a travel-time band the conservative entry depends only on the
offset between target and source range.  The store keeps those offset vectors
and applies matrices by convolution; dense matrices are materialised only on
request.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    EnumerationLimitError,
    UnsupportedDistributionError,
)
from .model import (
    DiscreteDist,
    Distribution,
    Estimator,
    GammaDist,
    Instance,
    Path,
    SolveRequest,
    TimeDependentEdge,
    VertexId,
)

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class ProbabilityEstimate:
    """A completion-probability value tagged with the engine that produced it.

    For sampling estimates, ``success_count / sample_count`` equals ``value``
    exactly.
    """

    value: float
    method: Estimator
    sample_count: int | None = None
    success_count: int | None = None


def is_feasible(estimate, epsilon: float) -> bool:
    """True when the estimate meets the chance constraint value >= 1 - epsilon."""
    value = getattr(estimate, "value", estimate)
    return value >= 1.0 - epsilon


# ---------------------------------------------------------------------------
# Range grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RangeGrid:
    """One global discretization of arrival time in [0, horizon).

    Range p covers ``[p*width, (p+1)*width)`` for p in 0..count-1; everything
    at or beyond ``horizon = count*width`` falls into the absorbing overflow
    range with index ``count``.
    """

    width: float
    count: int
    horizon: float

    @property
    def size(self) -> int:
        """Number of states including overflow."""
        return self.count + 1

    def lower(self, p: int) -> float:
        return p * self.width

    def index_of(self, t: float) -> int:
        """Range index containing arrival time t; a boundary belongs to the later range."""
        if t >= self.horizon:
            return self.count
        idx = int(np.floor(t / self.width + _ALIGN_TOL))
        return min(max(idx, 0), self.count)


def build_range_grid(
    request: SolveRequest,
    instance: Instance,
    range_count: int = 100,
    max_refinement: int = 64,
) -> RangeGrid:
    """Build the global grid: width divides the deadline and hits every band boundary.

    Only band boundaries strictly below the deadline matter; later ones lie in
    the overflow region.  When ``deadline / range_count`` misses a boundary the
    count is refined by integer multiples until every boundary is an exact
    multiple of the width, up to ``max_refinement`` times the base count.

    Raises
    ------
    ConfigurationError
        When no refinement within the cap aligns, naming the offending band.
    """
    if range_count < 1:
        raise ConfigurationError("range_count must be at least 1")
    horizon = request.deadline
    boundaries = sorted(
        {b.start for e in instance.edges for b in e.bands if 0.0 < b.start < horizon}
    )
    for m in range(1, max_refinement + 1):
        count = range_count * m
        width = horizon / count
        if all(_aligned(b, width) for b in boundaries):
            return RangeGrid(width=width, count=count, horizon=horizon)
    offender = next(b for b in boundaries if not _aligned(b, horizon / (range_count * max_refinement)))
    for i, e in enumerate(instance.edges):
        for j, band in enumerate(e.bands):
            if band.start == offender:
                raise ConfigurationError(
                    f"edges[{i}].bands[{j}]: start {offender!r} cannot align with any "
                    f"grid of {range_count}..{range_count * max_refinement} ranges over [0, {horizon!r})"
                )
    raise ConfigurationError(f"band boundary {offender!r} cannot align with the grid")


def _aligned(boundary: float, width: float) -> bool:
    ratio = boundary / width
    return abs(ratio - round(ratio)) <= _ALIGN_TOL * max(1.0, abs(ratio))


# ---------------------------------------------------------------------------
# Conservative per-edge transition operators
# ---------------------------------------------------------------------------

def _offset_vector(dist: Distribution, width: float, length: int, probes: int) -> np.ndarray:
    """Conservative probability of advancing exactly d ranges, for d in 0..length-1.

    Each entry is the minimum over the source range of the probability of
    landing in the target range, computed with half-open range semantics:
    the value at the left endpoint, interior probe points, and the left-limit
    at the right endpoint.  For discrete laws the function is piecewise
    constant, so midpoints of every piece are evaluated as well, making the
    minimum exact.
    """
    if isinstance(dist, GammaDist):
        edges = np.arange(length + 1) * width
        best = None
        for alpha in np.linspace(0.0, width, probes + 2):
            cdf = dist.cdf(edges - alpha)
            g = cdf[1:] - cdf[:-1]
            best = g if best is None else np.minimum(best, g)
        return np.maximum(best, 0.0)

    atoms = [t for t, _ in dist.outcomes]
    interior = [width * j / (probes + 1) for j in range(1, probes + 1)]
    out = np.empty(length)
    for d in range(length):
        lo = d * width
        hi = lo + width
        cuts = {0.0, width}
        for x in atoms:
            for c in (lo - x, hi - x):
                if 0.0 < c < width:
                    cuts.add(c)
        ordered = sorted(cuts)
        pts = [0.0] + interior + [
            0.5 * (a + b) for a, b in zip(ordered[:-1], ordered[1:])
        ]
        arr = np.array(pts)
        vals = dist.cdf_left(hi - arr) - dist.cdf_left(lo - arr)
        # left-limit as the source arrival approaches the range's upper bound
        limit = float(dist.cdf(lo) - dist.cdf(lo - width))
        out[d] = max(0.0, min(float(vals.min()), limit))
    return out


def _overflow_column(dist: Distribution, width: float, rows: np.ndarray, count: int) -> np.ndarray:
    """Conservative probability of jumping straight into overflow from each row.

    The jump probability grows with the arrival time, so the minimum over a
    source range sits at its left endpoint.
    """
    gaps = (count - rows) * width
    return np.clip(1.0 - np.asarray(dist.cdf_left(gaps), dtype=float), 0.0, 1.0)


@dataclass
class EdgeOperator:
    """One edge's sub-stochastic transition matrix in band-blocked Toeplitz form.

    ``blocks`` holds ``(row_start, row_end, offset_vector)`` per travel-time
    band; ``ovf_col`` is the overflow column for regular rows.  Overflow is
    absorbing.
    """

    count: int
    blocks: list
    ovf_col: np.ndarray

    def propagate_row(self, rho: np.ndarray) -> np.ndarray:
        """Row-vector product rho @ M."""
        n = self.count
        out = np.zeros(n + 1)
        for r0, r1, vec in self.blocks:
            x = rho[r0:r1]
            if not np.any(x):
                continue
            z = np.convolve(x, vec)
            keep = min(len(z), n - r0)
            out[r0:r0 + keep] += z[:keep]
        out[n] += float(rho[:n] @ self.ovf_col) + rho[n]
        return out

    def propagate_col(self, col: np.ndarray) -> np.ndarray:
        """Column-vector product M @ col."""
        n = self.count
        out = np.empty(n + 1)
        out[:n] = self.ovf_col * col[n]
        rev = col[:n][::-1]
        for r0, r1, vec in self.blocks:
            y = np.convolve(rev, vec)
            ps = np.arange(r0, r1)
            out[ps] += y[n - 1 - ps]
        out[n] = col[n]
        return out

    def dense(self) -> np.ndarray:
        n = self.count
        m = np.zeros((n + 1, n + 1))
        for r0, r1, vec in self.blocks:
            for p in range(r0, r1):
                keep = min(len(vec), n - p)
                m[p, p:p + keep] = vec[:keep]
        m[:n, n] = self.ovf_col
        m[n, n] = 1.0
        return m


def build_edge_operator(edge: TimeDependentEdge, grid: RangeGrid, probes: int = 3) -> EdgeOperator:
    """Build the conservative transition operator for one edge on the grid.

    Each row uses the travel-time band containing the row's range; the grid is
    band-aligned, so bands occupy contiguous row blocks computed in integer
    row space.
    """
    n = grid.count
    row_starts = []
    for j, band in enumerate(edge.bands):
        ratio = band.start / grid.width
        r = round(ratio)
        if abs(ratio - r) > 1e-6 and band.start < grid.horizon:
            raise ConfigurationError(
                f"band start {band.start!r} of edge {edge.source}->{edge.target} "
                f"does not align with grid width {grid.width!r}"
            )
        row_starts.append(min(int(r), n))
    row_starts.append(n)

    blocks = []
    ovf_col = np.zeros(n)
    for j, band in enumerate(edge.bands):
        r0, r1 = row_starts[j], row_starts[j + 1]
        r1 = min(r1, n)
        if r0 >= r1:
            continue
        vec = _offset_vector(band.dist, grid.width, n - r0, probes)
        blocks.append((r0, r1, vec))
        rows = np.arange(r0, r1)
        ovf_col[r0:r1] = _overflow_column(band.dist, grid.width, rows, n)
    return EdgeOperator(count=n, blocks=blocks, ovf_col=ovf_col)


def edge_transition_matrix(edge: TimeDependentEdge, grid: RangeGrid, probes: int = 3) -> np.ndarray:
    """Dense (count+1) x (count+1) conservative transition matrix for one edge.

    Rows and columns 0..count-1 are the regular ranges, index count is the
    absorbing overflow state.  Every row sums to at most 1; entry (p, q) is 0
    whenever range q ends at or before range p starts.
    """
    return build_edge_operator(edge, grid, probes).dense()


class TransitionMatrixStore:
    """Lazily built, cached transition operators for an instance on one grid."""

    def __init__(self, instance: Instance, grid: RangeGrid, probes: int = 3):
        self.instance = instance
        self.grid = grid
        self.probes = probes
        self._ops: dict[tuple[VertexId, VertexId], EdgeOperator] = {}

    def operator(self, source: VertexId, target: VertexId) -> EdgeOperator:
        key = (source, target)
        op = self._ops.get(key)
        if op is None:
            if not self.instance.has_edge(source, target):
                raise ValueError(f"no edge from {source} to {target}: transition matrix unavailable")
            op = build_edge_operator(self.instance.edge(source, target), self.grid, self.probes)
            self._ops[key] = op
        return op

    def dense(self, source: VertexId, target: VertexId) -> np.ndarray:
        return self.operator(source, target).dense()


def initial_arrival_row(grid: RangeGrid, start_time: float) -> np.ndarray:
    """Point-mass arrival distribution over the grid for the departure time."""
    row = np.zeros(grid.size)
    row[grid.index_of(start_time)] = 1.0
    return row


def _as_sequence(path) -> tuple[VertexId, ...]:
    return path.sequence if isinstance(path, Path) else tuple(path)


def matrix_completion_probability(path, request: SolveRequest, grid: RangeGrid, matrices) -> ProbabilityEstimate:
    """Conservative completion probability of a path via the matrix product.

    ``matrices`` is either a TransitionMatrixStore or a mapping from
    ``(source, target)`` to dense matrices.  Missing pairs are reported before
    any computation.  The value is a lower bound on the true probability of
    reaching the exit by the deadline.
    """
    seq = _as_sequence(path)
    pairs = list(zip(seq[:-1], seq[1:]))
    use_store = hasattr(matrices, "operator")
    if use_store:
        missing = [p for p in pairs if not matrices.instance.has_edge(*p)]
    else:
        missing = [p for p in pairs if p not in matrices]
    if missing:
        raise ValueError(f"transition matrices missing for edge pairs {missing}")

    row = initial_arrival_row(grid, request.start_time)
    for pair in pairs:
        if use_store:
            row = matrices.operator(*pair).propagate_row(row)
        else:
            row = row @ matrices[pair]
    value = float(np.clip(row[:grid.count].sum(), 0.0, 1.0))
    return ProbabilityEstimate(value=value, method=Estimator.MATRIX)


# ---------------------------------------------------------------------------
# Prefix-product cache for incremental path edits
# ---------------------------------------------------------------------------

class PrefixProductCache:
    """Arrival distributions for every proper prefix of a path, reused across edits.

    ``rows[i]`` is the arrival distribution at ``path[i]`` for i up to the
    second-last vertex; the exit distribution is formed on demand.  Edits
    recompute only the prefixes at or after the leftmost changed position, and
    the recomputation applies the same operations in the same order as a
    from-scratch build, so the results agree bit for bit.
    """

    def __init__(self, sequence, request: SolveRequest, grid: RangeGrid, store: TransitionMatrixStore):
        self.sequence = list(_as_sequence(sequence))
        if len(self.sequence) < 2:
            raise ValueError("a path needs at least start and exit")
        self.request = request
        self.grid = grid
        self.store = store
        self.rows: list[np.ndarray] = [initial_arrival_row(grid, request.start_time)]
        self._recompute_from(1)

    def _recompute_from(self, first: int) -> None:
        del self.rows[first:]
        for i in range(first, len(self.sequence) - 1):
            op = self.store.operator(self.sequence[i - 1], self.sequence[i])
            self.rows.append(op.propagate_row(self.rows[i - 1]))

    def exit_distribution(self) -> np.ndarray:
        op = self.store.operator(self.sequence[-2], self.sequence[-1])
        return op.propagate_row(self.rows[-1])

    def completion_probability(self) -> float:
        return float(np.clip(self.exit_distribution()[: self.grid.count].sum(), 0.0, 1.0))

    def apply_swap(self, i: int, j: int) -> np.ndarray:
        """Exchange the interior vertices at positions i and j, then return the exit distribution."""
        m = len(self.sequence)
        if not (1 <= i <= j <= m - 2):
            raise ValueError(f"swap positions must be interior: got {i}, {j} for length {m}")
        if i == j:
            return self.exit_distribution()
        self.sequence[i], self.sequence[j] = self.sequence[j], self.sequence[i]
        self._recompute_from(i)
        return self.exit_distribution()

    def apply_remove_second_last(self) -> np.ndarray:
        """Drop the vertex just before the exit, then return the exit distribution."""
        m = len(self.sequence)
        if m < 3:
            raise ValueError("nothing to remove: path is already start-exit only")
        del self.sequence[m - 2]
        del self.rows[m - 2:]
        return self.exit_distribution()

    def apply_insert(self, vertex: VertexId, position: int) -> np.ndarray:
        """Insert a vertex at the given position, then return the exit distribution."""
        m = len(self.sequence)
        if not (1 <= position <= m - 1):
            raise ValueError(f"insert position must lie in 1..{m - 1}, got {position}")
        if vertex in self.sequence:
            raise ValueError(f"vertex {vertex} is already on the path")
        self.sequence.insert(position, vertex)
        self._recompute_from(position)
        return self.exit_distribution()


# ---------------------------------------------------------------------------
# Sampling estimator
# ---------------------------------------------------------------------------

_SAMPLER_EDGE_STREAM = 0x5E


def _edge_band_draws(edge: TimeDependentEdge, n: int, seed: int) -> np.ndarray:
    """Pre-draw n travel-time samples per band of the edge.

    The generator is keyed by (seed, source, target), so draws do not depend
    on the order in which edges are touched, only on the seed and the edge.
    """
    ss = np.random.SeedSequence([_SAMPLER_EDGE_STREAM, int(seed), edge.source, edge.target])
    rng = np.random.Generator(np.random.PCG64(ss))
    return np.stack([band.dist.sample(rng, n) for band in edge.bands])


class WalkSampler:
    """Shared walk simulation for the sampling estimator and the utility estimate.

    For each walk and edge, one travel time is pre-drawn per band; the walk
    consumes the draw of the band selected by its realised arrival time at the
    edge's source.  Walks are independent and the whole simulation is a pure
    function of (seed, path).
    """

    def __init__(self, instance: Instance, n: int, seed: int):
        if n < 1:
            raise ValueError("need at least one walk")
        self.instance = instance
        self.n = n
        self.seed = int(seed)
        self._draws: dict[tuple[VertexId, VertexId], np.ndarray] = {}
        self._band_keys: dict[tuple[VertexId, VertexId], tuple] = {}
        self._cols = np.arange(n)

    def _draws_for(self, source: VertexId, target: VertexId) -> np.ndarray:
        key = (source, target)
        d = self._draws.get(key)
        if d is None:
            d = _edge_band_draws(self.instance.edge(source, target), self.n, self.seed)
            self._draws[key] = d
        return d

    def step(self, t: np.ndarray, source: VertexId, target: VertexId) -> np.ndarray:
        """Advance realised arrival times t across one edge."""
        edge = self.instance.edge(source, target)
        draws = self._draws_for(source, target)
        if len(edge.bands) == 1:
            return t + draws[0]
        bidx = edge.band_index_at(t)
        return t + draws[bidx, self._cols]

    def step_many(self, block: np.ndarray, pairs) -> np.ndarray:
        """Advance row r of ``block`` across ``pairs[r]``, one edge per row.

        Equivalent to calling step per row; rows are grouped by band layout
        so each group needs one band lookup.  Per-walk draws are untouched,
        so results match the per-row form exactly.
        """
        out = np.empty_like(block)
        band_keys = self._band_keys
        groups: dict[tuple, list[int]] = {}
        for r, pair in enumerate(pairs):
            key = band_keys.get(pair)
            if key is None:
                key = tuple(band.start for band in self.instance.edge(*pair).bands)
                band_keys[pair] = key
            groups.setdefault(key, []).append(r)
        for key, rows in groups.items():
            idx = np.array(rows)
            sub = block[idx]
            draws = np.stack([self._draws_for(*pairs[r]) for r in rows])
            if len(key) == 1:
                out[idx] = sub + draws[:, 0, :]
                continue
            rep = self.instance.edge(*pairs[rows[0]])
            bidx = rep.band_index_at(sub)
            out[idx] = sub + draws[np.arange(len(rows))[:, None], bidx, self._cols]
        return out

    def arrivals(self, sequence, start_time: float) -> np.ndarray:
        """(n, len(path)) matrix of realised arrival times at every path vertex."""
        seq = _as_sequence(sequence)
        out = np.empty((self.n, len(seq)))
        t = np.full(self.n, float(start_time))
        out[:, 0] = t
        for k, (a, b) in enumerate(zip(seq[:-1], seq[1:])):
            t = self.step(t, a, b)
            out[:, k + 1] = t
        return out


def _check_path_edges(instance: Instance, seq) -> None:
    missing = [(a, b) for a, b in zip(seq[:-1], seq[1:]) if not instance.has_edge(a, b)]
    if missing:
        raise ValueError(f"path uses missing edges {missing}")


def sampling_completion_probability(
    instance: Instance, path, request: SolveRequest, n: int, seed: int
) -> ProbabilityEstimate:
    """Monte Carlo completion probability: the share of n walks reaching the exit in time.

    Deterministic for a fixed (seed, path, n).
    """
    seq = _as_sequence(path)
    _check_path_edges(instance, seq)
    sampler = WalkSampler(instance, n, seed)
    final = sampler.arrivals(seq, request.start_time)[:, -1]
    successes = int(np.count_nonzero(final <= request.deadline))
    return ProbabilityEstimate(
        value=successes / n,
        method=Estimator.SAMPLING,
        sample_count=n,
        success_count=successes,
    )


def expected_utility(instance: Instance, path, request: SolveRequest, n: int, seed: int) -> float:
    """Sampled expected utility of a path.

    Per vertex the utility is ``p*reward - (1-p)*penalty`` with p the sampled
    probability of arriving there by the deadline; the sum runs over every
    path vertex, endpoints included, and shares the walks of
    sampling_completion_probability for the same seed.
    """
    seq = _as_sequence(path)
    _check_path_edges(instance, seq)
    sampler = WalkSampler(instance, n, seed)
    arr = sampler.arrivals(seq, request.start_time)
    p = (arr <= request.deadline).mean(axis=0)
    total = 0.0
    for i, v in enumerate(seq):
        total += vertex_utility(float(p[i]), instance.reward(v), instance.penalty(v))
    return total


def vertex_utility(p_on_time: float, reward: float, penalty: float) -> float:
    """Expected utility of one vertex given its on-time arrival probability."""
    return p_on_time * reward - (1.0 - p_on_time) * penalty


# ---------------------------------------------------------------------------
# Exact enumeration (discrete edges only)
# ---------------------------------------------------------------------------

def exact_completion_probability(
    instance: Instance, path, request: SolveRequest, outcome_cap: int = 10_000_000
) -> ProbabilityEstimate:
    """Exact completion probability by enumerating all joint travel-time outcomes.

    Every edge on the path must carry discrete distributions in all bands;
    the time-dependent band is selected from the accumulated arrival time of
    each partial outcome.  Refuses paths whose theoretical outcome count
    exceeds ``outcome_cap``.
    """
    seq = _as_sequence(path)
    _check_path_edges(instance, seq)
    pairs = list(zip(seq[:-1], seq[1:]))

    total = 1
    for a, b in pairs:
        edge = instance.edge(a, b)
        worst = 1
        for j, band in enumerate(edge.bands):
            if not isinstance(band.dist, DiscreteDist):
                raise UnsupportedDistributionError(
                    f"edge {a}->{b} band {j} is not discrete; exact enumeration unavailable"
                )
            worst = max(worst, len(band.dist.outcomes))
        total *= worst
        if total > outcome_cap:
            raise EnumerationLimitError(
                f"enumeration would visit up to {total} outcomes, over the cap of {outcome_cap}"
            )

    states: dict[float, float] = {float(request.start_time): 1.0}
    for a, b in pairs:
        edge = instance.edge(a, b)
        nxt: dict[float, float] = {}
        for t, pr in states.items():
            dist = edge.band_at(t)
            for x, px in dist.outcomes:
                key = t + x
                nxt[key] = nxt.get(key, 0.0) + pr * px
        states = nxt

    value = sum(pr for t, pr in states.items() if t <= request.deadline)
    return ProbabilityEstimate(value=float(min(value, 1.0)), method=Estimator.EXACT)
