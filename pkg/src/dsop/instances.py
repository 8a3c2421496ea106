"""Seeded instance generators.

Three families:

* ``generate_synthetic``: planar points with gamma travel times whose means
  equal the Euclidean distances, banded so travel laws drift with arrival
  time.  All knobs sit in GeneratorConfig and every instance is a pure
  function of the seed.
* ``generate_hard_variant``: per-edge scale parameters and an inflated-mean
  edge subset, verified to break the triangle inequality on means, which
  leaves more room between greedy construction and local search.
* ``generate_oracle_instance``: small all-discrete instances for ground-truth
  testing.  Their structure (metric integer base distances, one shared noise
  pattern, a single global band boundary with a common non-negative shift)
  makes "visit more, arrive later" hold realization-wise, so pruned search and
  exhaustive enumeration provably agree on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GenerationError
from .model import (
    Band,
    DiscreteDist,
    GammaDist,
    Instance,
    TimeDependentEdge,
    Vertex,
)

_GENERATOR_STREAM = 1


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), _GENERATOR_STREAM])))


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the synthetic generators; every field has a sensible default.

    ``theta`` is the gamma scale setting: a fixed value in [1, 4], or ``None``
    to draw one per edge uniformly from [theta_low, theta_high].  Shapes are
    clamped into [shape_min, shape_max] and the scale is then re-fit so each
    edge's base mean equals the point distance exactly.
    """

    vertex_count: int = 32
    theta: float | None = 2.0
    theta_low: float = 1.0
    theta_high: float = 4.0
    shape_min: float = 2.0
    shape_max: float = 9.0
    reward_low: int = 1
    reward_high: int = 100
    penalty_low: int = 1
    penalty_high: int = 50
    band_count: int = 3
    band_spacing: float = 30.0
    shape_drift: float = 0.1
    mean_drift: float = 0.1
    hard_variant: bool = False
    hard_edge_share: float = 0.2
    hard_factor_low: float = 1.5
    hard_factor_high: float = 3.0
    side: float = 10.0
    coordinates: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.vertex_count < 2:
            raise ValueError("vertex_count must be at least 2")
        if self.theta is not None and not (1.0 <= self.theta <= 4.0):
            raise ValueError("theta must lie in [1, 4] (or be None for per-edge draws)")
        if not (1.0 <= self.theta_low <= self.theta_high):
            raise ValueError("theta_low/theta_high must satisfy 1 <= low <= high")
        if not (1.0 < self.shape_min <= self.shape_max):
            raise ValueError("shape bounds must satisfy 1 < min <= max")
        if not (0 <= self.reward_low <= self.reward_high):
            raise ValueError("reward range must satisfy 0 <= low <= high")
        if not (0 <= self.penalty_low <= self.penalty_high):
            raise ValueError("penalty range must satisfy 0 <= low <= high")
        if self.band_count < 1:
            raise ValueError("band_count must be at least 1")
        if not (self.band_spacing > 0):
            raise ValueError("band_spacing must be positive")
        if not (0.0 <= self.shape_drift < 0.5 and 0.0 <= self.mean_drift < 0.5):
            raise ValueError("drift fractions must lie in [0, 0.5)")
        if not (0.0 < self.hard_edge_share <= 1.0):
            raise ValueError("hard_edge_share must lie in (0, 1]")
        if not (1.0 <= self.hard_factor_low <= self.hard_factor_high):
            raise ValueError("hard mean factors must satisfy 1 <= low <= high")
        if not (self.side > 0):
            raise ValueError("side must be positive")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 bits")


def _points(config: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    if config.coordinates is not None:
        pts = np.asarray(config.coordinates, dtype=float)
        if pts.shape != (config.vertex_count, 2):
            raise GenerationError(
                f"coordinates shape {pts.shape} does not match ({config.vertex_count}, 2)"
            )
        return pts
    return rng.uniform(0.0, config.side, (config.vertex_count, 2))


def _fit_gamma(mean: float, theta: float, config: GeneratorConfig) -> GammaDist:
    """Shape from mean/theta clamped into bounds, scale re-fit so the mean is exact."""
    k = min(max(mean / theta, config.shape_min), config.shape_max)
    return GammaDist(shape=k, scale=mean / k)


def _banded_gamma(base_mean: float, theta: float, config: GeneratorConfig, rng: np.random.Generator) -> tuple[Band, ...]:
    """First band carries the exact base fit; later bands drift shape and mean a little."""
    bands = [Band(start=0.0, dist=_fit_gamma(base_mean, theta, config))]
    base_shape = bands[0].dist.shape
    for b in range(1, config.band_count):
        u = rng.uniform(-config.shape_drift, config.shape_drift)
        v = rng.uniform(-config.mean_drift, config.mean_drift)
        k = min(max(base_shape * (1.0 + u), config.shape_min), config.shape_max)
        mean = base_mean * (1.0 + v)
        bands.append(Band(start=b * config.band_spacing, dist=GammaDist(shape=k, scale=mean / k)))
    return tuple(bands)


def _vertices(config: GeneratorConfig, rng: np.random.Generator) -> tuple[Vertex, ...]:
    rewards = rng.integers(config.reward_low, config.reward_high + 1, config.vertex_count)
    penalties = rng.integers(config.penalty_low, config.penalty_high + 1, config.vertex_count)
    return tuple(Vertex(reward=float(r), penalty=float(c)) for r, c in zip(rewards, penalties))


def _pair_distances(points: np.ndarray) -> dict[tuple[int, int], float]:
    n = len(points)
    out = {}
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.hypot(*(points[i] - points[j])))
            if d <= 0.0:
                raise GenerationError(f"vertices {i} and {j} coincide; edge mean would be zero")
            out[(i, j)] = d
    return out


def generate_synthetic(config: GeneratorConfig) -> Instance:
    """Simple variant: complete graph, gamma means equal to planar distances.

    Both directions of a pair share one banded distribution.  Means therefore
    satisfy the triangle inequality, and with the config example "two points
    at distance 6, theta 2" the base band carries shape 3 and scale 2 exactly.
    """
    if config.hard_variant:
        return generate_hard_variant(config)
    rng = _rng(config.seed)
    points = _points(config, rng)
    vertices = _vertices(config, rng)
    dists = _pair_distances(points)

    edges = []
    for (i, j), mean in sorted(dists.items()):
        theta = config.theta if config.theta is not None else float(
            rng.uniform(config.theta_low, config.theta_high)
        )
        bands = _banded_gamma(mean, theta, config, rng)
        edges.append(TimeDependentEdge(source=i, target=j, bands=bands))
        edges.append(TimeDependentEdge(source=j, target=i, bands=bands))
    return Instance(
        vertices=vertices,
        edges=tuple(edges),
        start=0,
        exit=config.vertex_count - 1,
    )


_HARD_RETRIES = 50


def generate_hard_variant(config: GeneratorConfig) -> Instance:
    """Hard variant: per-edge scales and inflated means that break the triangle inequality.

    A seeded share of pairs has its base mean multiplied by a factor from
    [hard_factor_low, hard_factor_high]; the draw is retried until some triple
    verifiably violates the triangle inequality on base means.
    """
    if not config.hard_variant:
        raise ValueError("config.hard_variant must be set")
    if config.vertex_count < 3:
        raise GenerationError("hard variant needs at least 3 vertices to break a triangle")
    rng = _rng(config.seed)
    points = _points(config, rng)
    vertices = _vertices(config, rng)
    dists = _pair_distances(points)
    pairs = sorted(dists)
    thetas = {p: float(rng.uniform(config.theta_low, config.theta_high)) for p in pairs}

    n_inflate = max(1, math.ceil(config.hard_edge_share * len(pairs)))
    for _ in range(_HARD_RETRIES):
        chosen = rng.choice(len(pairs), size=n_inflate, replace=False)
        factors = rng.uniform(config.hard_factor_low, config.hard_factor_high, n_inflate)
        means = dict(dists)
        for idx, f in zip(chosen, factors):
            means[pairs[int(idx)]] *= float(f)
        if _violates_triangle(means, config.vertex_count):
            break
    else:
        raise GenerationError(
            f"no triangle-inequality violation found in {_HARD_RETRIES} draws; "
            "raise hard_edge_share or the factor range"
        )

    edges = []
    for pair in pairs:
        bands = _banded_gamma(means[pair], thetas[pair], config, rng)
        i, j = pair
        edges.append(TimeDependentEdge(source=i, target=j, bands=bands))
        edges.append(TimeDependentEdge(source=j, target=i, bands=bands))
    return Instance(
        vertices=vertices,
        edges=tuple(edges),
        start=0,
        exit=config.vertex_count - 1,
    )


def _violates_triangle(means: dict[tuple[int, int], float], n: int) -> bool:
    m = np.full((n, n), np.inf)
    np.fill_diagonal(m, 0.0)
    for (i, j), d in means.items():
        m[i, j] = m[j, i] = d
    for j in range(n):
        via = m[:, j][:, None] + m[j, :][None, :]
        if np.any(m > via + 1e-9):
            return True
    return False


# ---------------------------------------------------------------------------
# Small all-discrete instances with provable search structure
# ---------------------------------------------------------------------------

_NOISE_PATTERNS = (
    ((0.0, 1.0),),
    ((0.0, 0.5), (1.0, 0.5)),
    ((0.0, 0.75), (2.0, 0.25)),
    ((0.0, 0.5), (1.0, 0.25), (2.0, 0.25)),
)


def generate_oracle_instance(
    vertex_count: int,
    outcomes_per_edge: int = 3,
    band_count: int = 2,
    seed: int = 0,
    fractional: bool = False,
) -> Instance:
    """Small complete all-discrete instance for ground-truth comparisons.

    Base travel times are Manhattan distances between integer grid points, a
    single noise pattern (at most ``outcomes_per_edge`` outcomes, binary
    fraction probabilities) is shared by every edge, and with two bands all
    edges switch at one global boundary to the same non-negatively shifted
    law.  ``fractional`` shifts a seeded subset of edges by half a range so
    the conservative matrix method becomes strictly conservative on
    integer-width grids.
    """
    if not (2 <= vertex_count <= 8):
        raise ValueError("vertex_count must lie in 2..8")
    if not (1 <= outcomes_per_edge <= 3):
        raise ValueError("outcomes_per_edge must lie in 1..3")
    if band_count not in (1, 2):
        raise ValueError("band_count must be 1 or 2")
    rng = _rng(seed)

    points = rng.integers(0, 7, (vertex_count, 2))
    rewards = rng.integers(1, 101, vertex_count)
    penalties = rng.integers(1, 51, vertex_count)
    patterns = [p for p in _NOISE_PATTERNS if len(p) <= outcomes_per_edge]
    noise = patterns[int(rng.integers(len(patterns)))]
    boundary = float(rng.integers(2, 9))
    shift = float(rng.integers(1, 3))

    def dist_at(base: float) -> DiscreteDist:
        return DiscreteDist(tuple((base + off, p) for off, p in noise))

    edges = []
    for i in range(vertex_count):
        for j in range(i + 1, vertex_count):
            base = float(abs(points[i, 0] - points[j, 0]) + abs(points[i, 1] - points[j, 1]))
            if fractional and rng.random() < 0.5:
                base += 0.5
            if band_count == 1:
                bands = (Band(start=0.0, dist=dist_at(base)),)
            else:
                bands = (
                    Band(start=0.0, dist=dist_at(base)),
                    Band(start=boundary, dist=dist_at(base + shift)),
                )
            edges.append(TimeDependentEdge(source=i, target=j, bands=bands))
            edges.append(TimeDependentEdge(source=j, target=i, bands=bands))

    return Instance(
        vertices=tuple(
            Vertex(reward=float(r), penalty=float(c)) for r, c in zip(rewards, penalties)
        ),
        edges=tuple(edges),
        start=0,
        exit=vertex_count - 1,
    )
