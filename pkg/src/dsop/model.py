"""Domain model: vertices, time-dependent stochastic edges, instances, paths, configs.

An instance is a directed graph whose edges carry banded travel-time
distributions: the band whose half-open interval ``[start, next_start)``
contains the arrival time at the edge's source supplies the travel-time
distribution for that traversal.  A solution is a simple path from the start
vertex to the exit vertex; it is feasible for a request ``(H, epsilon)`` when
the probability of reaching the exit no later than the deadline ``H`` is at
least ``1 - epsilon``.

Instance file I/O and structural validation live here; probability engines
and solvers build on top.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc

from .errors import InstanceFormatError

# Vertex ids are plain indices into Instance.vertices.
VertexId = int

_PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    """One validation failure, naming the offending field and the broken rule."""

    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


@dataclass(frozen=True)
class GammaDist:
    """Gamma travel-time distribution with shape ``shape`` and scale ``scale``.

    Attributes
    ----------
    shape : float
        Shape parameter, must be positive.
    scale : float
        Scale parameter, must be positive.  The mean is ``shape * scale``.
    """

    shape: float
    scale: float

    def mean(self) -> float:
        return self.shape * self.scale

    def cdf(self, t):
        """P(X <= t), elementwise; the regularized lower incomplete gamma."""
        x = np.maximum(np.asarray(t, dtype=float), 0.0)
        return gammainc(self.shape, x / self.scale)

    # The gamma law is continuous, so P(X < t) coincides with P(X <= t).
    cdf_left = cdf

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.gamma(self.shape, self.scale, size)


@dataclass(frozen=True)
class DiscreteDist:
    """Finite travel-time distribution given as ``((time, probability), ...)``.

    Attributes
    ----------
    outcomes : tuple of (float, float)
        Support points with their probabilities.  Times are non-negative and
        the probabilities sum to one (within 1e-9).
    """

    outcomes: tuple[tuple[float, float], ...]
    _times: np.ndarray = field(init=False, repr=False, compare=False)
    _probs: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        order = sorted(range(len(self.outcomes)), key=lambda i: self.outcomes[i][0])
        times = np.array([self.outcomes[i][0] for i in order], dtype=float)
        probs = np.array([self.outcomes[i][1] for i in order], dtype=float)
        object.__setattr__(self, "_times", times)
        object.__setattr__(self, "_probs", probs)
        # cap rounding overshoot so cdf values stay genuine probabilities
        object.__setattr__(self, "_cum", np.minimum(np.cumsum(probs), 1.0))

    def mean(self) -> float:
        return float(np.dot(self._times, self._probs))

    def cdf(self, t):
        """P(X <= t), elementwise."""
        idx = np.searchsorted(self._times, np.asarray(t, dtype=float), side="right")
        return np.where(idx > 0, self._cum[idx - 1], 0.0)

    def cdf_left(self, t):
        """P(X < t), elementwise; differs from cdf exactly at the atoms."""
        idx = np.searchsorted(self._times, np.asarray(t, dtype=float), side="left")
        return np.where(idx > 0, self._cum[idx - 1], 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(len(self._times), size=size, p=self._probs / self._probs.sum())
        return self._times[idx]


Distribution = GammaDist | DiscreteDist


@dataclass(frozen=True)
class Band:
    """A travel-time regime active for source arrival times in ``[start, next band's start)``."""

    start: float
    dist: Distribution


@dataclass(frozen=True)
class TimeDependentEdge:
    """Directed edge whose travel-time law depends on the arrival time at its source.

    Bands are ordered by start time; the first band starts at 0 and a band
    boundary belongs to the later band.
    """

    source: VertexId
    target: VertexId
    bands: tuple[Band, ...]
    _starts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_starts", np.array([b.start for b in self.bands], dtype=float))

    def band_index_at(self, t) -> np.ndarray:
        """Index of the band governing source arrival time ``t``, elementwise."""
        t = np.asarray(t, dtype=float)
        starts = self._starts
        if starts.shape[0] <= 4:
            # few bands: summed comparisons beat a binary search
            idx = np.zeros(t.shape, dtype=np.intp)
            for s in starts[1:]:
                idx += t >= s
            return idx
        idx = starts.searchsorted(t, side="right") - 1
        return np.maximum(idx, 0)

    def band_at(self, t: float) -> Distribution:
        return self.bands[int(self.band_index_at(t))].dist


@dataclass(frozen=True)
class Vertex:
    """Reward collected when the vertex is visited; penalty charged on a late arrival."""

    reward: float
    penalty: float = 0.0


@dataclass(frozen=True)
class Instance:
    """A problem instance: vertices, time-dependent edges, designated start and exit.

    A missing (source, target) pair simply means travel is impossible in that
    direction; there is no infinite-cost placeholder.
    """

    vertices: tuple[Vertex, ...]
    edges: tuple[TimeDependentEdge, ...]
    start: VertexId
    exit: VertexId
    _edge_map: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_edge_map", {(e.source, e.target): e for e in self.edges}
        )

    def edge(self, source: VertexId, target: VertexId) -> TimeDependentEdge:
        return self._edge_map[(source, target)]

    def has_edge(self, source: VertexId, target: VertexId) -> bool:
        return (source, target) in self._edge_map

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    def reward(self, v: VertexId) -> float:
        return self.vertices[v].reward

    def penalty(self, v: VertexId) -> float:
        return self.vertices[v].penalty


@dataclass(frozen=True)
class Path:
    """A simple directed path, stored as the visited vertex ids in order.

    The first entry is expected to be the instance's start vertex and the last
    its exit vertex; ``validate_path`` checks this together with edge existence
    and the no-repeat rule.
    """

    sequence: tuple[VertexId, ...]

    def __len__(self) -> int:
        return len(self.sequence)

    def edge_pairs(self) -> list[tuple[VertexId, VertexId]]:
        return list(zip(self.sequence[:-1], self.sequence[1:]))

    def total_reward(self, instance: Instance) -> float:
        """Sum of rewards over every vertex on the path, endpoints included."""
        return float(sum(instance.reward(v) for v in self.sequence))

    @classmethod
    def checked(cls, instance: Instance, sequence) -> "Path":
        seq = tuple(int(v) for v in sequence)
        problems = validate_path(instance, seq)
        if problems:
            raise ValueError("; ".join(str(p) for p in problems))
        return cls(seq)


def validate_path(instance: Instance, sequence) -> list[Violation]:
    """Check start/exit endpoints, the no-repeat rule, and edge existence."""
    if isinstance(sequence, Path):
        sequence = sequence.sequence
    seq = tuple(sequence)
    out: list[Violation] = []
    if len(seq) < 2:
        out.append(Violation("path", "must contain at least start and exit"))
        return out
    n = instance.vertex_count
    for i, v in enumerate(seq):
        if not (0 <= v < n):
            out.append(Violation(f"path[{i}]", f"vertex id {v} out of range"))
            return out
    if seq[0] != instance.start:
        out.append(Violation("path[0]", f"must be the start vertex {instance.start}"))
    if seq[-1] != instance.exit:
        out.append(Violation(f"path[{len(seq) - 1}]", f"must be the exit vertex {instance.exit}"))
    if len(set(seq)) != len(seq):
        out.append(Violation("path", "vertices must not repeat"))
    for i, (a, b) in enumerate(zip(seq[:-1], seq[1:])):
        if not instance.has_edge(a, b):
            out.append(Violation(f"path[{i}..{i + 1}]", f"no edge from {a} to {b}"))
    return out


class Estimator(enum.Enum):
    """Which completion-probability engine produced or should produce a value."""

    MATRIX = "matrix"
    SAMPLING = "sampling"
    EXACT = "exact"


@dataclass(frozen=True)
class SolveRequest:
    """Deadline, risk budget and departure time for one solve.

    ``epsilon`` is the acceptable probability of missing the deadline; a path
    is feasible when its completion probability is at least ``1 - epsilon``.
    """

    deadline: float
    epsilon: float
    start_time: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.deadline) and self.deadline > 0):
            raise ValueError("deadline must be finite and positive")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if not (0.0 <= self.start_time <= self.deadline):
            raise ValueError("start_time must lie in [0, deadline]")

    @property
    def threshold(self) -> float:
        return 1.0 - self.epsilon


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for the randomized local search and the probability engines.

    Attributes
    ----------
    estimator : Estimator
        Engine used for feasibility checks inside solvers (matrix or sampling).
    max_iterations : int
        Number of annealing iterations; the loop always runs all of them.
    max_iter_no_improve : int
        Stagnation span controlling both the removal pressure and the metric switch.
    initial_temperature, cooling : float
        Annealing schedule: the temperature after iteration t is
        ``initial_temperature * cooling**t``.
    range_count : int
        Base number of arrival-time ranges for the matrix engine's grid.
    sample_count : int
        Walks per sampling estimate.
    rng_seed : int
        Single seed for every random stream a solver run consumes.
    """

    estimator: Estimator = Estimator.MATRIX
    max_iterations: int = 1500
    max_iter_no_improve: int = 50
    initial_temperature: float = 0.1
    cooling: float = 0.99
    range_count: int = 100
    sample_count: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        if self.estimator not in (Estimator.MATRIX, Estimator.SAMPLING):
            raise ValueError("estimator must be MATRIX or SAMPLING")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.max_iter_no_improve < 1:
            raise ValueError("max_iter_no_improve must be at least 1")
        if not (self.initial_temperature > 0):
            raise ValueError("initial_temperature must be positive")
        if not (0.0 < self.cooling < 1.0):
            raise ValueError("cooling must lie in (0, 1)")
        if self.range_count < 1:
            raise ValueError("range_count must be at least 1")
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")
        if not (0 <= self.rng_seed < 2**64):
            raise ValueError("rng_seed must fit in 64 bits")


@dataclass(frozen=True)
class Solution:
    """A solver's result: the path, its reward, and how it was scored."""

    path: Path
    reward: float
    completion_probability: float
    estimator: Estimator
    runtime_s: float


# ---------------------------------------------------------------------------
# Instance file format
# ---------------------------------------------------------------------------

def _require(mapping, key, where):
    if not isinstance(mapping, dict):
        raise InstanceFormatError(f"{where}: expected an object")
    if key not in mapping:
        raise InstanceFormatError(f"{where}: missing required field '{key}'")
    return mapping[key]


def _dist_from_json(obj, where) -> Distribution:
    kind = _require(obj, "type", where)
    if kind == "gamma":
        return GammaDist(
            shape=float(_require(obj, "shape", where)),
            scale=float(_require(obj, "scale", where)),
        )
    if kind == "discrete":
        raw = _require(obj, "outcomes", where)
        if not isinstance(raw, list) or not raw:
            raise InstanceFormatError(f"{where}.outcomes: expected a non-empty list")
        outcomes = []
        for i, pair in enumerate(raw):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise InstanceFormatError(f"{where}.outcomes[{i}]: expected [time, probability]")
            outcomes.append((float(pair[0]), float(pair[1])))
        return DiscreteDist(tuple(outcomes))
    raise InstanceFormatError(f"{where}.type: unknown distribution type {kind!r}")


def _dist_to_json(dist: Distribution) -> dict:
    if isinstance(dist, GammaDist):
        return {"type": "gamma", "shape": dist.shape, "scale": dist.scale}
    return {"type": "discrete", "outcomes": [[t, p] for t, p in dist.outcomes]}


def load_instance(text: str) -> Instance:
    """Parse an instance from its JSON text and validate it.

    Raises
    ------
    InstanceFormatError
        On malformed JSON (with line/column), on missing or ill-typed fields
        (naming the field), or when the parsed instance violates a model rule.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceFormatError(f"line {e.lineno}, column {e.colno}: {e.msg}") from e

    raw_vertices = _require(doc, "vertices", "instance")
    raw_edges = _require(doc, "edges", "instance")
    start = int(_require(doc, "start", "instance"))
    exit_ = int(_require(doc, "exit", "instance"))
    if not isinstance(raw_vertices, list):
        raise InstanceFormatError("instance.vertices: expected a list")
    if not isinstance(raw_edges, list):
        raise InstanceFormatError("instance.edges: expected a list")

    vertices = tuple(
        Vertex(
            reward=float(_require(v, "reward", f"vertices[{i}]")),
            penalty=float(_require(v, "penalty", f"vertices[{i}]")),
        )
        for i, v in enumerate(raw_vertices)
    )
    edges = []
    for i, e in enumerate(raw_edges):
        where = f"edges[{i}]"
        raw_bands = _require(e, "bands", where)
        if not isinstance(raw_bands, list) or not raw_bands:
            raise InstanceFormatError(f"{where}.bands: expected a non-empty list")
        bands = tuple(
            Band(
                start=float(_require(b, "start", f"{where}.bands[{j}]")),
                dist=_dist_from_json(_require(b, "dist", f"{where}.bands[{j}]"), f"{where}.bands[{j}].dist"),
            )
            for j, b in enumerate(raw_bands)
        )
        edges.append(
            TimeDependentEdge(
                source=int(_require(e, "from", where)),
                target=int(_require(e, "to", where)),
                bands=bands,
            )
        )

    instance = Instance(vertices=vertices, edges=tuple(edges), start=start, exit=exit_)
    problems = validate_instance(instance)
    if problems:
        raise InstanceFormatError("; ".join(str(p) for p in problems))
    return instance


def save_instance(instance: Instance) -> str:
    """Serialize to JSON text; load_instance(save_instance(x)) reproduces x exactly."""
    doc = {
        "vertices": [{"reward": v.reward, "penalty": v.penalty} for v in instance.vertices],
        "edges": [
            {
                "from": e.source,
                "to": e.target,
                "bands": [{"start": b.start, "dist": _dist_to_json(b.dist)} for b in e.bands],
            }
            for e in instance.edges
        ],
        "start": instance.start,
        "exit": instance.exit,
    }
    return json.dumps(doc, indent=2) + "\n"


def validate_instance(instance: Instance) -> list[Violation]:
    """Collect every model-rule violation in the instance; empty means valid."""
    out: list[Violation] = []
    n = len(instance.vertices)
    if n < 2:
        out.append(Violation("vertices", "need at least a start and an exit vertex"))
    for i, v in enumerate(instance.vertices):
        if not (math.isfinite(v.reward) and v.reward >= 0):
            out.append(Violation(f"vertices[{i}].reward", "must be finite and non-negative"))
        if not (math.isfinite(v.penalty) and v.penalty >= 0):
            out.append(Violation(f"vertices[{i}].penalty", "must be finite and non-negative"))

    if not (0 <= instance.start < n):
        out.append(Violation("start", f"vertex id {instance.start} out of range"))
    if not (0 <= instance.exit < n):
        out.append(Violation("exit", f"vertex id {instance.exit} out of range"))
    if instance.start == instance.exit:
        out.append(Violation("exit", "start and exit must be distinct"))

    seen_pairs = set()
    for i, e in enumerate(instance.edges):
        where = f"edges[{i}]"
        if not (0 <= e.source < n):
            out.append(Violation(f"{where}.from", f"vertex id {e.source} out of range"))
        if not (0 <= e.target < n):
            out.append(Violation(f"{where}.to", f"vertex id {e.target} out of range"))
        if e.source == e.target:
            out.append(Violation(where, "self-loops are not allowed"))
        if (e.source, e.target) in seen_pairs:
            out.append(Violation(where, f"duplicate edge from {e.source} to {e.target}"))
        seen_pairs.add((e.source, e.target))
        out.extend(_validate_bands(e.bands, where))
    return out


def _validate_bands(bands: tuple[Band, ...], where: str) -> list[Violation]:
    out: list[Violation] = []
    if not bands:
        out.append(Violation(f"{where}.bands", "need at least one band"))
        return out
    if bands[0].start != 0.0:
        out.append(Violation(f"{where}.bands[0].start", "first band must start at 0"))
    prev = None
    for j, band in enumerate(bands):
        loc = f"{where}.bands[{j}]"
        if not math.isfinite(band.start) or band.start < 0:
            out.append(Violation(f"{loc}.start", "must be finite and non-negative"))
        if prev is not None and not (band.start > prev):
            out.append(Violation(f"{loc}.start", "band starts must strictly increase"))
        prev = band.start
        out.extend(_validate_dist(band.dist, f"{loc}.dist"))
    return out


def _validate_dist(dist: Distribution, where: str) -> list[Violation]:
    out: list[Violation] = []
    if isinstance(dist, GammaDist):
        if not (math.isfinite(dist.shape) and dist.shape > 0):
            out.append(Violation(f"{where}.shape", "must be finite and positive"))
        if not (math.isfinite(dist.scale) and dist.scale > 0):
            out.append(Violation(f"{where}.scale", "must be finite and positive"))
        return out
    if not dist.outcomes:
        out.append(Violation(f"{where}.outcomes", "need at least one outcome"))
        return out
    total = 0.0
    for i, (t, p) in enumerate(dist.outcomes):
        if not (math.isfinite(t) and t >= 0):
            out.append(Violation(f"{where}.outcomes[{i}]", "time must be finite and non-negative"))
        if not (math.isfinite(p) and p > 0):
            out.append(Violation(f"{where}.outcomes[{i}]", "probability must be finite and positive"))
        else:
            total += p
    if abs(total - 1.0) > _PROB_SUM_TOL:
        out.append(Violation(f"{where}.outcomes", f"probabilities sum to {total!r}, expected 1"))
    return out
