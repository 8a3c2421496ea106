"""Shared fixtures and builders for hand-sized discrete instances."""

from __future__ import annotations

import pytest

from dsop import Band, DiscreteDist, GammaDist, Instance, TimeDependentEdge, Vertex


def disc(*outcomes):
    """Discrete distribution from (time, probability) pairs."""
    return DiscreteDist(tuple(outcomes))


def point(t):
    return disc((float(t), 1.0))


def static_edge(a, b, dist):
    return TimeDependentEdge(a, b, (Band(0.0, dist),))


def banded_edge(a, b, *bands):
    """Edge from (band_start, dist) pairs."""
    return TimeDependentEdge(a, b, tuple(Band(float(s), d) for s, d in bands))


def build_instance(n, edges, rewards=None, penalties=None, start=0, exit=None):
    """Instance over n vertices; rewards default to 10 * index."""
    if rewards is None:
        rewards = [10.0 * i for i in range(n)]
    if penalties is None:
        penalties = [0.0] * n
    vertices = tuple(Vertex(float(r), float(c)) for r, c in zip(rewards, penalties))
    return Instance(
        vertices=vertices,
        edges=tuple(edges),
        start=start,
        exit=n - 1 if exit is None else exit,
    )


@pytest.fixture
def point_mass_instance():
    """Two vertices joined by a deterministic travel time of 3."""
    return build_instance(2, [static_edge(0, 1, point(3))])


@pytest.fixture
def half_half_instance():
    """v0 -> v1 is {2: 0.5, 5: 0.5}; v1 -> v2 is a point mass of 1."""
    return build_instance(
        3,
        [static_edge(0, 1, disc((2.0, 0.5), (5.0, 0.5))), static_edge(1, 2, point(1))],
    )


@pytest.fixture
def dynamic_exact_instance():
    """Second edge switches to a slow distribution when reached at time >= 3."""
    return build_instance(
        3,
        [
            static_edge(0, 1, disc((2.0, 0.5), (4.0, 0.5))),
            banded_edge(1, 2, (0.0, point(1)), (3.0, point(10))),
        ],
    )


@pytest.fixture
def two_coin_instance():
    """Two independent {1: 0.5, 2: 0.5} edges in sequence."""
    coin = disc((1.0, 0.5), (2.0, 0.5))
    return build_instance(3, [static_edge(0, 1, coin), static_edge(1, 2, coin)])


@pytest.fixture
def gamma_line_instance():
    """Three vertices joined by gamma travel times."""
    return build_instance(
        3,
        [static_edge(0, 1, GammaDist(3.0, 2.0)), static_edge(1, 2, GammaDist(2.0, 1.5))],
    )
