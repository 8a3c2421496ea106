"""Prefix-product cache must match from-scratch evaluation after any edit."""

import numpy as np
import pytest

from dsop import (
    GeneratorConfig,
    PrefixProductCache,
    SolveRequest,
    TransitionMatrixStore,
    build_range_grid,
    generate_oracle_instance,
    generate_synthetic,
    matrix_completion_probability,
)


def make_cache(instance, request, range_count):
    grid = build_range_grid(request, instance, range_count)
    store = TransitionMatrixStore(instance, grid)
    cache = PrefixProductCache((instance.start, instance.exit), request, grid, store)
    return cache, grid, store


def scratch(instance, sequence, request, grid, store):
    return matrix_completion_probability(tuple(sequence), request, grid, store).value


@pytest.fixture
def setting():
    instance = generate_oracle_instance(7, outcomes_per_edge=2, band_count=2, seed=21)
    request = SolveRequest(deadline=14.0, epsilon=0.5)
    cache, grid, store = make_cache(instance, request, 14)
    return instance, request, cache, grid, store


class TestSingleEdits:
    def test_insert_at_end_matches_scratch(self, setting):
        instance, request, cache, grid, store = setting
        cache.apply_insert(2, 1)
        cache.apply_insert(3, 2)  # insert just before the exit
        assert cache.completion_probability() == pytest.approx(
            scratch(instance, (instance.start, 2, 3, instance.exit), request, grid, store),
            abs=1e-12,
        )

    def test_remove_second_last_matches_scratch(self, setting):
        instance, request, cache, grid, store = setting
        cache.apply_insert(2, 1)
        cache.apply_insert(3, 2)
        cache.apply_remove_second_last()
        assert tuple(cache.sequence) == (instance.start, 2, instance.exit)
        assert cache.completion_probability() == pytest.approx(
            scratch(instance, (instance.start, 2, instance.exit), request, grid, store),
            abs=1e-12,
        )

    def test_identity_swap_changes_nothing(self, setting):
        instance, request, cache, grid, store = setting
        cache.apply_insert(2, 1)
        cache.apply_insert(3, 2)
        before = cache.exit_distribution().copy()
        after = cache.apply_swap(2, 2)
        np.testing.assert_array_equal(before, after)
        assert tuple(cache.sequence) == (instance.start, 2, 3, instance.exit)

    def test_real_swap_matches_scratch(self, setting):
        instance, request, cache, grid, store = setting
        for v, pos in ((2, 1), (3, 2), (4, 3)):
            cache.apply_insert(v, pos)
        cache.apply_swap(1, 3)
        assert cache.completion_probability() == pytest.approx(
            scratch(instance, (instance.start, 4, 3, 2, instance.exit), request, grid, store),
            abs=1e-12,
        )

    def test_invalid_edits_rejected(self, setting):
        instance, request, cache, grid, store = setting
        with pytest.raises(ValueError):
            cache.apply_insert(instance.start, 1)  # duplicate vertex
        with pytest.raises(ValueError):
            cache.apply_insert(2, 0)  # before the start vertex
        with pytest.raises(ValueError):
            cache.apply_swap(0, 1)  # start vertex is not interior
        with pytest.raises(ValueError):
            cache.apply_remove_second_last()  # bare path has no interior


class TestRandomEditChains:
    def _run_chain(self, instance, request, range_count, seed, edits):
        cache, grid, store = make_cache(instance, request, range_count)
        rng = np.random.default_rng(seed)
        for _ in range(edits):
            seq = list(cache.sequence)
            free = [v for v in range(instance.vertex_count) if v not in seq]
            moves = ["insert"] if free else []
            if len(seq) > 2:
                moves += ["remove", "swap"]
            move = moves[int(rng.integers(len(moves)))]
            if move == "insert":
                v = free[int(rng.integers(len(free)))]
                pos = int(rng.integers(1, len(seq)))
                cache.apply_insert(v, pos)
            elif move == "remove":
                cache.apply_remove_second_last()
            else:
                i = int(rng.integers(1, len(seq) - 1))
                j = int(rng.integers(1, len(seq) - 1))
                cache.apply_swap(min(i, j), max(i, j))
            expected = scratch(instance, cache.sequence, request, grid, store)
            assert cache.completion_probability() == pytest.approx(expected, abs=1e-12)

    def test_hundred_edits_on_oracle_instance(self):
        instance = generate_oracle_instance(8, outcomes_per_edge=2, band_count=2, seed=4)
        request = SolveRequest(deadline=16.0, epsilon=0.5)
        self._run_chain(instance, request, 16, seed=0, edits=100)

    def test_edit_chain_on_gamma_instance(self):
        instance = generate_synthetic(GeneratorConfig(vertex_count=10, seed=6))
        request = SolveRequest(deadline=40.0, epsilon=0.5)
        self._run_chain(instance, request, 80, seed=1, edits=60)
