"""Probability engines: range grid, transition operators, three estimators."""

import numpy as np
import pytest

from dsop import (
    ConfigurationError,
    EnumerationLimitError,
    GammaDist,
    GeneratorConfig,
    Path,
    ProbabilityEstimate,
    SolveRequest,
    TransitionMatrixStore,
    UnsupportedDistributionError,
    build_range_grid,
    edge_transition_matrix,
    exact_completion_probability,
    expected_utility,
    generate_oracle_instance,
    generate_synthetic,
    initial_arrival_row,
    is_feasible,
    matrix_completion_probability,
    sampling_completion_probability,
    vertex_utility,
)
from conftest import banded_edge, build_instance, disc, point, static_edge


def req(H, eps=0.5, start=0.0):
    return SolveRequest(deadline=float(H), epsilon=eps, start_time=start)


class TestRangeGrid:
    def test_uniform_partition_without_bands(self, point_mass_instance):
        grid = build_range_grid(req(100), point_mass_instance, 100)
        assert grid.width == pytest.approx(1.0)
        assert grid.count == 100
        assert grid.lower(0) == 0.0
        assert grid.lower(99) == pytest.approx(99.0)

    def test_already_aligned_boundary_needs_no_refinement(self):
        inst = build_instance(2, [banded_edge(0, 1, (0.0, point(1)), (5.0, point(2)))])
        grid = build_range_grid(req(10), inst, 10)
        assert grid.width == pytest.approx(1.0)
        assert grid.count == 10

    def test_boundary_five_already_divides_width_2_5(self):
        inst = build_instance(2, [banded_edge(0, 1, (0.0, point(1)), (5.0, point(2)))])
        grid = build_range_grid(req(10), inst, 4)
        assert grid.width == pytest.approx(2.5)
        assert grid.count == 4

    def test_misaligned_boundary_refines_to_a_common_divisor(self):
        inst = build_instance(2, [banded_edge(0, 1, (0.0, point(1)), (2.0, point(2)))])
        grid = build_range_grid(req(10), inst, 4)
        # width 2.5 misses the boundary at 2; refinement lands on 0.5
        assert grid.width == pytest.approx(0.5)
        assert grid.count == 20

    def test_unrepresentable_boundary_names_the_band(self):
        inst = build_instance(2, [banded_edge(0, 1, (0.0, point(1)), (0.123456789, point(2)))])
        with pytest.raises(ConfigurationError, match=r"edges\[0\].bands\[1\]"):
            build_range_grid(req(10), inst, 4)

    def test_index_of_is_half_open(self, point_mass_instance):
        grid = build_range_grid(req(10), point_mass_instance, 10)
        assert grid.index_of(0.0) == 0
        assert grid.index_of(0.999) == 0
        assert grid.index_of(1.0) == 1
        assert grid.index_of(10.0) == grid.count  # overflow index


class TestEdgeTransitionMatrix:
    def test_point_mass_shifts_by_three_rows(self, point_mass_instance):
        grid = build_range_grid(req(10), point_mass_instance, 10)
        M = edge_transition_matrix(point_mass_instance.edge(0, 1), grid)
        assert M.shape == (11, 11)
        for p in range(7):
            row = np.zeros(11)
            row[p + 3] = 1.0
            np.testing.assert_allclose(M[p], row, atol=1e-12)

    def test_overflow_row_is_absorbing(self, point_mass_instance):
        grid = build_range_grid(req(10), point_mass_instance, 10)
        M = edge_transition_matrix(point_mass_instance.edge(0, 1), grid)
        row = np.zeros(11)
        row[-1] = 1.0
        np.testing.assert_allclose(M[-1], row)

    def test_two_atom_distribution_keeps_both_masses(self, half_half_instance):
        grid = build_range_grid(req(10), half_half_instance, 10)
        M = edge_transition_matrix(half_half_instance.edge(0, 1), grid)
        assert M[0, 2] == pytest.approx(0.5)
        assert M[0, 5] == pytest.approx(0.5)
        assert M[0].sum() == pytest.approx(1.0)

    def test_straddling_atom_leaks_conservatively(self):
        inst = build_instance(2, [static_edge(0, 1, point(1.5))])
        grid = build_range_grid(req(10), inst, 10)
        M = edge_transition_matrix(inst.edge(0, 1), grid)
        # from within a width-1 range the atom can land in either of two
        # target ranges, so the guaranteed mass for each is zero
        np.testing.assert_allclose(M[0, :-1], 0.0, atol=1e-12)

    def test_rows_are_sub_stochastic(self, gamma_line_instance):
        grid = build_range_grid(req(12), gamma_line_instance, 24)
        for pair in ((0, 1), (1, 2)):
            M = edge_transition_matrix(gamma_line_instance.edge(*pair), grid)
            assert np.all(M >= -1e-15)
            assert np.all(M.sum(axis=1) <= 1.0 + 1e-9)

    def test_no_mass_moves_backwards_in_time(self, gamma_line_instance):
        grid = build_range_grid(req(12), gamma_line_instance, 12)
        M = edge_transition_matrix(gamma_line_instance.edge(0, 1), grid)
        for p in range(grid.count):
            np.testing.assert_allclose(M[p, :p], 0.0, atol=1e-15)


class TestMatrixCompletion:
    def test_point_mass_within_deadline(self, point_mass_instance):
        grid = build_range_grid(req(5), point_mass_instance, 5)
        store = TransitionMatrixStore(point_mass_instance, grid)
        assert matrix_completion_probability((0, 1), req(5), grid, store).value == pytest.approx(1.0)

    def test_point_mass_past_deadline(self, point_mass_instance):
        grid = build_range_grid(req(2), point_mass_instance, 2)
        store = TransitionMatrixStore(point_mass_instance, grid)
        assert matrix_completion_probability((0, 1), req(2), grid, store).value == pytest.approx(0.0)

    def test_coin_then_unit_edge_is_half(self, half_half_instance):
        grid = build_range_grid(req(4), half_half_instance, 4)
        store = TransitionMatrixStore(half_half_instance, grid)
        est = matrix_completion_probability((0, 1, 2), req(4), grid, store)
        assert est.value == pytest.approx(0.5)
        assert est.method.value == "matrix"

    def test_missing_edge_is_reported(self, half_half_instance):
        grid = build_range_grid(req(4), half_half_instance, 4)
        store = TransitionMatrixStore(half_half_instance, grid)
        with pytest.raises(ValueError, match="0.*2|2.*0"):
            matrix_completion_probability((0, 2), req(4), grid, store)

    def test_start_time_shifts_the_initial_row(self, point_mass_instance):
        grid = build_range_grid(req(5), point_mass_instance, 5)
        store = TransitionMatrixStore(point_mass_instance, grid)
        # departing at 2.5 the point-mass-3 arrival hits 5.5 > H
        est = matrix_completion_probability((0, 1), req(5, start=2.5), grid, store)
        assert est.value == pytest.approx(0.0)

    def test_initial_arrival_row_concentrates_start_mass(self, point_mass_instance):
        grid = build_range_grid(req(5), point_mass_instance, 5)
        row = initial_arrival_row(grid, 2.0)
        assert row[2] == pytest.approx(1.0)
        assert row.sum() == pytest.approx(1.0)


class TestSamplingCompletion:
    def test_deterministic_edges_meeting_deadline_exactly(self):
        inst = build_instance(3, [static_edge(0, 1, point(3)), static_edge(1, 2, point(4))])
        for n in (1, 7, 500):
            est = sampling_completion_probability(inst, (0, 1, 2), req(7), n, seed=9)
            assert est.value == 1.0
            assert est.success_count == n

    def test_deterministic_edges_just_missing_deadline(self):
        inst = build_instance(3, [static_edge(0, 1, point(3)), static_edge(1, 2, point(4))])
        est = sampling_completion_probability(inst, (0, 1, 2), req(6.9), 100, seed=9)
        assert est.value == 0.0

    def test_binomial_concentration_and_pinned_value(self, half_half_instance):
        est = sampling_completion_probability(half_half_instance, (0, 1, 2), req(4), 10000, seed=123)
        assert 0.48 <= est.value <= 0.52
        assert est.value == pytest.approx(0.5065)  # frozen regression value
        assert est.success_count == 5065

    def test_value_is_exactly_success_over_n(self, half_half_instance):
        est = sampling_completion_probability(half_half_instance, (0, 1, 2), req(4), 337, seed=5)
        assert est.value == est.success_count / 337

    def test_same_seed_same_counts(self, two_coin_instance):
        a = sampling_completion_probability(two_coin_instance, (0, 1, 2), req(3), 2000, seed=42)
        b = sampling_completion_probability(two_coin_instance, (0, 1, 2), req(3), 2000, seed=42)
        assert a == b

    def test_band_choice_follows_realised_arrival(self, dynamic_exact_instance):
        # the slow band triggers only for the 0.5 mass arriving at 4
        est = sampling_completion_probability(dynamic_exact_instance, (0, 1, 2), req(6), 4000, seed=3)
        assert est.value == pytest.approx(0.5, abs=0.03)


class TestExactCompletion:
    def test_single_point_mass(self, point_mass_instance):
        assert exact_completion_probability(point_mass_instance, (0, 1), req(5)).value == 1.0

    def test_dynamic_band_cuts_half_the_mass(self, dynamic_exact_instance):
        est = exact_completion_probability(dynamic_exact_instance, (0, 1, 2), req(6))
        assert est.value == pytest.approx(0.5)
        assert est.method.value == "exact"

    def test_two_coin_three_quarters(self, two_coin_instance):
        assert exact_completion_probability(two_coin_instance, (0, 1, 2), req(3)).value == pytest.approx(0.75)

    def test_gamma_edge_is_unsupported(self, gamma_line_instance):
        with pytest.raises(UnsupportedDistributionError):
            exact_completion_probability(gamma_line_instance, (0, 1, 2), req(5))

    def test_outcome_cap_is_enforced(self, two_coin_instance):
        with pytest.raises(EnumerationLimitError):
            exact_completion_probability(two_coin_instance, (0, 1, 2), req(3), outcome_cap=3)


class TestFeasibility:
    def test_published_feasible_rows(self):
        assert is_feasible(ProbabilityEstimate(0.79, None), 0.3)
        assert is_feasible(ProbabilityEstimate(0.54, None), 0.5)

    def test_boundary_rejection(self):
        assert not is_feasible(ProbabilityEstimate(0.89, None), 0.1)

    def test_exact_threshold_is_feasible(self):
        assert is_feasible(ProbabilityEstimate(0.9, None), 0.1)


class TestExpectedUtility:
    def test_certain_arrival_contributes_full_reward(self):
        inst = build_instance(2, [static_edge(0, 1, point(1))],
                              rewards=[0, 100], penalties=[0, 0])
        value = expected_utility(inst, (0, 1), req(5), 2000, seed=1)
        assert value == pytest.approx(100.0)

    def test_half_probability_formula(self):
        assert vertex_utility(0.5, 100.0, 50.0) == pytest.approx(25.0)

    def test_sampled_value_matches_exact_enumeration(self):
        inst = build_instance(2, [static_edge(0, 1, disc((1.0, 0.5), (9.0, 0.5)))],
                              rewards=[3, 100], penalties=[0, 50])
        # arrival at v1 is 1 or 9, so P(a_1 <= 5) = 0.5 exactly
        exact = vertex_utility(1.0, 3.0, 0.0) + vertex_utility(0.5, 100.0, 50.0)
        value = expected_utility(inst, (0, 1), req(5), 20000, seed=11)
        assert value == pytest.approx(exact, abs=1.0)


class TestMonotoneInDeadline:
    def test_sampling_with_common_seed(self, two_coin_instance):
        values = [
            sampling_completion_probability(two_coin_instance, (0, 1, 2), req(h), 3000, seed=8).value
            for h in (2.0, 2.5, 3.0, 3.5, 4.0)
        ]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_matrix_with_grid_rebuilt_at_constant_width(self, gamma_line_instance):
        values = []
        for h in (6.0, 8.0, 10.0, 12.0):
            grid = build_range_grid(req(h), gamma_line_instance, int(h * 2))  # width 0.5
            store = TransitionMatrixStore(gamma_line_instance, grid)
            values.append(matrix_completion_probability((0, 1, 2), req(h), grid, store).value)
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


class TestOraclePropertiesMini:
    """Small-scale versions of the conservativeness and consistency checks."""

    def _random_paths(self, instance, rng, count):
        interior = [v for v in range(instance.vertex_count)
                    if v not in (instance.start, instance.exit)]
        for _ in range(count):
            k = int(rng.integers(0, len(interior) + 1))
            mid = list(rng.permutation(interior)[:k])
            yield (instance.start, *mid, instance.exit)

    def test_matrix_never_exceeds_exact(self):
        rng = np.random.default_rng(0)
        for trial in range(25):
            inst = generate_oracle_instance(3 + trial % 4, outcomes_per_edge=1 + trial % 3,
                                            band_count=2, seed=trial, fractional=trial % 2 == 1)
            h = float(rng.integers(4, 14))
            grid = build_range_grid(req(h), inst, int(h))
            store = TransitionMatrixStore(inst, grid)
            for seq in self._random_paths(inst, rng, 3):
                exact = exact_completion_probability(inst, seq, req(h)).value
                matrix = matrix_completion_probability(seq, req(h), grid, store).value
                assert matrix <= exact + 1e-9

    def test_sampler_tracks_exact(self):
        rng = np.random.default_rng(1)
        for trial in range(12):
            inst = generate_oracle_instance(3 + trial % 4, outcomes_per_edge=2,
                                            band_count=2, seed=100 + trial)
            h = float(rng.integers(4, 14))
            for seq in self._random_paths(inst, rng, 2):
                exact = exact_completion_probability(inst, seq, req(h)).value
                sample = sampling_completion_probability(inst, seq, req(h), 4000,
                                                         seed=trial * 7 + 1).value
                assert abs(sample - exact) <= 0.035

    def test_fractional_offsets_create_strict_gaps_somewhere(self):
        gaps = 0
        rng = np.random.default_rng(2)
        for trial in range(10):
            inst = generate_oracle_instance(4, outcomes_per_edge=2, band_count=2,
                                            seed=trial, fractional=True)
            h = 8.0
            grid = build_range_grid(req(h), inst, 8)
            store = TransitionMatrixStore(inst, grid)
            for seq in self._random_paths(inst, rng, 4):
                exact = exact_completion_probability(inst, seq, req(h)).value
                matrix = matrix_completion_probability(seq, req(h), grid, store).value
                gaps += matrix < exact - 1e-9
        assert gaps > 0

    def test_aligned_integer_supports_make_matrix_exact(self):
        # width 0.5 keeps every integer arrival strictly inside a range; a
        # non-integer deadline keeps arrivals from landing exactly on H,
        # where the half-open overflow range would conservatively count
        # them late while the oracle counts a_n <= H as success
        rng = np.random.default_rng(3)
        for trial in range(10):
            inst = generate_oracle_instance(4, outcomes_per_edge=2, band_count=2,
                                            seed=trial, fractional=False)
            h = 9.5
            grid = build_range_grid(req(h), inst, 19)
            store = TransitionMatrixStore(inst, grid)
            for seq in self._random_paths(inst, rng, 3):
                exact = exact_completion_probability(inst, seq, req(h)).value
                matrix = matrix_completion_probability(seq, req(h), grid, store).value
                assert matrix == pytest.approx(exact, abs=1e-9)
