"""Domain model: distributions, edges, paths, requests, file round-trips."""

import math

import numpy as np
import pytest
import scipy.special as sps

from dsop import (
    Band,
    DiscreteDist,
    Estimator,
    GammaDist,
    Instance,
    Path,
    SearchConfig,
    SolveRequest,
    TimeDependentEdge,
    Vertex,
    generate_synthetic,
    GeneratorConfig,
    load_instance,
    save_instance,
    validate_instance,
    validate_path,
    InstanceFormatError,
)
from conftest import banded_edge, build_instance, disc, point, static_edge


class TestGammaDist:
    def test_cdf_matches_regularized_incomplete_gamma(self):
        d = GammaDist(3.0, 2.0)
        t = np.array([0.0, 1.0, 5.0, 20.0])
        np.testing.assert_allclose(d.cdf(t), sps.gammainc(3.0, t / 2.0), rtol=1e-12)

    def test_mean_is_shape_times_scale(self):
        assert GammaDist(3.0, 2.0).mean() == pytest.approx(6.0)

    def test_negative_times_have_zero_mass(self):
        assert GammaDist(2.0, 1.0).cdf(-1.0) == 0.0

    def test_sampling_matches_mean(self):
        rng = np.random.default_rng(0)
        xs = GammaDist(4.0, 0.5).sample(rng, 20000)
        assert np.mean(xs) == pytest.approx(2.0, abs=0.05)


class TestDiscreteDist:
    def test_cdf_is_right_continuous(self):
        d = disc((2.0, 0.5), (5.0, 0.5))
        assert d.cdf(1.9) == 0.0
        assert d.cdf(2.0) == 0.5
        assert d.cdf(5.0) == 1.0

    def test_cdf_left_excludes_the_atom(self):
        d = disc((2.0, 0.5), (5.0, 0.5))
        assert d.cdf_left(2.0) == 0.0
        assert d.cdf_left(2.1) == 0.5
        assert d.cdf_left(5.0) == 0.5

    def test_mean(self):
        assert disc((1.0, 0.25), (3.0, 0.75)).mean() == pytest.approx(2.5)

    def test_sampling_hits_only_support(self):
        d = disc((1.0, 0.5), (4.0, 0.5))
        xs = d.sample(np.random.default_rng(1), 500)
        assert set(np.unique(xs)) <= {1.0, 4.0}


class TestTimeDependentEdge:
    def test_band_boundary_belongs_to_later_band(self):
        e = banded_edge(0, 1, (0.0, point(1)), (3.0, point(10)))
        assert e.band_index_at(2.999) == 0
        assert e.band_index_at(3.0) == 1
        assert e.band_at(3.0).cdf(10.0) == 1.0

    def test_times_before_first_band_use_first_band(self):
        e = banded_edge(0, 1, (0.0, point(1)), (3.0, point(10)))
        assert e.band_index_at(0.0) == 0

    def test_band_lookup_is_vectorised(self):
        e = banded_edge(0, 1, (0.0, point(1)), (3.0, point(10)))
        np.testing.assert_array_equal(e.band_index_at([0.0, 2.0, 3.0, 9.0]), [0, 0, 1, 1])


class TestPath:
    def test_total_reward_counts_every_vertex_including_endpoints(self):
        inst = build_instance(3, [static_edge(0, 1, point(1)), static_edge(1, 2, point(1))],
                              rewards=[5, 7, 11])
        assert Path((0, 1, 2)).total_reward(inst) == 23.0
        assert Path((0, 2)).total_reward(inst) == pytest.approx(16.0)

    def test_validate_path_accepts_well_formed(self, half_half_instance):
        assert validate_path(half_half_instance, Path((0, 1, 2))) == []

    def test_validate_path_rejects_wrong_endpoints(self, half_half_instance):
        assert validate_path(half_half_instance, Path((1, 2)))
        assert validate_path(half_half_instance, Path((0, 1)))

    def test_validate_path_rejects_repeats_and_missing_edges(self, half_half_instance):
        assert validate_path(half_half_instance, Path((0, 1, 1, 2)))
        assert validate_path(half_half_instance, Path((0, 2)))  # no direct edge


class TestSolveRequest:
    def test_threshold(self):
        assert SolveRequest(deadline=10.0, epsilon=0.3).threshold == pytest.approx(0.7)

    def test_epsilon_bounds(self):
        SolveRequest(deadline=1.0, epsilon=0.0)
        SolveRequest(deadline=1.0, epsilon=1.0)
        with pytest.raises(ValueError):
            SolveRequest(deadline=1.0, epsilon=1.5)

    def test_start_time_cannot_exceed_deadline(self):
        with pytest.raises(ValueError):
            SolveRequest(deadline=5.0, epsilon=0.1, start_time=6.0)


class TestSearchConfig:
    def test_documented_defaults(self):
        c = SearchConfig()
        assert c.max_iterations == 1500
        assert c.max_iter_no_improve == 50
        assert c.initial_temperature == pytest.approx(0.1)
        assert c.cooling == pytest.approx(0.99)
        assert c.range_count == 100
        assert c.sample_count == 1000
        assert c.estimator is Estimator.MATRIX

    def test_rejects_bad_cooling(self):
        with pytest.raises(ValueError):
            SearchConfig(cooling=1.0)


class TestValidateInstance:
    def test_well_formed_three_vertex_instance(self, half_half_instance):
        assert validate_instance(half_half_instance) == []

    def test_probabilities_summing_low_name_the_edge(self):
        bad = build_instance(2, [static_edge(0, 1, DiscreteDist(((1.0, 0.9),)))])
        violations = validate_instance(bad)
        assert len(violations) == 1
        assert "edges[0]" in violations[0].location

    def test_first_band_must_start_at_zero(self):
        e = TimeDependentEdge(0, 1, (Band(5.0, point(1)),))
        violations = validate_instance(build_instance(2, [e]))
        assert any("bands" in v.location for v in violations)

    def test_duplicate_edges_flagged(self):
        dup = build_instance(2, [static_edge(0, 1, point(1)), static_edge(0, 1, point(2))])
        assert validate_instance(dup)

    def test_self_loop_flagged(self):
        loop = build_instance(2, [static_edge(0, 1, point(1)), static_edge(1, 1, point(1))])
        assert validate_instance(loop)


class TestInstanceIO:
    def test_round_trip_on_generated_instance(self):
        inst = generate_synthetic(GeneratorConfig(vertex_count=32, seed=5))
        again = load_instance(save_instance(inst))
        assert again == inst

    def test_mixed_gamma_and_discrete_round_trip(self):
        inst = build_instance(
            3,
            [static_edge(0, 1, GammaDist(2.5, 1.5)),
             banded_edge(1, 2, (0.0, disc((1.0, 0.5), (2.0, 0.5))), (4.0, point(9)))],
        )
        assert load_instance(save_instance(inst)) == inst

    def test_missing_exit_field_is_named(self):
        text = '{"vertices": [{"reward": 1, "penalty": 0}], "edges": [], "start": 0}'
        with pytest.raises(InstanceFormatError, match="exit"):
            load_instance(text)

    def test_malformed_json_reports_line_and_column(self):
        with pytest.raises(InstanceFormatError, match="line 1, column"):
            load_instance("{nope")

    def test_save_is_deterministic_text(self):
        inst = generate_synthetic(GeneratorConfig(vertex_count=8, seed=3))
        assert save_instance(inst) == save_instance(inst)


class TestEdgeLookup:
    def test_missing_edge_means_untraversable(self, half_half_instance):
        assert not half_half_instance.has_edge(0, 2)
        with pytest.raises(KeyError):
            half_half_instance.edge(0, 2)

    def test_directed_lookup(self, half_half_instance):
        assert half_half_instance.edge(0, 1).target == 1
        assert not half_half_instance.has_edge(1, 0)
