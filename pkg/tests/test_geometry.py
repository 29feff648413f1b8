"""Membership LP against independent oracles, class-gap diagnostics, and the
dataset-level report."""

import json

import numpy as np
import pytest

from anml import (InvalidInputError, LabeledDataset, QueryContext, class_gap,
                  inseparability_report, lipschitz_lower_bound, membership_na,
                  membership_nb)
from anml.geometry import min_l1_representation

from conftest import (escapes_some_projection, l1_grid_oracle,
                      projection_draws, stays_inside_all_projections)


def ctx_2d(similars=(), dissimilars=()):
    return QueryContext.build([0.0, 0.0], similars=similars,
                              dissimilars=dissimilars)


class TestMembershipNa:
    def test_on_segment(self):
        v = membership_na(ctx_2d(similars=[[1.0, 0.0]]), np.array([0.5, 0.0]))
        assert v.in_region and v.min_l1 == pytest.approx(0.5, abs=1e-8)

    def test_reverse_extension(self):
        v = membership_na(ctx_2d(similars=[[1.0, 0.0]]), np.array([-0.5, 0.0]))
        assert v.in_region and v.min_l1 == pytest.approx(0.5, abs=1e-8)
        assert v.representation == pytest.approx([-0.5], abs=1e-8)

    def test_beyond_segment(self):
        v = membership_na(ctx_2d(similars=[[1.0, 0.0]]), np.array([2.0, 0.0]))
        assert not v.in_region and v.min_l1 == pytest.approx(2.0, abs=1e-8)

    def test_off_span(self):
        v = membership_na(ctx_2d(similars=[[1.0, 0.0]]), np.array([0.0, 1.0]))
        assert not v.in_region and v.min_l1 is None and not v.in_span

    def test_representation_reconstructs(self, rng):
        for _ in range(20):
            S = rng.normal(size=(3, 2))
            point = rng.normal(size=2)
            v = membership_na(QueryContext.build(rng.normal(size=2), similars=S),
                              point)
            # d=2, |S|=3: generic position, always in span
            assert v.in_span

    def test_needs_similars(self):
        with pytest.raises(InvalidInputError):
            membership_na(ctx_2d(dissimilars=[[1.0, 0.0]]), np.array([1.0, 0.0]))

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            membership_na(ctx_2d(similars=[[1.0, 0.0]]), np.array([1.0, 0.0, 0.0]))


class TestMembershipNb:
    def test_outside_is_inseparable(self):
        v = membership_nb(ctx_2d(dissimilars=[[1.0, 0.0]]), np.array([3.0, 0.0]))
        assert v.in_region and v.min_l1 == pytest.approx(3.0, abs=1e-8)

    def test_inside_is_separable(self):
        v = membership_nb(ctx_2d(dissimilars=[[1.0, 0.0]]), np.array([0.5, 0.0]))
        assert not v.in_region and v.min_l1 == pytest.approx(0.5, abs=1e-8)

    def test_two_dissimilars(self):
        v = membership_nb(ctx_2d(dissimilars=[[1.0, 0.0], [0.0, 1.0]]),
                          np.array([0.3, 0.3]))
        assert not v.in_region and v.min_l1 == pytest.approx(0.6, abs=1e-8)

    def test_off_span_counts_as_inseparable(self):
        v = membership_nb(ctx_2d(dissimilars=[[1.0, 0.0]]), np.array([0.0, 2.0]))
        assert v.in_region and v.min_l1 is None


class TestLpAgainstOracles:
    def test_grid_oracle_agreement(self, rng):
        disagreements = 0
        for _ in range(60):
            s = int(rng.integers(1, 4))
            query = rng.normal(size=2)
            S = query + rng.normal(size=(s, 2))
            point = query + rng.normal(size=2) * rng.uniform(0.2, 1.5)
            r, l1 = min_l1_representation(S - query, point - query)
            oracle = l1_grid_oracle(S - query, point - query)
            if oracle is None:
                assert r is None
                continue
            assert l1 == pytest.approx(oracle, abs=2e-3)
            if abs(l1 - 1.0) > 2e-3:
                lp_inside = l1 < 1.0
                oracle_inside = oracle < 1.0
                disagreements += lp_inside != oracle_inside
        assert disagreements == 0

    def test_projection_oracle(self, rng):
        Ls = projection_draws(rng, 2, n_draws=1000)
        inside_checked = outside_checked = 0
        while inside_checked < 5 or outside_checked < 5:
            s = int(rng.integers(1, 4))
            query = rng.normal(size=2)
            S = query + rng.normal(size=(s, 2))
            point = query + rng.normal(size=2)
            v = membership_na(QueryContext.build(query, similars=S), point)
            if not v.in_span:
                continue
            if v.min_l1 < 0.98:
                assert stays_inside_all_projections(Ls, query, S, point)
                inside_checked += 1
            elif v.min_l1 > 1.02:
                assert escapes_some_projection(Ls, query, S, point)
                outside_checked += 1


class TestScaleRobustness:
    def test_membership_invariant_under_extreme_scaling(self, rng):
        # The verdict depends only on the point's coefficients, which a
        # uniform rescaling of the whole configuration leaves unchanged.
        S = rng.normal(size=(3, 2))
        query = rng.normal(size=2)
        point = rng.normal(size=2)
        base = membership_na(QueryContext.build(query, similars=S), point)
        for factor in (1e-7, 1e7):
            scaled = membership_na(
                QueryContext.build(query * factor, similars=S * factor),
                point * factor,
            )
            assert scaled.in_region == base.in_region
            assert scaled.min_l1 == pytest.approx(base.min_l1, rel=1e-8)


class TestSymmetries:
    def test_permutation_and_translation_invariance(self, rng):
        S = rng.normal(size=(3, 2))
        query = rng.normal(size=2)
        point = rng.normal(size=2)
        base = membership_na(QueryContext.build(query, similars=S), point)
        perm = rng.permutation(3)
        permuted = membership_na(QueryContext.build(query, similars=S[perm]), point)
        assert permuted.in_region == base.in_region
        assert permuted.min_l1 == pytest.approx(base.min_l1, abs=1e-9)
        shift = rng.normal(size=2) * 10
        moved = membership_na(
            QueryContext.build(query + shift, similars=S + shift), point + shift
        )
        assert moved.in_region == base.in_region
        assert moved.min_l1 == pytest.approx(base.min_l1, abs=1e-8)


class TestClassGap:
    def test_two_singletons(self):
        data = LabeledDataset([[0.0, 0.0], [1.0, 0.0]], [1, 2])
        delta, per_pair = class_gap(data)
        assert delta == 1.0 and per_pair[(1, 2)] == 1.0

    def test_nearest_cross_pair(self):
        data = LabeledDataset([[0.0, 0.0], [0.0, 1.0], [3.0, 0.0]], [1, 1, 2])
        delta, _ = class_gap(data)
        assert delta == 3.0

    def test_three_classes_on_line(self):
        data = LabeledDataset([[0.0], [2.0], [5.0]], [1, 2, 3])
        delta, per_pair = class_gap(data)
        assert per_pair == {(1, 2): 2.0, (1, 3): 5.0, (2, 3): 3.0}
        assert delta == 2.0

    def test_single_class_rejected(self):
        with pytest.raises(InvalidInputError):
            class_gap(LabeledDataset([[0.0], [1.0]], [1, 1]))

    def test_rotation_invariance(self, rng):
        X = rng.normal(size=(12, 2))
        y = 1 + (np.arange(12) % 3)
        theta = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(theta), -np.sin(theta)],
                      [np.sin(theta), np.cos(theta)]])
        d0, p0 = class_gap(LabeledDataset(X, y))
        d1, p1 = class_gap(LabeledDataset(X @ R.T, y))
        assert d1 == pytest.approx(d0, rel=1e-12)
        for key in p0:
            assert p1[key] == pytest.approx(p0[key], rel=1e-12)


class TestLipschitzBound:
    def test_examples(self):
        assert lipschitz_lower_bound(1.0, 5.0) == 5.0
        assert lipschitz_lower_bound(2.0, 2.0) == 1.0
        assert lipschitz_lower_bound(0.1, 10.0) == pytest.approx(100.0)

    def test_zero_gap_rejected(self):
        with pytest.raises(InvalidInputError):
            lipschitz_lower_bound(0.0, 1.0)
        with pytest.raises(InvalidInputError):
            lipschitz_lower_bound(-1.0, 1.0)


class TestInseparabilityReport:
    def test_well_separated_orthogonal_classes(self):
        # Class 1 spread along x around the origin, class 2 far along y:
        # no cross point lands inside any span-expanded similarity segment.
        X = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0],
                      [0.0, 50.0], [1.0, 50.0], [2.0, 50.0]])
        y = np.array([1, 1, 1, 2, 2, 2])
        report = inseparability_report(LabeledDataset(X, y), 2)
        assert report.fraction == 0.0
        assert report.delta > 0

    def test_one_dimensional_interleaving(self):
        # Class 1 at {0, 2}, class 2 at {1}: the midpoint is inseparable for
        # both class-1 queries (coefficient 0.5), giving fraction 1.
        data = LabeledDataset([[0.0], [2.0], [1.0]], [1, 1, 2])
        report = inseparability_report(data, 1)
        assert report.fraction == 1.0
        by_index = {row["index"]: row for row in report.per_query}
        assert by_index[0]["inseparable_count"] == 1
        assert by_index[1]["inseparable_count"] == 1
        assert by_index[2]["dissimilar_count"] == 0  # singleton class skipped
        assert report.delta == 1.0

    def test_zero_similars_rejected(self):
        data = LabeledDataset([[0.0], [2.0], [1.0]], [1, 1, 2])
        with pytest.raises(InvalidInputError):
            inseparability_report(data, 0)

    def test_json_shape(self):
        data = LabeledDataset([[0.0], [2.0], [1.0]], [1, 1, 2])
        payload = json.loads(inseparability_report(data, 1).to_json())
        assert set(payload) == {"per_query", "fraction", "delta"}
        assert set(payload["per_query"][0]) == {
            "index", "inseparable_count", "dissimilar_count"
        }
