"""Tests for time points, intervals, graphs, signatures and seed splits."""

import numpy as np
import pytest

from wildalign.errors import IntegrityError, ResolutionError
from wildalign.kg import (
    Granularity,
    Quadruple,
    SeedAlignment,
    SeedPair,
    TemporalKG,
    TimeInterval,
    TimePoint,
    TimeSpan,
    active_indices,
    decompose_timepoint,
    entity_context,
    split_seeds,
    temporal_signature,
)

from .conftest import interval


def test_timepoint_granularity():
    assert TimePoint.parse("1992").granularity is Granularity.YEAR
    assert TimePoint.parse("1992-05").granularity is Granularity.MONTH
    assert TimePoint.parse("1992-05-01").granularity is Granularity.DATE
    assert TimePoint.parse("####").granularity is Granularity.UNKNOWN


def test_timepoint_literal_is_canonical():
    assert TimePoint.parse("1992-05-01").literal == "1992-05-01"
    assert TimePoint(992).literal == "0992"
    assert TimePoint().literal == "####"


@pytest.mark.parametrize("literal", ["92", "1992/05", "1992-5", "1992-13", "2021-02-30", "0000", "0000-01-01", ""])
def test_timepoint_rejects_bad_literals(literal):
    with pytest.raises(ValueError):
        TimePoint.parse(literal)


def test_timepoint_year_zero_rejected():
    with pytest.raises(IntegrityError, match="year out of range: 0"):
        TimePoint(0)


def test_timepoint_day_without_month():
    with pytest.raises(IntegrityError, match="without a month"):
        TimePoint(1992, None, 3)


def test_timepoint_matches_at_coarser_granularity():
    assert TimePoint(1992).matches(TimePoint(1992, 5, 1))
    assert TimePoint(1992, 5).matches(TimePoint(1992, 5, 30))
    assert not TimePoint(1992, 5).matches(TimePoint(1992, 6))
    assert not TimePoint().matches(TimePoint())


def test_timepoint_truncate():
    assert TimePoint(1992, 5, 1).truncate(Granularity.YEAR) == TimePoint(1992)
    assert TimePoint(1992).truncate(Granularity.DATE) == TimePoint(1992)
    assert TimePoint().truncate(Granularity.YEAR) == TimePoint()


def test_interval_order_checked_at_shared_granularity():
    with pytest.raises(IntegrityError, match="begins after it ends"):
        TimeInterval(TimePoint(1995), TimePoint(1990))
    # Same year at the coarser granularity: allowed.
    TimeInterval(TimePoint(1992, 5), TimePoint(1992))


def test_interval_none_and_points():
    assert TimeInterval().is_none
    half = interval("1980", "####")
    assert not half.is_none
    assert half.points() == (TimePoint(1980),)
    assert interval("1990", "1995").years() == frozenset({1990, 1995})


def test_timespan_sizes_and_indices():
    span = TimeSpan(1990, 1991)
    assert span.size(Granularity.YEAR) == 2
    assert span.size(Granularity.MONTH) == 24
    assert span.size(Granularity.DATE) == 730
    assert span.index(TimePoint(1991, 2), Granularity.MONTH) == 13
    assert span.index(TimePoint(1991, 1, 1), Granularity.DATE) == 365
    assert span.index(TimePoint(1991), Granularity.MONTH) is None
    assert span.index(TimePoint(1989), Granularity.YEAR) is None


def test_decompose_timepoint():
    span = TimeSpan(1990, 1991)
    assert decompose_timepoint(TimePoint(1991, 3, 1), Granularity.MONTH, span) == 14
    assert decompose_timepoint(TimePoint(1991, 3, 1), Granularity.YEAR, span) == 1
    assert decompose_timepoint(TimePoint(), Granularity.YEAR, span) is None
    assert decompose_timepoint(TimePoint(1990), Granularity.YEAR, None) is None


def test_from_facts_assigns_handles_in_order(toy_source):
    assert toy_source.entities[:4] == ("Alice", "Acme", "Paris", "Bob")
    assert toy_source.relations == ("P100", "P101", "P102", "P103")
    assert toy_source.resolve("Carol") == 4
    assert len(toy_source) == 8


def test_from_facts_keeps_isolated_entities():
    kg = TemporalKG.from_facts([("a", "r", "b", interval())], entities=["z"])
    assert kg.entities == ("z", "a", "b")
    assert kg.incident(0) == ()


def test_resolve_unknown_label(toy_source):
    with pytest.raises(ResolutionError, match="Unknown source entity label: 'Zed'"):
        toy_source.resolve("Zed")


def test_duplicate_label_rejected():
    with pytest.raises(IntegrityError, match="maps to handles 0 and 1"):
        TemporalKG(["a", "a"], ["r"], [])


def test_unknown_handle_rejected():
    with pytest.raises(IntegrityError, match="unknown entity handle 5"):
        TemporalKG(["a", "b"], ["r"], [Quadruple(0, 0, 5)])


def test_incident_and_networkx_view(toy_source):
    alice = toy_source.resolve("Alice")
    assert toy_source.incident(alice) == (0, 1, 3)
    assert toy_source.graph.number_of_edges() == len(toy_source)
    assert toy_source.graph.nodes[alice]["label"] == "Alice"


def test_valid_count_and_year_range(toy_source):
    assert toy_source.valid_count == 4
    assert toy_source.year_range == (1980, 2004)


def test_year_span_and_temporal_relations(toy_source):
    alice = toy_source.resolve("Alice")
    assert toy_source.year_span(alice) == (1990, 2004)
    assert toy_source.temporal_relations(alice) == frozenset({"P100", "P101"})
    assert toy_source.year_span(toy_source.resolve("France")) is None


def test_temporal_signature_year(tiny_kg):
    a = tiny_kg.resolve("a")
    np.testing.assert_array_equal(temporal_signature(a, Granularity.YEAR, tiny_kg), [1, 0, 1])


def test_year_points_have_no_month_index(tiny_kg):
    a = tiny_kg.resolve("a")
    assert active_indices(a, Granularity.MONTH, tiny_kg) == frozenset()
    assert temporal_signature(a, Granularity.MONTH, tiny_kg).sum() == 0


def test_signature_over_shared_span(tiny_kg):
    a = tiny_kg.resolve("a")
    signature = temporal_signature(a, Granularity.YEAR, tiny_kg, TimeSpan(1989, 1993))
    np.testing.assert_array_equal(signature, [0, 1, 0, 1, 0])


def test_signature_empty_without_time():
    kg = TemporalKG.from_facts([("a", "r", "b", interval())])
    assert temporal_signature(0, Granularity.YEAR, kg).shape == (0,)


def test_entity_context_orders_valid_first(toy_source):
    alice = toy_source.resolve("Alice")
    assert entity_context(alice, toy_source, 10) == [0, 1, 3]
    assert entity_context(alice, toy_source, 2) == [0, 1]
    assert entity_context(alice, toy_source, 10, facts=[3, 1]) == [1, 3]


def test_seed_alignment_train_split_one_to_one():
    with pytest.raises(IntegrityError, match="source entity 0 appears twice"):
        SeedAlignment((SeedPair(0, 0), SeedPair(0, 1)))
    # The test split may repeat.
    seeds = SeedAlignment((SeedPair(0, 0), SeedPair(0, 1, False), SeedPair(1, 0, False)))
    assert seeds.train_pairs == [(0, 0)]
    assert seeds.test_pairs == [(0, 1), (1, 0)]


def test_split_seeds_ratio_and_determinism():
    seeds = SeedAlignment(tuple(SeedPair(i, i) for i in range(10)))
    first = split_seeds(seeds, 0.3, seed=1)
    assert len(first.train_pairs) == 3
    assert len(first.test_pairs) == 7
    assert first == split_seeds(seeds, 0.3, seed=1)
    assert [(p.source, p.target) for p in first] == [(i, i) for i in range(10)]


def test_split_seeds_rejects_bad_ratio():
    with pytest.raises(ValueError, match="train_ratio"):
        split_seeds(SeedAlignment(), 1.5)
