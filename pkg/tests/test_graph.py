import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import edge, loop_and_sink, two_loops
from kmsgraph.constructor import backbone, exx1
from kmsgraph.errors import NotABareExit, ValidationError
from kmsgraph.graph import (
    BareKind,
    ExplicitGraph,
    VertexClass,
    WeightFamily,
    classify_vertex,
    hurwitz_enclosure,
    is_bare_exit,
    is_cofinal,
    nonwandering_subgraph,
    saturation_closure,
    to_dot,
    truncate,
)
from kmsgraph.verify import random_strongly_connected
from oracles import S_AT_2


def stem_into_cycle():
    return ExplicitGraph(["v0", "v1", "v2"], [edge("v0", "v1"), edge("v1", "v2"), edge("v2", "v1")])


def joined_cycles():
    return ExplicitGraph(
        ["a", "b", "c", "d"],
        [edge("a", "b"), edge("b", "a"), edge("c", "d"), edge("d", "c"), edge("a", "c")],
    )


class TestTruncate:
    def test_single_loop(self):
        g = ExplicitGraph(["v"], [edge("v", "v")])
        cut = truncate(g, 1, 1)
        assert cut.order == ["v"]
        assert [b.family.count for b in cut.bundles()] == [1]

    def test_exx1_depth_two_width_three(self):
        cut = truncate(exx1(), 2, 3)
        assert cut.order == ["v", "w"]
        loops = {b.src: b.family.count for b in cut.bundles() if b.src == b.dst}
        assert loops == {"v": 3, "w": 3}
        assert {(b.src, b.dst) for b in cut.bundles() if b.src != b.dst} == {("v", "w"), ("w", "v")}

    def test_truncation_of_truncation(self):
        g = backbone()
        twice = truncate(truncate(g, 5, 5), 3, 3)
        once = truncate(g, 3, 3)
        assert twice.order == once.order
        assert [b.to_json() for b in twice.bundles()] == [b.to_json() for b in once.bundles()]

    def test_zero_width_rejected(self):
        with pytest.raises(ValidationError):
            truncate(exx1(), 2, 0)

    def test_traversal_is_deterministic(self):
        g = backbone()
        assert list(itertools.islice(g.vertices(), 20)) == list(itertools.islice(g.vertices(), 20))


class TestClassifyVertex:
    def test_exx1_vertices_are_infinite_emitters(self):
        g = exx1()
        assert classify_vertex(g, "v") is VertexClass.INFINITE_EMITTER
        assert classify_vertex(g, "w") is VertexClass.INFINITE_EMITTER

    def test_backbone_vertex_is_regular(self):
        assert classify_vertex(backbone(), ("v", 3)) is VertexClass.REGULAR

    def test_sink(self):
        g = ExplicitGraph(["v", "u"], [edge("v", "u")])
        assert classify_vertex(g, "u") is VertexClass.SINK

    def test_unknown_vertex(self):
        with pytest.raises(ValidationError):
            classify_vertex(two_loops(), "nope")


class TestHereditaryStructure:
    def test_saturation_pulls_in_predecessor(self):
        g = ExplicitGraph(["v", "w"], [edge("v", "w")])
        assert saturation_closure(g, {"w"}) == {"v", "w"}

    def test_saturation_of_everything(self):
        g = ExplicitGraph(list("abc"), [edge("a", "b"), edge("b", "c"), edge("c", "a")])
        assert saturation_closure(g, set("abc")) == set("abc")

    def test_saturation_of_stem(self):
        assert saturation_closure(stem_into_cycle(), {"v1", "v2"}) == {"v0", "v1", "v2"}

    def test_saturation_needs_hereditary_input(self):
        with pytest.raises(ValidationError):
            saturation_closure(stem_into_cycle(), {"v0"})

    def test_nonwandering_of_stem(self):
        assert set(nonwandering_subgraph(stem_into_cycle()).order) == {"v1", "v2"}

    def test_nonwandering_of_chain_is_empty(self):
        g = ExplicitGraph(list("abc"), [edge("a", "b"), edge("b", "c")])
        assert nonwandering_subgraph(g).order == []

    def test_nonwandering_of_joined_cycles_keeps_both(self):
        g = joined_cycles()
        assert not is_cofinal(g)
        assert set(nonwandering_subgraph(g).order) == set("abcd")

    def test_cofinality(self):
        assert is_cofinal(random_strongly_connected(3))
        assert not is_cofinal(joined_cycles())
        assert is_cofinal(stem_into_cycle())


class TestBareExits:
    def test_backbone_exit_is_bare(self):
        g = backbone()
        status = is_bare_exit(g, g.declared_exits[0], horizon=20)
        assert status.kind is BareKind.BARE

    def test_not_a_path(self):
        g = backbone()
        spec = g.declared_exits[0]
        from dataclasses import replace

        skipping = replace(spec, vertex_at=lambda k: ("v", 2 * k))
        with pytest.raises(NotABareExit):
            is_bare_exit(g, skipping, horizon=3)


class TestWeightFamilies:
    def test_power_law_total_matches_zeta(self):
        total = WeightFamily.power_law(1).total(2.0)
        assert total.contains(S_AT_2)
        assert total.width < 1e-12

    def test_hurwitz_enclosure_contains_partial_sum_limit(self):
        enc = hurwitz_enclosure(3.0, 10)
        direct = sum(n**-3.0 for n in range(10, 200_000))
        assert enc.lo <= direct + 1e-9 and direct <= enc.hi

    def test_divergent_family_is_unbounded(self):
        assert not math.isfinite(WeightFamily.power_law(1).total(1.0).hi)

    def test_json_round_trip(self):
        for fam in (WeightFamily.finite(3), WeightFamily.power_law(2), WeightFamily.geometric(1.0, 0.5)):
            assert WeightFamily.from_json(fam.to_json()) == fam


class TestDot:
    def test_backbone_depth_four_is_a_chain(self):
        text = to_dot(truncate(backbone(), 4, 4))
        assert text.count("[label=") == 4 + 3
        for i in range(3):
            assert f"n{i} -> n{i + 1}" in text

    def test_labels_are_multiplicities(self):
        text = to_dot(loop_and_sink())
        assert 'n0 -> n0 [label="1"]' in text


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_random_graphs_are_strongly_connected(seed):
    from kmsgraph.graph import is_strongly_connected

    g = random_strongly_connected(seed)
    assert is_strongly_connected(g)
    assert g.vertex_count <= 6
    assert all(b.family.count <= 3 for b in g.bundles())


@given(st.integers(min_value=1, max_value=12), st.integers(min_value=1, max_value=12),
       st.integers(min_value=1, max_value=12), st.integers(min_value=1, max_value=12))
@settings(max_examples=30, deadline=None)
def test_truncation_composes(d1, w1, d2, w2):
    g = exx1()
    twice = truncate(truncate(g, d1, w1), d2, w2)
    once = truncate(g, min(d1, d2), min(w1, w2))
    assert twice.order == once.order
    assert [b.to_json() for b in twice.bundles()] == [b.to_json() for b in once.bundles()]
