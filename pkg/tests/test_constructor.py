import itertools
import math
from fractions import Fraction

import pytest

from kmsgraph import kgd
from kmsgraph.constructor import (
    BASE,
    ConstructionRecipe,
    attach_exit_emitter,
    attach_exit_rowfinite,
    backbone,
    build,
    intro_partition,
    realise,
    schedule_return_paths,
)
from kmsgraph.errors import NotABareExit, ValidationError
from kmsgraph.graph import (
    BareKind,
    ExplicitGraph,
    VertexClass,
    classify_vertex,
    is_bare_exit,
    truncate,
)
from kmsgraph.sequences import SequenceTriple
from kmsgraph.spectrum import Recurrence, RuetteKind, classify, ruette_check

LOG2 = math.log(2)
REV2 = ("rev2", LOG2, ["[h,inf)", "[h+1,h+2]"])
INTRO1 = ("intro1", LOG2, ["]h+1,h+2["])


def v(n):
    return ("v", n)


def t(k, tag=1):
    return ("t", tag, k)


def edges_of(cut):
    return {(b.src, b.dst): b.family.count for b in cut.bundles()}


class TestRowFiniteAttachment:
    def setup_method(self):
        g0 = backbone()
        self.g = attach_exit_rowfinite(g0, g0.declared_exits[0], 1, SequenceTriple.constant())

    def test_out_degree_at_most_three(self):
        cut = truncate(self.g, 40, 10)
        for u in cut.order[:30]:
            assert len(list(self.g.out_bundles(u))) <= 3

    def test_first_vertex_edges(self):
        out = {b.dst: b.family.count for b in self.g.out_bundles(v(1))}
        assert out[t(2)] == 1 and out[t(3)] == 1

    def test_first_b_edge(self):
        out = {b.dst: b.family.count for b in self.g.out_bundles(v(2))}
        assert out[t(2)] == 1

    def test_eight_vertex_hand_matrix(self):
        cut = truncate(self.g, 8, 10)
        assert cut.order == [v(1), t(2), v(2), t(3), v(3), t(4), v(4), t(5)]
        hand = {
            (v(1), v(2)): 1, (v(2), v(3)): 1, (v(3), v(4)): 1,
            (v(1), t(2)): 1, (t(2), t(3)): 1, (t(3), t(4)): 1, (t(4), t(5)): 1,
            (v(1), t(3)): 1, (v(2), t(5)): 1,
            (v(2), t(2)): 1, (v(4), t(3)): 1,
        }
        assert edges_of(cut) == hand

    def test_new_exit_declared(self):
        spec = self.g.declared_exits[-1]
        assert spec.vertex_at(1) == v(1) and spec.vertex_at(4) == t(4)
        assert spec.step_weight(5) == 1

    def test_attached_exit_is_not_bare(self):
        status = is_bare_exit(self.g, self.g.declared_exits[-1], horizon=6)
        assert status.kind is BareKind.NOT_BARE_WITHIN

    def test_needs_bare_host(self):
        spec = self.g.declared_exits[-1]
        with pytest.raises(NotABareExit):
            attach_exit_rowfinite(self.g, spec, 1, SequenceTriple.constant())


class TestEmitterAttachment:
    def setup_method(self):
        self.g = attach_exit_emitter(ExplicitGraph(["u"], []), "u", SequenceTriple.constant(2, 3, 5))

    def test_root_becomes_emitter(self):
        assert classify_vertex(self.g, "u") is VertexClass.INFINITE_EMITTER

    def test_path_to_third_vertex(self):
        first = [b for b in itertools.islice(self.g.out_bundles("u"), 20) if b.dst == ("g", 1, 3, 1)]
        assert [b.family.count for b in first] == [3]
        u, length = ("g", 1, 3, 1), 1
        while u != t(3):
            (b,) = list(self.g.out_bundles(u))
            assert b.family.count == 1
            u, length = b.dst, length + 1
        assert length == 6

    def test_truncation_hand_matrix(self):
        cut = truncate(self.g, 5, 10)
        # rounds: u; t2 with path g(2,1..3); ...
        assert cut.order == ["u", t(2), ("g", 1, 2, 1), ("g", 1, 2, 2), ("g", 1, 2, 3)]
        hand = {
            ("u", t(2)): 2 + 5,
            ("u", ("g", 1, 2, 1)): 3,
            (("g", 1, 2, 1), ("g", 1, 2, 2)): 1,
            (("g", 1, 2, 2), ("g", 1, 2, 3)): 1,
            (("g", 1, 2, 3), t(2)): 1,
        }
        merged: dict = {}
        for b in cut.bundles():
            merged[(b.src, b.dst)] = merged.get((b.src, b.dst), 0) + b.family.count
        assert merged == hand

    def test_step_weight_counts_both_first_edges(self):
        spec = self.g.declared_exits[-1]
        assert spec.step_weight(1) == 1
        assert spec.step_weight(2) == 2 + 5
        assert spec.step_weight(3) == (2 + 5) * 2


class TestSchedule:
    def setup_method(self):
        g0 = backbone()
        self.H = attach_exit_rowfinite(g0, g0.declared_exits[0], 1, SequenceTriple.constant())
        spec = self.H.declared_exits[-1]
        self.schedule = schedule_return_paths(self.H, BASE, lambda i: spec.vertex_at(i + 1), LOG2)

    def test_path_counts_against_enumeration(self):
        target = t(3)
        cut = truncate(self.H, 30, 10)
        counts: dict = {}
        stack = [(BASE, 0)]
        while stack:
            u, n = stack.pop()
            if u == target:
                counts[n] = counts.get(n, 0) + 1
                continue
            for b in cut.out_bundles(u):
                stack.extend([(b.dst, n + 1)] * b.family.count)
        assert self.schedule.path_counts(target) == counts

    def test_lengths_increase_with_gaps(self):
        entries = [self.schedule.entry(i) for i in range(1, 7)]
        for prev, nxt in zip(entries, entries[1:]):
            assert nxt.length > prev.length + prev.longest

    def test_loop_sum_below_slack(self):
        lo, hi = self.schedule.loop_sum_bound()
        assert hi < 1 - Fraction(1, 2)


class TestPipelines:
    def test_rev2_example(self):
        g = realise(ConstructionRecipe.parse(*REV2))
        assert classify(g, LOG2).value is Recurrence.TRANSIENT
        assert len(g.declared_exits) == 2
        cut = truncate(g, 300, 16)
        assert not any(classify_vertex(g, u) is VertexClass.INFINITE_EMITTER for u in cut.order[:100])

    def test_rev2_recurrent_stage_is_ruette(self):
        G, G_prime = build(ConstructionRecipe.parse(*REV2))
        assert ruette_check(G, BASE).kind is RuetteKind.RUETTE
        assert classify(G, LOG2).value is Recurrence.RECURRENT
        assert G_prime.loop_certificate.loop_sum(LOG2).contains(0.5)

    def test_intro1_example(self):
        recipe = ConstructionRecipe.parse(*INTRO1, emitters=2)
        g = realise(recipe)
        assert classify(g, LOG2).value is Recurrence.RECURRENT
        assert len(g.declared_exits) == 1
        emitters = {u for u in truncate(g, 200, 16).order if classify_vertex(g, u) is VertexClass.INFINITE_EMITTER}
        assert emitters == {BASE, ("w", 1)}

    def test_rev1_without_maximal_interval(self):
        with pytest.raises(ValidationError):
            ConstructionRecipe.parse("rev1", LOG2, ["]h+1,h+2["]).validate()

    def test_rev2_interval_below_entropy(self):
        with pytest.raises(ValidationError):
            ConstructionRecipe.parse("rev2", LOG2, ["[h,inf)", "[0.1,0.2]"]).validate()

    def test_deterministic_serialization(self):
        a = kgd.dumps(realise(ConstructionRecipe.parse(*REV2)))
        b = kgd.dumps(realise(ConstructionRecipe.parse(*REV2)))
        assert a == b

    def test_entropy_certificate_partial_sums(self):
        G, _ = build(ConstructionRecipe.parse(*REV2))
        cert = G.loop_certificate
        partials = [cert.partial_at_base(L) for L in (8, 16, 32, 64, 128)]
        assert cert.counts(1) == 1
        assert all(p < 1 for p in partials)
        assert partials == sorted(partials)
        assert 1 - partials[-1] < Fraction(1, 1000)


class TestPartition:
    @pytest.mark.parametrize("emitters", [2, 3, 5, None])
    def test_balanced_on_prefixes(self, emitters):
        part = intro_partition(emitters, 1)
        window = 60
        classes = {part.vertex_of(m) for m in range(1, window + 1)}
        for cls in classes:
            members = list(itertools.takewhile(lambda m: m <= 10 * window, part.members(cls)))
            assert len(members) >= 3
            assert all(part.vertex_of(m) == cls for m in members)

    def test_emitter_count_matches_on_truncations(self):
        for N in (2, 3):
            g = realise(ConstructionRecipe.parse(*INTRO1, emitters=N))
            for depth in (120, 240):
                cut = truncate(g, depth, 16)
                found = [u for u in cut.order if classify_vertex(g, u) is VertexClass.INFINITE_EMITTER]
                assert len(found) == N
