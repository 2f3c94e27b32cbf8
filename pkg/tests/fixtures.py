"""Hand-built graphs and vectors shared by the test modules."""

from __future__ import annotations

import math
import random
from fractions import Fraction

from kmsgraph.enclosure import Enclosure
from kmsgraph.graph import EdgeBundle, ExplicitGraph, WeightFamily
from kmsgraph.harmonic import HarmonicVector

LOG2 = math.log(2)


def edge(src, dst, count=1, F=1.0):
    return EdgeBundle(src, dst, WeightFamily.finite(count, F))


def two_loops() -> ExplicitGraph:
    """One vertex with two loops: recurrent exactly at log 2."""
    return ExplicitGraph(["v"], [edge("v", "v", 2)])


def loop_and_sink() -> ExplicitGraph:
    return ExplicitGraph(["v", "s"], [edge("v", "v"), edge("v", "s")])


def counts_matrix(rows: list[list[int]]) -> ExplicitGraph:
    names = [f"v{i}" for i in range(len(rows))]
    bundles = [edge(names[i], names[j], c) for i, row in enumerate(rows) for j, c in enumerate(row) if c]
    return ExplicitGraph(names, bundles)


def point_vector(values: dict) -> HarmonicVector:
    return HarmonicVector({v: Enclosure.point(x) for v, x in values.items()}, tuple(values))


def superharmonic_instance(seed: int) -> tuple[ExplicitGraph, HarmonicVector, dict, dict]:
    """A super-harmonic vector at ``log 2`` with known harmonic part and defect.

    Vertex ``v0`` carries two loops, so any constant there is harmonic; the
    other vertices feed lower-numbered ones and carry at most one loop, so
    they are transient. Returns the graph, ``psi`` and the exact harmonic
    part and defect as fractions.
    """
    rng = random.Random(seed)
    n = rng.randint(1, 5)
    names = [f"v{i}" for i in range(n)]
    counts = {(0, 0): 2}
    for i in range(1, n):
        counts[(i, rng.randrange(i))] = rng.randint(1, 3)
        for j in range(i):
            if rng.random() < 0.4:
                counts[(i, j)] = rng.randint(1, 3)
        if rng.random() < 0.5:
            counts[(i, i)] = 1
    half = Fraction(1, 2)
    base = Fraction(rng.randint(0, 4))
    harmonic: list[Fraction] = []
    defect: list[Fraction] = []
    potential: list[Fraction] = []
    for i in range(n):
        loop = counts.get((i, i), 0) * half if i else 0
        feed_h = sum((c * half * harmonic[j] for (a, j), c in counts.items() if a == i and j < i), Fraction(0))
        feed_p = sum((c * half * potential[j] for (a, j), c in counts.items() if a == i and j < i), Fraction(0))
        k = Fraction(0) if i == 0 else Fraction(rng.randint(1, 8), 4)
        h = base if i == 0 else feed_h / (1 - loop)
        p = Fraction(0) if i == 0 else (k + feed_p) / (1 - loop)
        harmonic.append(h)
        defect.append(k)
        potential.append(p)
    g = ExplicitGraph(names, [edge(names[i], names[j], c) for (i, j), c in sorted(counts.items())])
    psi = point_vector({names[i]: float(harmonic[i] + potential[i]) for i in range(n)})
    return g, psi, dict(zip(names, harmonic)), dict(zip(names, defect))
