import math
from fractions import Fraction

import numpy as np
import pytest

from xyheights.geometry import (
    BoundaryHeight,
    GraphError,
    WeightedPlanarGraph,
    as_slope,
    box_dual,
    build_box,
    dual_graph,
    in_jump_set,
    jump_set,
    slope_boundary,
    source_sets,
    strip_halfwidth,
    strip_union_domain,
)


def test_box_counts():
    G = build_box(1, 1, 1.0)
    assert len(G.vertices) == 9
    assert len(G.edges) == 12
    assert len(G.inner_faces) == 4
    assert G.euler_check()

    G2 = build_box(2, 1, 1.0)
    assert len(G2.vertices) == 15
    assert len(G2.edges) == 22  # 3 rows x 4 horizontal + 5 columns x 2 vertical


def test_box_zero_coupling_allowed():
    G = build_box(1, 1, 0.0)
    assert all(J == 0.0 for J in G.edges.values())
    assert len(G.edges) == 12


def test_dual_of_unit_box():
    d = dual_graph(build_box(1, 1, 1.0))
    assert len(d.dual.vertices) == 12  # 4 inner faces + 8 outer-incident edges
    assert len(d.dual.edges) == 12
    assert len(d.dual.boundary) == 8


def test_dual_of_single_square():
    sq = WeightedPlanarGraph(
        [(0, 0), (1, 0), (1, 1), (0, 1)],
        {((0, 0), (1, 0)): 1.0, ((1, 0), (1, 1)): 1.0, ((1, 1), (0, 1)): 1.0, ((0, 0), (0, 1)): 1.0},
    )
    d = dual_graph(sq)
    assert len(d.dual.vertices) == 5
    assert len(d.dual.edges) == 4


def test_dual_edge_bijection_round_trip():
    G = build_box(2, 1, 0.7)
    d = dual_graph(G)
    assert set(d.edge_map) == set(G.edges)
    assert len(set(d.edge_map.values())) == len(G.edges)
    for e, de in d.edge_map.items():
        assert d.dual.edges[de] == G.edges[e]


def test_dual_vertex_count_matches_faces_plus_outer_edges():
    for m, n in ((1, 1), (2, 1), (2, 2), (3, 2)):
        G = build_box(m, n, 1.0)
        d = dual_graph(G)
        outer_incident = len(d.dual.boundary)
        assert len(d.dual.vertices) == len(G.inner_faces) + outer_incident
        assert outer_incident == 2 * (2 * m) + 2 * (2 * n)


def test_dual_rejects_leafy_and_disconnected():
    leafy = WeightedPlanarGraph([(0, 0), (1, 0)], {((0, 0), (1, 0)): 1.0})
    with pytest.raises(GraphError):
        dual_graph(leafy)
    two = WeightedPlanarGraph(
        [(0, 0), (1, 0), (5, 5)], {((0, 0), (1, 0)): 1.0}
    )
    with pytest.raises(GraphError):
        dual_graph(two)


def test_boundary_pairs_telescope():
    d = box_dual(2)
    zeta = slope_boundary(2, Fraction(2, 5), d)
    total = sum(zeta[p] - zeta[m] for m, p in d.boundary_pairs.values())
    assert total == 0


def test_slope_boundary_values():
    d = box_dual(3)
    z = slope_boundary(3, 0.4, d)
    assert z[(Fraction(5, 2), Fraction(7, 2))] == 1  # floor(0.4 * 2.5) = 1
    assert z[(Fraction(-5, 2), Fraction(7, 2))] == -1  # floor(-1.0) = -1
    z0 = slope_boundary(3, 0, d)
    assert all(v == 0 for _, v in z0.items())


def test_slope_boundary_monotone_in_x():
    d = box_dual(3)
    z = slope_boundary(3, Fraction(1, 3), d)
    top = sorted((p, v) for p, v in z.items() if p[1] == Fraction(7, 2))
    vals = [v for _, v in top]
    assert vals == sorted(vals)


def test_boundary_height_parts():
    z = BoundaryHeight({(0, 0): 2, (1, 0): -1, (2, 0): 0})
    assert dict(z.positive_part().items())[(Fraction(0), Fraction(0))] == 2
    assert dict(z.negative_part().items())[(Fraction(1), Fraction(0))] == 1
    recon = {
        p: z.positive_part()[p] - z.negative_part()[p] for p in z.domain()
    }
    assert recon == dict(z.items())


def test_jump_set_examples():
    assert not in_jump_set(0.4, 1)  # floor(.6) == floor(.2)
    assert in_jump_set(0.4, 2)  # floor(1.0) > floor(.6)
    assert jump_set(0.4, 3).columns == (-3, 0, 2)
    assert len(jump_set(0.01, 1000)) in (20, 21)


def test_jump_set_count_bound():
    for s in (0.003, 0.01, 0.07, Fraction(1, 6), 0.25, 0.4):
        for n in (10, 50, 301):
            count = len(jump_set(s, n))
            assert abs(count - 2 * n * float(as_slope(s))) <= 2


def test_jump_membership_equivalent_formulation():
    # membership agrees with "some integer lies in (s(k-1/2), s(k+1/2)]"
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        s = Fraction(int(rng.integers(1, 999)), 1000)
        k = int(rng.integers(-200, 201))
        lo, hi = s * (k - Fraction(1, 2)), s * (k + Fraction(1, 2))
        has_int = any(lo < m <= hi for m in range(math.floor(lo), math.floor(hi) + 2))
        assert in_jump_set(s, k) == has_int


def test_source_sets():
    top, bottom = source_sets(3, Fraction(2, 5))
    assert [tuple(map(int, p)) for p in top] == [(-3, 3), (0, 3), (2, 3)]
    assert [tuple(map(int, p)) for p in bottom] == [(-3, -3), (0, -3), (2, -3)]
    assert source_sets(3, 0) == ((), ())
    assert len(top) == len(bottom) == len(jump_set(Fraction(2, 5), 3))


def test_strip_union_structure():
    s, n = Fraction(1, 50), 32
    assert strip_halfwidth(s) == 2
    G = strip_union_domain(n, s)
    comps = G.components()
    assert len(comps) == len(jump_set(s, n))
    # each component holds exactly one top and one bottom source
    top, bottom = source_sets(n, s)
    for comp in comps:
        assert sum(1 for p in top if p in comp) == 1
        assert sum(1 for p in bottom if p in comp) == 1


def test_strip_union_rejections():
    # floor-generated jumps are spaced so wide that strips only fail by
    # hitting the vertical boundary, never by overlapping each other
    with pytest.raises(GraphError):
        strip_union_domain(20, Fraction(1, 20))


def test_narrow_strips_are_single_columns():
    G = strip_union_domain(6, 0.4)  # half-width 0
    assert strip_halfwidth(0.4) == 0
    assert len(G.components()) == len(jump_set(0.4, 6))
    assert all(len(c) == 13 for c in G.components())


def test_as_slope_float_snapping():
    assert as_slope(0.4) == Fraction(2, 5)
    assert as_slope(1 / 3) == Fraction(1, 3)
    assert as_slope("2/7") == Fraction(2, 7)
