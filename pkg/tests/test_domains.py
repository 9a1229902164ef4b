from fractions import Fraction as F

import pytest

from xyheights.domains import (
    ContinuumDomain,
    DomainError,
    carrier_component,
    continuum_box,
    domain_dual,
    domain_skeleton,
    half_plane_intersect,
    remove_closed_pieces,
    remove_vertical_strip,
    satisfies_central_column_property,
    slope_boundary_domain,
    step_boundary,
    zero_boundary,
)
from xyheights.geometry import build_box
from xyheights.serialize import (
    domain_from_json,
    domain_to_json,
    graph_from_json,
    graph_to_json,
)

HALF = F(1, 2)


def test_box_basics():
    g = continuum_box(1)
    assert g.dual_vertices() == [
        (-HALF, -HALF), (-HALF, HALF), (HALF, -HALF), (HALF, HALF)
    ]
    assert g.lebesgue() == 12
    assert len(g.boundary_points()) == 8
    assert g.is_simply_connected()


def test_box_always_bounded():
    g = continuum_box(5, 2)
    x0, x1, y0, y1 = g.bbox()
    assert x0 == -F(11, 2) and x1 == F(11, 2)
    assert y0 == -F(5, 2) and y1 == F(5, 2)


def test_half_plane_clip():
    clip = half_plane_intersect(continuum_box(2, 1), F(-3, 2), "right")
    for (orient, level), ivs in clip.lines.items():
        if orient == "v":
            assert level > F(-3, 2)
        else:
            assert all(lo >= F(-3, 2) for lo, _ in ivs)


def test_domain_dual_of_box_is_unit_coupled_box():
    D = domain_dual(continuum_box(2))
    B = build_box(2, 2)
    assert set(D.vertices) == set(B.vertices)
    assert set(D.edges) == set(B.edges)
    assert all(J == 1.0 for J in D.edges.values())


def test_clipping_never_increases_couplings():
    g = continuum_box(2)
    full = domain_dual(g)
    clipped = domain_dual(carrier_component(half_plane_intersect(g, F(-17, 10), "right")))
    for e, J in clipped.edges.items():
        assert J <= full.edges[e] + 1e-15


def test_single_dual_vertex_square():
    segs = {
        ("v", HALF): [(-F(1, 10), F(11, 10))],
        ("h", HALF): [(-F(1, 10), F(11, 10))],
    }
    g = ContinuumDomain(segs)
    assert g.dual_vertices() == [(HALF, HALF)]
    D = domain_dual(g)
    assert len(D.vertices) == 4
    assert len(D.edges) == 4


def test_hole_detection():
    g = continuum_box(2)
    pieces = []
    for lv in (-HALF, HALF):
        pieces.append((("v", lv), -F(3, 5), F(3, 5)))
        pieces.append((("h", lv), -F(3, 5), F(3, 5)))
    holed = remove_closed_pieces(g, pieces)
    assert holed.is_connected()
    assert not holed.complement_connected()
    assert not holed.is_simply_connected()
    with pytest.raises(DomainError):
        domain_dual(holed)


def test_openness_validation():
    with pytest.raises(DomainError):
        ContinuumDomain({("v", HALF): [(-1, 1)]})  # dual vertex with no crossing line


def test_strip_removal_splits_domain():
    g = remove_vertical_strip(continuum_box(3), F(3, 2), F(3, 20))
    assert len(g.components()) == 2
    assert g.lebesgue() < continuum_box(3).lebesgue()


def test_carrier_component():
    g = remove_vertical_strip(continuum_box(3), F(3, 2), F(3, 20))
    comp = carrier_component(g)
    assert comp.contains((HALF, 0))
    assert comp.is_simply_connected()
    with pytest.raises(DomainError):
        carrier_component(remove_vertical_strip(g, F(1, 2), F(3, 20)), seed=(HALF, 0))


def test_skeleton_of_box():
    sk = domain_skeleton(continuum_box(1))
    assert len(sk.sites) == 4
    assert len(sk.pinned) == 8
    assert len(sk.edges) == 12
    G = sk.graph(0.7)
    assert all(J == pytest.approx(0.7) for J in G.edges.values())
    # skeleton graph is the dual-box height graph
    assert set(G.boundary) == set(sk.pinned)


def test_boundary_conditions_on_domains():
    g = continuum_box(2)
    assert set(zero_boundary(g).values()) == {0}
    sb = step_boundary(g)
    assert all(v == (0 if p[0] < 0 else 1) for p, v in sb.items())
    sl = slope_boundary_domain(g, F(2, 5))
    assert sl[(F(5, 2), HALF)] == 1
    assert sl[(-F(5, 2), HALF)] == -1


def test_central_column_property():
    assert satisfies_central_column_property(continuum_box(4, 2), 2)
    clipped = half_plane_intersect(continuum_box(4, 2), F(1, 4), "left")
    assert not satisfies_central_column_property(clipped, 2)


def test_domain_serialization_round_trip():
    g = remove_vertical_strip(continuum_box(2), F(3, 2), F(1, 10))
    doc = domain_to_json(g)
    g2 = domain_from_json(doc)
    assert g2.lines == g.lines


def test_graph_serialization_round_trip():
    G = build_box(2, 1, 0.35)
    doc = graph_to_json(G)
    G2 = graph_from_json(doc)
    assert G2.vertices == G.vertices
    assert G2.edges == G.edges
    assert G2.boundary == G.boundary
