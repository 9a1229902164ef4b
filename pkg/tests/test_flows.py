import math
import random

import numpy as np
import pytest

from xyheights.exact import ChargeAssignment, xy_correlator, xy_partition, xy_two_point
from xyheights.exact.flows import (
    choose_current_cutoff,
    frontier_width,
    two_point_edge_sensitivity,
)
from xyheights.geometry import WeightedPlanarGraph, build_box
from xyheights.weights import weight


def quadrature_oracle(edges, charges, Q=64):
    """Angle-grid evaluation of (Z, unnormalized insertion), gauge-fixing one
    vertex.  Exact up to aliasing, which is far below 1e-12 at these J."""
    verts = sorted({v for e in edges for v in e})
    free = verts[1:]
    grids = np.meshgrid(*([np.arange(Q) * 2 * np.pi / Q] * len(free)), indexing="ij")
    theta = {verts[0]: 0.0}
    theta.update({v: g for v, g in zip(free, grids)})
    w = np.ones_like(grids[0]) if free else np.array(1.0)
    for (u, v), J in edges.items():
        w = w * np.exp(J * np.cos(theta[u] - theta[v]))
    ins = np.array(1.0, dtype=complex)
    for v, q in charges.items():
        ins = ins * np.exp(1j * q * theta[v])
    Z = w.mean()
    N = (w * ins).mean()
    return Z, N.real


def test_single_edge_partition():
    e = WeightedPlanarGraph([(0, 0), (1, 0)], {((0, 0), (1, 0)): 1.0})
    assert xy_partition(e).value == pytest.approx(weight(1.0, 0), rel=1e-12)


def test_two_edge_path_factorizes():
    p = WeightedPlanarGraph(
        [(0, 0), (1, 0), (2, 0)], {((0, 0), (1, 0)): 1.0, ((1, 0), (2, 0)): 1.0}
    )
    assert xy_partition(p).value == pytest.approx(weight(1.0, 0) ** 2, rel=1e-12)
    assert xy_partition(p).value == pytest.approx(1.602923, rel=1e-6)


def test_single_edge_correlator():
    e = WeightedPlanarGraph([(0, 0), (1, 0)], {((0, 0), (1, 0)): 1.0})
    c = xy_two_point(e, (0, 0), (1, 0))
    assert c.value == pytest.approx(weight(1.0, 1) / weight(1.0, 0), rel=1e-12)
    assert c.value == pytest.approx(0.4463900, abs=1e-7)


def test_zero_coupling_normalization():
    assert xy_partition(build_box(1, 1, 0.0)).value == 1.0


def test_unbalanced_charge_vanishes():
    e = WeightedPlanarGraph([(0, 0), (1, 0)], {((0, 0), (1, 0)): 1.0})
    assert xy_correlator(e, ChargeAssignment.of({(0, 0): 1})).value == 0.0


def test_independent_spins_uncorrelated():
    G = build_box(1, 1, 0.0)
    assert xy_two_point(G, (-1, -1), (1, 1)).value == 0.0


def test_square_against_quadrature():
    J = 0.8
    edges = {
        ((0, 0), (1, 0)): J, ((1, 0), (1, 1)): J,
        ((1, 1), (0, 1)): J, ((0, 0), (0, 1)): J,
    }
    sq = WeightedPlanarGraph([(0, 0), (1, 0), (1, 1), (0, 1)], edges)
    Zq, Nq = quadrature_oracle(edges, {(0, 0): 1, (1, 1): -1})
    assert xy_partition(sq).value == pytest.approx(Zq, rel=1e-12)
    assert xy_two_point(sq, (0, 0), (1, 1)).value == pytest.approx(Nq / Zq, rel=1e-12)


def test_nonuniform_couplings_against_quadrature():
    rng = random.Random(3)
    edges = {
        ((0, 0), (1, 0)): rng.uniform(0.1, 1.2),
        ((1, 0), (1, 1)): rng.uniform(0.1, 1.2),
        ((1, 1), (0, 1)): rng.uniform(0.1, 1.2),
        ((0, 0), (0, 1)): rng.uniform(0.1, 1.2),
        ((1, 0), (2, 0)): rng.uniform(0.1, 1.2),
    }
    G = WeightedPlanarGraph([(0, 0), (1, 0), (1, 1), (0, 1), (2, 0)], edges)
    Zq, Nq = quadrature_oracle(edges, {(0, 1): 1, (2, 0): -1})
    assert xy_partition(G).value == pytest.approx(Zq, rel=1e-11)
    assert xy_two_point(G, (0, 1), (2, 0)).value == pytest.approx(Nq / Zq, rel=1e-11)


def test_higher_charge_insertions_against_quadrature():
    J = 0.9
    edges = {
        ((0, 0), (1, 0)): J, ((1, 0), (1, 1)): J,
        ((1, 1), (0, 1)): J, ((0, 0), (0, 1)): J,
    }
    sq = WeightedPlanarGraph([(0, 0), (1, 0), (1, 1), (0, 1)], edges)
    charges = {(0, 0): 2, (1, 1): -2}
    Zq, Nq = quadrature_oracle(edges, charges)
    c = xy_correlator(sq, ChargeAssignment.of(charges))
    assert c.value == pytest.approx(Nq / Zq, rel=1e-11)


def test_disconnected_graph_factorizes():
    edges = {((0, 0), (1, 0)): 1.0, ((5, 0), (6, 0)): 0.5}
    G = WeightedPlanarGraph([(0, 0), (1, 0), (5, 0), (6, 0)], edges)
    assert xy_partition(G).value == pytest.approx(
        weight(1.0, 0) * weight(0.5, 0), rel=1e-12
    )
    # charges split across components must balance per component
    c = xy_correlator(G, ChargeAssignment.of({(0, 0): 1, (5, 0): -1}))
    assert c.value == 0.0


def test_cutoff_escalation_reports_certified_error():
    z = xy_partition(build_box(2, 2, 1.0), tol=1e-9)
    assert z.error_estimate <= 1e-9
    assert z.truncation["companion"] == "upward"


def test_cutoff_convergence_invariant_on_l2():
    # consecutive cutoffs agree below 1e-10 once the escalation settles
    for beta in (0.5, 1.0, 2.0):
        z = xy_partition(build_box(2, 2, beta), tol=1e-10)
        assert z.error_estimate < 1e-10


def test_frontier_width():
    assert frontier_width(build_box(1, 1, 1.0)) == 4
    assert frontier_width(build_box(2, 2, 1.0)) == 6


def test_choose_cutoff_monotone_in_coupling():
    assert choose_current_cutoff(0.2) <= choose_current_cutoff(1.0) <= choose_current_cutoff(2.0)


def test_edge_sensitivity_matches_direct_evaluations():
    G = build_box(1, 1, 1.0)
    rng = random.Random(7)
    J = {e: 0.2 + 0.8 * rng.random() for e in G.edges}
    Gb = WeightedPlanarGraph(G.vertices, J, G.boundary)
    u, v = (-1, 0), (1, 0)
    base, per_edge = two_point_edge_sensitivity(Gb, u, v, 0.1, K=5)
    direct = xy_two_point(Gb, u, v, K=5, estimate_error=False).value
    assert base == pytest.approx(direct, rel=1e-13)
    for e, val in list(per_edge.items())[::3]:
        J2 = dict(J)
        J2[e] += 0.1
        G2 = WeightedPlanarGraph(G.vertices, J2, G.boundary)
        d = xy_two_point(G2, u, v, K=5, estimate_error=False).value
        assert val == pytest.approx(d, rel=1e-12)


def test_correlator_monotone_under_coupling_increase():
    # spot check of the correlation inequality the sensitivity sweep feeds
    G = build_box(1, 1, 0.6)
    base, per_edge = two_point_edge_sensitivity(G, (-1, -1), (1, 1), 0.1, K=5)
    assert all(val >= base - 1e-12 for val in per_edge.values())
