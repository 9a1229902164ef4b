import math
from fractions import Fraction as F

import numpy as np
import pytest

from xyheights.domains import (
    carrier_component,
    continuum_box,
    half_plane_intersect,
)
from xyheights.exact.verify import (
    boundary_charges,
    domain_step_ratio_heights,
    domain_two_point,
    verify_fkg_boundary,
    verify_kadanoff_ceva,
    verify_kramers_wannier,
)
from xyheights.exact import xy_partition
from xyheights.geometry import (
    WeightedPlanarGraph,
    box_dual,
    build_box,
    dual_graph,
    slope_boundary,
)
from xyheights.domains import domain_dual


def test_kramers_wannier_small():
    for n, beta in ((1, 0.5), (1, 1.0), (1, 2.0), (2, 1.0)):
        rep = verify_kramers_wannier(n, beta)
        assert rep.relative_error <= 1e-9, (n, beta, rep.relative_error)


def test_kramers_wannier_trivial_at_zero_coupling():
    rep = verify_kramers_wannier(1, 0.0)
    assert rep.lhs == pytest.approx(1.0)
    assert rep.rhs == pytest.approx(1.0)


def test_kc_zero_boundary_reduces_to_kw():
    G = build_box(1, 1, 1.0)
    d = dual_graph(G)
    rep = verify_kadanoff_ceva(G, {p: 0 for p in d.dual.boundary})
    assert rep.relative_error <= 1e-10
    assert rep.rhs == pytest.approx(xy_partition(G).value, rel=1e-9)


def test_kc_single_step_pair():
    G = build_box(1, 1, 1.0)
    d = dual_graph(G)
    bpts = sorted(d.dual.boundary)
    zeta = {p: 0 for p in bpts}
    zeta[bpts[0]] = 1
    rep = verify_kadanoff_ceva(G, zeta)
    assert rep.relative_error <= 1e-9


def test_kc_sloped_boundary():
    for n, beta, s in ((1, 1.0, F(2, 5)), (2, 0.7, F(1, 3))):
        d = box_dual(n, J=beta)
        zeta = slope_boundary(n, s, d)
        rep = verify_kadanoff_ceva(build_box(n, n, beta), zeta)
        assert rep.relative_error <= 1e-9


def test_kc_constant_shift_invariance():
    G = build_box(1, 1, 0.9)
    d = dual_graph(G)
    zeta = {p: 0 for p in sorted(d.dual.boundary)}
    zeta[sorted(zeta)[2]] = 1
    shifted = {p: v + 5 for p, v in zeta.items()}
    r1 = verify_kadanoff_ceva(G, zeta)
    r2 = verify_kadanoff_ceva(G, shifted)
    assert r1.lhs_log == pytest.approx(r2.lhs_log, abs=1e-10)
    assert r1.relative_error <= 1e-9 and r2.relative_error <= 1e-9


def test_kc_on_clipped_domain_graph():
    gam = carrier_component(half_plane_intersect(continuum_box(2), F(-17, 10), "right"))
    Gd = domain_dual(gam)
    Gd = WeightedPlanarGraph(
        Gd.vertices, {e: 0.9 * J for e, J in Gd.edges.items()}, Gd.boundary
    )
    d = dual_graph(Gd)
    zeta = {p: (1 if p[0] > 0 else 0) for p in d.dual.boundary}
    rep = verify_kadanoff_ceva(Gd, zeta)
    assert rep.relative_error <= 1e-9


def test_boundary_charges_balance():
    d = box_dual(2)
    rng = np.random.default_rng(1)
    for _ in range(20):
        zeta = {p: int(rng.integers(-2, 3)) for p in d.dual.boundary}
        assert boundary_charges(d, zeta).total == 0


def test_fkg_trivial_for_signed_boundaries():
    d = box_dual(1)
    nonneg = {p: max(int(v), 0) for p, v in zip(sorted(d.dual.boundary), [1, 0, 1, 0, 0, 1, 0, 0])}
    rep = verify_fkg_boundary(1, 1.0, nonneg)
    assert rep.relative_margin == pytest.approx(0.0, abs=1e-12)
    nonpos = {p: -v for p, v in nonneg.items()}
    rep2 = verify_fkg_boundary(1, 1.0, nonpos)
    assert rep2.relative_margin == pytest.approx(0.0, abs=1e-12)


def test_fkg_mixed_boundaries_nonnegative_margin():
    d = box_dual(1)
    rng = np.random.default_rng(5)
    bpts = sorted(d.dual.boundary)
    for _ in range(15):
        zeta = {p: int(rng.integers(-1, 2)) for p in bpts}
        rep = verify_fkg_boundary(1, 1.0, zeta)
        assert rep.relative_margin >= -1e-12


def test_domain_two_point_cross_engine():
    gam = continuum_box(3, 1)
    a = domain_two_point(gam, 1.0)
    b = domain_step_ratio_heights(gam, 1.0, H=5)
    assert a == pytest.approx(b, rel=1e-8)


def test_domain_two_point_range_and_monotonicity():
    small = domain_two_point(continuum_box(2, 1), 1.0)
    big = domain_two_point(continuum_box(3, 1), 1.0)
    assert 0 < small <= 1
    assert 0 < big <= 1
    assert small <= big + 1e-12
    assert domain_two_point(continuum_box(2, 1), 0.0) == 0.0
