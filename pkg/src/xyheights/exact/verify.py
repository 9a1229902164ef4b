"""Identity and inequality verifiers connecting the two exact engines.

Each check evaluates both sides by genuinely different code paths: the XY
side sums integer currents with vertex conservation, the height side sums
window-restricted integer heights on the dual graph.  Agreement is therefore
a real test of the boundary-spin correspondence, not a tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from ..domains import (
    ContinuumDomain,
    DomainError,
    domain_dual,
    domain_skeleton,
    satisfies_central_column_property,
    step_boundary,
    zero_boundary,
)
from ..geometry import (
    BoundaryHeight,
    DualGraphResult,
    WeightedPlanarGraph,
    as_coord,
    build_box,
    box_dual,
    dual_graph,
)
from .base import ChargeAssignment, ExactValue
from .flows import flow_log_sum, xy_correlator, xy_partition, _start_cutoff, frontier_width, _converge_in_cutoff
from .heights import HeightModelSpec, height_partition, default_window_halfwidth


@dataclass(frozen=True)
class IdentityReport:
    lhs_log: float
    rhs_log: float

    @property
    def relative_error(self) -> float:
        if self.lhs_log == self.rhs_log:
            return 0.0
        return abs(math.expm1(self.lhs_log - self.rhs_log))

    @property
    def lhs(self) -> float:
        return math.exp(self.lhs_log)

    @property
    def rhs(self) -> float:
        return math.exp(self.rhs_log)


def boundary_charges(dual: DualGraphResult, zeta) -> ChargeAssignment:
    """Spin exponents induced by a dual boundary condition: the jump of zeta
    across each primal boundary vertex along the outer walk."""
    if isinstance(zeta, BoundaryHeight):
        get = zeta.__getitem__
    else:
        zdict = {as_coord(p): int(v) for p, v in dict(zeta).items()}
        get = zdict.__getitem__
    charges = {}
    for u, (minus, plus) in dual.boundary_pairs.items():
        q = get(plus) - get(minus)
        if q:
            charges[u] = q
    return ChargeAssignment.of(charges)


def verify_kramers_wannier(n: int, beta: float, tol: float = 1e-9, H: int | None = None) -> IdentityReport:
    """Box partition function against the zero-boundary dual height model."""
    lhs = xy_partition(build_box(n, n, beta), tol=tol)
    dual = box_dual(n, J=beta)
    spec = HeightModelSpec(
        dual.dual,
        {p: 0 for p in dual.dual.boundary},
        window_halfwidth=H,
        tol=tol,
    )
    rhs = height_partition(spec)
    return IdentityReport(lhs_log=rhs.log_value, rhs_log=lhs.log_value)


def verify_kadanoff_ceva(
    G: WeightedPlanarGraph,
    zeta,
    tol: float = 1e-9,
    H: int | None = None,
    K: int | None = None,
) -> IdentityReport:
    """Dual height partition function with boundary zeta against the XY side
    with the induced boundary spin insertions."""
    dual = dual_graph(G)
    if isinstance(zeta, BoundaryHeight):
        pinned = {p: zeta[p] for p in dual.dual.boundary}
    elif callable(zeta):
        pinned = {p: int(zeta(p)) for p in dual.dual.boundary}
    else:
        pinned = {as_coord(p): int(v) for p, v in dict(zeta).items()}
    spec = HeightModelSpec(dual.dual, pinned, window_halfwidth=H, tol=tol)
    lhs = height_partition(spec)

    charges = boundary_charges(dual, pinned)
    K0 = _start_cutoff(G, charges, K)
    width = frontier_width(G)
    trunc: dict = {}
    rhs_log, _ = _converge_in_cutoff(
        lambda kk: flow_log_sum(G, charges, kk), K0, tol, width, trunc
    )
    return IdentityReport(lhs_log=lhs.log_value, rhs_log=rhs_log)


@dataclass(frozen=True)
class FkgReport:
    lhs_log: float  # log(Z^{zeta+} * Z^{-zeta-})
    rhs_log: float  # log(Z^{zeta} * Z^{0})

    @property
    def relative_margin(self) -> float:
        """(lhs - rhs) / rhs; the split-boundary inequality makes this >= 0."""
        return math.expm1(self.lhs_log - self.rhs_log)


def verify_fkg_boundary(n: int, beta: float, zeta, H: int | None = None, tol: float = 1e-9) -> FkgReport:
    """Product inequality between split and original boundary conditions."""
    dual = box_dual(n, J=beta)
    if not isinstance(zeta, BoundaryHeight):
        zeta = BoundaryHeight({as_coord(p): int(v) for p, v in dict(zeta).items()})
    if set(zeta.domain()) != dual.dual.boundary:
        raise ValueError("zeta must be defined exactly on the dual boundary")
    if H is None:
        H = default_window_halfwidth(beta)

    conditions = [
        zeta.positive_part(),
        zeta.negative_part().negate(),
        zeta,
        BoundaryHeight({p: 0 for p in zeta.domain()}),
    ]
    # One common window keeps the four sums directly comparable.
    vals = [v for bc in conditions for v in dict(bc.items()).values()]
    lo, hi = min(vals) - H, max(vals) + H
    logs = []
    for bc in conditions:
        spec = HeightModelSpec(dual.dual, dict(bc.items()), window_halfwidth=H, tol=tol)
        spec_window = (lo, hi)
        from .heights import _HeightContraction

        logs.append(_HeightContraction(spec.graph, spec.boundary, spec_window).run())
    return FkgReport(lhs_log=logs[0] + logs[1], rhs_log=logs[2] + logs[3])


# -- continuum-domain two-point ratio -----------------------------------------


def domain_slab_halfheight(gamma: ContinuumDomain) -> int:
    """The n for which the domain fits the slab |y| < n + 1/2 with full columns."""
    ys = []
    for (orient, level), ivs in gamma.lines.items():
        if orient == "v":
            ys += [ivs[0][0], ivs[-1][1]]
        else:
            ys.append(level)
    n = max(abs(y) for y in ys) - Fraction(1, 2)
    if n.denominator != 1 or n < 1:
        raise DomainError(f"domain has no integer slab half-height (got {n})")
    return int(n)


def domain_two_point(gamma: ContinuumDomain, beta: float, tol: float = 1e-9) -> float:
    """Boundary two-point function of a slab domain.

    Equals the spin correlator between the mid-top and mid-bottom boundary
    vertices of the domain's primal graph, with couplings beta times the
    cable overlap lengths; by the boundary correspondence it also equals the
    ratio of step-to-flat pinned cable masses.
    """
    n = domain_slab_halfheight(gamma)
    if not satisfies_central_column_property(gamma, n):
        raise DomainError("domain does not contain the central columns of its slab")
    if not gamma.is_simply_connected():
        raise DomainError("two-point ratio requires a simply connected domain")
    primal = domain_dual(gamma)
    scaled = WeightedPlanarGraph(
        primal.vertices,
        {e: beta * J for e, J in primal.edges.items()},
        primal.boundary,
    )
    u, v = (0, n), (0, -n)
    return xy_correlator(scaled, ChargeAssignment.two_point(u, v), tol=tol).value


def domain_step_ratio_heights(gamma: ContinuumDomain, beta: float, H: int | None = None) -> float:
    """The same ratio evaluated on the height side: Z^{01} / Z^{00} on the
    domain skeleton.  Used as the independent cross-check of domain_two_point."""
    skel = domain_skeleton(gamma)
    graph = skel.graph(beta)
    if H is None:
        H = default_window_halfwidth(beta)
    from .heights import _HeightContraction

    z01 = _HeightContraction(graph, step_boundary(gamma), (-H, 1 + H)).run()
    z00 = _HeightContraction(graph, zero_boundary(gamma), (-H, 1 + H)).run()
    if z01 == -math.inf:
        return 0.0
    return math.exp(z01 - z00)
