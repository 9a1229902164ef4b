"""Continuum domains on the cable system of half-integer grid lines.

The cable system is the union of all vertical lines x in Z+1/2 and all
horizontal lines y in Z+1/2.  A domain is a bounded open subset with finitely
many components, stored per line as disjoint open intervals with exact
rational endpoints.  Crossings of the two line families happen exactly at
the dual lattice points (Z+1/2)^2, which is what makes connectivity and
duality computations finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping

from .geometry import (
    Coord,
    GraphError,
    WeightedPlanarGraph,
    as_coord,
    as_slope,
    edge_key,
)

HALF = Fraction(1, 2)

# A line of the cable system: ("v", x-level) carries intervals in y,
# ("h", y-level) carries intervals in x.
Line = tuple[str, Fraction]
Interval = tuple[Fraction, Fraction]


class DomainError(ValueError):
    """Raised for invalid continuum domains or unsupported operations."""


def _as_frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _merge_intervals(intervals: Iterable[Interval]) -> list[Interval]:
    """Union of open intervals as a sorted list of disjoint open intervals."""
    ivs = sorted((lo, hi) for lo, hi in intervals if lo < hi)
    out: list[Interval] = []
    for lo, hi in ivs:
        if out and lo <= out[-1][1]:  # overlapping or abutting opens stay separate
            if lo < out[-1][1]:
                out[-1] = (out[-1][0], max(out[-1][1], hi))
                continue
        out.append((lo, hi))
    return out


def _is_half_integer(x: Fraction) -> bool:
    return (2 * x).denominator == 1 and (2 * x).numerator % 2 == 1


class ContinuumDomain:
    """Bounded open subset of the cable system.

    Parameters
    ----------
    segments : mapping Line -> iterable of (lo, hi)
        Open intervals per line; overlapping intervals are merged.
    """

    def __init__(self, segments: Mapping[Line, Iterable[Interval]]):
        self.lines: dict[Line, list[Interval]] = {}
        for (orient, level), ivs in segments.items():
            level = _as_frac(level)
            if orient not in ("v", "h"):
                raise DomainError(f"unknown line orientation {orient!r}")
            if not _is_half_integer(level):
                raise DomainError(f"cable lines sit at half-integer levels, got {level}")
            merged = _merge_intervals(
                ((_as_frac(lo), _as_frac(hi)) for lo, hi in ivs)
            )
            if merged:
                self.lines[(orient, level)] = merged
        self._check_open_at_junctions()

    # -- structure ----------------------------------------------------------

    def _check_open_at_junctions(self) -> None:
        # A dual lattice point contained on one line must be interior on the
        # crossing line too, otherwise the set is not open in the cable
        # topology.
        for p in self._junction_candidates():
            on_v = self._contains_on_line(("v", p[0]), p[1])
            on_h = self._contains_on_line(("h", p[1]), p[0])
            if on_v != on_h:
                raise DomainError(
                    f"domain is not open at dual vertex {p}: present on one line only"
                )

    def _junction_candidates(self):
        seen = set()
        for (orient, level), ivs in self.lines.items():
            for lo, hi in ivs:
                start = math.floor(lo - HALF) + 1
                t = Fraction(start) + HALF
                while t <= hi:
                    if lo < t < hi:
                        p = (level, t) if orient == "v" else (t, level)
                        if p not in seen:
                            seen.add(p)
                            yield p
                    t += 1

    def _contains_on_line(self, line: Line, t: Fraction) -> bool:
        for lo, hi in self.lines.get(line, ()):
            if lo < t < hi:
                return True
        return False

    def contains(self, p) -> bool:
        x, y = _as_frac(p[0]), _as_frac(p[1])
        if _is_half_integer(x) and self._contains_on_line(("v", x), y):
            return True
        if _is_half_integer(y) and self._contains_on_line(("h", y), x):
            return True
        return False

    def dual_vertices(self) -> list[Coord]:
        """Dual lattice points (Z+1/2)^2 contained in the domain."""
        return sorted(set(self._junction_candidates()))

    def boundary_points(self) -> list[Coord]:
        """Endpoints of the maximal open intervals."""
        pts = set()
        for (orient, level), ivs in self.lines.items():
            for lo, hi in ivs:
                for t in (lo, hi):
                    pts.add((level, t) if orient == "v" else (t, level))
        return sorted(pts)

    def lebesgue(self) -> Fraction:
        return sum((hi - lo for ivs in self.lines.values() for lo, hi in ivs), Fraction(0))

    def is_empty(self) -> bool:
        return not self.lines

    def bbox(self) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        xs, ys = [], []
        for (orient, level), ivs in self.lines.items():
            lo, hi = ivs[0][0], ivs[-1][1]
            if orient == "v":
                xs.append(level)
                ys += [lo, hi]
            else:
                ys.append(level)
                xs += [lo, hi]
        return min(xs), max(xs), min(ys), max(ys)

    # -- connectivity ---------------------------------------------------------

    def _interval_ids(self):
        ids = {}
        for line in sorted(self.lines):
            for i, iv in enumerate(self.lines[line]):
                ids[(line, i)] = len(ids)
        return ids

    def _interval_of(self, line: Line, t: Fraction):
        for i, (lo, hi) in enumerate(self.lines.get(line, ())):
            if lo < t < hi:
                return (line, i)
        return None

    def components(self) -> list["ContinuumDomain"]:
        ids = self._interval_ids()
        parent = list(range(len(ids)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb

        for x, y in self._junction_candidates():
            iv = self._interval_of(("v", x), y)
            ih = self._interval_of(("h", y), x)
            if iv is not None and ih is not None:
                union(ids[iv], ids[ih])
        groups: dict[int, dict[Line, list[Interval]]] = {}
        for (line, i), idx in ids.items():
            root = find(idx)
            groups.setdefault(root, {}).setdefault(line, []).append(self.lines[line][i])
        return [ContinuumDomain(g) for g in groups.values()]

    def is_connected(self) -> bool:
        return len(self.components()) <= 1

    def complement_connected(self) -> bool:
        """Whether the cable system minus the domain is connected.

        The complement is examined inside a padded bounding box; pieces
        touching the box frame are identified with the unbounded outside.
        """
        if self.is_empty():
            return True
        x0, x1, y0, y1 = self.bbox()
        x0, x1, y0, y1 = x0 - 1, x1 + 1, y0 - 1, y1 + 1

        def levels(a, b):
            t = Fraction(math.floor(a - HALF) + 1) + HALF
            out = []
            while t <= b:
                out.append(t)
                t += 1
            return out

        pieces: list[tuple[Line, Fraction, Fraction]] = []  # closed intervals
        OUTSIDE = -1
        for orient, lvls, lo_box, hi_box in (
            ("v", levels(x0, x1), y0, y1),
            ("h", levels(y0, y1), x0, x1),
        ):
            for level in lvls:
                line = (orient, level)
                open_ivs = self.lines.get(line, [])
                cur = lo_box
                for lo, hi in open_ivs:
                    if cur <= lo:
                        pieces.append((line, cur, lo))
                    cur = hi
                if cur <= hi_box:
                    pieces.append((line, cur, hi_box))

        parent: dict[int, int] = {OUTSIDE: OUTSIDE}
        for i in range(len(pieces)):
            parent[i] = i

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb

        by_line: dict[Line, list[int]] = {}
        for i, (line, lo, hi) in enumerate(pieces):
            by_line.setdefault(line, []).append(i)
            if lo == (y0 if line[0] == "v" else x0) or hi == (y1 if line[0] == "v" else x1):
                union(i, OUTSIDE)

        def piece_containing(line, t):
            for i in by_line.get(line, []):
                _, lo, hi = pieces[i]
                if lo <= t <= hi:
                    return i
            return None

        for x in levels(x0, x1):
            for y in levels(y0, y1):
                pv = piece_containing(("v", x), y)
                ph = piece_containing(("h", y), x)
                if pv is not None and ph is not None:
                    union(pv, ph)

        return all(find(i) == find(OUTSIDE) for i in range(len(pieces)))

    def is_simply_connected(self) -> bool:
        """Connected, complement connected, and containing a dual vertex."""
        return (
            bool(self.dual_vertices())
            and self.is_connected()
            and self.complement_connected()
        )

    def __repr__(self):
        nseg = sum(len(v) for v in self.lines.values())
        return f"ContinuumDomain({len(self.lines)} lines, {nseg} segments, Leb={float(self.lebesgue()):g})"


# -- constructors and set operations -----------------------------------------


def continuum_box(n: int, m: int | None = None) -> ContinuumDomain:
    """Open cable box (-n-1/2, n+1/2) x (-m-1/2, m+1/2); square when m omitted."""
    if m is None:
        m = n
    if n < 1 or m < 1:
        raise DomainError("box radii must be >= 1")
    segs: dict[Line, list[Interval]] = {}
    for k in range(-n, n):
        segs[("v", Fraction(k) + HALF)] = [(-Fraction(m) - HALF, Fraction(m) + HALF)]
    for k in range(-m, m):
        segs[("h", Fraction(k) + HALF)] = [(-Fraction(n) - HALF, Fraction(n) + HALF)]
    return ContinuumDomain(segs)


def half_plane_intersect(gamma: ContinuumDomain, r, side: str) -> ContinuumDomain:
    """Intersection with the open half-plane x > r ("right") or x < r ("left")."""
    r = _as_frac(r)
    if side not in ("left", "right"):
        raise DomainError("side must be 'left' or 'right'")
    segs: dict[Line, list[Interval]] = {}
    for (orient, level), ivs in gamma.lines.items():
        if orient == "v":
            keep = level > r if side == "right" else level < r
            if keep:
                segs[(orient, level)] = list(ivs)
        else:
            clipped = []
            for lo, hi in ivs:
                nlo, nhi = (max(lo, r), hi) if side == "right" else (lo, min(hi, r))
                if nlo < nhi:
                    clipped.append((nlo, nhi))
            if clipped:
                segs[(orient, level)] = clipped
    return ContinuumDomain(segs)


def remove_vertical_strip(gamma: ContinuumDomain, center, halfwidth) -> ContinuumDomain:
    """Remove the closed strip [center - halfwidth, center + halfwidth] x R."""
    c, w = _as_frac(center), _as_frac(halfwidth)
    a, b = c - w, c + w
    segs: dict[Line, list[Interval]] = {}
    for (orient, level), ivs in gamma.lines.items():
        if orient == "v":
            if level < a or level > b:
                segs[(orient, level)] = list(ivs)
        else:
            kept = []
            for lo, hi in ivs:
                if lo < a:
                    kept.append((lo, min(hi, a)))
                if hi > b:
                    kept.append((max(lo, b), hi))
            kept = [(lo, hi) for lo, hi in kept if lo < hi]
            if kept:
                segs[(orient, level)] = kept
    return ContinuumDomain(segs)


def remove_closed_pieces(
    gamma: ContinuumDomain, pieces: Iterable[tuple[Line, Fraction, Fraction]]
) -> ContinuumDomain:
    """Subtract closed intervals [lo, hi] on specific lines (hi may equal lo)."""
    removal: dict[Line, list[Interval]] = {}
    for line, lo, hi in pieces:
        removal.setdefault(line, []).append((_as_frac(lo), _as_frac(hi)))
    segs: dict[Line, list[Interval]] = {}
    for line, ivs in gamma.lines.items():
        cuts = sorted(removal.get(line, []))
        kept: list[Interval] = []
        for lo, hi in ivs:
            open_parts = [(lo, hi)]
            for clo, chi in cuts:
                nxt = []
                for plo, phi in open_parts:
                    if chi < plo or clo > phi:
                        nxt.append((plo, phi))
                        continue
                    if plo < clo:
                        nxt.append((plo, clo))
                    if chi < phi:
                        nxt.append((chi, phi))
                open_parts = nxt
            kept += [p for p in open_parts if p[0] < p[1]]
        if kept:
            segs[line] = kept
    return ContinuumDomain(segs)


def carrier_component(gamma: ContinuumDomain, seed=(HALF, 0)) -> ContinuumDomain:
    """Component containing the seed point next to the jump axis.

    Fails when the component is not simply connected, since the boundary-jump
    ratio is only defined there.
    """
    seed = (_as_frac(seed[0]), _as_frac(seed[1]))
    if not gamma.contains(seed):
        raise DomainError(f"domain does not contain the seed point {seed}")
    for comp in gamma.components():
        if comp.contains(seed):
            if not comp.is_simply_connected():
                raise DomainError("carrier component is not simply connected")
            return comp
    raise DomainError("unreachable: seed not in any component")  # pragma: no cover


# -- dual (primal) graph of a domain -----------------------------------------


def _perp_segment(u: Coord, v: Coord) -> tuple[Line, Interval]:
    """Unit cable segment crossing the primal edge uv at its midpoint."""
    (x0, y0), (x1, y1) = u, v
    if y0 == y1 and abs(x1 - x0) == 1:  # horizontal edge
        mx = (x0 + x1) / 2
        return ("v", mx), (y0 - HALF, y0 + HALF)
    if x0 == x1 and abs(y1 - y0) == 1:  # vertical edge
        my = (y0 + y1) / 2
        return ("h", my), (x0 - HALF, x0 + HALF)
    raise DomainError(f"edge {u}-{v} is not a unit lattice edge")


def _overlap_length(gamma: ContinuumDomain, line: Line, lo: Fraction, hi: Fraction) -> Fraction:
    total = Fraction(0)
    for a, b in gamma.lines.get(line, ()):
        total += max(Fraction(0), min(b, hi) - max(a, lo))
    return total


def domain_dual(gamma: ContinuumDomain) -> WeightedPlanarGraph:
    """Primal graph of a simply connected domain.

    The vertex set is the union of unit squares around the contained dual
    vertices; each edge carries the Lebesgue length of the domain's
    intersection with the crossing unit cable segment.
    """
    duals = gamma.dual_vertices()
    if not duals:
        raise DomainError("domain contains no dual vertex")
    if not gamma.is_simply_connected():
        raise DomainError("domain dual requires a simply connected domain")
    vertices: set[Coord] = set()
    edges: dict[tuple[Coord, Coord], float] = {}
    for a, b in duals:
        sq = [
            (a - HALF, b - HALF),
            (a + HALF, b - HALF),
            (a + HALF, b + HALF),
            (a - HALF, b + HALF),
        ]
        vertices.update(sq)
        for i in range(4):
            u, v = sq[i], sq[(i + 1) % 4]
            e = edge_key(u, v)
            if e not in edges:
                line, (lo, hi) = _perp_segment(u, v)
                edges[e] = float(_overlap_length(gamma, line, lo, hi))
    G = WeightedPlanarGraph(vertices, edges)
    outer = set(G.outer_face)
    return WeightedPlanarGraph(vertices, edges, boundary=outer)


# -- discrete skeleton used by the cable sampler ------------------------------


@dataclass(frozen=True)
class SkeletonEdge:
    """Piece of a cable line between two consecutive marked points."""

    u: Coord
    v: Coord  # along-line successor of u
    line: Line
    lo: Fraction
    hi: Fraction

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo


@dataclass
class DomainSkeleton:
    """Discrete height graph carried by a domain.

    Sites are the contained dual vertices; pinned points are the boundary
    points of the domain.  Each skeleton edge is a maximal piece of cable
    between consecutive marked points and will carry coupling beta * length.
    """

    domain: ContinuumDomain
    sites: list[Coord]
    pinned: list[Coord]
    edges: list[SkeletonEdge]

    def graph(self, beta: float) -> WeightedPlanarGraph:
        verts = set(self.sites) | set(self.pinned)
        edges = {}
        for e in self.edges:
            key = edge_key(e.u, e.v)
            if key in edges:
                raise DomainError(f"duplicate skeleton edge {key}")
            edges[key] = beta * float(e.length)
        return WeightedPlanarGraph(verts, edges, boundary=self.pinned)


def domain_skeleton(gamma: ContinuumDomain) -> DomainSkeleton:
    sites = set(gamma.dual_vertices())
    pinned = set(gamma.boundary_points())
    if overlap := sites & pinned:
        raise DomainError(f"dual vertices on the boundary are not supported: {overlap}")
    edges: list[SkeletonEdge] = []
    for (orient, level), ivs in sorted(gamma.lines.items()):
        for lo, hi in ivs:
            marks = [lo]
            t = Fraction(math.floor(lo - HALF) + 1) + HALF
            while t < hi:
                if t > lo:
                    marks.append(t)
                t += 1
            marks.append(hi)
            for a, b in zip(marks, marks[1:]):
                pu = (level, a) if orient == "v" else (a, level)
                pv = (level, b) if orient == "v" else (b, level)
                edges.append(SkeletonEdge(u=pu, v=pv, line=(orient, level), lo=a, hi=b))
    return DomainSkeleton(domain=gamma, sites=sorted(sites), pinned=sorted(pinned), edges=edges)


# -- boundary conditions on domains -------------------------------------------


def zero_boundary(gamma: ContinuumDomain) -> dict[Coord, int]:
    return {p: 0 for p in gamma.boundary_points()}


def step_boundary(gamma: ContinuumDomain) -> dict[Coord, int]:
    """0 on boundary points left of the vertical axis, 1 on the right."""
    bc = {}
    for p in gamma.boundary_points():
        if p[0] == 0:
            raise DomainError("boundary point on the jump axis; step condition undefined")
        bc[p] = 0 if p[0] < 0 else 1
    return bc


def slope_boundary_domain(gamma: ContinuumDomain, s) -> dict[Coord, int]:
    """floor(s * x) on the boundary points of a domain."""
    s = as_slope(s)
    return {p: math.floor(s * p[0]) for p in gamma.boundary_points()}


def satisfies_central_column_property(gamma: ContinuumDomain, n: int) -> bool:
    """Domain contains the full cable cross-hatch of [-1, 1] x (-n-1/2, n+1/2)
    and stays inside the horizontal slab of height n."""
    lo, hi = -Fraction(n) - HALF, Fraction(n) + HALF
    for level in (-HALF, HALF):
        ivs = gamma.lines.get(("v", level), [])
        if not any(a <= lo and hi <= b for a, b in ivs):
            return False
    for k in range(-n, n):
        line = ("h", Fraction(k) + HALF)
        ivs = gamma.lines.get(line, [])
        if not any(a <= -1 and 1 <= b for a, b in ivs):
            return False
    for (orient, level), ivs in gamma.lines.items():
        if orient == "h" and not (lo < level < hi):
            return False
        if orient == "v" and any(a < lo or b > hi for a, b in ivs):
            return False
    return True
