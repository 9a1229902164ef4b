"""Planar lattice graphs, their duals, and sloped boundary data.

Vertices are identified with their planar coordinates, stored as exact
``Fraction`` pairs so that half-integer dual positions and floor evaluations
never suffer from binary rounding.  Faces are derived from the embedding via
the rotation system (incident edges sorted by angle around each vertex).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

Coord = tuple[Fraction, Fraction]
Edge = tuple[Coord, Coord]  # stored with endpoints sorted


def as_coord(p) -> Coord:
    x, y = p
    return (Fraction(x), Fraction(y))


def as_slope(s) -> Fraction:
    """Interpret a slope parameter as an exact rational.

    Floats are snapped to the simplest nearby rational (denominator up to
    1e9) so that a literal like 0.4 means 2/5 and floor evaluations at exact
    multiples come out the way the decimal reads.
    """
    if isinstance(s, Fraction):
        return s
    if isinstance(s, int):
        return Fraction(s)
    if isinstance(s, str):
        return Fraction(s)
    if isinstance(s, float):
        return Fraction(s).limit_denominator(10**9)
    raise TypeError(f"cannot interpret {s!r} as a slope")


def edge_key(u: Coord, v: Coord) -> Edge:
    return (u, v) if u <= v else (v, u)


class GraphError(ValueError):
    """Raised when a graph violates a structural precondition."""


class WeightedPlanarGraph:
    """Embedded planar graph with per-edge couplings and a marked boundary.

    Parameters
    ----------
    vertices : iterable of coordinate pairs
    edges : mapping (u, v) -> J or iterable of ((u, v), J)
    boundary : iterable of vertices, optional
        Marked boundary set (used by height models; for primal graphs the
        outer-face vertices are derived independently during dualization).
    """

    def __init__(self, vertices, edges, boundary=()):
        self.vertices: list[Coord] = sorted({as_coord(v) for v in vertices})
        vset = set(self.vertices)
        self.edges: dict[Edge, float] = {}
        if isinstance(edges, Mapping):
            edges = edges.items()
        for (u, v), J in edges:
            u, v = as_coord(u), as_coord(v)
            if u not in vset or v not in vset:
                raise GraphError(f"edge ({u}, {v}) references unknown vertex")
            if u == v:
                raise GraphError("self-loops are not supported")
            if J < 0:
                raise GraphError(f"negative coupling on edge ({u}, {v})")
            self.edges[edge_key(u, v)] = float(J)
        self.boundary: set[Coord] = {as_coord(b) for b in boundary}
        if not self.boundary <= vset:
            raise GraphError("boundary contains unknown vertices")
        self._adj: dict[Coord, list[Coord]] = {v: [] for v in self.vertices}
        for u, v in self.edges:
            self._adj[u].append(v)
            self._adj[v].append(u)
        for v in self._adj:
            self._adj[v].sort()
        self._faces: list[tuple[Coord, ...]] | None = None
        self._outer: tuple[Coord, ...] | None = None

    # -- basic structure ---------------------------------------------------

    def neighbors(self, v: Coord) -> list[Coord]:
        return self._adj[as_coord(v)]

    def degree(self, v: Coord) -> int:
        return len(self._adj[as_coord(v)])

    def coupling(self, u, v) -> float:
        return self.edges[edge_key(as_coord(u), as_coord(v))]

    def components(self) -> list[set[Coord]]:
        seen: set[Coord] = set()
        comps = []
        for start in self.vertices:
            if start in seen:
                continue
            comp = {start}
            stack = [start]
            while stack:
                u = stack.pop()
                for w in self._adj[u]:
                    if w not in comp:
                        comp.add(w)
                        stack.append(w)
            seen |= comp
            comps.append(comp)
        return comps

    def is_connected(self) -> bool:
        return len(self.components()) <= 1

    def is_leafless(self) -> bool:
        return all(len(nbrs) != 1 for nbrs in self._adj.values())

    def subgraph(self, keep: Iterable[Coord]) -> "WeightedPlanarGraph":
        keep = {as_coord(v) for v in keep}
        edges = {e: J for e, J in self.edges.items() if e[0] in keep and e[1] in keep}
        return WeightedPlanarGraph(keep, edges, self.boundary & keep)

    # -- faces from the rotation system ------------------------------------

    def _face_walks(self) -> list[list[Coord]]:
        """All face walks of the embedding, each as a closed vertex cycle."""
        # next directed edge of (u -> v): rotate to the neighbor of v that
        # precedes u in counterclockwise order; this traces every face once.
        order: dict[Coord, list[Coord]] = {}
        index: dict[tuple[Coord, Coord], int] = {}
        for v in self.vertices:
            nbrs = sorted(
                self._adj[v],
                key=lambda w: math.atan2(float(w[1] - v[1]), float(w[0] - v[0])),
            )
            order[v] = nbrs
            for i, w in enumerate(nbrs):
                index[(v, w)] = i
        unused = {(u, v) for u in self.vertices for v in self._adj[u]}
        walks = []
        while unused:
            start = min(unused)
            walk = []
            cur = start
            while True:
                unused.discard(cur)
                u, v = cur
                walk.append(u)
                i = index[(v, u)]
                w = order[v][(i - 1) % len(order[v])]
                cur = (v, w)
                if cur == start:
                    break
            walks.append(walk)
        return walks

    @staticmethod
    def _walk_area(walk: Sequence[Coord]) -> Fraction:
        area = Fraction(0)
        for i, (x0, y0) in enumerate(walk):
            x1, y1 = walk[(i + 1) % len(walk)]
            area += x0 * y1 - x1 * y0
        return area / 2

    def _compute_faces(self) -> None:
        if not self.is_connected():
            raise GraphError("face tracing requires a connected graph")
        walks = self._face_walks()
        outer = min(walks, key=lambda w: self._walk_area(w))
        inner = [tuple(w) for w in walks if w is not outer]
        if any(self._walk_area(w) <= 0 for w in inner):
            raise GraphError("embedding produced an inverted face; graph is not planar as drawn")
        self._faces = inner
        self._outer = tuple(outer)

    @property
    def inner_faces(self) -> list[tuple[Coord, ...]]:
        if self._faces is None:
            self._compute_faces()
        return list(self._faces)

    @property
    def outer_face(self) -> tuple[Coord, ...]:
        if self._outer is None:
            self._compute_faces()
        return self._outer

    def euler_check(self) -> bool:
        """|V| - |E| + |F| == 2 with the outer face counted."""
        return len(self.vertices) - len(self.edges) + len(self.inner_faces) + 1 == 2

    def __repr__(self):
        return (
            f"WeightedPlanarGraph(|V|={len(self.vertices)}, |E|={len(self.edges)}, "
            f"|boundary|={len(self.boundary)})"
        )


# -- constructors ----------------------------------------------------------


def build_box(m: int, n: int, J: float = 1.0) -> WeightedPlanarGraph:
    """Nearest-neighbour graph on ([-m, m] x [-n, n]) cap Z^2 with coupling J."""
    if m < 1 or n < 1:
        raise ValueError("box radii must be >= 1")
    vertices = [(x, y) for x in range(-m, m + 1) for y in range(-n, n + 1)]
    edges = {}
    for x, y in vertices:
        if x < m:
            edges[((x, y), (x + 1, y))] = J
        if y < n:
            edges[((x, y), (x, y + 1))] = J
    boundary = [(x, y) for x, y in vertices if abs(x) == m or abs(y) == n]
    return WeightedPlanarGraph(vertices, edges, boundary)


def square_lattice_graph(columns: Mapping[int, Iterable[int]], J: float = 1.0) -> WeightedPlanarGraph:
    """Sub-lattice of Z^2 given as {x: iterable of y}, with nearest-neighbour edges."""
    vertices = [(x, y) for x, ys in columns.items() for y in ys]
    vset = set(vertices)
    edges = {}
    for x, y in vertices:
        if (x + 1, y) in vset:
            edges[((x, y), (x + 1, y))] = J
        if (x, y + 1) in vset:
            edges[((x, y), (x, y + 1))] = J
    return WeightedPlanarGraph(vertices, edges)


# -- planar dual -----------------------------------------------------------


@dataclass
class DualGraphResult:
    """Planar dual with boundary data used by the boundary-spin correspondence.

    ``dual`` has one vertex per inner face of the primal plus one per
    outer-incident primal edge; its edge set is in bijection with the primal
    edge set (couplings transported through the bijection).  For every primal
    boundary vertex u, ``boundary_pairs[u]`` holds the dual vertices adjacent
    to u along the outer face, ordered consistently with one global
    orientation of the boundary walk.
    """

    dual: WeightedPlanarGraph
    edge_map: dict[Edge, Edge]  # primal edge -> dual edge
    boundary_pairs: dict[Coord, tuple[Coord, Coord]]  # u -> (u_minus, u_plus)

    def primal_to_dual(self, u, v) -> Edge:
        return self.edge_map[edge_key(as_coord(u), as_coord(v))]


def _face_center(face: Sequence[Coord]) -> Coord:
    n = len(face)
    return (sum(p[0] for p in face) / n, sum(p[1] for p in face) / n)


def dual_graph(G: WeightedPlanarGraph) -> DualGraphResult:
    """Planar dual of a leafless connected embedded graph.

    Dual vertices are the inner faces plus the outer-incident edges; the
    boundary of the dual is the latter set.  Boundary dual vertices are
    placed at the reflection of the inner-face center across the primal edge,
    which puts them at the outside square centers on the integer lattice.
    """
    if not G.is_connected():
        raise GraphError("dual requires a connected graph")
    if not G.is_leafless():
        raise GraphError("dual requires a leafless graph (no degree-1 vertices)")

    inner = G.inner_faces
    outer = G.outer_face

    # Directed outer walk; edge -> position(s) along the walk.
    L = len(outer)
    outer_edges: list[Edge] = [edge_key(outer[i], outer[(i + 1) % L]) for i in range(L)]
    outer_edge_set = set(outer_edges)
    if len(outer_edge_set) != L:
        raise GraphError("an edge borders the outer face twice (bridge); dual undefined here")
    if len(set(outer)) != L:
        raise GraphError("a cut vertex lies on the outer face; dual boundary pairing undefined")

    # Each edge borders one or two inner faces.
    edge_faces: dict[Edge, list[int]] = {e: [] for e in G.edges}
    for fi, face in enumerate(inner):
        k = len(face)
        for i in range(k):
            edge_faces[edge_key(face[i], face[(i + 1) % k])].append(fi)

    face_pos: dict[int, Coord] = {fi: _face_center(f) for fi, f in enumerate(inner)}

    bdual_pos: dict[Edge, Coord] = {}
    for e in outer_edges:
        fis = edge_faces[e]
        if len(fis) != 1:
            raise GraphError("outer-incident edge must border exactly one inner face")
        cx, cy = face_pos[fis[0]]
        mx = (e[0][0] + e[1][0]) / 2
        my = (e[0][1] + e[1][1]) / 2
        bdual_pos[e] = (2 * mx - cx, 2 * my - cy)

    positions = list(face_pos.values()) + list(bdual_pos.values())
    if len(set(positions)) != len(positions):
        raise GraphError("dual vertex positions collide; embedding too degenerate")

    dual_edges: dict[Edge, float] = {}
    edge_map: dict[Edge, Edge] = {}
    for e, J in G.edges.items():
        fis = edge_faces[e]
        if e in bdual_pos:
            a, b = face_pos[fis[0]], bdual_pos[e]
        else:
            if len(fis) != 2:
                raise GraphError(f"inner edge {e} does not separate two inner faces")
            a, b = face_pos[fis[0]], face_pos[fis[1]]
        dual_edges[edge_key(a, b)] = J
        edge_map[e] = edge_key(a, b)

    dual = WeightedPlanarGraph(positions, dual_edges, boundary=bdual_pos.values())

    boundary_pairs: dict[Coord, tuple[Coord, Coord]] = {}
    for i in range(L):
        u = outer[i]
        e_in = outer_edges[(i - 1) % L]
        e_out = outer_edges[i]
        boundary_pairs[u] = (bdual_pos[e_in], bdual_pos[e_out])

    return DualGraphResult(dual=dual, edge_map=edge_map, boundary_pairs=boundary_pairs)


def box_dual(n: int, m: int | None = None, J: float = 1.0) -> DualGraphResult:
    """Dual of the (m, n) box; ``box_dual(n)`` gives the square-box dual."""
    if m is None:
        m = n
    return dual_graph(build_box(m, n, J))


# -- boundary heights ------------------------------------------------------


@dataclass(frozen=True)
class BoundaryHeight:
    """Integer boundary condition on a set of boundary vertices or points."""

    values: dict[Coord, int] = field(default_factory=dict)

    def __getitem__(self, p) -> int:
        return self.values[as_coord(p)]

    def get(self, p, default=None):
        return self.values.get(as_coord(p), default)

    def shift(self, a: int) -> "BoundaryHeight":
        return BoundaryHeight({p: h + a for p, h in self.values.items()})

    def positive_part(self) -> "BoundaryHeight":
        return BoundaryHeight({p: max(h, 0) for p, h in self.values.items()})

    def negative_part(self) -> "BoundaryHeight":
        """Pointwise max(-h, 0), so that h = positive_part - negative_part."""
        return BoundaryHeight({p: max(-h, 0) for p, h in self.values.items()})

    def negate(self) -> "BoundaryHeight":
        return BoundaryHeight({p: -h for p, h in self.values.items()})

    def domain(self) -> set[Coord]:
        return set(self.values)

    def items(self):
        return self.values.items()


def slope_boundary(n: int, s, dual: DualGraphResult | None = None) -> BoundaryHeight:
    """Sloped boundary condition floor(s * x1) on the boundary of the box dual."""
    s = as_slope(s)
    if dual is None:
        dual = box_dual(n)
    return BoundaryHeight({p: math.floor(s * p[0]) for p in dual.dual.boundary})


def boundary_height_on(points: Iterable[Coord], fn) -> BoundaryHeight:
    return BoundaryHeight({as_coord(p): int(fn(as_coord(p))) for p in points})


# -- jump sets and source sets ----------------------------------------------


@dataclass(frozen=True)
class JumpSet:
    """Columns where floor(s * x) increases, restricted to [-n, n]."""

    s: Fraction
    n: int
    columns: tuple[int, ...]

    @property
    def midpoints(self) -> tuple[Fraction, ...]:
        c = self.columns
        return tuple((Fraction(c[i]) + c[i + 1]) / 2 for i in range(len(c) - 1))

    def __len__(self):
        return len(self.columns)


def in_jump_set(s, k: int) -> bool:
    s = as_slope(s)
    return math.floor(s * (k + Fraction(1, 2))) > math.floor(s * (k - Fraction(1, 2)))


def jump_set(s, n: int) -> JumpSet:
    """Exact enumeration of the jump columns in [-n, n] for slope s in (0, 1)."""
    s = as_slope(s)
    if not (0 < s < 1):
        raise ValueError(f"slope must lie in (0, 1), got {s}")
    if n < 1:
        raise ValueError("n must be >= 1")
    cols = tuple(k for k in range(-n, n + 1) if in_jump_set(s, k))
    return JumpSet(s=s, n=n, columns=cols)


def source_sets(n: int, s) -> tuple[tuple[Coord, ...], tuple[Coord, ...]]:
    """Top and bottom source sets: jump columns lifted to rows n and -n."""
    s = as_slope(s)
    if s == 0:
        return (), ()
    cols = jump_set(s, n).columns
    top = tuple(as_coord((k, n)) for k in cols)
    bottom = tuple(as_coord((k, -n)) for k in cols)
    return top, bottom


def strip_halfwidth(s) -> int:
    """Integer half-width floor(1 / (20 s)) of the vertical strips."""
    s = as_slope(s)
    return math.floor(1 / (20 * s))


def strip_union_domain(n: int, s, J: float = 1.0) -> WeightedPlanarGraph:
    """Disjoint union of vertical strips centered on the jump columns.

    Each strip is the (w, n) box translated to a jump column, w the strip
    half-width.  Raises when strips touch each other or stick out of the
    (n, n) box; touching counts as invalid.
    """
    s = as_slope(s)
    js = jump_set(s, n)
    if not js.columns:
        raise GraphError(f"no jump columns in [-{n}, {n}] for slope {s}")
    w = strip_halfwidth(s)
    cols = js.columns
    for a, b in zip(cols, cols[1:]):
        if a + w >= b - w:
            raise GraphError(
                f"strips of half-width {w} at columns {a} and {b} touch or overlap"
            )
    if cols[0] - w < -n or cols[-1] + w > n:
        raise GraphError("strips exit the box; jumps too close to the vertical boundary")
    vertices = []
    edges = {}
    boundary = []
    for k in cols:
        for x in range(k - w, k + w + 1):
            for y in range(-n, n + 1):
                vertices.append((x, y))
                if x < k + w:
                    edges[((x, y), (x + 1, y))] = J
                if y < n:
                    edges[((x, y), (x, y + 1))] = J
                if abs(x - k) == w or abs(y) == n:
                    boundary.append((x, y))
    return WeightedPlanarGraph(vertices, edges, boundary)
