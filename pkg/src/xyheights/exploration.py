"""Level-set exploration of cable configurations and crossing-event estimators.

Exploring level a from a seed set removes the seed together with every
connected component of {h != a} that meets it.  Conditional on the explored
region, the cable measure on the rest is again a pinned cable measure whose
new boundary points carry the explored level; the statistical tests here
check exactly that, and the crossing events quantify how far exploration
reaches.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.stats

from .domains import ContinuumDomain, DomainError, domain_dual, remove_closed_pieces
from .geometry import Coord, WeightedPlanarGraph, as_coord, as_slope, jump_set, source_sets
from .samplers import CableConfig, RngStream, cable_sample_batch
from .weights import weight
from .exact import ChargeAssignment, xy_correlator

HALF = Fraction(1, 2)


def _as_level(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


# -- seed sets -----------------------------------------------------------------


class SeedSet:
    """Geometric seed; answers closed-interval queries on cable lines."""

    def meets(self, line, lo: float, hi: float) -> bool:
        raise NotImplementedError

    def removal_pieces(self, gamma: ContinuumDomain):
        """Closed pieces of the seed inside the domain, for carving it out."""
        raise NotImplementedError

    def max_x(self) -> float:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PointSeed(SeedSet):
    """Finite set of cable points."""

    points: tuple

    def meets(self, line, lo, hi):
        orient, level = line
        for x, y in self.points:
            a, t = (x, y) if orient == "v" else (y, x)
            if _as_level(a) == level and lo <= float(t) <= hi:
                return True
        return False

    def removal_pieces(self, gamma):
        pieces = []
        for x, y in self.points:
            for orient in ("v", "h"):
                a, t = (x, y) if orient == "v" else (y, x)
                a = _as_level(a)
                if (2 * a).denominator == 1 and (2 * a).numerator % 2 == 1:
                    pieces.append(((orient, a), Fraction(t), Fraction(t)))
        return pieces

    def max_x(self):
        return max(float(x) for x, _ in self.points)

    def spec(self):
        return {"kind": "points", "points": [[float(x), float(y)] for x, y in self.points]}


@dataclass(frozen=True)
class HalfPlaneSeed(SeedSet):
    """All cable points with x < r ('left') or x > r ('right')."""

    r: object
    side: str = "left"

    def meets(self, line, lo, hi):
        orient, level = line
        if orient == "v":
            return float(level) < self.r if self.side == "left" else float(level) > self.r
        return lo < self.r if self.side == "left" else hi > self.r

    def removal_pieces(self, gamma):
        pieces = []
        r = Fraction(self.r)
        for (orient, level), ivs in gamma.lines.items():
            if orient == "v":
                if (self.side == "left" and level <= r) or (self.side == "right" and level >= r):
                    for lo, hi in ivs:
                        pieces.append(((orient, level), lo, hi))
            else:
                for lo, hi in ivs:
                    if self.side == "left" and lo <= r:
                        pieces.append(((orient, level), lo, min(hi, r)))
                    elif self.side == "right" and hi >= r:
                        pieces.append(((orient, level), max(lo, r), hi))
        return pieces

    def max_x(self):
        return float(self.r) if self.side == "left" else math.inf

    def spec(self):
        return {"kind": "half_plane", "r": float(self.r), "side": self.side}


@dataclass(frozen=True)
class VerticalLinesSeed(SeedSet):
    """Full vertical plane lines {x} x R."""

    xs: tuple

    def meets(self, line, lo, hi):
        orient, level = line
        for x in self.xs:
            x = _as_level(x)
            if orient == "v" and level == x:
                return True
            if orient == "h" and lo <= float(x) <= hi:
                return True
        return False

    def removal_pieces(self, gamma):
        pieces = []
        for x in self.xs:
            x = _as_level(x)
            for (orient, level), ivs in gamma.lines.items():
                if orient == "v" and level == x:
                    for lo, hi in ivs:
                        pieces.append(((orient, level), lo, hi))
                elif orient == "h":
                    for lo, hi in ivs:
                        if lo < x < hi:
                            pieces.append(((orient, level), x, x))
        return pieces

    def max_x(self):
        return max(float(x) for x in self.xs)

    def spec(self):
        return {"kind": "vertical_lines", "xs": [float(x) for x in self.xs]}


# -- exploration ----------------------------------------------------------------


@dataclass
class ExplorationResult:
    """Explored region of one cable configuration at one level.

    ``explored`` maps skeleton edge indices to closed intervals (closures of
    the explored components); ``domain_after`` is the remaining open domain
    with the seed carved out as well, and ``zeta_after`` pins its boundary:
    original values on surviving boundary points, the explored level on new
    ones.
    """

    level: int
    seed: SeedSet
    explored: dict[int, list[tuple[float, float]]]
    explored_sites: frozenset
    carved: dict[int, list[tuple[float, float]]]  # explored plus the seed itself
    domain_after: ContinuumDomain
    zeta_after: dict[Coord, int]
    config: CableConfig

    def is_trivial(self) -> bool:
        return not self.explored and not self.explored_sites

    def explored_max_x(self) -> float:
        best = -math.inf
        for j, ivs in self.explored.items():
            e = self.config.skeleton.edges[j]
            orient, level = e.line
            for lo, hi in ivs:
                best = max(best, float(level) if orient == "v" else hi)
        return best

    def explored_within_strip(self, center: float, halfwidth: float) -> bool:
        """Strict containment of every explored piece in the vertical strip."""
        a, b = center - halfwidth, center + halfwidth
        for j, ivs in self.explored.items():
            e = self.config.skeleton.edges[j]
            orient, level = e.line
            for lo, hi in ivs:
                if orient == "v" and not (a < float(level) < b):
                    return False
                if orient == "h" and not (a < lo and hi < b):
                    return False
        return True

    def summary(self) -> dict:
        return {
            "level": self.level,
            "seed": self.seed.spec(),
            "explored_edges": sorted(self.explored),
            "explored_sites": sorted(map(str, self.explored_sites)),
            "max_x": None if self.is_trivial() else self.explored_max_x(),
        }


def _edge_pieces(config: CableConfig, j: int):
    """Breakpoints and piecewise-constant values along skeleton edge j."""
    e = config.skeleton.edges[j]
    pos, signs = config.jumps[j]
    breaks = [float(e.lo)] + [float(p) for p in pos] + [float(e.hi)]
    vals = [config.heights[e.u]]
    for s in signs:
        vals.append(vals[-1] + int(s))
    return breaks, vals


def explore(config: CableConfig, level: int, seed: SeedSet) -> ExplorationResult:
    """Explored set of ``level`` from ``seed`` and the induced remainder."""
    skel = config.skeleton
    a = level

    pieces: list[tuple[int, int, float, float]] = []  # (edge, slot, lo, hi)
    piece_id: dict[tuple[int, int], int] = {}
    nslots = []
    for j in range(len(skel.edges)):
        breaks, vals = _edge_pieces(config, j)
        nslots.append(len(vals))
        for r, v in enumerate(vals):
            if v != a:
                piece_id[(j, r)] = len(pieces)
                pieces.append((j, r, breaks[r], breaks[r + 1]))

    parent = list(range(len(pieces)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, k):
        ri, rk = find(i), find(k)
        if ri != rk:
            parent[ri] = rk

    for j in range(len(skel.edges)):
        for r in range(nslots[j] - 1):
            i1, i2 = piece_id.get((j, r)), piece_id.get((j, r + 1))
            if i1 is not None and i2 is not None:
                union(i1, i2)

    incident: dict[Coord, list[tuple[int, int]]] = {}
    for j, e in enumerate(skel.edges):
        incident.setdefault(e.u, []).append((j, 0))
        incident.setdefault(e.v, []).append((j, nslots[j] - 1))
    pinned_pts = set(skel.pinned)
    for p, ends in incident.items():
        if p in pinned_pts or config.heights.get(p, a) == a:
            continue
        ids = [piece_id[(j, r)] for j, r in ends if (j, r) in piece_id]
        for i in ids[1:]:
            union(ids[0], i)

    meets_root: set[int] = set()
    for idx, (j, r, lo, hi) in enumerate(pieces):
        if seed.meets(skel.edges[j].line, lo, hi):
            meets_root.add(find(idx))

    explored: dict[int, list[tuple[float, float]]] = {}
    explored_sites: set = set()
    for idx, (j, r, lo, hi) in enumerate(pieces):
        if find(idx) in meets_root:
            explored.setdefault(j, []).append((lo, hi))
    for p, ends in incident.items():
        if p in pinned_pts:
            continue
        for j, r in ends:
            i = piece_id.get((j, r))
            if i is not None and find(i) in meets_root:
                explored_sites.add(p)
                break

    for j in explored:
        merged = []
        for lo, hi in sorted(explored[j]):
            if merged and lo <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        explored[j] = merged

    carved: dict[int, list[tuple[float, float]]] = {j: list(ivs) for j, ivs in explored.items()}
    line_edges: dict[tuple, list[int]] = {}
    for j, e in enumerate(skel.edges):
        line_edges.setdefault(e.line, []).append(j)
    for line, lo, hi in seed.removal_pieces(skel.domain):
        for j in line_edges.get(line, ()):
            e = skel.edges[j]
            clo, chi = max(float(lo), float(e.lo)), min(float(hi), float(e.hi))
            if clo <= chi:
                carved.setdefault(j, []).append((clo, chi))
    for j in carved:
        merged = []
        for lo, hi in sorted(carved[j]):
            if merged and lo <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        carved[j] = merged

    removal = []
    for j, ivs in carved.items():
        e = skel.edges[j]
        for lo, hi in ivs:
            removal.append((e.line, Fraction(lo), Fraction(hi)))
    domain_after = remove_closed_pieces(skel.domain, removal)

    zeta_after: dict[Coord, int] = {}
    old_boundary = set(skel.domain.boundary_points())
    for p in domain_after.boundary_points():
        zeta_after[p] = config.heights[p] if p in old_boundary else a
    return ExplorationResult(
        level=a,
        seed=seed,
        explored=explored,
        explored_sites=frozenset(explored_sites),
        carved=carved,
        domain_after=domain_after,
        zeta_after=zeta_after,
        config=config,
    )


def restrict_config(result: ExplorationResult) -> CableConfig:
    """The sampled configuration restricted to the unexplored domain.

    Surviving jumps keep their positions; new boundary points are pinned at
    the values of ``zeta_after``.  Useful for idempotence checks and for
    continuing an exploration.
    """
    from .domains import domain_skeleton

    skel2 = domain_skeleton(result.domain_after)
    skel1 = result.config.skeleton
    by_line: dict[tuple, list[int]] = {}
    for j, e in enumerate(skel1.edges):
        by_line.setdefault(e.line, []).append(j)
    heights: dict[Coord, int] = {}
    for s in skel2.sites:
        heights[s] = result.config.heights[s]
    for p in skel2.pinned:
        heights[p] = result.zeta_after[p]
    jumps = []
    for e2 in skel2.edges:
        src = None
        for j in by_line.get(e2.line, ()):
            e1 = skel1.edges[j]
            if float(e1.lo) <= float(e2.lo) and float(e2.hi) <= float(e1.hi):
                src = j
                break
        if src is None:
            raise DomainError(f"unexplored piece {e2} not contained in any original edge")
        pos, signs = result.config.jumps[src]
        lo, hi = float(e2.lo), float(e2.hi)
        mask = (pos > lo) & (pos < hi)
        jumps.append((pos[mask], signs[mask]))
    return CableConfig(skeleton=skel2, heights=heights, jumps=jumps)


# -- induced discrete structure of the unexplored region -------------------------


@dataclass
class InducedSkeleton:
    """Discrete skeleton of the unexplored region of one sample.

    ``pieces`` lists the maximal unexplored sub-intervals of every original
    skeleton edge as (endpoint_left, endpoint_right, length) where endpoints
    are ('site', coord) or ('pin', value).  The shape key ignores lengths and
    jump positions, so samples sharing a key share the whole topology.
    """

    sites: tuple
    pieces: list[tuple[tuple, tuple, float]]

    def shape_key(self):
        def tag(end):
            return ("s", str(end[1])) if end[0] == "site" else ("p", end[1])

        return (
            self.sites,
            tuple((tag(a), tag(b)) for a, b, _ in self.pieces),
        )


def induced_skeleton(result: ExplorationResult) -> InducedSkeleton:
    skel = result.config.skeleton
    dom = result.domain_after
    surviving = tuple(
        s for s in skel.sites if s not in result.explored_sites and dom.contains(s)
    )
    surv_set = set(surviving)
    zeta = result.zeta_after
    pieces = []
    for j, e in enumerate(skel.edges):
        cuts = result.carved.get(j, [])
        open_parts = [(float(e.lo), float(e.hi))]
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
            open_parts = [p for p in nxt if p[0] < p[1]]
        def endpoint(t, orig_end):
            if t == float(e.lo) and orig_end == "lo":
                p = e.u
            elif t == float(e.hi) and orig_end == "hi":
                p = e.v
            else:
                p = (e.line[1], Fraction(t)) if e.line[0] == "v" else (Fraction(t), e.line[1])
            if p in surv_set:
                return ("site", p)
            if p not in zeta:
                raise DomainError(f"unexplored endpoint {p} carries no boundary value")
            return ("pin", zeta[p])

        for plo, phi in open_parts:
            pieces.append((endpoint(plo, "lo"), endpoint(phi, "hi"), phi - plo))
    return InducedSkeleton(sites=surviving, pieces=pieces)


# -- vectorized exact resampling of a shape group ---------------------------------


def _weight_series_array(J: np.ndarray, k: int, terms: int = 48) -> np.ndarray:
    """w_J(k) for an array of couplings; truncated two-sided Poisson series."""
    k = abs(k)
    x = J / 2.0
    term = x**k / math.factorial(k)
    total = term.copy()
    for j in range(1, terms):
        term = term * x * x / (j * (j + k))
        total += term
    return total


def _resample_group(
    sites: tuple,
    pieces: list,
    lengths: np.ndarray,
    beta: float,
    window: tuple[int, int],
    rng: np.random.Generator,
    chunk: int = 4000,
) -> np.ndarray:
    """Fresh joint heights for every sample of one shape group.

    Enumerates the window^sites state space once and evaluates per-sample
    state weights from the per-sample piece lengths, in chunks to bound
    memory.  Exact for the discrete skeleton measure of the unexplored
    region.
    """
    lo, hi = window
    d = hi - lo + 1
    m = len(sites)
    n = lengths.shape[0]
    if m == 0:
        return np.zeros((n, 0), dtype=np.int64)
    states = d**m
    if states > 100_000:
        raise DomainError("resample group state space too large")
    idx = {s: i for i, s in enumerate(sites)}
    grid = np.stack(
        np.meshgrid(*([np.arange(lo, hi + 1)] * m), indexing="ij"), axis=-1
    ).reshape(states, m)

    piece_index = []
    for left, right, _ in pieces:
        if left[0] == "site" and right[0] == "site":
            diffs = grid[:, idx[left[1]]] - grid[:, idx[right[1]]]
        elif left[0] == "site":
            diffs = grid[:, idx[left[1]]] - right[1]
        elif right[0] == "site":
            diffs = grid[:, idx[right[1]]] - left[1]
        else:
            diffs = np.full(states, left[1] - right[1])
        uniq, inv = np.unique(diffs, return_inverse=True)
        piece_index.append((uniq, inv))

    # Pieces whose length never varies across the group (uncut edges, fixed
    # seed cuts) contribute one shared factor; only jump-cut pieces need
    # per-sample tables.
    const_piece = [bool(np.all(lengths[:, p] == lengths[0, p])) for p in range(len(pieces))]
    static = np.ones(states)
    for p, isconst in enumerate(const_piece):
        if isconst:
            uniq, inv = piece_index[p]
            J = float(beta * lengths[0, p])
            row = np.array([weight(J, int(dv)) for dv in uniq])
            static = static * row[inv]
    varying = [p for p, isconst in enumerate(const_piece) if not isconst]

    out = np.empty((n, m), dtype=np.int64)
    if not varying:
        cdf = np.cumsum(static)
        u = rng.random(n) * cdf[-1]
        picks = np.searchsorted(cdf, u, side="right")
        out[:] = grid[picks]
        return out
    for start in range(0, n, chunk):
        L = lengths[start : start + chunk]
        nn = L.shape[0]
        probs = np.broadcast_to(static, (nn, states)).copy()
        for pidx in varying:
            uniq, inv = piece_index[pidx]
            J = beta * L[:, pidx]
            table = np.empty((nn, len(uniq)))
            for t, dv in enumerate(uniq):
                table[:, t] = _weight_series_array(J, int(dv))
            probs *= table[:, inv]
        cdf = np.cumsum(probs, axis=1)
        u = rng.random(nn) * cdf[:, -1]
        picks = (u[:, None] > cdf).sum(axis=1)
        out[start : start + chunk] = grid[picks]
    return out


# -- Markov-property resampling test ----------------------------------------------


@dataclass
class MarkovTestReport:
    n_samples: int
    n_shapes: int
    n_used: int
    n_skipped_samples: int
    chi2: float
    dof: int
    p_value: float
    per_shape: list = field(default_factory=list)


def markov_resample_test(
    gamma: ContinuumDomain,
    beta: float,
    zeta,
    level: int,
    seed: SeedSet,
    samples: int,
    rng: RngStream,
    min_group: int = 50,
    window_pad: int = 3,
    fault_shift: int = 0,
) -> MarkovTestReport:
    """Two-sample check of the exploration Markov property.

    For every sampled configuration the unexplored region is resampled
    freshly from its induced boundary condition; within each explored shape
    the joint height patterns of original and fresh draws must agree in
    distribution.  ``fault_shift`` displaces the induced boundary values on
    the newly created boundary and serves as the negative control.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    batch = cable_sample_batch(gamma, beta, zeta, gen, samples)

    groups: dict[object, dict] = {}
    for i in range(samples):
        cfg = batch.config(i)
        res = explore(cfg, level, seed)
        ind = induced_skeleton(res)
        if fault_shift:
            shifted = []
            for left, right, ln in ind.pieces:
                # displace only the newly created boundary points
                def bump(end):
                    if end[0] == "pin" and end[1] == level:
                        return ("pin", end[1] + fault_shift)
                    return end

                shifted.append((bump(left), bump(right), ln))
            ind = InducedSkeleton(ind.sites, shifted)
        key = ind.shape_key()
        g = groups.setdefault(key, {"ind": ind, "lengths": [], "orig": []})
        g["lengths"].append([ln for _, _, ln in ind.pieces])
        g["orig"].append([cfg.heights[s] for s in ind.sites])

    vals = [int(v) for v in dict(zeta).values()] if not callable(zeta) else [0]
    window = (min(vals + [level]) - window_pad, max(vals + [level]) + window_pad)

    chi2_total, dof_total, used = 0.0, 0, 0
    skipped = 0
    per_shape = []
    for key, g in groups.items():
        n = len(g["orig"])
        ind = g["ind"]
        if n < min_group or not ind.sites:
            skipped += n
            continue
        lengths = np.array(g["lengths"])
        fresh = _resample_group(ind.sites, ind.pieces, lengths, beta, window, gen)
        orig = np.array(g["orig"], dtype=np.int64)
        pats: dict[tuple, list[int]] = {}
        for row in orig:
            pats.setdefault(tuple(row), [0, 0])[0] += 1
        for row in fresh:
            pats.setdefault(tuple(row), [0, 0])[1] += 1
        # pool cells with small combined counts
        main = {p: c for p, c in pats.items() if sum(c) >= 10}
        rest = [c for p, c in pats.items() if sum(c) < 10]
        cells = list(main.values())
        if rest:
            cells.append([sum(c[0] for c in rest), sum(c[1] for c in rest)])
        if len(cells) < 2:
            skipped += n
            continue
        chi2 = 0.0
        for o1, o2 in cells:
            tot = o1 + o2
            chi2 += (o1 - o2) ** 2 / tot  # equal sample sizes per group
        dof = len(cells) - 1
        pval = float(scipy.stats.chi2.sf(chi2, dof))
        per_shape.append({"shape": str(key), "n": n, "chi2": chi2, "dof": dof, "p": pval})
        chi2_total += chi2
        dof_total += dof
        used += n
    p_pooled = float(scipy.stats.chi2.sf(chi2_total, dof_total)) if dof_total else 1.0
    return MarkovTestReport(
        n_samples=samples,
        n_shapes=len(groups),
        n_used=used,
        n_skipped_samples=skipped,
        chi2=chi2_total,
        dof=dof_total,
        p_value=p_pooled,
        per_shape=sorted(per_shape, key=lambda r: -r["n"]),
    )


# -- crossing events ---------------------------------------------------------------


@dataclass
class EventEstimate:
    name: str
    hits: int
    samples: int
    extra: dict = field(default_factory=dict)

    @property
    def estimate(self) -> float:
        return self.hits / self.samples if self.samples else math.nan

    @property
    def stderr(self) -> float:
        p = self.estimate
        return math.sqrt(max(p * (1 - p), 0.0) / self.samples) if self.samples else math.nan

    @property
    def zero_count(self) -> bool:
        return self.hits == 0

    def wilson_interval(self, z: float = 1.96) -> tuple[float, float]:
        n, p = self.samples, self.estimate
        denom = 1 + z * z / n
        center = (p + z * z / (2 * n)) / denom
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
        return (max(center - half, 0.0), min(center + half, 1.0))


def crossing_probability(
    n: int,
    r: int,
    beta: float,
    samples: int,
    rng: RngStream,
    trace_path: str | None = None,
) -> EventEstimate:
    """Probability that zero-level exploration from the far left half-plane
    stays left of the column x = -1, under the step boundary condition on the
    wide slab box.

    Uses the exact cable sampler on the (2n, n) box; the event reads as the
    zeros vertically crossing the rectangle between the seed and x = -1.
    """
    from .domains import continuum_box, step_boundary

    if r < 1 or n < 1:
        raise ValueError("need r >= 1 and n >= 1")
    gamma = continuum_box(2 * n, n)
    zeta = step_boundary(gamma)
    r_minus = -r - 0.5
    seed = HalfPlaneSeed(Fraction(-r) - HALF, "left")
    gen = rng.generator()
    batch = cable_sample_batch(gamma, beta, zeta, gen, samples)
    hits = 0
    trace = open(trace_path, "w") if trace_path else None
    try:
        for i in range(samples):
            cfg = batch.config(i)
            if r_minus <= -(2 * n + 0.5):
                ok = True  # nothing to explore; the seed misses the domain
            else:
                res = explore(cfg, 0, seed)
                ok = res.explored_max_x() < -1.0
            hits += ok
            if trace:
                rec = {"config": i, "event": "crossing", "indicator": bool(ok)}
                if r_minus > -(2 * n + 0.5):
                    rec["explored"] = res.summary()
                trace.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if trace:
            trace.close()
    return EventEstimate(
        name=f"crossing(n={n},r={r},beta={beta})",
        hits=hits,
        samples=samples,
        extra={"r_minus": r_minus},
    )


def multi_strip_event_probability(
    n: int,
    s,
    beta: float,
    samples: int,
    rng: RngStream,
) -> EventEstimate:
    """Joint probability that zero-level exploration from each midpoint line
    stays strictly inside its thin vertical strip, under the flat boundary
    condition on the square box; per-strip marginals ride along in ``extra``.
    """
    from .domains import continuum_box, zero_boundary

    s = as_slope(s)
    js = jump_set(s, n)
    mids = [float(y) for y in js.midpoints]
    halfwidth = float(1 / (20 * s))
    for a, b in zip(mids, mids[1:]):
        if a + halfwidth >= b - halfwidth:
            raise DomainError("strips overlap; reduce the slope or enlarge the box")
    gamma = continuum_box(n)
    zeta = zero_boundary(gamma)
    gen = rng.generator()
    batch = cable_sample_batch(gamma, beta, zeta, gen, samples)
    joint_hits = 0
    marg_hits = [0] * len(mids)
    for i in range(samples):
        cfg = batch.config(i)
        ok_all = True
        for k, y in enumerate(mids):
            res = explore(cfg, 0, VerticalLinesSeed((Fraction(y),)))
            ok = res.explored_within_strip(y, halfwidth)
            marg_hits[k] += ok
            ok_all = ok_all and ok
        joint_hits += ok_all
    extra = {
        "midpoints": mids,
        "halfwidth": halfwidth,
        "marginals": [h / samples for h in marg_hits],
    }
    if mids:
        prod = 1.0
        for h in marg_hits:
            prod *= h / samples
        extra["marginal_product"] = prod
    return EventEstimate(
        name=f"multi_strip(n={n},s={float(s):g},beta={beta})",
        hits=joint_hits,
        samples=samples,
        extra=extra,
    )


# -- multipoint domain ratio --------------------------------------------------------


def satisfies_jump_column_property(gamma: ContinuumDomain, n: int, s) -> bool:
    """Domain lies in the slab and contains full columns around every jump."""
    s = as_slope(s)
    lo, hi = -Fraction(n) - HALF, Fraction(n) + HALF
    for (orient, level), ivs in gamma.lines.items():
        if orient == "h" and not (lo < level < hi):
            return False
        if orient == "v" and any(a < lo or b > hi for a, b in ivs):
            return False
    for x in jump_set(s, n).columns:
        for level in (Fraction(x) - HALF, Fraction(x) + HALF):
            ivs = gamma.lines.get(("v", level), [])
            if not any(a <= lo and hi <= b for a, b in ivs):
                return False
        for k in range(-n, n):
            line = ("h", Fraction(k) + HALF)
            ivs = gamma.lines.get(line, [])
            if not any(a <= x - 1 and x + 1 <= b for a, b in ivs):
                return False
    return True


def domain_multipoint(gamma: ContinuumDomain, beta: float, n: int, s, tol: float = 1e-9) -> float:
    """Product over components of the sloped-source correlator.

    Every component must be simply connected; sources sit at the top jump
    columns (conjugated) and sinks at the bottom ones.  Components whose
    sources do not balance make the product vanish.
    """
    s = as_slope(s)
    if not satisfies_jump_column_property(gamma, n, s):
        raise DomainError("domain does not contain the required jump columns")
    top, bottom = source_sets(n, s)
    charges = {as_coord(p): -1 for p in top}
    for p in bottom:
        charges[as_coord(p)] = charges.get(as_coord(p), 0) + 1
    total = 1.0
    for comp in gamma.components():
        if not comp.is_simply_connected():
            raise DomainError("every component must be simply connected")
        primal = domain_dual(comp)
        scaled = WeightedPlanarGraph(
            primal.vertices,
            {e: beta * J for e, J in primal.edges.items()},
            primal.boundary,
        )
        comp_charges = ChargeAssignment.of(
            {v: charges[v] for v in scaled.vertices if v in charges}
        )
        val = xy_correlator(scaled, comp_charges, tol=tol).value
        total *= val
    return total
