"""Monte Carlo samplers: XY Metropolis, height heat-bath, and the exact
two-stage cable sampler.

All randomness flows through ``RngStream`` (seed + stream id -> PCG64), and
every sampler draws only uniforms and integer draws from the generator, so
trajectories are reproducible bit for bit across runs for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .domains import ContinuumDomain, DomainError, DomainSkeleton, domain_skeleton
from .geometry import Coord, GraphError, WeightedPlanarGraph, as_coord
from .weights import weight, window_halfwidth
from .exact.heights import HeightSampler, default_window_halfwidth


@dataclass(frozen=True)
class RngStream:
    """Deterministic generator: same (seed, stream) gives the same draws."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.stream * 1000 + 1 + k)


@dataclass
class SampleStats:
    """Mean and batch-means standard error of one observable."""

    name: str
    mean: float
    stderr: float
    n_batches: int
    n_samples: int


class BatchAccumulator:
    """Accumulates per-sweep observable vectors into batch means."""

    def __init__(self, names, n_sweeps: int, n_batches: int = 32):
        self.names = list(names)
        self.n_batches = min(n_batches, max(n_sweeps, 1))
        self.edges = np.linspace(0, n_sweeps, self.n_batches + 1).astype(int)
        self.sums = np.zeros((self.n_batches, len(self.names)))
        self.counts = np.zeros(self.n_batches, dtype=int)
        self._sweep = 0

    def push(self, values) -> None:
        b = np.searchsorted(self.edges, self._sweep, side="right") - 1
        b = min(b, self.n_batches - 1)
        self.sums[b] += values
        self.counts[b] += 1
        self._sweep += 1

    def results(self) -> dict[str, SampleStats]:
        means = self.sums / np.maximum(self.counts[:, None], 1)
        out = {}
        for i, name in enumerate(self.names):
            bm = means[:, i]
            m = float(np.mean(bm))
            se = float(np.std(bm, ddof=1) / math.sqrt(self.n_batches)) if self.n_batches > 1 else math.inf
            out[name] = SampleStats(name, m, se, self.n_batches, int(self.counts.sum()))
        return out


# -- XY Metropolis -------------------------------------------------------------


@dataclass
class SpinConfig:
    """Angles per vertex of the target graph."""

    sites: list[Coord]
    theta: np.ndarray


class _LatticeArrays:
    """Padded neighbor arrays for vectorized sweeps on an arbitrary graph."""

    def __init__(self, graph: WeightedPlanarGraph):
        self.sites = list(graph.vertices)
        self.index = {v: i for i, v in enumerate(self.sites)}
        deg = max((graph.degree(v) for v in self.sites), default=0)
        n = len(self.sites)
        self.nbr = np.zeros((n, deg), dtype=np.int64)
        self.nbr_J = np.zeros((n, deg))
        for v in self.sites:
            i = self.index[v]
            for k, w in enumerate(graph.neighbors(v)):
                self.nbr[i, k] = self.index[w]
                self.nbr_J[i, k] = graph.coupling(v, w)
        # Two-coloring by coordinate parity; valid for unit lattice edges.
        parity = []
        for x, y in self.sites:
            s = x + y
            if s.denominator != 1:
                raise GraphError("two-coloring requires integer coordinate sums")
            parity.append(int(s) % 2)
        parity = np.array(parity)
        self.colors = [np.nonzero(parity == c)[0] for c in (0, 1)]


def xy_metropolis(
    graph: WeightedPlanarGraph,
    beta: float | None,
    sweeps: int,
    rng: RngStream | np.random.Generator,
    pairs=(),
    burn_in: int = 1000,
    n_batches: int = 32,
    theta0: np.ndarray | None = None,
):
    """Metropolis sampling of the XY measure with fresh-uniform proposals.

    ``beta`` scales every coupling when given; pass None to use the graph's
    couplings as they are.  ``pairs`` requests Re(sigma_u sigma-bar_v)
    accumulators; returns (stats dict, final SpinConfig).
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    la = _LatticeArrays(graph)
    scale = 1.0 if beta is None else beta
    Jm = la.nbr_J * scale
    n = len(la.sites)
    theta = gen.random(n) * 2 * math.pi if theta0 is None else theta0.copy()
    pairs = [(as_coord(u), as_coord(v)) for u, v in pairs]
    iu = np.array([la.index[u] for u, _ in pairs], dtype=np.int64)
    iv = np.array([la.index[v] for _, v in pairs], dtype=np.int64)
    names = [f"re_{i}" for i in range(len(pairs))]
    acc = BatchAccumulator(names, sweeps, n_batches)

    def sweep_once():
        for color in la.colors:
            nb = la.nbr[color]
            Jc = Jm[color]
            old = theta[color]
            new = gen.random(len(color)) * 2 * math.pi
            tn = theta[nb]
            dE = (Jc * (np.cos(new[:, None] - tn) - np.cos(old[:, None] - tn))).sum(axis=1)
            accept = gen.random(len(color)) < np.exp(np.minimum(dE, 0.0))
            theta[color] = np.where(accept, new, old)

    for _ in range(burn_in):
        sweep_once()
    for _ in range(sweeps):
        sweep_once()
        if pairs:
            acc.push(np.cos(theta[iu] - theta[iv]))
        else:
            acc.push(np.zeros(0))
    stats = acc.results()
    out = {pairs[i]: stats[names[i]] for i in range(len(pairs))}
    return out, SpinConfig(sites=la.sites, theta=theta)


# -- height heat-bath -----------------------------------------------------------


@dataclass
class HeightConfig:
    sites: list[Coord]
    heights: np.ndarray  # integer heights of the free sites
    pinned: dict[Coord, int]


def height_heatbath(
    graph: WeightedPlanarGraph,
    beta: float | None,
    zeta,
    sweeps: int,
    rng: RngStream | np.random.Generator,
    observables=None,
    burn_in: int = 1000,
    n_batches: int = 32,
    h0: np.ndarray | None = None,
    cond_tail: float = 1e-13,
):
    """Single-site heat-bath for the pinned height measure.

    The site conditional is sampled exactly from a window around the current
    neighbor heights, truncated where its tail is below ``cond_tail``.
    ``observables`` maps names to callables on the (sites, heights, pinned)
    triple, evaluated once per sweep.  Returns (stats, HeightConfig).
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    pinned = {as_coord(p): int(v) for p, v in dict(zeta).items()}
    free = [v for v in graph.vertices if v not in pinned]
    index = {v: i for i, v in enumerate(free)}
    scale = 1.0 if beta is None else beta

    deg = max((graph.degree(v) for v in free), default=0)
    nfree = len(free)
    nbr_idx = np.zeros((nfree, deg), dtype=np.int64)   # index into free sites
    nbr_pin = np.zeros((nfree, deg), dtype=np.int64)   # pinned value if pinned
    is_pin = np.zeros((nfree, deg), dtype=bool)
    nbr_J = np.zeros((nfree, deg))
    for v in free:
        i = index[v]
        for k, w in enumerate(graph.neighbors(v)):
            nbr_J[i, k] = scale * graph.coupling(v, w)
            if w in pinned:
                is_pin[i, k] = True
                nbr_pin[i, k] = pinned[w]
            else:
                nbr_idx[i, k] = index[w]
    parity = []
    for x, y in free:
        s = x + y
        if s.denominator != 1:
            raise GraphError("two-coloring requires sites with integer coordinate sums")
        parity.append(int(s) % 2)
    parity = np.array(parity)
    colors = [np.nonzero(parity == c)[0] for c in (0, 1)]

    Jmax = float(nbr_J.max()) if nbr_J.size else 0.0
    W = window_halfwidth(Jmax, cond_tail) + 2 if Jmax > 0 else 1
    offsets = np.arange(-W, W + 1)
    # log-weight lookup table per distinct coupling, indexed by |difference|
    Js = np.unique(nbr_J)
    span = 2 * W + 8
    logw_rows = {}
    for J in Js:
        with np.errstate(divide="ignore"):
            logw_rows[J] = np.array(
                [math.log(weight(float(J), k)) if weight(float(J), k) > 0 else -math.inf for k in range(span + 1)]
            )

    if h0 is None:
        base = round(np.mean(list(pinned.values()))) if pinned else 0
        h = np.full(nfree, int(base), dtype=np.int64)
    else:
        h = h0.astype(np.int64).copy()

    def neighbor_heights():
        vals = np.where(is_pin, nbr_pin, h[nbr_idx])
        return vals

    def sweep_once():
        for color in colors:
            vals = np.where(is_pin[color], nbr_pin[color], h[nbr_idx[color]])
            active = nbr_J[color] > 0
            center = np.rint(
                np.where(active, vals, 0.0).sum(axis=1) / np.maximum(active.sum(axis=1), 1)
            ).astype(np.int64)
            cand = center[:, None] + offsets[None, :]
            logp = np.zeros((len(color), 2 * W + 1))
            for J in Js:
                if J == 0.0:
                    continue
                row = logw_rows[J]
                sel = (nbr_J[color] == J) & active
                diffs = np.abs(cand[:, :, None] - vals[:, None, :])
                diffs = np.minimum(diffs, span)
                contrib = row[diffs] * sel[:, None, :]
                logp += contrib.sum(axis=2)
            logp -= logp.max(axis=1, keepdims=True)
            p = np.exp(logp)
            cdf = np.cumsum(p, axis=1)
            u = gen.random(len(color)) * cdf[:, -1]
            pick = (u[:, None] > cdf).sum(axis=1)
            h[color] = cand[np.arange(len(color)), pick]

    obs = observables or {}
    acc = BatchAccumulator(list(obs), sweeps, n_batches)
    for _ in range(burn_in):
        sweep_once()
    for _ in range(sweeps):
        sweep_once()
        acc.push(np.array([f(free, h, pinned) for f in obs.values()]))
    return acc.results(), HeightConfig(sites=free, heights=h, pinned=pinned)


# -- cable configurations -------------------------------------------------------


@dataclass
class CableConfig:
    """Signed jumps on every skeleton edge plus the implied integer heights.

    ``jumps[j]`` holds (positions, signs) for skeleton edge j: positions are
    ascending coordinates inside the open piece, signs are +-1 and describe
    the height increment when crossing in the direction of increasing
    coordinate.  ``heights`` covers sites and pinned boundary points.
    """

    skeleton: DomainSkeleton
    heights: dict[Coord, int]
    jumps: list[tuple[np.ndarray, np.ndarray]]

    def edge_delta(self, j: int) -> int:
        return int(self.jumps[j][1].sum())

    def value_at(self, j: int, t: float) -> float:
        """Height at coordinate t on edge j; half-integer exactly at a jump."""
        e = self.skeleton.edges[j]
        pos, signs = self.jumps[j]
        h = self.heights[e.u]
        for p, s in zip(pos, signs):
            if t > p:
                h += int(s)
            elif t == p:
                return h + 0.5 * int(s)
            else:
                break
        return h

    def total_jumps(self) -> int:
        return int(sum(len(p) for p, _ in self.jumps))


@dataclass
class CableBatch:
    """Columnar batch of cable configurations over one skeleton."""

    skeleton: DomainSkeleton
    site_heights: dict[Coord, np.ndarray]
    pinned: dict[Coord, int]
    jump_positions: list[np.ndarray]  # per edge: flat ascending-within-sample
    jump_signs: list[np.ndarray]
    jump_offsets: list[np.ndarray]  # per edge: prefix offsets, len nsamples+1
    nsamples: int

    def config(self, i: int) -> CableConfig:
        heights = {p: v for p, v in self.pinned.items()}
        for s, arr in self.site_heights.items():
            heights[s] = int(arr[i])
        jumps = []
        for j in range(len(self.skeleton.edges)):
            a, b = self.jump_offsets[j][i], self.jump_offsets[j][i + 1]
            jumps.append((self.jump_positions[j][a:b], self.jump_signs[j][a:b]))
        return CableConfig(self.skeleton, heights, jumps)


def _bridge_count_table(lam: float, k: int, tail: float = 1e-14) -> np.ndarray:
    """CDF over m = min(#up, #down) for a pinned-difference jump pair."""
    k = abs(k)
    probs = []
    m = 0
    term = lam**k / math.factorial(k)
    total = 0.0
    while True:
        probs.append(term)
        total += term
        m += 1
        term = term * lam * lam / (m * (m + k))
        if term < tail * total and m > 2:
            break
        if m > 10_000:  # pragma: no cover
            raise RuntimeError("bridge count series failed to converge")
    p = np.array(probs)
    return np.cumsum(p / p.sum())


def cable_sample_batch(
    gamma: ContinuumDomain,
    beta: float,
    zeta,
    rng: RngStream | np.random.Generator,
    nsamples: int,
    window_hw: int | None = None,
) -> CableBatch:
    """Exact draws from the pinned cable measure, vectorized over samples.

    Stage one samples the discrete heights at the dual vertices from the
    skeleton height measure; stage two fills each edge with a conditioned
    pair of up/down Poisson jump sets given the endpoint difference, placing
    the jumps uniformly and interleaving signs exchangeably.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    skel = domain_skeleton(gamma)
    if callable(zeta):
        pinned = {p: int(zeta(p)) for p in skel.pinned}
    else:
        pinned = {as_coord(p): int(v) for p, v in dict(zeta).items()}
        if set(pinned) != set(skel.pinned):
            raise DomainError("boundary condition must cover exactly the boundary points")
    graph = skel.graph(beta)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        site_heights = {}
        ref = dict(pinned)
        # zero coupling freezes each component to a constant extension
        for comp in graph.components():
            vals = {ref[p] for p in comp if p in ref}
            if len(vals) > 1:
                raise DomainError("inconsistent boundary condition at beta=0")
            val = vals.pop() if vals else 0
            for s in comp:
                if s not in ref:
                    site_heights[s] = np.full(nsamples, val, dtype=np.int64)
        empty_pos = [np.zeros(0) for _ in skel.edges]
        empty_sign = [np.zeros(0, dtype=np.int8) for _ in skel.edges]
        offs = [np.zeros(nsamples + 1, dtype=np.int64) for _ in skel.edges]
        return CableBatch(skel, site_heights, pinned, empty_pos, empty_sign, offs, nsamples)

    if window_hw is None:
        window_hw = default_window_halfwidth(beta)
    vals = list(pinned.values())
    window = (min(vals) - window_hw, max(vals) + window_hw)
    sampler = HeightSampler(graph, pinned, window)
    site_heights = sampler.sample(nsamples, gen)

    def endpoint(p) -> np.ndarray:
        if p in pinned:
            return np.full(nsamples, pinned[p], dtype=np.int64)
        return site_heights[p]

    jump_positions, jump_signs, jump_offsets = [], [], []
    for e in skel.edges:
        lam = beta * float(e.length) / 2.0
        k = endpoint(e.v) - endpoint(e.u)
        counts = np.zeros(nsamples, dtype=np.int64)
        uniq = np.unique(k)
        cdfs = {int(kk): _bridge_count_table(lam, int(kk)) for kk in uniq}
        for kk in uniq:
            mask = k == kk
            u = gen.random(int(mask.sum()))
            m = np.searchsorted(cdfs[int(kk)], u)
            counts[mask] = 2 * m + abs(int(kk))
        total = int(counts.sum())
        lo, hi = float(e.lo), float(e.hi)
        pos = lo + gen.random(total) * (hi - lo)
        # Fixed sign pattern per sample: k net jumps first, then +- pairs.
        # The iid positions randomize the interleaving when sorted.
        sample_idx = np.repeat(np.arange(nsamples), counts)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        signs = np.empty(total, dtype=np.int8)
        within = np.arange(total) - offsets[sample_idx]
        netk = k[sample_idx]
        absk = np.abs(netk)
        net_part = within < absk
        signs[net_part] = np.sign(netk[net_part]).astype(np.int8)
        pair_rank = within - absk
        signs[~net_part] = np.where(pair_rank[~net_part] % 2 == 0, 1, -1).astype(np.int8)
        # Segmented sort by (sample, position).
        order = np.lexsort((pos, sample_idx))
        jump_positions.append(pos[order])
        jump_signs.append(signs[order])
        jump_offsets.append(offsets)
    return CableBatch(skel, site_heights, pinned, jump_positions, jump_signs, jump_offsets, nsamples)


def cable_sample(
    gamma: ContinuumDomain,
    beta: float,
    zeta,
    rng: RngStream | np.random.Generator,
    window_hw: int | None = None,
) -> CableConfig:
    """One exact draw from the pinned cable measure."""
    return cable_sample_batch(gamma, beta, zeta, rng, 1, window_hw).config(0)


def is_valid_height(config: CableConfig) -> bool:
    """Whether the signed jumps integrate to a height function.

    Rebuilds heights from the jumps alone by breadth-first propagation, so a
    single extra jump on any cycle is detected; recorded heights (including
    the pinned boundary values) must match the propagated ones.
    """
    skel = config.skeleton
    adj: dict[Coord, list[tuple[Coord, int]]] = {}
    for j, e in enumerate(skel.edges):
        delta = config.edge_delta(j)
        adj.setdefault(e.u, []).append((e.v, delta))
        adj.setdefault(e.v, []).append((e.u, -delta))
    implied: dict[Coord, int] = {}
    for start in adj:
        if start in implied:
            continue
        base = config.heights.get(start)
        if base is None:
            return False
        implied[start] = base
        stack = [start]
        while stack:
            p = stack.pop()
            for q, d in adj[p]:
                val = implied[p] + d
                if q in implied:
                    if implied[q] != val:
                        return False
                else:
                    implied[q] = val
                    stack.append(q)
    return all(config.heights.get(p) == v for p, v in implied.items())


# -- sample dumps ---------------------------------------------------------------


def dump_samples(path, header: dict, records) -> None:
    """Line-delimited JSON: one header record then one record per sample."""
    with open(path, "w") as f:
        f.write(json.dumps({"format": "samples-1", **header}, sort_keys=True) + "\n")
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def iter_samples(path):
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("format") != "samples-1":
            raise ValueError("unrecognized sample dump format")
        for line in f:
            yield json.loads(line)
