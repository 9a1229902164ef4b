"""XY partition functions and correlators by exact integer-current summation.

Expanding every edge factor e^{J cos(t_u - t_v)} in Fourier modes turns the
Haar integral into a sum over integer currents on edges with zero net flux at
every vertex (spin insertions act as sources).  The sum is evaluated exactly,
up to the cutoff |k_e| <= K on every edge current, by sweeping the vertices
column by column and contracting one site at a time; the frontier state is a
dense tensor over the currents of the open edges.  Every term is nonnegative,
so the sweep is numerically benign; a running log scale guards against
overflow on larger graphs.

Truncation drops only flows in which some edge current exceeds K.  Such a
flow must route K+1 units around a closed circuit (plus sources), so the
error decays like w(K+1)/w(0) times a power of w(1)/w(0); the cutoff chooser
below uses that shape with an empirically conservative prefactor, and the
reported error estimate is always measured against a companion cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Coord, GraphError, WeightedPlanarGraph, as_coord, edge_key
from ..weights import weight
from .base import ChargeAssignment, ExactValue, TruncationError

DEFAULT_FLOW_TOL = 1e-9
_MEMORY_BUDGET_FLOATS = 100_000_000  # ~800 MB frontier tensor ceiling


def choose_current_cutoff(J_max: float, target: float = 1e-10) -> int:
    """Smallest cutoff whose modelled truncation error is below target."""
    if J_max == 0.0:
        return 1
    w0 = weight(J_max, 0)
    r1 = weight(J_max, 1) / w0
    K = 2
    while True:
        rK = weight(J_max, K + 1) / w0
        model = 10.0 * rK * max(r1 ** (3 * (K + 1)), rK**3)
        if model <= 0.1 * target or rK == 0.0:
            return K
        K += 1
        if K > 200:  # pragma: no cover
            raise RuntimeError("cutoff search diverged")


def _lattice_check(G: WeightedPlanarGraph) -> None:
    for (x0, y0), (x1, y1) in G.edges:
        if not (x0.denominator == y0.denominator == x1.denominator == y1.denominator == 1):
            raise GraphError("current engine requires integer lattice coordinates")
        if abs(x1 - x0) + abs(y1 - y0) != 1:
            raise GraphError("current engine requires unit axis-aligned edges")


def _sweep_order(vertices) -> list[Coord]:
    return sorted(vertices, key=lambda p: (p[0], -p[1]))


def frontier_width(G: WeightedPlanarGraph) -> int:
    """Maximum number of simultaneously open edges during the sweep."""
    width = 0
    open_edges: set = set()
    for v in _sweep_order(G.vertices):
        x, y = v
        for w in ((x - 1, y), (x, y + 1)):
            open_edges.discard(edge_key(as_coord(w), v))
        for w in ((x + 1, y), (x, y - 1)):
            e = edge_key(v, as_coord(w))
            if e in G.edges:
                open_edges.add(e)
        width = max(width, len(open_edges))
    return width


def mirror_graph(G: WeightedPlanarGraph) -> WeightedPlanarGraph:
    """Reflection x -> -x, used to sweep a component from the right."""
    flip = lambda p: (-p[0], p[1])
    return WeightedPlanarGraph(
        [flip(v) for v in G.vertices],
        {edge_key(flip(u), flip(v)): J for (u, v), J in G.edges.items()},
        [flip(b) for b in G.boundary],
    )


@dataclass
class CutState:
    """Frontier tensor on the horizontal edges crossing a column boundary."""

    cut_x: object  # Fraction; edges cross from cut_x - 1 to cut_x
    axes: list  # edge keys, aligned with tensor dimensions
    tensor: np.ndarray
    log_scale: float


class _ComponentSweep:
    """Single left-to-right sweep over one connected component."""

    def __init__(self, G, vertices, charges: ChargeAssignment, K: int, J_override=None):
        self.G = G
        self.order = _sweep_order(vertices)
        self.charges = charges
        self.K = K
        self.d = 2 * K + 1
        qmax = max((abs(charges.get(v)) for v in self.order), default=0)
        self.UK = 2 * K + qmax
        self.usize = 2 * self.UK + 1
        self.J_override = dict(J_override or {})
        self._wtab: dict[float, np.ndarray] = {}

    def coupling(self, e) -> float:
        return self.J_override.get(e, self.G.edges[e])

    def wvec(self, J: float) -> np.ndarray:
        if J not in self._wtab:
            self._wtab[J] = np.array([weight(J, k - self.K) for k in range(self.d)])
        return self._wtab[J]

    def process_site(self, state, v):
        """Contract one site into (tensor, axes, log_scale); None when the sum dies."""
        tensor, axes, log_scale = state
        K, d, UK, usize = self.K, self.d, self.UK, self.usize
        x, y = v
        q = self.charges.get(v)

        in_edges = []
        for w in ((x - 1, y), (x, y + 1)):
            e = edge_key(as_coord(w), v)
            if e in self.G.edges and e in axes:
                in_edges.append(e)
        out_specs = []
        for w in ((x + 1, y), (x, y - 1)):
            w = as_coord(w)
            e = edge_key(v, w)
            if e in self.G.edges and w in self._vset:
                out_specs.append((e, self.coupling(e)))

        for e in in_edges:
            i = axes.index(e)
            tensor = np.moveaxis(tensor, i, -1)
            axes.append(axes.pop(i))
        for e in in_edges:
            axes.remove(e)

        n_in = len(in_edges)
        if n_in == 0:
            u = np.zeros(tensor.shape + (usize,))
            u[..., UK - q] = tensor
        elif n_in == 1:
            u = np.zeros(tensor.shape[:-1] + (usize,))
            lo = UK - K - q
            u[..., lo : lo + d] = tensor
        else:
            u = np.zeros(tensor.shape[:-2] + (usize,))
            lo = UK - 2 * K - q
            for i in range(d):
                u[..., lo + i : lo + i + d] += tensor[..., i, :]
        tensor = u

        if len(out_specs) == 0:
            tensor = tensor[..., UK]
        elif len(out_specs) == 1:
            e, J = out_specs[0]
            tensor = tensor[..., UK - K : UK - K + d] * self.wvec(J)
            axes.append(e)
        else:
            (eh, Jh), (ev, Jv) = out_specs
            wh, wv = self.wvec(Jh), self.wvec(Jv)
            out = np.empty(tensor.shape[:-1] + (d, d))
            base = UK - 2 * K
            for a in range(d):
                np.multiply(tensor[..., base + a : base + a + d], wh[a] * wv, out=out[..., a, :])
            tensor = out
            axes += [eh, ev]

        m = float(tensor.max()) if tensor.size else 0.0
        if m <= 0.0:
            return None
        if m < 1e-120 or m > 1e120:
            tensor = tensor / m
            log_scale += math.log(m)
        return tensor, axes, log_scale

    def _finalize(self, state):
        tensor, axes, log_scale = state
        assert not axes and tensor.shape == ()
        val = float(tensor)
        if val <= 0.0:
            return -math.inf
        return log_scale + math.log(val)

    def run(self) -> float:
        self._vset = set(self.order)
        state = (np.ones(()), [], 0.0)
        for v in self.order:
            state = self.process_site(state, v)
            if state is None:
                return -math.inf
        return self._finalize(state)

    def run_with_cuts(self) -> tuple[float, list[CutState]]:
        """Sweep recording the frontier at every column boundary.

        Cut i is recorded before the sites of the i-th distinct column are
        processed; a final cut with empty axes is appended after the sweep.
        """
        self._vset = set(self.order)
        cuts: list[CutState] = []
        state = (np.ones(()), [], 0.0)
        last_x = None
        for v in self.order:
            if v[0] != last_x:
                tensor, axes, log_scale = state
                cuts.append(CutState(v[0], list(axes), tensor.copy(), log_scale))
                last_x = v[0]
            state = self.process_site(state, v)
            if state is None:
                raise ArithmeticError("current sum vanished; cut recording unsupported here")
        tensor, axes, log_scale = state
        cuts.append(CutState(None, list(axes), tensor.copy(), log_scale))
        return self._finalize(state), cuts

    def run_column(self, cut: CutState, column_x, J_override=None) -> CutState:
        """Process one column starting from a recorded cut state."""
        saved = self.J_override
        if J_override:
            self.J_override = {**saved, **J_override}
        self._vset = set(self.order)
        state = (cut.tensor.copy(), list(cut.axes), cut.log_scale)
        for v in self.order:
            if v[0] == column_x:
                state = self.process_site(state, v)
                if state is None:
                    raise ArithmeticError("current sum vanished inside a column")
        self.J_override = saved
        tensor, axes, log_scale = state
        return CutState(None, axes, tensor, log_scale)


def _component_log_sum(G, vertices, charges, K, J_override=None) -> float:
    return _ComponentSweep(G, vertices, charges, K, J_override).run()


def flow_log_sum(
    G: WeightedPlanarGraph,
    charges: ChargeAssignment,
    K: int,
    J_override=None,
) -> float:
    """log of the unnormalized current sum with the given sources."""
    _lattice_check(G)
    total = 0.0
    for comp in G.components():
        comp_charges = ChargeAssignment.of({v: charges.get(v) for v in comp})
        if comp_charges.total != 0:
            return -math.inf
        sub = G.subgraph(comp)
        part = _component_log_sum(sub, sub.vertices, comp_charges, K, J_override)
        if part == -math.inf:
            return -math.inf
        total += part
    return total


def _mem_feasible(width: int, K: int) -> bool:
    return 2 * (2 * K + 1) ** max(width, 1) <= _MEMORY_BUDGET_FLOATS


def _start_cutoff(G: WeightedPlanarGraph, charges: ChargeAssignment, K: int | None) -> int:
    qmax = max((abs(q) for q in charges.charges.values()), default=0)
    if K is not None:
        return max(K, qmax, 1)
    Jmax = max(G.edges.values(), default=0.0)
    return max(choose_current_cutoff(Jmax, 1e-6), qmax)


def _converge_in_cutoff(fn, K0: int, tol: float, width: int, trunc: dict, strict: bool = True):
    """Escalate the cutoff in steps of two until the change certifies tol.

    Returns (log_value, relative_error_estimate); the reported value is the
    one at the larger cutoff of the certifying pair, so the estimate is
    conservative.  When memory forbids going up, the estimate falls back to
    the downward pair, which overstates the true error; with ``strict`` off
    the overstated estimate is reported instead of raising.
    """
    K = K0
    prev = fn(K)
    while True:
        K2 = K + 2
        if not _mem_feasible(width, K2):
            low = fn(max(K - 2, 1))
            est = _rel_change(low, prev)
            trunc.update({"K": K, "K_companion": max(K - 2, 1), "companion": "downward"})
            if est > tol and strict:
                raise TruncationError(
                    f"cutoff {K2} exceeds the memory budget and the downward estimate "
                    f"{est:.3g} does not certify tolerance {tol:.3g}"
                )
            return prev, est
        cur = fn(K2)
        est = _rel_change(prev, cur)
        trunc.update({"K": K2, "K_companion": K, "companion": "upward"})
        if est <= tol:
            return cur, est
        K, prev = K2, cur


def _rel_change(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if math.isinf(a) or math.isinf(b):
        return math.inf
    return abs(math.expm1(a - b))


def xy_partition(
    G: WeightedPlanarGraph,
    K: int | None = None,
    tol: float = DEFAULT_FLOW_TOL,
    estimate_error: bool = True,
    strict: bool = True,
) -> ExactValue:
    """Partition function of the XY model on G, normalized to 1 at J == 0.

    With error estimation on, the cutoff escalates in steps of two until two
    consecutive evaluations agree to the requested relative tolerance; the
    change across the certifying pair is reported as the error estimate.
    """
    no_charge = ChargeAssignment({})
    K0 = _start_cutoff(G, no_charge, K)
    trunc = {"tol": tol}
    if not estimate_error:
        trunc["K"] = K0
        return ExactValue.from_log(flow_log_sum(G, no_charge, K0), math.nan, trunc)
    width = frontier_width(G)
    logz, est = _converge_in_cutoff(
        lambda kk: flow_log_sum(G, no_charge, kk), K0, tol, width, trunc, strict
    )
    return ExactValue.from_log(logz, est, trunc)


def xy_correlator(
    G: WeightedPlanarGraph,
    charges: ChargeAssignment,
    K: int | None = None,
    tol: float = DEFAULT_FLOW_TOL,
    estimate_error: bool = True,
    strict: bool = True,
) -> ExactValue:
    """Normalized expectation of prod_u sigma_u^{q_u}; exactly 0 off charge balance.

    Every term of the current sum is nonnegative, so correlators of balanced
    charges computed here are nonnegative.
    """
    if charges.total != 0:
        return ExactValue(0.0, -math.inf, 0.0, {"K": 0, "reason": "unbalanced charge"})
    K0 = _start_cutoff(G, charges, K)
    trunc = {"tol": tol}

    def ratio(kk: int) -> float:
        num = flow_log_sum(G, charges, kk)
        if num == -math.inf:
            return -math.inf
        return num - flow_log_sum(G, ChargeAssignment({}), kk)

    if not estimate_error:
        trunc["K"] = K0
        return ExactValue.from_log(ratio(K0), math.nan, trunc)
    first = ratio(K0)
    if first == -math.inf:
        # No flow can connect the sources in this geometry at any cutoff
        # reachable here; one step up guards against a tight start.
        if ratio(K0 + 2) == -math.inf:
            trunc["K"] = K0 + 2
            return ExactValue.from_log(-math.inf, 0.0, trunc)
    width = frontier_width(G)
    logr, est = _converge_in_cutoff(ratio, K0, tol, width, trunc, strict)
    return ExactValue.from_log(logr, est, trunc)


def xy_two_point(
    G: WeightedPlanarGraph, u, v, K: int | None = None, tol: float = DEFAULT_FLOW_TOL, **kw
) -> ExactValue:
    return xy_correlator(G, ChargeAssignment.two_point(u, v), K=K, tol=tol, **kw)


# -- fast single-edge coupling sensitivity ------------------------------------


def _join_cut(left: CutState, right: CutState, inv_w: dict, reweight: dict | None = None) -> float:
    """log of the full contraction of matching left/right cut states.

    Both sweeps applied the weight of every cut-crossing edge once, so the
    joint value divides one copy back out (``inv_w``); ``reweight`` multiplies
    selected axes by an extra per-current vector (used to retarget couplings).
    """
    perm = [right.axes.index(e) for e in left.axes]
    R = np.transpose(right.tensor, perm) if right.tensor.ndim else right.tensor
    # A mirrored sweep measures currents in the reflected direction, so the
    # right state pairs with the left one at negated currents.
    R = R[tuple(slice(None, None, -1) for _ in range(R.ndim))]
    M = left.tensor * R
    for i, e in enumerate(left.axes):
        vec = inv_w[e].copy()
        if reweight and e in reweight:
            vec = vec * reweight[e]
        shape = [1] * M.ndim
        shape[i] = len(vec)
        M = M * vec.reshape(shape)
    total = float(M.sum())
    if total <= 0.0:
        return -math.inf
    return left.log_scale + right.log_scale + math.log(total)


def two_point_edge_sensitivity(
    G: WeightedPlanarGraph,
    u,
    v,
    delta: float,
    K: int | None = None,
) -> tuple[float, dict]:
    """Exact two-point correlator and its value after one-edge coupling bumps.

    Returns ``(corr_base, {edge: corr_with_J_e_increased_by_delta})`` computed
    from cached bidirectional sweeps, so the whole edge sweep costs a few full
    contractions rather than one per edge.
    """
    _lattice_check(G)
    if not G.is_connected():
        raise GraphError("edge sensitivity sweep expects a connected graph")
    u, v = as_coord(u), as_coord(v)
    charges = ChargeAssignment.two_point(u, v)
    if K is None:
        K = choose_current_cutoff(max(G.edges.values()) + delta, 1e-10)
    d = 2 * K + 1

    flip = lambda p: (-p[0], p[1])
    Gm = mirror_graph(G)
    charges_m = ChargeAssignment.of({flip(p): q for p, q in charges.charges.items()})

    sweeps = {
        "zL": _ComponentSweep(G, G.vertices, ChargeAssignment({}), K),
        "nL": _ComponentSweep(G, G.vertices, charges, K),
        "zR": _ComponentSweep(Gm, Gm.vertices, ChargeAssignment({}), K),
        "nR": _ComponentSweep(Gm, Gm.vertices, charges_m, K),
    }
    cuts = {}
    logs = {}
    for name, sw in sweeps.items():
        logs[name], cuts[name] = sw.run_with_cuts()

    # Mirror cut states back to primal edge keys and index them by cut_x.
    def by_cut(name, mirrored):
        out = {}
        for c in cuts[name]:
            if mirrored:
                axes = [edge_key(flip(a), flip(b)) for a, b in c.axes]
                cx = None if c.cut_x is None else -c.cut_x + 1
                out[cx] = CutState(cx, axes, c.tensor, c.log_scale)
            else:
                out[c.cut_x] = c
        return out

    L = {"z": by_cut("zL", False), "n": by_cut("nL", False)}
    R = {"z": by_cut("zR", True), "n": by_cut("nR", True)}

    wcache: dict[float, np.ndarray] = {}

    def wv(J):
        if J not in wcache:
            wcache[J] = np.array([weight(J, k - K) for k in range(d)])
        return wcache[J]

    columns = sorted({p[0] for p in G.vertices})
    corr_base = logs["nL"] - logs["zL"]
    out: dict = {}
    for e, J in G.edges.items():
        (x0, y0), (x1, y1) = e
        Jp = J + delta
        if y0 == y1:  # horizontal edge: reweight its current axis at the cut
            cx = max(x0, x1)
            rw = {e: wv(Jp) / wv(J)}
            vals = {}
            for which in ("n", "z"):
                lc, rc = L[which][cx], R[which][cx]
                inv = {a: 1.0 / wv(G.edges[a]) for a in lc.axes}
                vals[which] = _join_cut(lc, rc, inv, rw)
            out[e] = math.exp(vals["n"] - vals["z"])
        else:  # vertical edge: redo its column from the recorded left cut
            cx = x0
            nxt = columns.index(cx) + 1
            cut_next = columns[nxt] if nxt < len(columns) else columns[-1] + 1
            vals = {}
            for which in ("n", "z"):
                sw = sweeps["nL" if which == "n" else "zL"]
                col_state = sw.run_column(L[which][cx], cx, J_override={e: Jp})
                rc = R[which][cut_next]
                inv = {a: 1.0 / wv(G.edges[a]) for a in col_state.axes}
                vals[which] = _join_cut(col_state, rc, inv)
            out[e] = math.exp(vals["n"] - vals["z"])
    return math.exp(corr_base), out
