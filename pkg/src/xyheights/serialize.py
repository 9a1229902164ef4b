"""Versioned JSON forms of graphs, domains, and boundary data.

Coordinates serialize as exact fraction strings so that a round trip through
JSON never moves a vertex or a segment endpoint.
"""

from __future__ import annotations

from fractions import Fraction

from .domains import ContinuumDomain
from .geometry import BoundaryHeight, WeightedPlanarGraph

GRAPH_FORMAT = "wpg-1"
DOMAIN_FORMAT = "domain-1"


def _frac_str(x: Fraction) -> str:
    return str(x)


def graph_to_json(G: WeightedPlanarGraph) -> dict:
    verts = list(G.vertices)
    index = {v: i for i, v in enumerate(verts)}
    return {
        "format": GRAPH_FORMAT,
        "vertices": [[_frac_str(x), _frac_str(y)] for x, y in verts],
        "edges": [[index[u], index[v], J] for (u, v), J in sorted(G.edges.items())],
        "boundary": sorted(index[b] for b in G.boundary),
    }


def graph_from_json(doc: dict) -> WeightedPlanarGraph:
    if doc.get("format") != GRAPH_FORMAT:
        raise ValueError(f"unsupported graph format {doc.get('format')!r}")
    verts = [(Fraction(x), Fraction(y)) for x, y in doc["vertices"]]
    edges = {(verts[i], verts[j]): J for i, j, J in doc["edges"]}
    boundary = [verts[i] for i in doc.get("boundary", [])]
    return WeightedPlanarGraph(verts, edges, boundary)


def domain_to_json(gamma: ContinuumDomain) -> dict:
    lines = []
    for (orient, level), ivs in sorted(gamma.lines.items()):
        lines.append(
            {
                "orient": orient,
                "level": _frac_str(level),
                "intervals": [[_frac_str(lo), _frac_str(hi)] for lo, hi in ivs],
            }
        )
    return {"format": DOMAIN_FORMAT, "lines": lines}


def domain_from_json(doc: dict) -> ContinuumDomain:
    if doc.get("format") != DOMAIN_FORMAT:
        raise ValueError(f"unsupported domain format {doc.get('format')!r}")
    segs = {}
    for rec in doc["lines"]:
        line = (rec["orient"], Fraction(rec["level"]))
        segs[line] = [(Fraction(lo), Fraction(hi)) for lo, hi in rec["intervals"]]
    return ContinuumDomain(segs)


def boundary_to_json(zeta: BoundaryHeight | dict) -> dict:
    items = zeta.items() if isinstance(zeta, BoundaryHeight) else dict(zeta).items()
    return {
        "format": "boundary-1",
        "values": [[_frac_str(p[0]), _frac_str(p[1]), int(h)] for p, h in sorted(items)],
    }


def boundary_from_json(doc: dict) -> BoundaryHeight:
    if doc.get("format") != "boundary-1":
        raise ValueError(f"unsupported boundary format {doc.get('format')!r}")
    return BoundaryHeight({(Fraction(x), Fraction(y)): int(h) for x, y, h in doc["values"]})
