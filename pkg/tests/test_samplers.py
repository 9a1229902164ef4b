import copy
import itertools
import math

import numpy as np
import pytest
import scipy.stats

from xyheights.domains import continuum_box, domain_skeleton
from xyheights.exact import xy_two_point
from xyheights.exact.heights import _signed_height_moment
from xyheights.geometry import box_dual, build_box
from xyheights.samplers import (
    RngStream,
    cable_sample,
    cable_sample_batch,
    dump_samples,
    height_heatbath,
    is_valid_height,
    iter_samples,
    xy_metropolis,
)
from xyheights.weights import weight


def test_rng_stream_contract():
    a = RngStream(42, 1).generator().random(5)
    b = RngStream(42, 1).generator().random(5)
    c = RngStream(42, 2).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_metropolis_beta_zero_uncorrelated():
    G = build_box(1, 1, 0.0)
    stats, _ = xy_metropolis(G, None, 4000, RngStream(0), pairs=[((-1, -1), (1, 1))], burn_in=50)
    s = next(iter(stats.values()))
    assert abs(s.mean) <= 4 * s.stderr


def test_metropolis_matches_exact_on_unit_box():
    G = build_box(1, 1, 1.0)
    exact = xy_two_point(G, (0, 1), (0, -1)).value
    stats, _ = xy_metropolis(G, None, 40_000, RngStream(2), pairs=[((0, 1), (0, -1))])
    s = next(iter(stats.values()))
    assert abs(s.mean - exact) <= 3.5 * s.stderr


def test_metropolis_determinism():
    G = build_box(1, 1, 1.0)
    _, cfg1 = xy_metropolis(G, None, 100, RngStream(11), burn_in=10)
    _, cfg2 = xy_metropolis(G, None, 100, RngStream(11), burn_in=10)
    assert np.array_equal(cfg1.theta, cfg2.theta)


GOLDEN_THETA = [
    3.7194173837649853,
    2.959103629272038,
    0.27609772852132564,
    5.747060038087727,
    1.8212855384512588,
    0.5164750316419936,
    2.871166774744538,
    1.4561559824348606,
    3.629036628104194,
]


def test_metropolis_golden_trajectory():
    # frozen reference run; guards the generator call sequence
    G = build_box(1, 1, 1.0)
    _, cfg = xy_metropolis(G, None, 5, RngStream(123), burn_in=0)
    assert np.allclose(cfg.theta, GOLDEN_THETA, rtol=0, atol=0)


def test_heatbath_frozen_at_zero_coupling():
    d = box_dual(1, J=0.0)
    pinned = {p: 0 for p in d.dual.boundary}
    _, cfg = height_heatbath(d.dual, None, pinned, 50, RngStream(1), burn_in=5)
    assert np.all(cfg.heights == 0)


def test_heatbath_shift_equivariance():
    d = box_dual(1, J=1.0)
    pinned0 = {p: 0 for p in d.dual.boundary}
    pinned3 = {p: 3 for p in d.dual.boundary}
    _, cfg0 = height_heatbath(d.dual, None, pinned0, 200, RngStream(8), burn_in=20)
    _, cfg3 = height_heatbath(d.dual, None, pinned3, 200, RngStream(8), burn_in=20)
    assert np.array_equal(cfg0.heights + 3, cfg3.heights)


def test_heatbath_marginal_against_enumeration():
    d = box_dual(1, J=1.0)
    pinned = {p: 0 for p in d.dual.boundary}
    sites = sorted(set(d.dual.vertices) - d.dual.boundary)
    target = sites[0]

    counts = {}
    sweeps = 30_000

    def track(free, h, pin):
        k = int(h[free.index(target)])
        counts[k] = counts.get(k, 0) + 1
        return 0.0

    height_heatbath(d.dual, None, pinned, sweeps, RngStream(3),
                    observables={"t": track}, burn_in=2000)
    # exact single-site marginal by enumeration
    probs = {}
    for combo in itertools.product(range(-4, 5), repeat=4):
        assign = dict(zip(sites, combo))
        assign.update(pinned)
        w = 1.0
        for (a, b), J in d.dual.edges.items():
            w *= weight(J, assign[a] - assign[b])
        probs[combo[0]] = probs.get(combo[0], 0.0) + w
    Z = sum(probs.values())
    chi2, dof = 0.0, 0
    other_e = other_o = 0.0
    neff = sweeps / 8  # generous autocorrelation discount for the test
    scale = neff / sweeps
    for k, p in probs.items():
        e = p / Z * sweeps * scale
        o = counts.get(k, 0) * scale
        if e >= 5:
            chi2 += (o - e) ** 2 / e
            dof += 1
        else:
            other_e += e
            other_o += o
    chi2 += (other_o - other_e) ** 2 / max(other_e, 1e-9)
    p = scipy.stats.chi2.sf(chi2, dof)
    assert p > 0.005, (chi2, dof, p)


def test_heatbath_stationarity_from_exact_start():
    # start from an exact draw; early and late means must agree within error
    from xyheights.exact.heights import HeightSampler

    d = box_dual(1, J=1.0)
    pinned = {p: 0 for p in d.dual.boundary}
    hs = HeightSampler(d.dual, pinned, (-5, 5))
    gen = np.random.default_rng(12)
    start = hs.sample(1, gen)
    sites = sorted(hs.sites)
    h0 = np.array([start[s][0] for s in sites])
    obs = {"h2": lambda free, h, pin: float((h.astype(float) ** 2).mean())}
    stats_early, _ = height_heatbath(d.dual, None, pinned, 4000, RngStream(5),
                                     observables=obs, burn_in=0, h0=h0)
    stats_late, _ = height_heatbath(d.dual, None, pinned, 4000, RngStream(6),
                                    observables=obs, burn_in=1000, h0=h0)
    a, b = stats_early["h2"], stats_late["h2"]
    assert abs(a.mean - b.mean) <= 4 * math.hypot(a.stderr, b.stderr)


# -- cable sampler ---------------------------------------------------------------


def test_cable_beta_zero_is_frozen_extension():
    batch = cable_sample_batch(continuum_box(1), 0.0, lambda p: 0, RngStream(1), 3)
    cfg = batch.config(0)
    assert cfg.total_jumps() == 0
    assert set(cfg.heights.values()) == {0}


def test_cable_single_segment_pinned_pair_counts():
    # one isolated piece of cable between two pinned endpoints at equal height:
    # up and down jumps arrive in equal numbers with the squared-Poisson law
    from xyheights.domains import ContinuumDomain
    from fractions import Fraction as F

    seg = ContinuumDomain({("h", F(1, 2)): [(F(0), F(2))]})
    beta = 1.6
    lam = beta * 2.0 / 2.0
    batch = cable_sample_batch(seg, beta, lambda p: 0, RngStream(4), 40_000)
    counts = {}
    for i in range(batch.nsamples):
        pos, signs = batch.config(i).jumps[0]
        assert signs.sum() == 0
        m = (signs == 1).sum()
        counts[int(m)] = counts.get(int(m), 0) + 1
    # P(m) proportional to lam^(2m) / (m!)^2
    raw = [lam ** (2 * m) / math.factorial(m) ** 2 for m in range(12)]
    Z = sum(raw)
    chi2 = dof = 0
    other_e = other_o = 0.0
    for m, p in enumerate(raw):
        e = p / Z * batch.nsamples
        o = counts.get(m, 0)
        if e >= 5:
            chi2 += (o - e) ** 2 / e
            dof += 1
        else:
            other_e += e
            other_o += o
    chi2 += (other_o - other_e) ** 2 / max(other_e, 1e-9)
    assert scipy.stats.chi2.sf(chi2, dof) > 0.01


def test_cable_marginal_matches_height_measure():
    g1 = continuum_box(1)
    batch = cable_sample_batch(g1, 1.0, lambda p: 0, RngStream(7), 50_000)
    sites = sorted(batch.site_heights)
    arr = np.stack([batch.site_heights[s] for s in sites], axis=1)
    skel = domain_skeleton(g1)
    graph = skel.graph(1.0)
    pinned = {p: 0 for p in skel.pinned}
    probs = {}
    for combo in itertools.product(range(-3, 4), repeat=len(sites)):
        assign = dict(zip(sites, combo))
        assign.update(pinned)
        w = 1.0
        for (a, b), J in graph.edges.items():
            w *= weight(J, assign[a] - assign[b])
        probs[combo] = w
    Z = sum(probs.values())
    vals, cnts = np.unique(arr, axis=0, return_counts=True)
    emp = {tuple(v): c for v, c in zip(vals, cnts)}
    chi2 = dof = 0
    oe = oo = 0.0
    for combo, p in probs.items():
        e = p / Z * batch.nsamples
        o = emp.get(combo, 0)
        if e >= 5:
            chi2 += (o - e) ** 2 / e
            dof += 1
        else:
            oe += e
            oo += o
    chi2 += (oo - oe) ** 2 / max(oe, 1e-9)
    assert scipy.stats.chi2.sf(chi2, dof) > 0.01


def test_cable_validity_and_corruption():
    batch = cable_sample_batch(continuum_box(1), 1.0, lambda p: 0, RngStream(2), 500)
    for i in range(0, 500, 25):
        assert is_valid_height(batch.config(i))
    cfg = batch.config(0)
    bad = copy.deepcopy(cfg)
    pos, signs = bad.jumps[0]
    e0 = bad.skeleton.edges[0]
    bad.jumps[0] = (
        np.append(pos, float(e0.lo) + 1e-3),
        np.append(signs, np.int8(1)),
    )
    assert not is_valid_height(bad)


def test_cable_intermediate_value_property():
    batch = cable_sample_batch(continuum_box(1), 1.5, lambda p: 0, RngStream(9), 200)
    for i in range(200):
        cfg = batch.config(i)
        for j, e in enumerate(cfg.skeleton.edges):
            pos, signs = cfg.jumps[j]
            # unit steps: along the edge, every intermediate integer is hit
            assert np.all(np.abs(signs) == 1)
            vals = np.concatenate([[cfg.heights[e.u]], cfg.heights[e.u] + np.cumsum(signs)])
            assert vals[-1] == cfg.heights[e.v]
            lo, hi = min(vals), max(vals)
            assert set(range(lo, hi + 1)) <= set(map(int, vals))


def test_cable_value_at_jump_is_half_integer():
    cfg = None
    batch = cable_sample_batch(continuum_box(1), 2.0, lambda p: 0, RngStream(5), 50)
    for i in range(50):
        c = batch.config(i)
        for j, (pos, signs) in enumerate(c.jumps):
            if len(pos):
                v = c.value_at(j, float(pos[0]))
                assert v * 2 == int(v * 2) and v != int(v)
                return
    pytest.skip("no jumps drawn")


def test_cable_determinism():
    a = cable_sample(continuum_box(1), 1.0, lambda p: 0, RngStream(21))
    b = cable_sample(continuum_box(1), 1.0, lambda p: 0, RngStream(21))
    assert a.heights == b.heights
    for (pa, sa), (pb, sb) in zip(a.jumps, b.jumps):
        assert np.array_equal(pa, pb) and np.array_equal(sa, sb)


def test_sample_dump_round_trip(tmp_path):
    path = tmp_path / "samples.jsonl"
    dump_samples(path, {"kind": "test", "seed": 1}, [{"a": 1}, {"a": 2}])
    recs = list(iter_samples(path))
    assert recs == [{"a": 1}, {"a": 2}]
