"""Reproducible experiment runner.

Every subcommand evaluates its grid deterministically (exact paths are
bit-reproducible, sampling paths seed-reproducible), writes one CSV of rows
plus a JSON manifest carrying the config hash, code version, timestamps, and
output digests.  Exit codes: 0 success, 1 verification failure, 2 usage or
validation error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import os
import sys
from fractions import Fraction

from . import __version__
from .geometry import as_slope

ENV_OUTDIR = "XYHEIGHTS_OUTDIR"

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2


class UsageError(ValueError):
    pass


def _canonical(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical(config).encode()).hexdigest()


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return h.hexdigest()


def write_manifest(out_dir: str, config: dict, outputs: list[str], started, finished) -> str:
    manifest = {
        "format": "manifest-1",
        "code_version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "started": started,
        "finished": finished,
        "outputs": {os.path.basename(p): file_digest(p) for p in outputs},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _slope_str(s) -> str:
    return str(as_slope(s))


# -- command implementations -----------------------------------------------------


def _cmd_verify(config: dict):
    what = config["what"]
    tol = config.get("tol", 1e-8)
    rows = []
    failures = 0
    if what == "kw":
        from .exact.verify import verify_kramers_wannier

        for n in config["n"]:
            for beta in config["beta"]:
                rep = verify_kramers_wannier(n, beta, tol=min(tol, 1e-9))
                ok = rep.relative_error <= tol
                failures += not ok
                rows.append([n, beta, rep.lhs_log, rep.rhs_log, rep.relative_error, tol, ok])
        header = ["n", "beta", "lhs_log", "rhs_log", "relative_error", "tol", "ok"]
    elif what == "kc":
        from .exact.verify import verify_kadanoff_ceva
        from .geometry import box_dual, build_box, slope_boundary

        for n in config["n"]:
            for beta in config["beta"]:
                for s in config.get("slopes", [0, "1/3"]):
                    s = as_slope(s)
                    dual = box_dual(n, J=beta)
                    zeta = slope_boundary(n, s, dual)
                    rep = verify_kadanoff_ceva(build_box(n, n, beta), zeta, tol=min(tol, 1e-9))
                    ok = rep.relative_error <= tol
                    failures += not ok
                    rows.append([n, beta, str(s), rep.relative_error, tol, ok])
        header = ["n", "beta", "slope", "relative_error", "tol", "ok"]
    elif what == "fkg":
        import numpy as np

        from .exact.verify import verify_fkg_boundary
        from .geometry import box_dual

        rng = np.random.default_rng(config.get("seed", 0))
        slack = config.get("slack", 1e-12)
        for n in config["n"]:
            boundary = sorted(box_dual(n).dual.boundary)
            for beta in config["beta"]:
                for trial in range(config.get("count", 50)):
                    zeta = {p: int(rng.integers(-1, 2)) for p in boundary}
                    rep = verify_fkg_boundary(n, beta, zeta)
                    ok = rep.relative_margin >= -slack
                    failures += not ok
                    rows.append([n, beta, trial, rep.relative_margin, ok])
        header = ["n", "beta", "trial", "relative_margin", "ok"]
    else:
        raise UsageError(f"unknown verify target {what!r}")
    return header, rows, failures


def _cmd_exact(config: dict):
    what = config["what"]
    rows = []
    if what == "z":
        from .exact import xy_partition
        from .geometry import build_box

        for n in config["n"]:
            for beta in config["beta"]:
                v = xy_partition(build_box(n, n, beta), tol=config.get("tol", 1e-9))
                rows.append([n, beta, v.value, v.log_value, v.error_estimate,
                             v.truncation.get("K")])
        header = ["n", "beta", "value", "log_value", "error_estimate", "K"]
    elif what == "correlator":
        from .exact import ChargeAssignment, xy_correlator
        from .geometry import build_box

        u = tuple(config["u"])
        v = tuple(config["v"])
        for n in config["n"]:
            for beta in config["beta"]:
                c = xy_correlator(
                    build_box(n, n, beta),
                    ChargeAssignment.two_point(u, v),
                    tol=config.get("tol", 1e-9),
                )
                rows.append([n, beta, str(u), str(v), c.value, c.error_estimate,
                             c.truncation.get("K")])
        header = ["n", "beta", "u", "v", "value", "error_estimate", "K"]
    elif what == "heights":
        from .exact.heights import HeightModelSpec, height_partition
        from .geometry import box_dual, slope_boundary

        for n in config["n"]:
            for beta in config["beta"]:
                for s in config.get("slopes", [0]):
                    s = as_slope(s)
                    dual = box_dual(n, J=beta)
                    zeta = slope_boundary(n, s, dual)
                    z = height_partition(
                        HeightModelSpec(dual.dual, dict(zeta.items()), tol=config.get("tol", 1e-9))
                    )
                    rows.append([n, beta, str(s), z.value, z.log_value,
                                 z.error_estimate, z.truncation.get("H")])
        header = ["n", "beta", "slope", "value", "log_value", "error_estimate", "H"]
    else:
        raise UsageError(f"unknown exact target {what!r}")
    return header, rows, 0


def _cmd_sample(config: dict, out_dir: str):
    what = config["what"]
    seed = config.get("seed", 0)
    rows = []
    outputs = []
    from .samplers import RngStream

    if what == "xy":
        from .geometry import build_box
        from .samplers import dump_samples, xy_metropolis

        n = config["n"]
        beta = config["beta"]
        sweeps = config.get("sweeps", 10000)
        pairs = [((0, n), (0, -n))]
        stats, cfg = xy_metropolis(
            build_box(n, n, beta), None, sweeps, RngStream(seed),
            pairs=pairs, burn_in=config.get("burn_in", 1000),
        )
        for pair, st in stats.items():
            rows.append([n, beta, sweeps, seed, str(pair[0]), str(pair[1]),
                         st.mean, st.stderr, st.n_batches])
        header = ["n", "beta", "sweeps", "seed", "u", "v", "mean", "stderr", "n_batches"]
        dump = os.path.join(out_dir, "final_config.jsonl")
        dump_samples(dump, {"kind": "xy", "n": n, "beta": beta, "seed": seed},
                     [{"theta": cfg.theta.tolist()}])
        outputs.append(dump)
    elif what == "height":
        from .geometry import box_dual
        from .samplers import dump_samples, height_heatbath

        n = config["n"]
        beta = config["beta"]
        sweeps = config.get("sweeps", 10000)
        dual = box_dual(n, J=beta)
        pinned = {p: 0 for p in dual.dual.boundary}
        stats, cfg = height_heatbath(
            dual.dual, None, pinned, sweeps, RngStream(seed),
            observables={"h2": lambda free, h, pin: float((h**2).mean())},
            burn_in=config.get("burn_in", 1000),
        )
        s = stats["h2"]
        rows.append([n, beta, sweeps, seed, "mean_h2", s.mean, s.stderr])
        header = ["n", "beta", "sweeps", "seed", "observable", "mean", "stderr"]
        dump = os.path.join(out_dir, "final_config.jsonl")
        dump_samples(dump, {"kind": "height", "n": n, "beta": beta, "seed": seed},
                     [{"heights": cfg.heights.tolist()}])
        outputs.append(dump)
    elif what == "cable":
        from .domains import continuum_box
        from .samplers import cable_sample_batch, dump_samples, is_valid_height

        n = config["n"]
        beta = config["beta"]
        nsamples = config.get("samples", 100)
        batch = cable_sample_batch(continuum_box(n), beta, lambda p: 0,
                                   RngStream(seed), nsamples)
        valid = sum(is_valid_height(batch.config(i)) for i in range(nsamples))
        rows.append([n, beta, nsamples, seed, valid, valid == nsamples])
        header = ["n", "beta", "samples", "seed", "valid", "all_valid"]
        dump = os.path.join(out_dir, "samples.jsonl")
        recs = []
        for i in range(min(nsamples, config.get("dump_limit", 50))):
            c = batch.config(i)
            recs.append({
                "heights": {str(k): int(v) for k, v in c.heights.items()},
                "jumps": [[list(map(float, p)), list(map(int, s))] for p, s in c.jumps],
            })
        dump_samples(dump, {"kind": "cable", "n": n, "beta": beta, "seed": seed}, recs)
        outputs.append(dump)
    else:
        raise UsageError(f"unknown sample target {what!r}")
    return header, rows, 0, outputs


def _cmd_estimate(config: dict):
    what = config["what"]
    seed = config.get("seed", 0)
    rows = []
    from .samplers import RngStream

    if what in ("mass-xy", "mass-height"):
        from .estimators import mass_height, mass_xy

        fn = mass_xy if what == "mass-xy" else mass_height
        for beta in config["beta"]:
            m = fn(beta, config["n"], config.get("kmax", min(4, 2 * config["n"])),
                   method=config.get("method", "auto"),
                   rng=RngStream(seed), sweeps=config.get("sweeps", 200_000))
            rows.append([beta, m.n, m.mhat, m.mhat_err, str(m.window), m.method, seed,
                         json.dumps(m.points)])
        header = ["beta", "n", "mhat", "mhat_err", "window", "method", "seed", "points"]
    elif what == "free-energy":
        from .estimators import free_energy_delta

        for s in config["s"]:
            d = free_energy_delta(config["n"], config["beta"], as_slope(s),
                                  method=config.get("method", "auto"),
                                  rng=RngStream(seed),
                                  sweeps=config.get("sweeps", 4000))
            rows.append([d.n, d.beta, d.s, d.log_ratio, d.error, d.value,
                         d.value_inner, d.method, seed])
        header = ["n", "beta", "s", "log_ratio", "log_ratio_err",
                  "delta_f_dual", "delta_f_inner", "method", "seed"]
    else:
        raise UsageError(f"unknown estimate target {what!r}")
    return header, rows, 0


def _cmd_check(config: dict):
    what = config["what"]
    seed = config.get("seed", 0)
    rows = []
    failures = 0
    from .samplers import RngStream

    if what == "main-bound":
        from .estimators import check_main_bound

        rep = check_main_bound(
            config["beta"], [as_slope(s) for s in config["s"]], config["n"],
            rng=RngStream(seed),
            mass_sweeps=config.get("mass_sweeps", 400_000),
            df_sweeps=config.get("df_sweeps", 4000),
        )
        for r in rep.rows:
            rows.append([rep.beta, rep.n, r.s, rep.mass.mhat, rep.mass.mhat_err,
                         r.s_mhat, r.df_inner, r.df_dual, r.df_err, r.residual,
                         r.lower_ok, seed])
        rows.append([rep.beta, rep.n, "fit", "", "", "", "", "", "", rep.chat,
                     rep.residual_increasing and rep.residual_convex, seed])
        header = ["beta", "n", "s", "mhat", "mhat_err", "s_mhat", "df_inner",
                  "df_dual", "df_err", "residual", "ok", "seed"]
    elif what == "reverse-ginibre":
        from .estimators import fit_reverse_constant, reverse_ginibre_ratio

        reports = []
        for r in config["r"]:
            row = reverse_ginibre_ratio(config["beta"], config["n"], r,
                                        method=config.get("method", "auto"),
                                        rng=RngStream(seed + r),
                                        sweeps=config.get("sweeps", 6000))
            reports.append(row)
            rows.append([row.n, row.r, config["beta"], row.corr_narrow, row.corr_wide,
                         row.rho, row.log_rho, row.log_rho_err, row.n_over_r, seed])
        chat = fit_reverse_constant(reports)
        rows.append([config["n"], "fit", config["beta"], "", "", "", "", "", chat, seed])
        header = ["n", "r", "beta", "corr_narrow", "corr_wide", "rho",
                  "log_rho", "log_rho_err", "n_over_r", "seed"]
    elif what == "lower-chain":
        from .estimators import lower_bound_chain_check

        slack = config.get("slack", 1e-6)
        for n in config["n"]:
            for beta in config["beta"]:
                for s in config["s"]:
                    rep = lower_bound_chain_check(n, beta, as_slope(s),
                                                  K=config.get("K"))
                    ok = rep.margin >= -slack
                    failures += not ok
                    rows.append([n, beta, str(as_slope(s)), rep.log_ratio,
                                 rep.log_product, rep.margin, ok])
        header = ["n", "beta", "s", "log_ratio", "log_product", "margin", "ok"]
    elif what == "multipoint":
        from .estimators import multipoint_ratio_check

        for s in config["s"]:
            rep = multipoint_ratio_check(config["n"], config["beta"], as_slope(s),
                                         K=config.get("K"))
            rows.append([rep.n, rep.beta, rep.s, rep.log_full, rep.log_strips,
                         rep.log_ratio, rep.implied_constant, rep.n_components])
        header = ["n", "beta", "s", "log_full", "log_strips", "log_ratio",
                  "implied_constant", "n_components"]
    else:
        raise UsageError(f"unknown check target {what!r}")
    return header, rows, failures


def _cmd_explore(config: dict):
    what = config["what"]
    seed = config.get("seed", 0)
    rows = []
    failures = 0
    from .samplers import RngStream

    if what == "crossing":
        from .exploration import crossing_probability

        for r in config["r"]:
            est = crossing_probability(config["n"], r, config["beta"],
                                       config.get("samples", 2000), RngStream(seed + r))
            lo, hi = est.wilson_interval()
            rows.append([config["n"], r, config["beta"], est.samples, est.hits,
                         est.estimate, est.stderr, lo, hi, est.zero_count, seed])
        header = ["n", "r", "beta", "samples", "hits", "estimate", "stderr",
                  "ci_lo", "ci_hi", "zero_count", "seed"]
    elif what == "markov-test":
        from fractions import Fraction

        from .domains import continuum_box
        from .exploration import PointSeed, markov_resample_test

        n = config.get("n", 1)
        rep = markov_resample_test(
            continuum_box(n), config["beta"], lambda p: 0, config.get("level", 0),
            PointSeed(((Fraction(1, 2), 0),)),
            config.get("samples", 20000), RngStream(seed),
            fault_shift=config.get("fault_shift", 0),
        )
        threshold = config.get("p_threshold", 0.01)
        ok = rep.p_value > threshold if not config.get("fault_shift") else rep.p_value < threshold
        failures += not ok
        rows.append([n, config["beta"], rep.n_samples, rep.n_shapes, rep.n_used,
                     rep.chi2, rep.dof, rep.p_value, config.get("fault_shift", 0), ok, seed])
        header = ["n", "beta", "samples", "shapes", "used", "chi2", "dof",
                  "p_value", "fault_shift", "ok", "seed"]
    elif what == "multi-strip":
        from .exploration import multi_strip_event_probability

        est = multi_strip_event_probability(config["n"], as_slope(config["s"]),
                                            config["beta"], config.get("samples", 2000),
                                            RngStream(seed))
        rows.append([config["n"], str(as_slope(config["s"])), config["beta"],
                     est.samples, est.hits, est.estimate, est.stderr,
                     json.dumps(est.extra.get("marginals", [])),
                     est.extra.get("marginal_product", ""), seed])
        header = ["n", "s", "beta", "samples", "hits", "estimate", "stderr",
                  "marginals", "marginal_product", "seed"]
    else:
        raise UsageError(f"unknown explore target {what!r}")
    return header, rows, failures


def _cmd_report(config: dict):
    paths = config["inputs"]
    rows = []
    header = None
    seen = set()
    for path in paths:
        with open(path) as f:
            reader = csv.reader(f)
            h = next(reader, None)
            if h is None:
                continue
            if header is None:
                header = h + ["source"]
            elif h != header[:-1]:
                raise UsageError(f"schema mismatch in {path}")
            for row in reader:
                key = tuple(row)
                if key in seen:
                    continue
                seen.add(key)
                rows.append(row + [os.path.basename(path)])
    if header is None:
        header = ["empty"]
    rows.sort()
    return header, rows, 0


# -- argument parsing --------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--out-dir", help=f"output directory (default ${ENV_OUTDIR} or ./runs)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tag", default=None, help="run directory name (default: config hash)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="xyheights",
        description="Exact engines, samplers, and estimators for the planar "
        "spin model and its dual height function.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="identity and inequality verifiers")
    v.add_argument("what", choices=["kw", "kc", "fkg"])
    v.add_argument("--n", type=int, nargs="+", default=[1])
    v.add_argument("--beta", type=float, nargs="+", default=[1.0])
    v.add_argument("--tol", type=float, default=1e-8)
    v.add_argument("--count", type=int, default=50)
    v.add_argument("--slopes", nargs="+", default=None)
    _add_common(v)

    e = sub.add_parser("exact", help="exact values")
    e.add_argument("what", choices=["z", "correlator", "heights"])
    e.add_argument("--n", type=int, nargs="+", default=[1])
    e.add_argument("--beta", type=float, nargs="+", default=[1.0])
    e.add_argument("--u", type=int, nargs=2, default=[0, 1])
    e.add_argument("--v", type=int, nargs=2, default=[0, -1])
    e.add_argument("--slopes", nargs="+", default=None)
    e.add_argument("--tol", type=float, default=1e-9)
    _add_common(e)

    s = sub.add_parser("sample", help="Monte Carlo samplers")
    s.add_argument("what", choices=["xy", "height", "cable"])
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--sweeps", type=int, default=10000)
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--burn-in", type=int, default=1000)
    _add_common(s)

    t = sub.add_parser("estimate", help="mass and free-energy estimators")
    t.add_argument("what", choices=["mass-xy", "mass-height", "free-energy"])
    t.add_argument("--n", type=int, default=2)
    t.add_argument("--beta", type=float, nargs="+", default=[1.0])
    t.add_argument("--kmax", type=int, default=None)
    t.add_argument("--s", nargs="+", default=["1/3"])
    t.add_argument("--method", default="auto")
    t.add_argument("--sweeps", type=int, default=200_000)
    _add_common(t)

    c = sub.add_parser("check", help="inequality and bound checkers")
    c.add_argument("what", choices=["main-bound", "reverse-ginibre", "lower-chain", "multipoint"])
    c.add_argument("--n", type=int, nargs="+", default=[2])
    c.add_argument("--beta", type=float, nargs="+", default=[1.0])
    c.add_argument("--s", nargs="+", default=["1/3"])
    c.add_argument("--r", type=int, nargs="+", default=[2, 3, 4])
    c.add_argument("--method", default="auto")
    c.add_argument("--sweeps", type=int, default=6000)
    c.add_argument("--mass-sweeps", type=int, default=400_000)
    c.add_argument("--df-sweeps", type=int, default=4000)
    c.add_argument("--K", type=int, default=None)
    _add_common(c)

    x = sub.add_parser("explore", help="exploration-event estimators")
    x.add_argument("what", choices=["crossing", "markov-test", "multi-strip"])
    x.add_argument("--n", type=int, default=2)
    x.add_argument("--beta", type=float, default=1.0)
    x.add_argument("--r", type=int, nargs="+", default=[2])
    x.add_argument("--s", default="1/3")
    x.add_argument("--samples", type=int, default=2000)
    x.add_argument("--level", type=int, default=0)
    x.add_argument("--fault-shift", type=int, default=0)
    _add_common(x)

    rep = sub.add_parser("report", help="aggregate result CSVs")
    rep.add_argument("inputs", nargs="+", help="CSV files from prior runs")
    _add_common(rep)

    return p


_SCALARS = {"n", "beta", "s", "r", "slopes"}


def _merge_config(args: argparse.Namespace) -> dict:
    config: dict = {}
    if args.config:
        with open(args.config) as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        config.update(loaded)
    for key, value in vars(args).items():
        if key in ("config", "out_dir", "tag") or value is None:
            continue
        config[key.replace("-", "_")] = value
    # normalize grid-like keys to lists where the command expects them
    for key in ("n", "beta", "r", "s", "slopes"):
        if key in config and not isinstance(config[key], list):
            if config["command"] in ("verify", "exact") and key in ("n", "beta"):
                config[key] = [config[key]]
    return config


def _validate(config: dict) -> None:
    for s in config.get("s", []) if isinstance(config.get("s"), list) else []:
        val = as_slope(s)
        if config.get("command") in ("check", "estimate") and not (0 <= val < 1):
            raise UsageError(f"slope {s} outside [0, 1)")
    for b in config.get("beta", []) if isinstance(config.get("beta"), list) else []:
        if b < 0:
            raise UsageError("beta must be nonnegative")


def run(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _merge_config(args)
        _validate(config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_base = args.out_dir or os.environ.get(ENV_OUTDIR) or "runs"
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    outputs: list[str] = []
    try:
        command = config["command"]
        if command == "verify":
            header, rows, failures = _cmd_verify(config)
        elif command == "exact":
            header, rows, failures = _cmd_exact(config)
        elif command == "estimate":
            header, rows, failures = _cmd_estimate(config)
        elif command == "check":
            header, rows, failures = _cmd_check(config)
        elif command == "explore":
            header, rows, failures = _cmd_explore(config)
        elif command == "report":
            header, rows, failures = _cmd_report(config)
        elif command == "sample":
            tag = args.tag or config_hash(config)[:12]
            out_dir = os.path.join(out_base, tag)
            os.makedirs(out_dir, exist_ok=True)
            header, rows, failures, outputs = _cmd_sample(config, out_dir)
        else:  # pragma: no cover
            raise UsageError(f"unknown command {command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if config["command"] != "sample":
        tag = args.tag or config_hash(config)[:12]
        out_dir = os.path.join(out_base, tag)
        os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    write_csv(csv_path, header, rows)
    outputs.append(csv_path)
    finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
    write_manifest(out_dir, config, outputs, started, finished)

    for row in rows:
        print(",".join(_fmt(x) for x in row))
    print(f"# wrote {csv_path}")
    if failures:
        print(f"# {failures} check(s) failed", file=sys.stderr)
        return EXIT_VERIFY_FAIL
    return EXIT_OK


def main() -> None:  # pragma: no cover
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
