"""Command line entry point: ``cmslab <subcommand> --preset NAME | --config FILE``.

Every subcommand prints one JSON report on stdout (and writes it to --out when
given). Exit codes: 0 success, 2 validation failure, 1 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import functools
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__, checks, oracle, rng, thermo
from .coding import (CodeWindow, coding_convergence_profile, coding_map, sample_code)
from .config import ConfigError, load_system
from .dynamics import estimate_invariant_measure, moment_check, run_chain
from .expr import DomainError, ExprError
from .graph import GraphError, admissible_words
from .system import (RegionError, SystemDefinitionError, estimate_contraction_rate, validate)

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2

SUBCOMMANDS = ("validate", "rate", "invariant", "chain", "cylinder", "code", "energy", "entropy",
               "blocks", "gap", "pushforward", "condexp", "oracle", "report")


class ValidationFailed(Exception):
    pass


@functools.lru_cache(maxsize=1)
def version_string() -> str:
    """``git describe`` of the source tree, or the package version outside a checkout."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return f"cmslab {__version__} ({out.stdout.strip()})"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"cmslab {__version__}"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def record(quantity, estimate, stderr=None, n_samples=None, seed=None, **params) -> dict:
    return {"quantity": quantity, "estimate": estimate, "stderr": stderr,
            "n_samples": n_samples, "seed": seed, "params": params}


# ---------------------------------------------------------------- helpers

def _mu(sys, args):
    rate = estimate_contraction_rate(sys, 20_000, args.seed).rate
    return estimate_invariant_measure(sys, args.particles, burn_in=args.burn_in,
                                      seed=args.seed, rate=rate)


def _edge_word(sys, text: str):
    idx = sys.graph.edge_index
    try:
        return tuple(idx[t.strip()] for t in text.split(",") if t.strip())
    except KeyError as exc:
        raise ValidationFailed(f"unknown edge id {exc.args[0]!r}") from None


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _g(v):
    return repr(float(v))


# ---------------------------------------------------------------- subcommands

def cmd_validate(sys, args, out):
    rep = validate(sys, args.samples or 10_000, args.seed)
    d = rep.to_dict()
    out["records"] = [record("validation_passed", rep.passed, None, rep.samples, args.seed)]
    out["validation"] = d
    if not rep.passed:
        out["status"] = "invalid"
        return EXIT_INVALID
    return EXIT_OK


def cmd_rate(sys, args, out):
    est = estimate_contraction_rate(sys, args.samples or 100_000, args.seed)
    out["records"] = [record("empirical_rate", est.rate, None, est.n_pairs, args.seed,
                             status="empirical" if est.contractive else "not verified contractive")]
    out["rate"] = est.to_dict()
    return EXIT_OK


def cmd_invariant(sys, args, out):
    mu = _mu(sys, args)
    means = [mu.mean(mu.points[:, j]) for j in range(sys.dim)]
    ses = [mu.stderr(mu.points[:, j]) for j in range(sys.dim)]
    out["records"] = [record(f"mean_x{j + 1}", means[j], ses[j], len(mu), args.seed)
                      for j in range(sys.dim)]
    out["records"].append(record("moment_to_anchors", moment_check(sys, mu), None, len(mu), args.seed))
    out["ensemble_info"] = mu.info
    if args.out:
        mu.to_csv(Path(args.out) / "ensemble.csv", sys.graph.vertices)
    return EXIT_OK


def cmd_chain(sys, args, out):
    n = args.samples or 1000
    x0 = [float(v) for v in args.x0.split(",")] if args.x0 else list(sys.anchors[0])
    run = run_chain(sys, x0, n, args.seed, keep_points=True)
    freq = np.bincount(run.word, minlength=sys.graph.n_edges) / n
    out["records"] = [record(f"edge_frequency[{sys.edge_ids[e]}]", freq[e], None, n, args.seed)
                      for e in range(sys.graph.n_edges)]
    out["final_point"] = list(run.final)
    out["word_head"] = [sys.edge_ids[e] for e in run.word[:50]]
    if args.out:
        _write_csv(Path(args.out) / "chain.csv",
                   ["step", "edge"] + [f"x{j + 1}" for j in range(sys.dim)],
                   [[t + 1, sys.edge_ids[e]] + [_g(c) for c in run.points[t]]
                    for t, e in enumerate(run.word)])
    return EXIT_OK


def cmd_cylinder(sys, args, out):
    if not args.word:
        raise ValidationFailed("cylinder needs --word (comma-separated edge ids)")
    word = _edge_word(sys, args.word)
    mu = _mu(sys, args)
    r = thermo.cylinder_measure(sys, mu, word, args.mode)
    out["records"] = [record("cylinder_measure", r.estimate, r.stderr, len(mu), args.seed,
                             word=[sys.edge_ids[e] for e in word], method=r.method)]
    return EXIT_OK


def cmd_code(sys, args, out):
    mu = _mu(sys, args)
    depth = args.depth or 16
    window, origin = sample_code(sys, mu, depth, args.future, args.seed)
    res = coding_map(sys, window.restrict(window.start, 0), args.tol)
    out["window"] = json.loads(window.to_json(sys))
    out["records"] = [record("coding_map", list(res.value), res.diameter_bound, 1, args.seed,
                             status=res.status, depth=res.depth, chain_origin=list(origin))]
    prof = coding_convergence_profile(sys, mu, range(1, depth + 1), args.samples or 10_000, args.seed)
    out["profile"] = prof
    if args.out:
        _write_csv(Path(args.out) / "coding_profile.csv", ["depth", "mean_distance", "stderr"],
                   [[p["depth"], _g(p["mean_distance"]), _g(p["stderr"])] for p in prof])
    return EXIT_OK


def cmd_energy(sys, args, out):
    if args.word:
        word = _edge_word(sys, args.word)
        ev = thermo.energy(sys, CodeWindow.ending_at(word, 1), args.tol)
        out["records"] = [record("energy", ev.u, ev.error_bar, 1, args.seed, status=ev.status,
                                 word=[sys.edge_ids[e] for e in word])]
        return EXIT_OK
    mu = _mu(sys, args)
    n, depth = args.samples or 100_000, args.depth or 12
    r = thermo.energy_expectation(sys, mu, n, depth, args.seed, args.tol)
    out["records"] = [record("energy_expectation", r["mean"], r["stderr"], n, args.seed,
                             past_depth=depth, diverged_fraction=r["diverged_fraction"],
                             not_converged_fraction=r["not_converged_fraction"])]
    return EXIT_OK


def cmd_entropy(sys, args, out):
    mu = _mu(sys, args)
    h, se = thermo.entropy_formula(sys, mu)
    out["records"] = [record("entropy_formula", h, se, len(mu), args.seed,
                             upper_bound=math.log(sys.graph.n_edges))]
    return EXIT_OK


def cmd_blocks(sys, args, out):
    mu = _mu(sys, args)
    n, k = args.samples or 100_000, args.depth or 6
    r = thermo.block_entropy(sys, mu, k, n, args.seed, blocks_per_code=args.blocks_per_code)
    out["records"] = [record(f"block_entropy_per_symbol[{b['k']}]", b["H_per_symbol"],
                             b["stderr_per_symbol"], b["n_blocks"], args.seed,
                             miller_madow=b["miller_madow_per_symbol"], distinct=b["distinct"])
                      for b in r["blocks"]]
    out["records"].append(record("entropy_formula", r["entropy_formula"],
                                 r["entropy_formula_stderr"], len(mu), args.seed))
    out["warnings"] = r["warnings"]
    if args.out:
        _write_csv(Path(args.out) / "blocks.csv",
                   ["k", "n_blocks", "H_per_symbol", "stderr", "miller_madow_per_symbol", "distinct"],
                   [[b["k"], b["n_blocks"], _g(b["H_per_symbol"]), _g(b["stderr_per_symbol"]),
                     _g(b["miller_madow_per_symbol"]), b["distinct"]] for b in r["blocks"]])
    return EXIT_OK


def cmd_gap(sys, args, out):
    mu = _mu(sys, args)
    n, depth = args.samples or 20_000, args.depth or 12
    gen = rng.stream(args.seed, "competitors")
    rows = []
    for j in range(args.competitors):
        theta = thermo.random_competitor(sys, args.order, gen)
        r = thermo.variational_gap(sys, mu, theta, n, depth, seed=args.seed * 1000 + j)
        rows.append(r)
    out["records"] = [record("variational_gap", r["gap"], r["stderr"], n, args.seed,
                             competitor=j, entropy=r["entropy"], annotation=r["annotation"],
                             diverged_fraction=r["diverged_fraction"])
                      for j, r in enumerate(rows)]
    if rows:
        worst = max(range(len(rows)), key=lambda j: rows[j]["gap"])
        out["max_gap_competitor"] = {"index": worst, "gap": rows[worst]["gap"],
                                     "stderr": rows[worst]["stderr"]}
        out["all_within_3sigma"] = all(r["gap"] <= 3 * r["stderr"] for r in rows)
    if args.out:
        _write_csv(Path(args.out) / "gaps.csv", ["competitor", "entropy", "gap", "stderr"],
                   [[j, _g(r["entropy"]), _g(r["gap"]), _g(r["stderr"])] for j, r in enumerate(rows)])
    return EXIT_OK


def cmd_pushforward(sys, args, out):
    mu = _mu(sys, args)
    n, depth = args.samples or 100_000, args.depth or 16
    r = thermo.pushforward_check(sys, mu, n, depth, args.seed, args.tol)
    out["records"] = [record("pushforward_ks", r["ks"], None, n, args.seed, past_depth=depth,
                             per_coordinate=r["ks_per_coordinate"],
                             not_converged_fraction=r["not_converged_fraction"])]
    return EXIT_OK


def cmd_condexp(sys, args, out):
    mu = _mu(sys, args)
    n, past_len = args.samples or 10**6, args.depth or 4
    r = thermo.conditional_expectation_test(sys, mu, n, past_len, args.seed)
    out["records"] = [record("max_bin_discrepancy", r["max_discrepancy"], None, n, args.seed,
                             past_len=past_len, max_band=r["max_band"], max_ratio=r["max_ratio"],
                             populated_bins=r["populated_bins"], within_band=r["within_band"],
                             n_exceed=r["n_exceed"], expected_exceed=r["expected_exceed"])]
    if args.out:
        _write_csv(Path(args.out) / "condexp_bins.csv",
                   ["past", "edge", "count", "frequency", "expected", "discrepancy", "band"],
                   [[" ".join(b["past"]), b["edge"], b["count"], _g(b["frequency"]),
                     _g(b["expected"]), _g(b["discrepancy"]), _g(b["band"])] for b in r["bins"]])
    return EXIT_OK


def cmd_oracle(sys, args, out):
    if "g" not in sys.meta:
        raise ValidationFailed("oracle needs a g-measure system (e.g. --preset gmeasure-2symbol)")
    orc = oracle.transfer_operator_fixed_point(oracle.gmeasure_potential(sys), sys.graph)
    mu = _mu(sys, args)
    recs = []
    for w in admissible_words(sys.graph, args.depth or 3):
        est = thermo.cylinder_measure(sys, mu, w)
        recs.append(record("cylinder_measure", est.estimate, est.stderr, len(mu), args.seed,
                           word=[sys.edge_ids[e] for e in w], oracle=orc.word_measure(w)))
    out["records"] = recs
    out["oracle_iterations"] = orc.iterations
    return EXIT_OK


def cmd_report(system, args, out):
    results = checks.run_checks(system, args.preset, args.seed)
    out["checks"] = [c.to_dict() for c in results]
    out["records"] = [record(f"check[{c.id}]", c.passed, None, None, args.seed, title=c.title)
                      for c in results]
    out["all_passed"] = all(c.passed for c in results)
    width = max(len(c.title) for c in results)
    lines = [f"{'id':>8}  {'check':<{width}}  result"]
    for c in results:
        lines.append(f"{c.id:>8}  {c.title:<{width}}  {'PASS' if c.passed else 'FAIL'}"
                     + (f"  ({c.note})" if c.note and not c.passed else ""))
    out["table"] = lines
    print("\n".join(lines), file=sys.stderr)
    return EXIT_OK


COMMANDS = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


# ---------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmslab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=version_string())
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="TOML system file (schema 1)")
    src.add_argument("--preset", help="built-in system name")
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--samples", type=int, default=None, help="sample count for the estimator")
    common.add_argument("--depth", type=int, default=None,
                        help="past depth (code, energy, gap, pushforward), block length (blocks), "
                             "past_len (condexp) or word length (oracle)")
    common.add_argument("--particles", type=int, default=None, help="invariant-measure particles")
    common.add_argument("--burn-in", type=int, default=None)
    common.add_argument("--tol", type=float, default=None, help="coding-map tolerance")
    common.add_argument("--out", help="directory for JSON and CSV outputs")
    common.add_argument("--timestamp", action="store_true",
                        help="add a wall-clock timestamp field to the report")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "gap":
            sp.add_argument("--competitors", type=int, default=50)
            sp.add_argument("--order", type=int, default=1)
        if name in ("cylinder", "energy"):
            sp.add_argument("--word", help="comma-separated edge ids")
        if name == "cylinder":
            sp.add_argument("--mode", choices=("quadrature", "exact-split"), default="quadrature")
        if name == "chain":
            sp.add_argument("--x0", help="comma-separated starting point (default: first anchor)")
        if name == "code":
            sp.add_argument("--future", type=int, default=0)
        if name == "blocks":
            sp.add_argument("--blocks-per-code", type=int, default=1)
    return p


def _resolve(args, run_defaults: dict):
    for key, default in (("seed", 0), ("samples", None), ("depth", None),
                         ("particles", 100_000), ("burn_in", None), ("tol", 1e-8)):
        if getattr(args, key) is None:
            setattr(args, key, run_defaults.get(key, default))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        system, run_defaults = load_system(args.config, args.preset)
    except (ConfigError, ExprError, GraphError, SystemDefinitionError, OSError) as exc:
        print(f"cmslab: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _resolve(args, run_defaults)
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "timestamp", "out")}
    out = {"version": version_string(), "command": args.command, "system": system.name,
           "seed": args.seed, "params": params, "status": "ok"}
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    try:
        code = COMMANDS[args.command](system, args, out)
    except ValidationFailed as exc:
        print(f"cmslab: {exc}", file=sys.stderr)
        out.update(status="invalid", error=str(exc))
        code = EXIT_INVALID
    except (DomainError, RegionError, ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"cmslab: {type(exc).__name__}: {exc}", file=sys.stderr)
        out.update(status="error", error=f"{type(exc).__name__}: {exc}")
        code = EXIT_RUNTIME
    if args.timestamp:
        out["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    text = json.dumps(_clean(out), indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.out:
        (Path(args.out) / f"{args.command}.json").write_text(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
