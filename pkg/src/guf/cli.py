"""Command-line interface: ``guf quantile|sample|simulate|bench|compare``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .filters import CubatureRule, FifthDegreeCubatureRule, GaussHermiteRule, GeometricRule, UnscentedRule
from .gus_sampler import GaussianBelief, LevelMode, NegativeStretchRadius
from .numerics import NotPositiveDefinite, chi_square_survival, chi_square_upper_quantile, random_stream
from .sphere_designs import layered_design, reference_sampling
from .tracking_bench import ConfigError, load_scenario, monte_carlo, simulate

SUMMARY_SCHEMA = "guf-bench-summary/1"
CSV_HEADER = ["step", "filter", "rmse_pos_m", "rmse_vel_mps", "rmse_turn_radps"]
DEFAULT_RULES = "gukf:kappa=1,ckf3,ckf5,ghqf:m=3,guf:n=2"


class UsageError(ValueError):
    pass


# -- rule specs ----------------------------------------------------------------


def _parse_design(text, n):
    """``rsK`` or generators joined by ``+`` with ``_`` between coordinates."""
    if text.startswith("rs"):
        try:
            return layered_design(n, int(text[2:]))
        except ValueError as exc:
            raise UsageError(f"bad design {text!r}: {exc}") from exc
    try:
        gens = [[float(c) for c in g.split("_")] for g in text.split("+")]
    except ValueError as exc:
        raise UsageError(f"bad design {text!r}") from exc
    if any(len(g) != n for g in gens):
        raise UsageError(f"design {text!r} does not have dimension {n}")
    return reference_sampling(gens)


def parse_rule(spec, n=5):
    """Build a sampling rule from ``name[:key=value...]``.

    Names: ``ukf`` and ``gukf`` (``kappa``), ``ckf3``, ``ckf5``, ``ghqf``
    (``m``), ``guf``/``gus`` (``n`` levels, ``mode``, ``design``, ``seed``).
    ``design`` is one entry for all levels or ``/``-separated per level.
    """
    name, *items = spec.strip().split(":")
    opts = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"option {item!r} in rule {spec!r} is not key=value")
        opts[key.strip()] = value.strip()

    def take(key, cast, default):
        try:
            return cast(opts.pop(key)) if key in opts else default
        except ValueError as exc:
            raise UsageError(f"bad value for {key} in rule {spec!r}") from exc

    name = name.lower()
    if name in ("ukf", "gukf", "ut"):
        rule = UnscentedRule(kappa=take("kappa", float, 1.0), resample=(name == "gukf"))
    elif name == "ckf3":
        rule = CubatureRule()
    elif name == "ckf5":
        rule = FifthDegreeCubatureRule()
    elif name in ("ghqf", "gh"):
        rule = GaussHermiteRule(order=take("m", int, 3))
    elif name in ("guf", "gus"):
        levels = take("n", int, 2)
        mode = take("mode", str, "grid").lower()
        if mode not in {m.value for m in LevelMode}:
            raise UsageError(f"unknown level mode {mode!r}")
        design_text = take("design", str, "rs1")
        parts = design_text.split("/")
        if len(parts) not in (1, levels):
            raise UsageError(f"design lists {len(parts)} entries for {levels} levels")
        designs = [_parse_design(p, n) for p in parts]
        rng = random_stream(take("seed", int, 0), 1 << 20) if mode == "random" else None
        rule = GeometricRule(levels=levels, mode=LevelMode(mode),
                             design=designs[0] if len(designs) == 1 else designs, rng=rng)
    else:
        raise UsageError(f"unknown rule {name!r}")
    if opts:
        raise UsageError(f"unused options {sorted(opts)} in rule {spec!r}")
    return rule


def parse_rules(text, n=5):
    specs = [s for s in (text.split(",") if isinstance(text, str) else text) if s.strip()]
    if not specs:
        raise UsageError("no rules given")
    return {s.strip(): parse_rule(s, n) for s in specs}


# -- belief files ----------------------------------------------------------------


def parse_belief(text):
    """Parse ``mean v1 v2 ...`` and one ``cov`` line per covariance row.

    ``#`` starts a comment. Errors carry the offending line number.
    """
    mean, rows = None, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *vals = line.replace(",", " ").split()
        try:
            nums = [float(v) for v in vals]
        except ValueError:
            raise UsageError(f"line {lineno}: non-numeric value in {raw.strip()!r}") from None
        if key == "mean":
            if mean is not None:
                raise UsageError(f"line {lineno}: duplicate mean")
            mean = nums
        elif key == "cov":
            rows.append((lineno, nums))
        else:
            raise UsageError(f"line {lineno}: expected 'mean' or 'cov', got {key!r}")
    if mean is None:
        raise UsageError("belief file has no 'mean' line")
    n = len(mean)
    for lineno, row in rows:
        if len(row) != n:
            raise UsageError(f"line {lineno}: covariance row has {len(row)} entries, expected {n}")
    if len(rows) != n:
        raise UsageError(f"expected {n} 'cov' rows, found {len(rows)}")
    cov = np.array([r for _, r in rows])
    if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-12):
        raise UsageError("covariance is not symmetric")
    return GaussianBelief(np.array(mean), cov)


# -- manifest ----------------------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict = field(default_factory=dict)
    seed: int | None = None
    timing_s: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def write(self, path):
        doc = {"tool": "guf", "version": __version__, **self.__dict__}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(v):
    return format(float(v), ".12g")


# -- commands ------------------------------------------------------------------------


def cmd_quantile(args, out):
    try:
        ds = [float(v) for v in args.d.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--d must be a comma-separated list of numbers, got {args.d!r}") from None
    if args.dim < 1:
        raise UsageError("--dim must be >= 1")
    for d in ds:
        if not 0.0 < d <= 1.0:
            raise UsageError(f"importance value {d} is outside (0, 1]")
    out.write("d,r,survival\n")
    for d in ds:
        r = chi_square_upper_quantile(args.dim, d)
        out.write(f"{_fmt(d)},{r:.10f},{_fmt(chi_square_survival(args.dim, r))}\n")
    return 0


def cmd_sample(args, out):
    if args.belief:
        belief = parse_belief(Path(args.belief).read_text())
    elif args.standard:
        belief = GaussianBelief.standard(args.standard)
    else:
        raise UsageError("give --belief FILE or --standard DIM")
    rule = parse_rule(args.rule, belief.dim)
    s = rule.sample(belief)
    n = belief.dim
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["level", "d", "r", "weight"] + [f"x{i + 1}" for i in range(n)])
    for j in range(len(s)):
        if s.level is not None:
            k = int(s.level[j])
            lv = s.source_levels[k]
            head = [k + 1, _fmt(lv.d), _fmt(lv.r)]
        else:
            head = ["", "", ""]
        writer.writerow(head + [_fmt(s.weights[j])] + [_fmt(v) for v in s.points[j]])
    mean_res = float(np.max(np.abs(s.mean() - belief.mean)))
    cov_res = float(np.linalg.norm(s.covariance() - belief.cov) / np.linalg.norm(belief.cov))
    print(f"points={len(s)}", file=sys.stderr)
    if s.beta is not None:
        print(f"beta={s.beta:.6f}", file=sys.stderr)
    print(f"weight_sum={s.weights.sum():.15g}", file=sys.stderr)
    print(f"negative_weights={int((s.weights < 0).sum())}", file=sys.stderr)
    print(f"mean_residual={mean_res:.3e}", file=sys.stderr)
    print(f"cov_residual_rel={cov_res:.3e}", file=sys.stderr)
    return 0


def _resolve_config(args):
    cfg = load_scenario(args.scenario)
    changes = {}
    if args.runs is not None:
        changes["runs"] = args.runs
    if args.steps is not None:
        changes["steps"] = args.steps
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "q2_literal", False):
        changes["q2_literal"] = True
    return cfg.replace(**changes) if changes else cfg


def cmd_simulate(args, out):
    cfg = _resolve_config(args)
    rec = simulate(cfg, args.run)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["step", "x_m", "vx_mps", "y_m", "vy_mps", "turn_radps", "range_m", "bearing_rad"])
    for k in range(cfg.steps):
        writer.writerow([k + 1] + [_fmt(v) for v in rec.truth[k]] + [_fmt(v) for v in rec.measurements[k]])
    return 0


def write_rmse_csv(reports, path):
    labels = sorted(reports)
    steps = len(next(iter(reports.values())).position)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for k in range(steps):
        for label in labels:
            rep = reports[label]
            writer.writerow([k + 1, label, _fmt(rep.position[k]), _fmt(rep.velocity[k]), _fmt(rep.turn_rate[k])])
    Path(path).write_text(buf.getvalue())


def bench_summary(cfg, reports):
    doc = {
        "schema": SUMMARY_SCHEMA,
        "scenario": cfg.name,
        "seed": cfg.seed,
        "common_random_numbers": True,
        "config": cfg.to_dict(),
        "filters": {},
    }
    if cfg.mixture is not None:
        doc["mixture"] = cfg.to_dict()["mixture"]
    for label, rep in reports.items():
        doc["filters"][label] = {
            "sample_count": rep.sample_count,
            "runtime_s": rep.runtime_s,
            "runs": rep.runs,
            "diverged_runs": rep.diverged_runs,
            "mean_rmse_pos_m": rep.mean_position,
            "mean_rmse_vel_mps": rep.mean_velocity,
            "mean_rmse_turn_radps": rep.mean_turn_rate,
        }
    return doc


def cmd_bench(args, out):
    t0 = time.perf_counter()
    cfg = _resolve_config(args)
    rules_text = args.rules or (",".join(cfg.rules) if cfg.rules else DEFAULT_RULES)
    rules = parse_rules(rules_text)
    cfg = cfg.replace(rules=tuple(rules))
    outdir = Path(args.out or f"bench-{cfg.name}")
    outdir.mkdir(parents=True, exist_ok=True)

    t1 = time.perf_counter()
    reports = monte_carlo(cfg, rules, jobs=args.jobs)
    t2 = time.perf_counter()

    csv_path, summary_path, manifest_path = outdir / "rmse.csv", outdir / "summary.json", outdir / "manifest.json"
    write_rmse_csv(reports, csv_path)
    summary = bench_summary(cfg, reports)
    summary_path.write_text(json.dumps(summary, indent=2) + "\n")
    RunManifest(
        command="bench",
        argv=list(args.argv),
        config=cfg.to_dict(),
        seed=cfg.seed,
        timing_s={"setup": t1 - t0, "monte_carlo": t2 - t1, "total": time.perf_counter() - t0},
        outputs={"rmse_csv": str(csv_path), "rmse_csv_sha256": _sha256(csv_path), "summary": str(summary_path)},
    ).write(manifest_path)

    out.write(f"{'filter':<24}{'points':>8}{'pos m':>12}{'vel m/s':>12}{'turn rad/s':>12}{'diverged':>10}{'time s':>10}\n")
    for label, rep in reports.items():
        out.write(f"{label:<24}{rep.sample_count:>8}{rep.mean_position:>12.4f}{rep.mean_velocity:>12.4f}"
                  f"{rep.mean_turn_rate:>12.6f}{rep.diverged_runs:>10}{rep.runtime_s:>10.3f}\n")
    out.write(f"wrote {csv_path}, {summary_path}, {manifest_path}\n")
    return 0


def load_summary(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read summary {path}: {exc}") from exc
    if doc.get("schema") != SUMMARY_SCHEMA or "filters" not in doc:
        raise UsageError(f"{path} is not a {SUMMARY_SCHEMA} summary")
    return doc


def compare_rows(summaries):
    """Flatten summaries to rows.

    Position deltas compare each filter with the same filter in the first
    summary (or the first row when absent there); runtime ratios use the first row.
    """
    rows = []
    for label, doc in summaries:
        for name, f in doc["filters"].items():
            rows.append({"summary": label, "filter": name, **f})
    base = rows[0]
    first = {r["filter"]: r for r in rows if r["summary"] == rows[0]["summary"]}
    for r in rows:
        ref = first.get(r["filter"], base)
        r["delta_pos_m"] = r["mean_rmse_pos_m"] - ref["mean_rmse_pos_m"]
        r["runtime_ratio"] = r["runtime_s"] / base["runtime_s"] if base["runtime_s"] > 0 else float("nan")
    return rows


def cmd_compare(args, out):
    if len(args.summaries) < 2:
        raise UsageError("compare needs at least two summary files")
    rows = compare_rows([(Path(p).parent.name or p, load_summary(p)) for p in args.summaries])
    out.write(f"{'summary':<20}{'filter':<24}{'points':>8}{'pos m':>12}{'delta m':>12}"
              f"{'diverged':>10}{'time s':>10}{'ratio':>8}\n")
    for r in rows:
        out.write(f"{r['summary']:<20}{r['filter']:<24}{r['sample_count']:>8}{r['mean_rmse_pos_m']:>12.4f}"
                  f"{r['delta_pos_m']:>12.4f}{r['diverged_runs']:>10}{r['runtime_s']:>10.3f}{r['runtime_ratio']:>8.3f}\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="guf", description=__doc__)
    p.add_argument("--version", action="version", version=f"guf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantile", help="squared radius of a shell with given tail mass")
    q.add_argument("--dim", type=int, required=True)
    q.add_argument("--d", required=True, help="comma-separated importance values in (0, 1]")
    q.set_defaults(func=cmd_quantile)

    s = sub.add_parser("sample", help="print a sigma set as CSV")
    s.add_argument("--belief", help="belief file ('mean ...' and 'cov ...' lines)")
    s.add_argument("--standard", type=int, metavar="DIM", help="use the standard normal in DIM dimensions")
    s.add_argument("--rule", required=True, help="e.g. ckf3, ut:kappa=0, gus:n=3:mode=gridclosed:design=rs2")
    s.set_defaults(func=cmd_sample)

    for name, func, helptext in (("simulate", cmd_simulate, "print one simulated run as CSV"),
                                 ("bench", cmd_bench, "Monte Carlo RMSE benchmark")):
        b = sub.add_parser(name, help=helptext)
        b.add_argument("scenario", help="bundled scenario name (scenario1..4) or YAML path")
        b.add_argument("--runs", type=int)
        b.add_argument("--steps", type=int)
        b.add_argument("--seed", type=int)
        b.add_argument("--q2-literal", action="store_true", help="use bare q2 for the turn-rate noise")
        b.set_defaults(func=func)
        if name == "simulate":
            b.add_argument("--run", type=int, default=0)
        else:
            b.add_argument("--rules", help=f"comma-separated rule specs (default: scenario list or {DEFAULT_RULES})")
            b.add_argument("--out", help="output directory")
            b.add_argument("--jobs", type=int, default=1)

    c = sub.add_parser("compare", help="compare bench summary JSON files")
    c.add_argument("summaries", nargs="+")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None, out=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args, out)
    except (UsageError, ConfigError, NegativeStretchRadius, NotPositiveDefinite, OSError) as exc:
        print(f"guf {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
