"""Command-line front end.

Commands::

    fdrcurve qstar --constraints "0:0.1" --family gaussian --m 100 --grid -1:1:41
    fdrcurve select-constraints --constraints "-0.27:0.2,0:0.1,0.26:0.05" --family gaussian --m 3170
    fdrcurve summarize --input matrix.tsv --labels labels.csv
    fdrcurve test --stats summary.csv --mode snr --constraints "-0.27:0.2,0:0.1,0.26:0.05"
    fdrcurve simulate --thetas "0*25,-3*25" --constraints "0:0.1" --replications 20000

Every run writes CSV files and a ``manifest.json`` into ``--outdir``.  Values
come from flags, then a JSON ``--config`` file, then ``FDRCURVE_SEED`` for the
seed, then built-in defaults.  Exit status is 0 on success, 2 for invalid
arguments and 3 for unusable input data.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .distributions import DomainError, LocationFamily
from .fdr_curve import (
    TargetCurve,
    constraint_values,
    curve_from_constraints,
    q_star,
    sample_curve,
    select_constraints_greedy,
    select_constraints_minimal,
    write_csv,
)
from .ingest import DataError, GeneSummary, build_hypotheses, group_summary, load_matrix, read_rows
from .simulation import SimulationConfig, check_bounds, simulate_fdr_curve
from .testing import HypothesisSet, bh_generalized

COMMANDS = ("test", "qstar", "simulate", "select-constraints", "summarize")

DEFAULTS = {
    "family": "gaussian",
    "outdir": "fdrcurve-out",
    "method": "greedy",
    "replications": 10_000,
    "workers": 1,
    "flip_sign": False,
}


class UsageError(Exception):
    """Invalid arguments; exit status 2."""


# -- parsing of flag values ---------------------------------------------------


def parse_constraints(spec) -> TargetCurve:
    """``"theta:q,theta:q"`` or a list of pairs."""
    if isinstance(spec, str):
        pairs = []
        for item in filter(None, (s.strip() for s in spec.split(","))):
            parts = item.split(":")
            if len(parts) != 2:
                raise UsageError(f"constraint {item!r} is not of the form theta:q")
            try:
                pairs.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise UsageError(f"constraint {item!r} has a non-numeric part") from None
    else:
        pairs = [tuple(p) for p in spec]
    if not pairs:
        raise UsageError("at least one constraint is required")
    return curve_from_constraints(pairs)


def parse_family(spec: str) -> LocationFamily:
    """``gaussian``, ``scaled-gaussian:s``, ``logistic[:s]`` or ``tabulated:path[:monotone]``."""
    name, _, rest = spec.partition(":")
    try:
        if name == "gaussian" and not rest:
            return LocationFamily.gaussian()
        if name == "scaled-gaussian" and rest:
            return LocationFamily.scaled_gaussian(float(rest))
        if name == "logistic":
            return LocationFamily.logistic(float(rest) if rest else 1.0)
    except ValueError:
        raise UsageError(f"bad scale in family {spec!r}") from None
    if name == "tabulated" and rest:
        path, _, flag = rest.partition(":")
        if flag not in ("", "monotone"):
            raise UsageError(f"unknown tabulated option {flag!r}")
        if not Path(path).is_file():
            raise DataError(f"no such file: {path}")
        try:
            return LocationFamily.from_csv(path, monotone_ratio=flag == "monotone")
        except DomainError as exc:
            raise DataError(str(exc)) from None
    raise UsageError(f"unknown family {spec!r}")


def parse_grid(spec):
    """``start:stop:count`` or a list of values."""
    if isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid {spec!r} is not of the form start:stop:count")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise UsageError(f"grid {spec!r} has a non-numeric part") from None
        if count < 1 or stop < start:
            raise UsageError(f"grid {spec!r} needs count >= 1 and start <= stop")
        return np.linspace(start, stop, count)
    grid = np.asarray(spec, dtype=float).ravel()
    if grid.size == 0 or np.any(np.diff(grid) < 0):
        raise UsageError("grid values must be nonempty and sorted")
    return grid


def parse_thetas(spec) -> np.ndarray:
    """``"v*n,v,..."``, a file with one value per line, or a list."""
    if isinstance(spec, str):
        if Path(spec).is_file():
            text = Path(spec).read_text(encoding="utf-8").split()
            try:
                return np.array([float(v) for v in text])
            except ValueError as exc:
                raise DataError(f"{spec}: {exc}") from None
        out = []
        for item in filter(None, (s.strip() for s in spec.split(","))):
            value, _, count = item.partition("*")
            try:
                out.extend([float(value)] * (int(count) if count else 1))
            except ValueError:
                raise UsageError(f"theta item {item!r} is not of the form value[*count]") from None
        return np.array(out)
    return np.asarray(spec, dtype=float).ravel()


def parse_expect(spec):
    """``350`` or ``350-352``."""
    if spec is None:
        return None
    if isinstance(spec, (int, float)):
        return int(spec), int(spec)
    lo, _, hi = str(spec).partition("-")
    try:
        return int(lo), int(hi or lo)
    except ValueError:
        raise UsageError(f"--expect {spec!r} is not an integer or range lo-hi") from None


def resolve_seed(opts) -> int:
    seed = opts.get("seed")
    if seed is None:
        seed = os.environ.get("FDRCURVE_SEED", 0)
    try:
        return int(seed)
    except (TypeError, ValueError):
        raise UsageError(f"seed {seed!r} is not an integer") from None


# -- data sources -------------------------------------------------------------


def _load_summary(opts) -> GeneSummary:
    if opts.get("stats"):
        return GeneSummary.from_csv(opts["stats"])
    groups = opts.get("groups")
    if isinstance(groups, str):
        groups = [g.strip() for g in groups.split(",")]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mat = load_matrix(
            opts["input"], groups=groups, labels_path=opts.get("labels"),
            group_a=opts.get("group_a"), group_b=opts.get("group_b"),
        )
        summary = group_summary(mat)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return summary


def _one_source(opts, allowed):
    given = [k for k in allowed if opts.get(k)]
    if len(given) != 1:
        raise UsageError(f"give exactly one input among {', '.join('--' + k for k in allowed)}")
    return given[0]


def _hypotheses(opts) -> HypothesisSet:
    source = _one_source(opts, ("input", "stats", "statistics"))
    if source == "statistics":
        rows = read_rows(opts["statistics"])
        if rows and rows[0][-1].strip() == "x":
            rows = rows[1:]
        try:
            ids = tuple(r[0].strip() for r in rows) if rows and len(rows[0]) > 1 else ()
            x = [float(r[-1]) for r in rows]
        except ValueError as exc:
            raise DataError(f"{opts['statistics']}: {exc}") from None
        if not x:
            raise DataError(f"{opts['statistics']}: no statistics")
        return HypothesisSet(x, parse_family(opts["family"]), ids=ids)
    mode = opts.get("mode")
    if mode is None:
        raise UsageError("--mode effect-size|snr is required with --input or --stats")
    return build_hypotheses(_load_summary(opts), mode, negate=not opts.get("flip_sign"))


def _families_without_statistics(opts):
    """Shared family, or per-gene scales read from a summary (``x`` is ignored)."""
    if opts.get("mode") == "effect-size":
        _one_source(opts, ("input", "stats"))
        summary = _load_summary(opts)
        return [LocationFamily.scaled_gaussian(float(s)) for s in summary.sigma_hat], summary.m
    if opts.get("m") is None:
        raise UsageError("--m is required")
    m = int(opts["m"])
    if m < 1:
        raise UsageError("--m must be at least 1")
    return parse_family(opts["family"]), m


# -- commands -----------------------------------------------------------------


def _grid(opts, curve):
    return parse_grid(opts["grid"]) if opts.get("grid") is not None else curve.default_grid()


def cmd_qstar(opts, outdir: Path) -> dict:
    curve = parse_constraints(opts["constraints"])
    families, m = _families_without_statistics(opts)
    sample_curve(curve, families, m, _grid(opts, curve)).to_csv(outdir / "qstar.csv")
    return {"m": m, "outputs": ["qstar.csv"]}


def cmd_select(opts, outdir: Path) -> dict:
    curve = parse_constraints(opts["constraints"])
    families, m = _families_without_statistics(opts)
    method = opts["method"]
    if method not in ("greedy", "minimal"):
        raise UsageError(f"unknown method {method!r}")
    pick = select_constraints_greedy if method == "greedy" else select_constraints_minimal
    chosen = pick(curve, families, m)
    chosen_set = {(c.theta, c.q) for c in chosen}
    induced = q_star(curve, families, m, curve.thetas, subset=chosen) if chosen else np.ones(len(curve))
    selected = [(c.theta, c.q) in chosen_set for c in curve.constraints]
    write_csv(
        outdir / "selection.csv",
        ["theta", "q", "selected", "q_star"],
        [curve.thetas, curve.levels, selected, induced],
    )
    V = constraint_values(curve, families, m, curve.thetas)
    K = len(curve)
    write_csv(
        outdir / "jump_values.csv",
        ["constraint_theta", "constraint_q", "jump_theta", "value"],
        [
            np.repeat(curve.thetas, K), np.repeat(curve.levels, K),
            np.tile(curve.thetas, K), V.ravel(),
        ],
    )
    return {
        "m": m,
        "method": method,
        "selected": [[c.theta, c.q] for c in chosen],
        "outputs": ["selection.csv", "jump_values.csv"],
    }


def cmd_summarize(opts, outdir: Path) -> dict:
    if not opts.get("input"):
        raise UsageError("--input is required")
    summary = _load_summary(opts)
    summary.to_csv(outdir / "summary.csv")
    return {"m": summary.m, "dropped_genes": len(summary.dropped_genes), "outputs": ["summary.csv"]}


def cmd_test(opts, outdir: Path) -> dict:
    curve = parse_constraints(opts["constraints"])
    data = _hypotheses(opts)
    result = bh_generalized(data, curve)
    result.write_report(outdir / "rejections.csv", data.statistics, data.ids or None)
    sample_curve(curve, data.families, data.m, _grid(opts, curve)).to_csv(outdir / "curve.csv")
    info = {**result.summary(), "outputs": ["rejections.csv", "curve.csv"]}
    expect = parse_expect(opts.get("expect"))
    if expect is not None:
        lo, hi = expect
        n = result.selected.size
        info["expected_rejections"] = {
            "expected": [lo, hi],
            "observed": n,
            "match": lo <= n <= hi,
            "discrepancy": 0 if lo <= n <= hi else (n - hi if n > hi else n - lo),
        }
    return info


def cmd_simulate(opts, outdir: Path) -> dict:
    curve = parse_constraints(opts["constraints"])
    if opts.get("thetas") is None:
        raise UsageError("--thetas is required")
    thetas = parse_thetas(opts["thetas"])
    grid = parse_grid(opts["grid"]) if opts.get("grid") is not None else None
    try:
        reps, workers = int(opts["replications"]), int(opts["workers"])
    except (TypeError, ValueError):
        raise UsageError("--replications and --workers must be integers") from None
    cfg = SimulationConfig(thetas, parse_family(opts["family"]), curve, reps, grid=grid,
                           seed=resolve_seed(opts), workers=max(1, workers))
    est = simulate_fdr_curve(cfg)
    est.to_csv(outdir / "estimate.csv")
    return {**est.manifest(cfg), "checks": check_bounds(est), "outputs": ["estimate.csv"]}


HANDLERS = {
    "test": cmd_test,
    "qstar": cmd_qstar,
    "simulate": cmd_simulate,
    "select-constraints": cmd_select,
    "summarize": cmd_summarize,
}


# -- argument handling ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fdrcurve", description="FDR curve control with the generalized BH procedure.",
        argument_default=argparse.SUPPRESS,
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file of option values; flags take precedence")
    p.add_argument("--constraints", help='target curve as "theta:q,theta:q,..."')
    p.add_argument("--family", help="gaussian | scaled-gaussian:s | logistic[:s] | tabulated:path[:monotone]")
    p.add_argument("--m", type=int, help="number of hypotheses (qstar, select-constraints)")
    p.add_argument("--grid", help="evaluation grid start:stop:count")
    p.add_argument("--seed", help="master seed (default: $FDRCURVE_SEED or 0)")
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--mode", choices=("effect-size", "snr"))
    p.add_argument("--flip-sign", dest="flip_sign", action="store_true",
                   help="test B - A instead of the default A - B")
    p.add_argument("--input", help="expression matrix (comma or tab delimited)")
    p.add_argument("--stats", help="summary CSV gene_id,x,sigma_hat")
    p.add_argument("--statistics", help="CSV of raw statistics [id,]x with a shared --family")
    p.add_argument("--groups", help="comma-separated group label per sample")
    p.add_argument("--labels", help="two-column sample,label file")
    p.add_argument("--group-a", dest="group_a", help="label of group A when labels are not A/B")
    p.add_argument("--group-b", dest="group_b", help="label of group B when labels are not A/B")
    p.add_argument("--method", choices=("greedy", "minimal"))
    p.add_argument("--replications", type=int)
    p.add_argument("--thetas", help='true locations: "v*n,v,..." or a file of values')
    p.add_argument("--workers", type=int)
    p.add_argument("--expect", help="expected rejection count or range lo-hi, recorded in the manifest")
    return p


def _load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer, np.floating, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _attach_negative_values(parser: argparse.ArgumentParser, argv):
    """Join ``--grid -1:1:41`` into ``--grid=-1:1:41``; argparse would read the value as a flag."""
    takes_value = {
        opt for a in parser._actions if a.nargs is None and a.option_strings and a.const is None
        for opt in a.option_strings
    }
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in takes_value and i + 1 < len(argv) and re.match(r"-[\d.]", argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def run(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns = vars(parser.parse_args(_attach_negative_values(parser, argv)))
    except SystemExit as exc:
        return int(exc.code or 0)
    command = ns.pop("command")
    try:
        opts = dict(DEFAULTS)
        if "config" in ns:
            opts.update(_load_config(ns.pop("config")))
        opts.update(ns)
        if command in ("test", "qstar", "simulate", "select-constraints") and opts.get("constraints") is None:
            raise UsageError("--constraints is required")
        outdir = Path(opts["outdir"])
        outdir.mkdir(parents=True, exist_ok=True)
        info = HANDLERS[command](opts, outdir)
        resolved = {k: v for k, v in sorted(opts.items()) if v is not None}
        resolved["seed"] = resolve_seed(opts)
        blob = json.dumps(_jsonable(resolved), sort_keys=True, separators=(",", ":"))
        manifest = {
            "software": "fdrcurve",
            "version": __version__,
            "command": command,
            "options": _jsonable(resolved),
            "options_hash": hashlib.sha256(blob.encode()).hexdigest(),
            **_jsonable(info),
        }
        (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except UsageError as exc:
        print(f"fdrcurve {command}: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"fdrcurve {command}: data error: {exc}", file=sys.stderr)
        return 3
    except DomainError as exc:
        print(f"fdrcurve {command}: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({k: v for k, v in manifest.items() if k not in ("options",)}, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
