"""Command-line front end.

Commands write CSV (floats with 17 significant digits) or JSON to --out or
stdout.  A plain-text ``key = value`` config file may supply any flag;
flags given on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .coupling import sample_coupling_batch
from .edgeworth import distance_report, expansion_matrix, sup_distance
from .errors import InputError, RankEdgeError, UsageError
from .matrix import ScoreMatrix, build_matrix, build_product_matrix, moments
from .normal import KnotError, Phi, SmoothKernel, hermite, hermite_weighted_norm, psi, smooth_derivative
from .permdist import (
    DEFAULT_CUTOFF,
    exact_distribution,
    mc_distribution,
    moments_exact,
    moments_simplified,
    subset_distribution,
    two_sample_split,
)
from .scores import approx_scores, builtin, exact_scores, family_vectors, median_scores

MC_DRAWS = 100_000
COMMANDS = ("dist", "moments", "edgeworth", "scores", "sample", "diagnose", "convergence", "hermite", "kernel")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise UsageError(f"grid must be lo:hi:step, got {text!r}") from None
    if not step > 0 or hi < lo:
        raise UsageError("grid needs step > 0 and lo <= hi")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def parse_int_list(text: str) -> list:
    items = [p for p in text.replace(",", " ").split() if p]
    if not items:
        raise UsageError("the n-list is empty")
    try:
        return [int(p) for p in items]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None


def read_config(path: str) -> dict:
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{no}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def load_array(path: str, ndim: int) -> np.ndarray:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    rows = [r.replace(",", " ").split() for r in text.splitlines()]
    rows = [r for r in rows if r and not r[0].startswith("#")]
    try:
        arr = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError:
        raise InputError(f"{path}: non-numeric entry") from None
    if ndim == 1:
        arr = arr.ravel()
    elif arr.ndim != 2:
        raise InputError(f"{path}: ragged matrix rows")
    return arr


def _vectors_from_json(obj: dict, path: str) -> tuple:
    if "matrix" in obj:
        return np.asarray(obj["matrix"], dtype=float), None
    if "regression" in obj and "scores" in obj:
        return None, (np.asarray(obj["regression"], dtype=float), np.asarray(obj["scores"], dtype=float))
    raise InputError(f"{path}: JSON input needs 'matrix' or 'regression' and 'scores'")


def load_input(args) -> tuple:
    """(matrix, (regression, scores) or None) from the input flags."""
    if args.matrix:
        try:
            with open(args.matrix) as fh:
                head = fh.read(1)
        except OSError as exc:
            raise InputError(f"cannot read {args.matrix}: {exc}") from None
        if head != "{":
            return build_matrix(load_array(args.matrix, 2)), None
        try:
            with open(args.matrix) as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.matrix}: {exc}") from None
        a, vec = _vectors_from_json(obj, args.matrix)
        if a is not None:
            return build_matrix(a), None
        e, d = vec
    elif args.regression or args.scores:
        if not (args.regression and args.scores):
            raise UsageError("--regression and --scores must be given together")
        e, d = load_array(args.regression, 1), load_array(args.scores, 1)
    elif args.fn and args.n:
        e, d = family_vectors(args.fn, args.n, args.type)
    else:
        raise UsageError("give --matrix, --regression with --scores, or --fn with --n")
    return build_product_matrix(e, d), (e, d)


def matrix_from_args(args) -> ScoreMatrix:
    return load_input(args)[0]


def law(args, standardized: bool) -> tuple:
    """Matrix and distribution of T (or its standardized form) per --method.

    Exact laws of two-sample inputs (two-valued regression) enumerate
    subsets instead of permutations, which lifts the n! cutoff.
    """
    m, vec = load_input(args)
    if args.method == "mc":
        return m, mc_distribution(m, args.draws, args.seed, standardized=standardized, workers=args.workers)
    if vec is not None and two_sample_split(vec[0]) is not None:
        if standardized:
            m.require_std()
        return m, subset_distribution(vec[0], vec[1], standardized)
    return m, exact_distribution(m, standardized=standardized, cutoff=args.cutoff, workers=args.workers)


class Output:
    def __init__(self, path: Optional[str]):
        self.path = path

    def __enter__(self):
        if self.path in (None, "-"):
            self.fh = sys.stdout
        else:
            try:
                self.fh = open(self.path, "w", newline="")
            except OSError as exc:
                raise InputError(f"cannot write {self.path}: {exc}") from None
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()
        return False


def write_csv(path: Optional[str], header: Sequence[str], rows) -> None:
    with Output(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Optional[str], obj) -> None:
    with Output(path) as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def cmd_dist(args) -> None:
    _, F = law(args, args.standardized)
    if args.format == "json":
        write_json(args.out, {"atoms": [[v, p] for v, p in F.atoms], "total": F.total})
    else:
        write_csv(args.out, ("value", "prob", "cdf"), F.csv_rows())


def cmd_moments(args) -> None:
    m = matrix_from_args(args)
    mm = moments(m)
    out = {"n": m.n, "mu": m.mu, "sigma2": m.sigma2, **mm.to_dict()}
    if m.n >= 3:
        ex = moments_exact(m)
        simp = moments_simplified(m)
        out.update(
            third_exact=ex.third,
            fourth_exact=ex.fourth,
            third_leading=simp.third,
            third_remainder_bound=simp.third_remainder_bound,
            fourth_leading=simp.fourth,
            fourth_remainder_bound=simp.fourth_remainder_bound,
        )
    write_json(args.out, out)


def cmd_edgeworth(args) -> None:
    m, F = law(args, True)
    mm = moments(m)
    x = parse_grid(args.grid)
    e1 = expansion_matrix(mm, 1)(x)
    e2 = expansion_matrix(mm, 2)(x)
    if args.format == "json":
        e = expansion_matrix(mm, args.order)
        write_json(args.out, {"order": e.order, "coeffs": list(e.coeffs), "sup_distance": sup_distance(F, e)})
        return
    f = F.eval(x)
    rows = zip(x, f, e1, e2, Phi(x), f - e1, f - e2)
    write_csv(args.out, ("x", "F", "e1", "e2", "phi", "diff1", "diff2"), rows)


def cmd_scores(args) -> None:
    if not args.fn or not args.n:
        raise UsageError("scores needs --fn and --n")
    if args.fn == "median":
        d = median_scores(args.n)
    elif args.type == "exact":
        d = exact_scores(builtin(args.fn), args.n)
    else:
        d = approx_scores(builtin(args.fn), args.n)
    write_csv(args.out, ("j", "d"), zip(range(1, args.n + 1), d))


def cmd_sample(args) -> None:
    m = matrix_from_args(args)
    batch = sample_coupling_batch(m, args.draws, args.seed, standardized=True, workers=args.workers)
    draws = [batch.draw(r).to_json() for r in range(len(batch))]
    write_json(args.out, draws[0] if len(draws) == 1 else draws)


def cmd_diagnose(args) -> None:
    m, F = law(args, True)
    rep = distance_report(moments(m), F)
    write_json(args.out, rep.to_dict())


def cmd_convergence(args) -> None:
    if not args.fn:
        raise UsageError("convergence needs --fn")
    rows = []
    for n in parse_int_list(args.n_list):
        args.n = n
        m, F = law(args, True)
        rep = distance_report(moments(m), F)
        rows.append((n, rep.sup_f_phi, rep.sup_f_e1, rep.sup_f_e2, rep.d_cap2, rep.e_cap3))
    write_csv(args.out, ("n", "sup_f_phi", "sup_f_e1", "sup_f_e2", "d_cap2", "e_cap3"), rows)


def cmd_hermite(args) -> None:
    if args.n is None:
        rows = [(k, p, hermite_weighted_norm(k, p)) for k in range(9) for p in (0, 1)]
        write_csv(args.out, ("k", "power", "sup_norm"), rows)
        return
    x = parse_grid(args.grid)
    write_csv(args.out, ("x", "value"), zip(x, hermite(args.n, x) * psi(x)))


def cmd_kernel(args) -> None:
    kern = SmoothKernel(args.kind, args.z, args.lam, args.power)
    rows = []
    for x in parse_grid(args.grid):
        try:
            rows.append((x, smooth_derivative(kern, x, args.deriv)))
        except KnotError:
            continue
    write_csv(args.out, ("x", "value"), rows)


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def _seed(text: str) -> int:
    v = int(text, 0)
    if not -(1 << 63) <= v < (1 << 64):
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--matrix", help="square score matrix, whitespace or comma separated")
    p.add_argument("--regression", help="regression constants e_i, one per line")
    p.add_argument("--scores", help="scores d_j, one per line")
    p.add_argument("--fn", help="built-in score family: wilcoxon, vdw, median")
    p.add_argument("--type", choices=("exact", "approx"), default="approx")
    p.add_argument("--n", type=int, help="sample size for --fn")
    p.add_argument("--n-list", default="", help="comma separated sizes for convergence")
    p.add_argument("--order", type=int, choices=(1, 2), default=2)
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("--draws", type=int, help="Monte Carlo draws (default 100000; 1 for sample)")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--grid", default="-4:4:0.05", help="lo:hi:step")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--cutoff", type=int, default=DEFAULT_CUTOFF)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--standardized", action="store_true", help="distribution of the standardized statistic")
    p.add_argument("--config", help="key = value file supplying defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankedge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = {}
    for name in COMMANDS:
        parser.commands[name] = sub.add_parser(name)
        _add_common(parser.commands[name])
    k = parser.commands["kernel"]
    k.add_argument("--kind", choices=("p", "q", "r"), default="r")
    k.add_argument("--z", type=float, default=0.0)
    k.add_argument("--lam", type=float, default=1.0)
    k.add_argument("--power", type=int, default=0)
    k.add_argument("--deriv", type=int, default=0)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = read_config(args.config)
    sub = parser.commands[args.command]
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for action in sub._actions:
        if action.dest in cfg and action.const is True:
            cfg[action.dest] = cfg[action.dest].lower() in ("1", "true", "yes", "on")
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        if args.draws is None:
            args.draws = 1 if args.command == "sample" else MC_DRAWS
        if args.workers < 1 or args.draws < 1:
            raise UsageError("--workers and --draws must be positive")
        HANDLERS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except RankEdgeError as exc:
        print(f"rankedge: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
