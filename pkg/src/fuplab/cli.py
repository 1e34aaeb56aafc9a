"""Command-line entry point: ``fuplab <subcommand> [options]``.

Outputs go to ``--out`` or, by default, to ``$FUPLAB_OUTPUT_DIR`` (current
directory when unset).  Exit status is 0 on success, 1 on invalid
arguments and 2 when an iterative kernel fails to converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from fuplab import baker, cascade, fup
from fuplab.fractal_sets import (
    cantor_dimension,
    cantor_set,
    depth_for,
    dilated_cantor,
    lift_to_unit,
    min_regularity_discrete,
)
from fuplab.numerics import DEFAULT_SEED, NonConvergenceError
from fuplab.tree import build_tree, max_resolved_depth, validate_tree

OUTPUT_DIR_ENV = "FUPLAB_OUTPUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGENCE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- argument parsing helpers ----------------------------------------------

def parse_int_range(text):
    """``"3"``, ``"1..7"`` or ``"2,4,8"`` (mixing allowed) as a sorted list."""
    out = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise argparse.ArgumentTypeError(f"empty item in {text!r}")
        try:
            if ".." in part:
                lo, hi = (int(x) for x in part.split(".."))
                if hi < lo:
                    raise argparse.ArgumentTypeError(f"empty range {part!r}")
                out.update(range(lo, hi + 1))
            else:
                out.add(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer range: {part!r}") from None
    return sorted(out)


def parse_alphabet(text):
    """Comma-separated letters, sorted and deduplicated."""
    try:
        letters = sorted({int(x) for x in text.split(",") if x.strip()})
    except ValueError:
        raise argparse.ArgumentTypeError(f"alphabet must be comma-separated integers: {text!r}") from None
    if not letters:
        raise argparse.ArgumentTypeError("alphabet is empty")
    return tuple(letters)


def _check_letters(M, A):
    if any(a < 0 or a >= M for a in A):
        raise UsageError(f"alphabet {list(A)} has letters outside [0, {M})")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


# --- output helpers ----------------------------------------------------------

def _out_path(args, default_name):
    if args.out:
        return args.out
    return os.path.join(os.environ.get(OUTPUT_DIR_ENV, "."), default_name)


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def dump_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def gnuplot_script(csv_path, xcol, ycol, title, logscale=True):
    name = os.path.basename(csv_path)
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
    ]
    if logscale:
        lines.append("set logscale xy")
    lines.append(f"plot '{name}' using {xcol}:{ycol} with linespoints")
    return "\n".join(lines) + "\n"


def _write_gnuplot(args, csv_path, xcol, ycol, title):
    if args.gnuplot:
        gp = os.path.splitext(csv_path)[0] + ".gp"
        write_atomic(gp, gnuplot_script(csv_path, xcol, ycol, title))


def _cantor(M, A, k, N):
    return cantor_set(M, A, k) if N is None or N == M**k else dilated_cantor(M, A, k, N)


def _resolve_k(M, k, N):
    if k is None and N is None:
        raise UsageError("give --k, --N or both")
    if k is None:
        return depth_for(M, N)
    return k


# --- subcommands ---------------------------------------------------------------

def cmd_cantor(args):
    k = _resolve_k(args.M, args.k, args.N)
    X = _cantor(args.M, args.A, k, args.N)
    obj = {"M": args.M, "A": list(args.A), "k": k, **X.to_json()}
    path = _out_path(args, f"cantor_M{args.M}_k{k}_N{X.N}.json")
    write_atomic(path, dump_json(obj))
    return f"cantor M={args.M} k={k} N={X.N} size={len(X)} members={list(X.members)[:8]}{'...' if len(X) > 8 else ''} -> {path}"


def cmd_regularity(args):
    k = _resolve_k(args.M, args.k, args.N)
    X = _cantor(args.M, args.A, k, args.N)
    delta = cantor_dimension(args.M, args.A)
    rep = min_regularity_discrete(X, delta)
    powers = X.N == args.M**k
    bound = 2 * args.M ** (2 * delta) if powers else 8 * args.M ** (3 * delta)
    obj = {
        "M": args.M, "A": list(args.A), "k": k, "N": X.N, "delta": delta,
        "min_constant_upper": rep.min_constant_upper, "min_constant_lower": rep.min_constant_lower,
        "constant": rep.constant, "worst_interval": list(rep.worst_interval),
        "worst_lower_interval": list(rep.worst_lower_interval),
        "bound": bound, "bound_kind": "2M^(2delta)" if powers else "8M^(3delta)",
        "within_bound": rep.constant <= bound,
    }
    path = _out_path(args, f"regularity_M{args.M}_k{k}_N{X.N}.json")
    write_atomic(path, dump_json(obj))
    return f"regularity N={X.N} C_R={rep.constant:.6g} bound={bound:.6g} ok={rep.constant <= bound} -> {path}"


def cmd_tree(args):
    X = cantor_set(args.M, args.A, args.k)
    delta = cantor_dimension(args.M, args.A)
    mu = lift_to_unit(X, delta)
    K = args.K if args.K is not None else max_resolved_depth(mu, args.L)
    tree = build_tree(mu, args.L, K)
    C_R = args.CR if args.CR is not None else 2 * args.M ** (2 * delta)
    rep = validate_tree(tree, delta, C_R)
    obj = tree.to_json()
    obj["validation"] = {
        "delta": delta, "C_R": C_R, "C_R_prime": rep.C_R_prime, "part3": rep.part3_status,
        "log10_L_min_part3": rep.log10_L_min_part3,
        "clauses": {name: {"passed": rep.passed(name), "failures": [list(x) for x in rep.failures(name)]}
                    for name in rep.clauses},
    }
    path = _out_path(args, f"tree_M{args.M}_k{args.k}_L{args.L}_K{tree.K}.json")
    write_atomic(path, dump_json(obj))
    ok = all(rep.passed(n) for n in rep.clauses)
    return f"tree L={args.L} K={tree.K} nodes={[len(l) for l in tree.levels]} valid={ok} -> {path}"


def cmd_norm(args):
    k = _resolve_k(args.M, args.k, args.N)
    X = _cantor(args.M, args.A, k, args.N)
    nrm = fup.fup_norm(X, X, tol=args.tol)
    obj = {"M": args.M, "A": list(args.A), "k": k, "N": X.N, "size": len(X), "norm": nrm,
           "trivial_bound": min(1.0, len(X) / math.sqrt(X.N))}
    path = _out_path(args, f"norm_M{args.M}_k{k}_N{X.N}.json")
    write_atomic(path, dump_json(obj))
    return f"norm N={X.N} |X|={len(X)} norm={nrm:.12g} -> {path}"


def cmd_decay(args):
    res = fup.decay_experiment(args.M, args.A, args.k, mode=args.mode, workers=args.threads,
                               norm_tol=args.tol)
    path = _out_path(args, f"decay_M{args.M}_{args.mode}.csv")
    write_atomic(path, dump_csv(fup.DecayResult.CSV_HEADER, [r.csv_row() for r in res.rows]))
    _write_gnuplot(args, path, 1, 3, f"decay M={args.M} A={list(args.A)}")
    beta = "n/a" if res.beta_obs is None else f"{res.beta_obs:.6f}"
    return f"decay rows={len(res.rows)} beta_obs={beta} trivial={fup.trivial_exponent(args.M, args.A):.6f} -> {path}"


def cmd_bounds(args):
    if (args.M is None) != (args.A is None):
        raise UsageError("--M and --alphabet go together for baker bounds")
    if args.M is not None:
        _check_letters(args.M, args.A)
    table = fup.bounds_table(args.delta, args.deltap, args.CR, M=args.M, A=args.A)
    obj = table.to_json()
    path = _out_path(args, "bounds.json")
    write_atomic(path, dump_json(obj))
    return f"bounds log10_eps0={obj['log10_eps0']:.6f} log10_L_min={obj['log10_L_min']:.6f} -> {path}"


def _cascade_kernel(args):
    if args.phase == "circle-log":
        return fup.circle_log_kernel(amplitude=args.amplitude)
    if args.phase == "fourier":
        return fup.fourier_kernel(amplitude=args.amplitude)
    return fup.bilinear_kernel(args.scale, amplitude=args.amplitude)


def cmd_cascade(args):
    X = cantor_set(args.M, args.A, args.k)
    delta = cantor_dimension(args.M, args.A)
    mu = lift_to_unit(X, delta)
    tree = build_tree(mu, args.L, args.K)
    if tree.K != args.K:
        raise UsageError(f"--K {args.K} exceeds the resolution of k={args.k}; at most {tree.K}")
    kernel = _cascade_kernel(args)
    f = None
    if args.f == "random":
        rng = np.random.default_rng(args.seed)
        f = rng.standard_normal(len(mu)) + 1j * rng.standard_normal(len(mu))
    res = cascade.full_cascade(tree, tree, kernel, theta=args.theta, f=f, K0=args.K0,
                               workers=args.threads)
    path = _out_path(args, f"cascade_M{args.M}_L{args.L}_K{args.K}.csv")
    write_atomic(path, dump_csv(cascade.CascadeRecord.CSV_HEADER, [r.csv_row() for r in res.records]))
    summary = res.summary()
    summary.update({"M": args.M, "A": list(args.A), "k": args.k, "L": args.L, "phase": args.phase,
                    "amplitude": args.amplitude, "f": args.f, "seed": args.seed})
    write_atomic(os.path.splitext(path)[0] + ".json", dump_json(summary))
    _write_gnuplot(args, path, 1, 8, "cascade ratios")
    eps = "n/a" if res.eps1_emp is None else f"{res.eps1_emp:.6g}"
    return (f"cascade records={len(res.records)} eps1_emp={eps} bound={res.product_bound:.6g} "
            f"direct={res.direct_norm:.6g} status={summary['status']} -> {path}")


def cmd_baker(args):
    _check_letters(args.M, args.A)
    rows = baker.gap_experiment(args.M, args.A, args.chi, args.N, cap=args.cap,
                                workers=args.threads, tol=args.tol)
    path = _out_path(args, f"baker_M{args.M}_{args.chi}.csv")
    write_atomic(path, dump_csv(baker.gap_csv_header(), [r.csv_row() for r in rows]))
    _write_gnuplot(args, path, 1, 3, f"spectral radius M={args.M} A={list(args.A)}")
    worst = max(r.radius for r in rows) if rows else float("nan")
    return f"baker rows={len(rows)} max_radius={worst:.10f} -> {path}"


def cmd_localize(args):
    spec = baker.BakerSpec(args.M, args.A, args.N, args.chi)
    rep = baker.concentration_check(spec, args.rho, args.nu, tol_N=args.tol_N)
    path = _out_path(args, f"localize_M{args.M}_N{args.N}.json")
    write_atomic(path, dump_json(rep.to_json()))
    return f"localize |X_rho|={len(rep.X_rho)} retained={len(rep.pairs)} violations={len(rep.violations)} -> {path}"


# --- parser ------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="fuplab", description="Fractal uncertainty numerical laboratory.")
    p.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help="output file"):
        sp.add_argument("--out", help=f"{out_help} (default: ${OUTPUT_DIR_ENV}/<auto name>)")
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"RNG seed (default {DEFAULT_SEED})")
        sp.add_argument("--threads", type=_positive_int, default=1, help="worker pool size (default 1)")

    def cantor_args(sp, need_k=False):
        sp.add_argument("--M", type=int, required=True, help="base M >= 2")
        sp.add_argument("--alphabet", dest="A", type=parse_alphabet, required=True,
                        help="comma-separated digits in [0, M)")
        sp.add_argument("--k", type=int, required=need_k, default=None, help="Cantor depth")
        if not need_k:
            sp.add_argument("--N", type=int, default=None, help="dilation modulus (multiple of M)")

    sp = sub.add_parser("cantor", help="members of a (dilated) discrete Cantor set")
    cantor_args(sp)
    common(sp)
    sp.set_defaults(func=cmd_cantor)

    sp = sub.add_parser("regularity", help="minimal discrete regularity constants")
    cantor_args(sp)
    common(sp)
    sp.set_defaults(func=cmd_regularity)

    sp = sub.add_parser("tree", help="discretization tree of a lifted Cantor set")
    cantor_args(sp, need_k=True)
    sp.add_argument("--L", type=int, default=3, help="tree base (default 3)")
    sp.add_argument("--K", type=int, default=None, help="tree depth (default: finest resolved)")
    sp.add_argument("--CR", type=float, default=None, help="regularity constant (default 2 M^(2 delta))")
    common(sp)
    sp.set_defaults(func=cmd_tree)

    sp = sub.add_parser("norm", help="norm of a DFT submatrix on a Cantor set")
    cantor_args(sp)
    sp.add_argument("--tol", type=float, default=1e-13, help="power iteration tolerance (default 1e-13)")
    common(sp)
    sp.set_defaults(func=cmd_norm)

    sp = sub.add_parser("decay", help="norm decay across N")
    sp.add_argument("--M", type=int, required=True, help="base M >= 2")
    sp.add_argument("--alphabet", dest="A", type=parse_alphabet, required=True, help="digits")
    sp.add_argument("--k", type=parse_int_range, required=True, help="depths, e.g. 1..7 or 2,3")
    sp.add_argument("--mode", choices=["powers", "all-multiples"], default="powers")
    sp.add_argument("--tol", type=float, default=1e-13, help="power iteration tolerance (default 1e-13)")
    sp.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    common(sp, "CSV file")
    sp.set_defaults(func=cmd_decay)

    sp = sub.add_parser("bounds", help="closed-form exponents in log space")
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--deltap", type=float, required=True)
    sp.add_argument("--CR", type=float, required=True)
    sp.add_argument("--M", type=int, default=None, help="baker base (optional)")
    sp.add_argument("--alphabet", dest="A", type=parse_alphabet, default=None, help="baker alphabet")
    common(sp, "JSON file")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("cascade", help="scale-by-scale contraction check")
    cantor_args(sp, need_k=True)
    sp.add_argument("--L", type=int, default=9, help="tree base (default 9)")
    sp.add_argument("--K", type=int, required=True, help="tree depth; h = L^-K")
    sp.add_argument("--K0", type=int, default=0, help="regularity offset (default 0)")
    sp.add_argument("--phase", choices=["bilinear", "fourier", "circle-log"], default="bilinear")
    sp.add_argument("--scale", type=float, default=1.0, help="bilinear scale s (default 1)")
    sp.add_argument("--amplitude", choices=["one", "bump"], default="one")
    sp.add_argument("--theta", type=float, default=None, help="C_theta parameter (default: automatic)")
    sp.add_argument("--f", choices=["one", "random"], default="one", help="test function")
    sp.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    common(sp, "CSV file; the summary JSON goes next to it")
    sp.set_defaults(func=cmd_cascade)

    sp = sub.add_parser("baker", help="spectral radius of open baker maps")
    sp.add_argument("--M", type=int, required=True)
    sp.add_argument("--alphabet", dest="A", type=parse_alphabet, required=True)
    sp.add_argument("--chi", choices=sorted(baker.CUTOFFS), default="bump")
    sp.add_argument("--N", type=parse_int_range, default=None,
                    help="moduli, e.g. 9,27 or 3..30 (default: powers of M and neighbours)")
    sp.add_argument("--cap", type=int, default=baker.GAP_N_CAP, help=f"largest N (default {baker.GAP_N_CAP})")
    sp.add_argument("--tol", type=float, default=1e-8, help="eigenpair residual tolerance (default 1e-8)")
    sp.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    common(sp, "CSV file")
    sp.set_defaults(func=cmd_baker)

    sp = sub.add_parser("localize", help="eigenstate concentration near the Cantor set")
    sp.add_argument("--M", type=int, required=True)
    sp.add_argument("--alphabet", dest="A", type=parse_alphabet, required=True)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--chi", choices=sorted(baker.CUTOFFS), default="bump")
    sp.add_argument("--rho", type=float, default=0.7)
    sp.add_argument("--nu", type=float, default=1.0)
    sp.add_argument("--tol-N", dest="tol_N", type=float, default=None, help="remainder allowance (default 10 N^-2)")
    common(sp, "JSON file")
    sp.set_defaults(func=cmd_localize)
    return p


def run(argv=None):
    """Run one subcommand and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        if getattr(args, "A", None) is not None and getattr(args, "M", None) is not None:
            _check_letters(args.M, args.A)
        summary = args.func(args)
    except UsageError as exc:
        print(f"fuplab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NonConvergenceError as exc:
        print(f"fuplab {args.command}: numerical non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ValueError as exc:
        print(f"fuplab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(summary)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
