"""Command-line interface.

Exit codes: 0 success, 1 numerical or runtime failure, 2 bad arguments or
unreadable input. Every artifact carries the run configuration that
produced it: JSON outputs embed it under ``run_config``, CSV outputs get a
``<out>.run.json`` sidecar. ``--config <file>`` replays a stored configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .errors import ArgumentError, DivergenceError, FormatError, NumericError
from .estimator import (
    EstimatorConfig,
    atomic_write_text,
    estimated_operator_eigenvalues,
    eval_functions,
    fit_dataset,
    load_model,
    model_to_dict,
    with_run_config,
)
from .experiments import (
    convergence_experiment,
    hermite_experiment,
    mode_comparison_experiment,
    poincare_experiment,
)
from .kernel import KernelSpec
from .sampling import (
    Gaussian,
    GaussianMixture,
    PotentialSpec,
    StandardGaussian,
    UniformInterval,
    langevin_sample,
    read_csv,
    sample_iid,
    write_csv,
)

PROG = "rkhs-diffusion"


class _InputError(Exception):
    """Unreadable or invalid input file (exit code 2)."""


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _rows(text: str) -> list[list[float]]:
    """``"a,b;c,d"`` -> ``[[a, b], [c, d]]``; ``"a,b"`` -> ``[[a], [b]]`` (1-D components)."""
    if ";" in text:
        return [_floats(r) for r in text.split(";")]
    return [[v] for v in _floats(text)]


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def parse_grid(text: str) -> np.ndarray:
    """``a:b:m`` -> ``m`` equally spaced nodes from ``a`` to ``b`` inclusive."""
    parts = text.split(":")
    try:
        if len(parts) != 3:
            raise ValueError
        a, b, m = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like a:b:m, got {text!r}") from None
    if m < 2 or not a < b:
        raise argparse.ArgumentTypeError(f"grid needs a < b and m >= 2, got {text!r}")
    return np.linspace(a, b, m)


def _grid_text(text: str) -> str:
    parse_grid(text)
    return text


def parse_modes(text: str) -> list[int]:
    """1-based eigenfunction selection: ``1..5``, ``2,4`` or a mix like ``1..3,7``."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = (int(v) for v in part.split(".."))
                out.extend(range(lo, hi + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"mode list must look like 1..5 or 1,2,3, got {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"mode indices are 1-based and non-empty, got {text!r}")
    return out


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _add_dist_args(p: argparse.ArgumentParser, with_langevin: bool) -> None:
    kinds = ["gaussian", "uniform", "mixture"] + (["langevin"] if with_langevin else [])
    p.add_argument("--dist", choices=kinds, default="gaussian", help="sampling distribution")
    p.add_argument("--d", type=_positive_int, default=1, help="dimension")
    p.add_argument("--mean", type=_floats, default=None, help="gaussian mean; None is the origin")
    p.add_argument("--cov-diag", type=_floats, default=None, help="gaussian covariance diagonal; None is all ones")
    p.add_argument("--a", type=float, default=0.0, help="uniform lower bound")
    p.add_argument("--b", type=float, default=1.0, help="uniform upper bound")
    p.add_argument("--weights", type=_floats, default=None, help="mixture weights")
    p.add_argument("--means", type=_rows, default=None, help="mixture means, rows separated by ';'")
    p.add_argument("--cov-diags", type=_rows, default=None, help="mixture covariance diagonals, rows separated by ';'")


def _distribution(args):
    if args.dist == "gaussian":
        if args.mean is None and args.cov_diag is None:
            return StandardGaussian(args.d)
        mean = args.mean if args.mean is not None else [0.0] * args.d
        cov = args.cov_diag if args.cov_diag is not None else [1.0] * len(mean)
        return Gaussian(mean, cov)
    if args.dist == "uniform":
        return UniformInterval(args.a, args.b, args.d)
    if args.dist == "mixture":
        if args.weights is None or args.means is None or args.cov_diags is None:
            raise ArgumentError("mixture needs --weights, --means and --cov-diags")
        return GaussianMixture(args.weights, args.means, args.cov_diags)
    raise ArgumentError(f"distribution {args.dist!r} is not an i.i.d. sampler")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog=PROG, description="Spectral estimation of diffusion operators.",
                                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", default=None, help="replay the run configuration stored in this JSON file")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("sample", help="draw a dataset and write it as CSV", formatter_class=fmt)
    _add_dist_args(p, with_langevin=True)
    p.add_argument("--n", type=_positive_int, required=True, help="number of points")
    p.add_argument("--potential", choices=["quadratic", "double_well"], default="quadratic",
                   help="Langevin potential")
    p.add_argument("--dt", type=float, default=0.01, help="Langevin step size")
    p.add_argument("--burn-in", type=int, default=None, help="Langevin burn-in steps; None uses 10/dt")
    p.add_argument("--thin", type=_positive_int, default=None, help="Langevin thinning; None uses 1/dt")
    p.add_argument("--x0", type=_floats, default=None, help="Langevin start point; None is the origin")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("fit", help="fit a spectral model to a CSV dataset", formatter_class=fmt)
    p.add_argument("--data", required=True, help="input CSV (header x1,...,xd)")
    p.add_argument("--mode", choices=["nystrom", "rff"], default="nystrom", help="dictionary reduction")
    p.add_argument("--p", type=_positive_int, required=True, help="number of anchors or random features")
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="regularization parameter")
    p.add_argument("--sigma", type=float, required=True, help="Gaussian kernel bandwidth")
    p.add_argument("--normalization", choices=["operator", "gram"], default="operator",
                   help="'operator' divides the Gram matrices by n")
    p.add_argument("--anchors", choices=["first_p", "uniform"], default="first_p", help="Nystrom anchor policy")
    p.add_argument("--center", action="store_true", help="project constants out before fitting")
    p.add_argument("--n-components", type=_positive_int, default=None, help="keep only the leading modes")
    p.add_argument("--seed", type=int, default=0, help="seed for anchors / random features")
    p.add_argument("--out", required=True, help="output model JSON")

    p = sub.add_parser("eval", help="evaluate fitted eigenfunctions", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model JSON")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--grid", type=_grid_text, help="1-D grid a:b:m (inclusive endpoints)")
    src.add_argument("--points", help="CSV of query points")
    p.add_argument("--k", type=parse_modes, default=parse_modes("1..5"), help="1-based modes, e.g. 1..5 or 1,3")
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("eigvals", help="print estimated eigenvalues of the generator", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--keep-constant", action="store_true", help="do not drop the constant mode")
    p.add_argument("--top", type=_positive_int, default=10, help="how many eigenvalues to report")
    p.add_argument("--out", default=None, help="output JSON; None prints to stdout")

    p = sub.add_parser("hermite-demo", help="Ornstein-Uhlenbeck / Hermite reproduction", formatter_class=fmt)
    p.add_argument("--n", type=_positive_int, default=30, help="sample size")
    p.add_argument("--p", type=_positive_int, default=30, help="Nystrom anchors")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="regularization parameter")
    p.add_argument("--sigma", type=float, default=1.0, help="kernel bandwidth")
    p.add_argument("--normalization", choices=["operator", "gram"], default="gram", help="Gram scaling")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", default=None, help="report JSON; None prints to stdout")
    p.add_argument("--curves", default=None, help="eigenfunction curves CSV")

    p = sub.add_parser("convergence", help="lambda_n = c n^-1/4 consistency sweep", formatter_class=fmt)
    p.add_argument("--ns", type=_ints, default=[100, 200, 400, 800], help="sample sizes")
    p.add_argument("--c", type=float, default=1.0, help="schedule constant")
    p.add_argument("--sigma", type=float, required=True, help="kernel bandwidth")
    p.add_argument("--repeats", type=_positive_int, default=5, help="seeds per sample size")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--out", default=None, help="report JSON; None prints to stdout")

    p = sub.add_parser("poincare", help="estimate the Poincare constant", formatter_class=fmt)
    _add_dist_args(p, with_langevin=False)
    p.add_argument("--n", type=_positive_int, default=500, help="sample size")
    p.add_argument("--p", type=_positive_int, default=None, help="Nystrom anchors; None uses p = n")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3, help="regularization parameter")
    p.add_argument("--sigma", type=float, required=True, help="kernel bandwidth")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", default=None, help="report JSON; None prints to stdout")

    p = sub.add_parser("compare-modes", help="Nystrom versus random features", formatter_class=fmt)
    p.add_argument("--n", type=_positive_int, default=400, help="sample size")
    p.add_argument("--p-nystrom", type=_positive_int, default=None, help="Nystrom anchors; None uses p = n")
    p.add_argument("--p-rff", type=_positive_int, default=4000, help="random features")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3, help="regularization parameter")
    p.add_argument("--sigma", type=float, required=True, help="kernel bandwidth")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", default=None, help="report JSON; None prints to stdout")
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _run_config(args, argv: Sequence[str]) -> dict:
    resolved = {k: v for k, v in vars(args).items() if k != "config"}
    return {"tool_version": __version__, "subcommand": args.command, "argv": list(argv), "args": resolved}


def _emit_json(doc: dict, out) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _emit_report(report, rc: dict, out) -> None:
    report.run_config = rc
    _emit_json(report.to_dict(include_timing=False), out)
    if report.timing:
        print("timing: " + ", ".join(f"{k}={v:.3g}s" for k, v in sorted(report.timing.items())
                                     if isinstance(v, (int, float))), file=sys.stderr)


def _sidecar(out: str, rc: dict) -> None:
    atomic_write_text(f"{out}.run.json", json.dumps(rc, indent=2, sort_keys=True) + "\n")


def _read_dataset(path: str):
    try:
        return read_csv(path)
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except FormatError as exc:
        raise _InputError(f"{path}: {exc}") from None


def _read_model(path: str):
    try:
        return load_model(path)
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except FormatError as exc:
        raise _InputError(f"{path}: {exc}") from None


def cmd_sample(args, rc):
    if args.dist == "langevin":
        pot = PotentialSpec.quadratic() if args.potential == "quadratic" else PotentialSpec.double_well()
        x0 = args.x0 if args.x0 is not None else [0.0] * args.d
        data = langevin_sample(pot, x0, args.dt, args.n, burn_in=args.burn_in, thin=args.thin, seed=args.seed)
    else:
        data = sample_iid(_distribution(args), args.n, args.seed)
    import io

    buf = io.StringIO()
    write_csv(data, buf)
    atomic_write_text(args.out, buf.getvalue())
    _sidecar(args.out, {**rc, "source": data.source})


def cmd_fit(args, rc):
    data = _read_dataset(args.data)
    if args.p > data.n and args.mode == "nystrom":
        raise ArgumentError(f"p exceeds n: p={args.p}, n={data.n}")
    cfg = EstimatorConfig(lam=args.lam, p=args.p, mode=args.mode, normalization=args.normalization,
                          anchor_policy=args.anchors, anchor_seed=args.seed, center=args.center)
    model = fit_dataset(data, cfg, KernelSpec(args.sigma, data.dim), rff_seed=args.seed,
                        n_components=args.n_components)
    model = with_run_config(model, rc)
    atomic_write_text(args.out, json.dumps(model_to_dict(model)))


def cmd_eval(args, rc):
    model = _read_model(args.model)
    if args.grid is not None:
        if model.kernel.dim != 1:
            raise ArgumentError(f"--grid is 1-D but the model has dimension {model.kernel.dim}; use --points")
        Q = parse_grid(args.grid)[:, None]
    else:
        Q = _read_dataset(args.points).points
    ks = [k - 1 for k in args.k]
    if max(ks) >= model.n_modes:
        raise ArgumentError(f"mode {max(ks) + 1} requested but the model has {model.n_modes} modes")
    F = eval_functions(model, ks, Q)
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(Q.shape[1])] + [f"f{k}" for k in args.k])
    for row in np.column_stack([Q, F]):
        w.writerow([repr(float(v)) for v in row])
    atomic_write_text(args.out, buf.getvalue())
    _sidecar(args.out, rc)


def cmd_eigvals(args, rc):
    model = _read_model(args.model)
    ev = estimated_operator_eigenvalues(model, skip_constant=not args.keep_constant)[: args.top]
    doc = {"operator_eigenvalues": ev.tolist(), "poincare_estimate": float(1.0 / ev[0]) if not args.keep_constant
           else None, "constant_mode": model.constant_mode, "run_config": rc}
    _emit_json(doc, args.out)


def cmd_hermite(args, rc):
    report = hermite_experiment(n=args.n, p=args.p, lam=args.lam, sigma=args.sigma,
                                normalization=args.normalization, seed=args.seed, curves_path=args.curves)
    if args.curves:
        _sidecar(args.curves, rc)
    _emit_report(report, rc, args.out)


def cmd_convergence(args, rc):
    report = convergence_experiment(args.ns, c=args.c, sigma=args.sigma, seed=args.seed, repeats=args.repeats)
    _emit_report(report, rc, args.out)


def cmd_poincare(args, rc):
    dist = _distribution(args)
    estimate, report = poincare_experiment(dist, args.n, args.p or args.n, args.lam, args.sigma, seed=args.seed)
    _emit_report(report, rc, args.out)
    if args.out is not None:
        print(f"poincare estimate: {estimate:.6g}")


def cmd_compare(args, rc):
    report = mode_comparison_experiment(args.n, args.p_nystrom or args.n, args.p_rff, args.lam, args.sigma,
                                        seed=args.seed)
    _emit_report(report, rc, args.out)


COMMANDS = {
    "sample": cmd_sample,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "eigvals": cmd_eigvals,
    "hermite-demo": cmd_hermite,
    "convergence": cmd_convergence,
    "poincare": cmd_poincare,
    "compare-modes": cmd_compare,
}


def _join_negative_values(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Rewrite ``--flag -4:4:401`` as ``--flag=-4:4:401``.

    argparse only accepts a leading ``-`` in a value when the whole token is a
    plain number, which rules out grids and comma lists such as ``-1,2``.
    """
    takes_value = set()
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sp in action.choices.values():
                takes_value |= {o for a in sp._actions if a.nargs is None and a.option_strings
                                and not isinstance(a, (argparse._StoreTrueAction, argparse._StoreFalseAction))
                                for o in a.option_strings}
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if (tok in takes_value and nxt is not None and len(nxt) > 1 and nxt[0] == "-"
                and (nxt[1].isdigit() or nxt[1] == ".")):
            out.append(f"{tok}={nxt}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def _error(msg: str, code: int) -> int:
    print(f"{PROG}: error: {msg}", file=sys.stderr)
    return code


def run_cli(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(parser, argv))
        if args.config is not None:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    stored = json.load(fh)
                argv = list(stored["run_config"]["argv"] if "run_config" in stored else stored["argv"])
            except (OSError, ValueError, KeyError, TypeError) as exc:
                return _error(f"cannot load run configuration {args.config}: {exc}", 2)
            args = parser.parse_args(_join_negative_values(parser, argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    rc = _run_config(args, argv)
    try:
        COMMANDS[args.command](args, rc)
    except (ArgumentError, FormatError, _InputError) as exc:
        return _error(str(exc), 2)
    except (NumericError, DivergenceError, RuntimeError, np.linalg.LinAlgError) as exc:
        return _error(str(exc), 1)
    except OSError as exc:
        return _error(f"cannot write output: {exc}", 1)
    return 0


def main() -> None:
    sys.exit(run_cli())
