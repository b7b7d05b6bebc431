"""Command line harness: ``generate``, ``analyze``, ``solve`` and ``bench``.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O or
parse error.
"""

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bench import DEFAULT_WINDOW, BenchSpec, bench, reference_optimum
from .data import POWER_MAX_ITER, POWER_TOL, load_dataset, save_dataset
from .errors import DataError, NumericalError, ValidationError
from .parallel import default_workers
from .pipeline import Algorithm, Problem, run
from .schedule import COption, Sampling, eta_star, p_star, sigma, step_size_c
from .solver import Mode
from .synth import generate
from .trace import StoppingRule

logger = logging.getLogger("accshot")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (argparse would exit with 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


class InputError(Exception):
    """Raised for unreadable or malformed input files (exit code 3)."""


@dataclass
class RunConfig:
    command: str
    dataset: str = None
    algorithm: str = "agd1"
    loss: str = "square"
    lam: float = 0.0
    P: object = "auto"
    eta: object = "auto"
    sampling: str = "uniform"
    mode: str = "naive"
    c_option: str = "rho"
    max_iter: int = 1000
    objective_tol: float = 0.0
    grad_norm_tol: float = 0.0
    checkpoint_every: int = 1
    seed: int = 0
    workers: int = 1
    force_rho: bool = False
    drop_zero_columns: bool = False
    power_tol: float = POWER_TOL
    power_max_iter: int = POWER_MAX_ITER

    def validate(self):
        """Check every numeric field before any computation starts."""
        Algorithm(self.algorithm)
        Sampling(self.sampling)
        Mode(self.mode)
        COption(self.c_option)
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValidationError("--lambda must be finite and >= 0")
        if self.P != "auto" and self.P < 1:
            raise ValidationError("--P must be >= 1 or 'auto'")
        if self.eta != "auto" and not (math.isfinite(self.eta) and self.eta > 0):
            raise ValidationError("--eta must be positive or 'auto'")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("--seed must fit in 64 unsigned bits")
        if self.workers < 1:
            raise ValidationError("--workers must be >= 1")
        if not self.power_tol > 0 or self.power_max_iter < 1:
            raise ValidationError("power iteration settings must be positive")
        if self.algorithm == Algorithm.ACCEL_SHOTGUN.value and self.lam != 0:
            raise ValidationError("accel-shotgun requires --lambda 0")
        if self.algorithm == Algorithm.SHOTGUN.value and self.lam != 0:
            raise ValidationError("shotgun requires --lambda 0")
        return self.stopping()

    def stopping(self):
        return StoppingRule(self.max_iter, self.objective_tol, self.grad_norm_tol, self.checkpoint_every)


def _auto_int(s):
    return s if s == "auto" else int(s)


def _auto_float(s):
    return s if s == "auto" else float(s)


def _load(path):
    try:
        return load_dataset(path)
    except (OSError, DataError) as exc:
        raise InputError(str(exc)) from exc


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not serializable: {type(o)}")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _config(args):
    fields = RunConfig.__dataclass_fields__
    return RunConfig(**{k: getattr(args, k) for k in fields if hasattr(args, k)})


# commands -----------------------------------------------------------------


def cmd_generate(args):
    ds, w_star = generate(args.n, args.d, args.density, args.loss, args.noise_std,
                          args.w_star_nnz, args.seed)
    save_dataset(ds, args.out)
    truth = args.truth or str(args.out) + ".truth.json"
    _write_json(truth, {"space": "normalized", "w_star": [float(v) for v in w_star],
                        **ds.meta["generator"]})
    print(f"wrote {args.out} (n={ds.n}, d={ds.d}, nnz={ds.X.nnz}) and {truth}")
    return EXIT_OK


def analysis_report(problem, loss_beta):
    rep = problem.report
    d = problem.d
    out = {
        "n": problem.dataset.n,
        "d": d,
        "nnz": problem.dataset.X.nnz,
        "kappa": rep.kappa,
        "kappa_bar": rep.kappa_bar,
        "rho": rep.rho,
        "rho_converged": rep.rho_converged,
        "ordering_holds": bool(rep.ordering_holds()),
        "beta": loss_beta,
        "eta": {opt.value: 1.0 / (step_size_c(opt, rep, force=True) * loss_beta) for opt in COption},
    }
    ps = p_star(d, rep.rho)
    candidates = sorted({1, ps, d} | {2**k for k in range(1, 20) if 2**k < d})
    table = []
    for P in candidates:
        row = {"P": P, "sigma_uniform": sigma(P, d, rep.rho, Sampling.UNIFORM)}
        row["eta_star_uniform"] = eta_star(row["sigma_uniform"])
        if d % P == 0:
            row["sigma_block"] = sigma(P, d, rep.rho, Sampling.BLOCK)
            row["eta_star_block"] = eta_star(row["sigma_block"])
        table.append(row)
    out["p_star"] = ps
    out["parameter_table"] = table
    return out


def cmd_analyze(args):
    cfg = _config(args)
    cfg.validate()
    ds = _load(args.dataset)
    problem = Problem(ds, cfg.loss, 0.0, cfg.drop_zero_columns, cfg.power_tol, cfg.power_max_iter, cfg.seed)
    report = analysis_report(problem, problem.obj.beta)
    if not report["rho_converged"]:
        logger.warning("power iteration did not converge; rho=%.12g is a lower estimate", report["rho"])
    if not report["ordering_holds"]:
        logger.warning("rho <= kappa_bar <= kappa violated: rho=%.12g kappa_bar=%.12g kappa=%d",
                       report["rho"], report["kappa_bar"], report["kappa"])
    for k in ("n", "d", "nnz", "kappa", "kappa_bar", "rho", "rho_converged", "p_star"):
        print(f"{k:>14}: {report[k]}")
    for k, v in report["eta"].items():
        print(f"{'eta[' + k + ']':>14}: {v}")
    if args.out:
        _write_json(args.out, report)
    return EXIT_OK


def cmd_solve(args):
    cfg = _config(args)
    stop = cfg.validate()
    ds = _load(cfg.dataset)
    problem = Problem(ds, cfg.loss, cfg.lam, cfg.drop_zero_columns, cfg.power_tol, cfg.power_max_iter, cfg.seed)
    res, resolved = run(problem, cfg.algorithm, cfg.P, cfg.eta, cfg.sampling, cfg.mode, stop,
                        seed=cfg.seed, workers=cfg.workers, f_star=args.f_star,
                        record_grad=args.record_grad, force=cfg.force_rho, c_option=cfg.c_option)
    rep = problem.report
    summary = {
        **{f"config_{k}": v for k, v in asdict(cfg).items()},
        **{f"resolved_{k}": v for k, v in resolved.items()},
        "dataset_sha256": _sha256(cfg.dataset),
        "n": problem.dataset.n,
        "d": problem.dataset.d,
        "kappa": rep.kappa,
        "kappa_bar": rep.kappa_bar,
        "rho": rep.rho,
        "rho_converged": rep.rho_converged,
        "stop_reason": res.stop_reason.value,
        "final_objective": res.trace.objective[-1],
        "iterations": res.iterations,
        "wall_ns": res.info["wall_ns"],
    }
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = args.trace or out / "trace.csv"
    summary_path = args.summary or out / "summary.json"
    solution_path = args.solution or out / "solution.txt"
    res.trace.to_csv(trace_path)
    _write_json(summary_path, summary)
    Path(solution_path).write_text("".join(f"{float(v)!r}\n" for v in res.w_final))
    print(f"{cfg.algorithm}: {res.stop_reason.value} after {res.iterations} iterations, "
          f"F = {summary['final_objective']!r}")
    return EXIT_OK


def cmd_bench(args):
    cfg = _config(args)
    stop = cfg.validate()
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    for a in algorithms:
        Algorithm(a)
    if args.seeds < 1:
        raise ValidationError("--seeds must be >= 1")
    if not 1 <= args.window[0] < args.window[1]:
        raise ValidationError("--window needs 1 <= lo < hi")
    ds = _load(cfg.dataset)
    problem = Problem(ds, cfg.loss, cfg.lam, cfg.drop_zero_columns, cfg.power_tol, cfg.power_max_iter, cfg.seed)
    ref = reference_optimum(problem, tol=args.ref_tol, max_iter=args.ref_max_iter, workers=cfg.workers)
    spec = BenchSpec(algorithms, cfg.P, cfg.eta, cfg.sampling, cfg.mode, stop, args.seeds, cfg.seed,
                     tuple(args.window), args.bound_check, cfg.workers, args.concurrent)
    summary, traces = bench(problem, spec, ref)
    summary["dataset"] = str(cfg.dataset)
    summary["dataset_sha256"] = _sha256(cfg.dataset)
    summary["config"] = asdict(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, tr in traces.items():
        path = out / f"trace_{name}.csv"
        tr.to_csv(path)
        summary["algorithms"][name]["trace"] = str(path)
    _write_json(out / "bench.json", summary)
    for name, entry in summary["algorithms"].items():
        extra = ""
        if entry.get("bound_check", {}).get("holds") is not None:
            extra = f"  bound_holds={entry['bound_check']['holds']}"
        print(f"{name:>14}: slope={entry['slope']:.3f}  final_subopt={entry['final_mean_suboptimality']:.3e}{extra}")
    return EXIT_OK


# parser ---------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: $ACCSHOT_WORKERS or 1)")


def _add_data(p):
    p.add_argument("--dataset", required=True)
    p.add_argument("--loss", choices=["square", "logistic"], default="square")
    p.add_argument("--drop-zero-columns", action="store_true")
    p.add_argument("--power-tol", type=float, default=POWER_TOL)
    p.add_argument("--power-max-iter", type=int, default=POWER_MAX_ITER)


def _add_solver(p):
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("-P", "--P", dest="P", type=_auto_int, default="auto")
    p.add_argument("--eta", type=_auto_float, default="auto")
    p.add_argument("--sampling", choices=[s.value for s in Sampling], default="uniform")
    p.add_argument("--mode", choices=[m.value for m in Mode], default="naive")
    p.add_argument("--c-option", choices=[c.value for c in COption], default="rho")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--objective-tol", type=float, default=0.0)
    p.add_argument("--grad-norm-tol", type=float, default=0.0)
    p.add_argument("--checkpoint-every", type=int, default=1)
    p.add_argument("--force-rho", action="store_true",
                   help="use an unconverged spectral radius estimate")


def build_parser():
    parser = _Parser(prog="accshot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset with a planted solution")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--density", type=float, default=0.1)
    g.add_argument("--loss", choices=["square", "logistic"], default="square")
    g.add_argument("--noise-std", type=float, default=0.0)
    g.add_argument("--w-star-nnz", type=int, default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--truth", default=None, help="ground truth JSON (default: OUT.truth.json)")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", help="sparsity, spectral radius and parameter table")
    _add_data(a)
    _add_common(a)
    a.add_argument("--out", default=None, help="JSON report path")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("solve", help="run one solver")
    _add_data(s)
    _add_common(s)
    _add_solver(s)
    s.add_argument("--algorithm", choices=[x.value for x in Algorithm], default="agd1")
    s.add_argument("--f-star", type=float, default=None, help="known optimum for the suboptimality column")
    s.add_argument("--record-grad", action="store_true", help="fill the grad_inf_norm column")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--trace", default=None)
    s.add_argument("--summary", default=None)
    s.add_argument("--solution", default=None)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="compare algorithms against a reference optimum")
    _add_data(b)
    _add_common(b)
    _add_solver(b)
    b.add_argument("--algorithms", default="agd1,shotgun,accel-shotgun")
    b.add_argument("--seeds", type=int, default=1, help="seeds per randomized algorithm")
    b.add_argument("--window", type=int, nargs=2, default=list(DEFAULT_WINDOW), metavar=("LO", "HI"))
    b.add_argument("--bound-check", action="store_true")
    b.add_argument("--ref-tol", type=float, default=1e-12)
    b.add_argument("--ref-max-iter", type=int, default=10**6)
    b.add_argument("--concurrent", action="store_true",
                   help="run algorithms concurrently (timings become unreliable)")
    b.add_argument("--out-dir", default="bench_out")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) is None:
        args.workers = default_workers()
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
