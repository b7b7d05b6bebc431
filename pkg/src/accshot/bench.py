"""Benchmark harness: reference optimum, multi-seed traces, rate fits, bound checks."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import AccShotError, NumericalError
from .pipeline import AGD_OPTION, Algorithm, run
from .schedule import COption, theorem1_bound, theorem2_bound
from .solver import Mode, agd_solve
from .trace import StoppingRule, Trace

logger = logging.getLogger(__name__)

REF_TOL = 1e-12
REF_MAX_ITER = 10**6
DEFAULT_WINDOW = (10, 1000)


class ReferenceFailure(NumericalError):
    pass


@dataclass
class Reference:
    f_star: float
    w_star: np.ndarray
    iterations: int
    residual: float
    converged: bool


def reference_optimum(problem, tol=REF_TOL, max_iter=REF_MAX_ITER, workers=1, checkpoint_every=50):
    """F* from a long AGD option-1 run stopped at residual <= tol."""
    obj = problem.obj
    stop = StoppingRule(max_iter=max_iter, grad_norm_tol=tol, checkpoint_every=checkpoint_every)
    try:
        res = agd_solve(obj, COption.RHO, stop, report=problem.report, workers=workers, force=True)
    except AccShotError as exc:
        raise ReferenceFailure(f"reference run failed: {exc}") from exc
    resid = res.trace.grad_inf_norm[-1]
    converged = resid is not None and resid <= tol
    if not converged:
        logger.warning("reference run stopped at residual %.3g after %d iterations", resid, res.iterations)
    f_star = min(res.trace.objective)
    return Reference(f_star, res.w, res.iterations, resid, converged)


def fit_slope(iters, subopt, window=DEFAULT_WINDOW):
    """Least-squares slope of log(subopt) against log(t) inside ``window``.

    Non-positive suboptimality values cannot be logged and are left out.
    Returns ``(slope, points_used)``.
    """
    t = np.asarray(iters, dtype=float)
    s = np.asarray(subopt, dtype=float)
    keep = (t >= window[0]) & (t <= window[1]) & np.isfinite(s) & (s > 0)
    if keep.sum() < 2:
        return float("nan"), int(keep.sum())
    slope = np.polyfit(np.log(t[keep]), np.log(s[keep]), 1)[0]
    return float(slope), int(keep.sum())


def mean_trace(traces, f_star):
    """Pointwise mean over seeds; all traces must share checkpoints."""
    iters = traces[0].iters
    for tr in traces[1:]:
        if tr.iters != iters:
            raise ValueError("traces have different checkpoints")
    obj = np.mean([tr.objective for tr in traces], axis=0)
    el = np.mean([tr.elapsed_ns for tr in traces], axis=0)
    out = Trace()
    for k, it in enumerate(iters):
        out.append(it, int(el[k]), float(obj[k]), float(obj[k] - f_star))
    return out


@dataclass
class BenchSpec:
    algorithms: list
    P: object = "auto"
    eta: object = "auto"
    sampling: str = "uniform"
    mode: str = "naive"
    stop: StoppingRule = field(default_factory=lambda: StoppingRule(1000))
    seeds: int = 1
    seed: int = 0
    window: tuple = DEFAULT_WINDOW
    bound_check: bool = False
    workers: int = 1
    concurrent: bool = False


def bound_at(resolved, beta, R2, t):
    alg = Algorithm(resolved["algorithm"])
    if alg in AGD_OPTION:
        return theorem1_bound(resolved["c"], beta, R2, t)
    if alg is Algorithm.ACCEL_SHOTGUN and t > 1:
        return theorem2_bound(beta, resolved["d"], resolved["P"], resolved["eta"], resolved["sigma"], R2, t)
    return None


def bench(problem, spec, ref=None):
    """Run every algorithm (randomized ones over ``spec.seeds`` seeds).

    Returns ``(summary, traces)`` where traces maps an algorithm name to its
    mean trace (suboptimality filled from F*).
    """
    ref = ref or reference_optimum(problem, workers=spec.workers)
    R2 = float(np.sum(ref.w_star**2))  # w_1 = 0
    summary = {
        "f_star": ref.f_star,
        "reference": {"iterations": ref.iterations, "residual": ref.residual,
                      "converged": ref.converged, "tol": REF_TOL},
        "R2": R2,
        "window": list(spec.window),
        "algorithms": {},
    }
    traces = {}

    def one(alg_index, alg):
        alg = Algorithm(alg)
        randomized = alg in (Algorithm.SHOTGUN, Algorithm.ACCEL_SHOTGUN)
        n_seeds = spec.seeds if randomized else 1
        seeds = [_rng.derive_seed(spec.seed, _rng.BENCH, alg_index, k) for k in range(n_seeds)]
        runs, resolved = [], None
        for s in seeds:
            res, resolved = run(problem, alg, spec.P, spec.eta, spec.sampling, Mode(spec.mode),
                                spec.stop, seed=s, workers=spec.workers, f_star=ref.f_star, force=True)
            runs.append(res)
        resolved = dict(resolved, d=problem.d)
        resolved.pop("seed", None)
        mt = mean_trace([r.trace for r in runs], ref.f_star)
        slope, used = fit_slope(mt.iters, mt.suboptimality, spec.window)
        entry = {"resolved": resolved, "seeds": seeds, "slope": slope, "slope_points": used,
                 "final_mean_suboptimality": mt.suboptimality[-1],
                 "mean_wall_ns": float(np.mean([r.info["wall_ns"] for r in runs]))}
        if spec.bound_check:
            rows = []
            ok = True
            for t, sub in zip(mt.iters, mt.suboptimality):
                b = bound_at(resolved, problem.obj.beta, R2, t)
                if b is None:
                    continue
                rows.append({"iter": t, "mean_suboptimality": sub, "bound": b})
                ok &= sub <= b
            # no bound is known for the Shotgun baseline
            entry["bound_check"] = {"holds": bool(ok) if rows else None, "rows": rows}
        return alg.value, entry, mt

    jobs = list(enumerate(spec.algorithms))
    if spec.concurrent and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            results = list(pool.map(lambda j: one(*j), jobs))
    else:
        results = [one(*j) for j in jobs]
    for name, entry, mt in results:
        summary["algorithms"][name] = entry
        traces[name] = mt
    return summary, traces
