"""normalize -> solve -> unscale, with "auto" parameter resolution."""

import enum

import numpy as np

from .data import Dataset, analyze_sparsity, drop_zero_columns, normalize_columns, unscale_solution
from .errors import ValidationError
from .loss import LossModel, Objective
from .schedule import COption, Sampling, ShotgunParams, p_star, sigma, step_size_c
from .solver import Mode, accel_shotgun_solve, agd_solve, shotgun_solve
from .trace import StoppingRule


class Algorithm(str, enum.Enum):
    AGD1 = "agd1"
    AGD2 = "agd2"
    AGD3 = "agd3"
    SHOTGUN = "shotgun"
    ACCEL_SHOTGUN = "accel-shotgun"


AGD_OPTION = {
    Algorithm.AGD1: COption.RHO,
    Algorithm.AGD2: COption.KAPPA,
    Algorithm.AGD3: COption.KAPPA_BAR,
}


class Problem:
    """A dataset prepared for the solvers.

    Empty columns are optionally dropped and the rest normalized;
    ``to_original`` maps a solution back to the caller's features.
    """

    def __init__(self, dataset, loss="square", lam=0.0, drop_zero=False,
                 power_tol=1e-9, power_max_iter=10000, seed=0):
        self.original = dataset
        X = dataset.X
        self.kept = None
        if drop_zero:
            X, kept = drop_zero_columns(X)
            if kept.size != dataset.d:
                self.kept = kept
        # a normalized dataset has no empty columns, so nothing was dropped
        if dataset.normalized:
            work = dataset
        else:
            Xn, scales = normalize_columns(X)
            work = Dataset(Xn, dataset.y, scales, True, dict(dataset.meta))
        self.dataset = work
        self.obj = Objective(work, LossModel(loss), float(lam))
        self.report = analyze_sparsity(work.X, power_tol, power_max_iter, seed)

    @property
    def d(self):
        return self.dataset.d

    def to_original(self, w):
        """Unscale (if the input was not normalized) and re-insert dropped
        columns as zeros."""
        if not self.original.normalized:
            w = unscale_solution(w, self.dataset.scales)
        if self.kept is None:
            return w
        out = np.zeros(self.original.d)
        out[self.kept] = w
        return out


def resolve_shotgun_P(P, d, rho, sampling):
    """P as given, or P* ("auto"). Block sampling needs P | d, so an auto P
    is lowered to the largest divisor of d not above P*."""
    if P != "auto":
        return int(P)
    P = p_star(d, rho)
    if Sampling(sampling) is Sampling.BLOCK:
        while d % P:
            P -= 1
    return P


def run(problem, algorithm, P="auto", eta="auto", sampling=Sampling.UNIFORM,
        mode=Mode.NAIVE, stop=None, seed=0, workers=1, f_star=None,
        record_grad=False, force=False, c_option=COption.RHO, w0=None):
    """Run one algorithm; returns ``(RunResult, resolved)``.

    ``resolved`` lists every parameter actually used, with ``*_auto``
    flags for the ones resolved automatically.
    """
    algorithm = Algorithm(algorithm)
    stop = stop or StoppingRule()
    obj, rep = problem.obj, problem.report
    resolved = {"algorithm": algorithm.value, "lambda": obj.lam, "beta": obj.beta}
    if algorithm in AGD_OPTION:
        option = AGD_OPTION[algorithm]
        res = agd_solve(obj, option, stop, report=rep, w0=w0, f_star=f_star,
                        workers=workers, record_grad=record_grad, force=force)
        resolved.update(c_option=option.value, c=res.info["c"], eta=res.info["eta"])
    elif algorithm is Algorithm.SHOTGUN:
        rho = step_size_c(COption(c_option), rep, force=force)
        P_val = resolve_shotgun_P(P, problem.d, rho, sampling)
        res = shotgun_solve(obj, P_val, stop, sampling, w0=w0, f_star=f_star, seed=seed,
                            workers=workers, record_grad=record_grad, rho=rho)
        resolved.update(P=P_val, P_auto=P == "auto", eta=1.0, sampling=Sampling(sampling).value,
                        sigma=sigma(P_val, problem.d, rho, sampling), seed=seed)
    else:
        if obj.lam != 0:
            raise ValidationError("accel-shotgun requires lambda = 0")
        rho = step_size_c(COption(c_option), rep, force=force)
        P_val = resolve_shotgun_P(P, problem.d, rho, sampling)
        params = ShotgunParams.resolve(problem.d, rep, P_val, eta, sampling, c_option, force)
        res = accel_shotgun_solve(obj, params, stop, mode, w0=w0, f_star=f_star, seed=seed,
                                  workers=workers, record_grad=record_grad)
        resolved.update(
            P=params.P, P_auto=P == "auto", eta=params.eta, eta_auto=eta == "auto",
            sigma=params.sigma, c_factor=params.factor, c_option=params.c_option.value,
            sampling=params.sampling.value, mode=Mode(mode).value, seed=seed,
        )
        for k in ("touches", "rebuilds"):
            if k in res.info:
                resolved[k] = res.info[k]
    res.w_final = problem.to_original(res.w)
    return res, resolved
