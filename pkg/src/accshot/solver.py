"""Parallel accelerated gradient descent, Shotgun and accelerated Shotgun.

All three solvers keep the margins X @ w (and X @ u for the accelerated
ones) cached, so a gradient coordinate only reads one column. The
accelerated Shotgun solver also has an implicit mode in which w and u are
never swept in full: both are kept as combinations of two base vectors
whose entries change only on the sampled coordinates.
"""

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as _rng
from .data import analyze_sparsity, segment_sums
from .errors import NonFinite, ValidationError
from .loss import (
    full_gradient,
    full_value,
    gradient_coordinates,
    optimality_residual,
)
from .schedule import COption, Sampling, ShotgunParams, gamma, sigma, step_size_c
from .trace import Stopwatch, StoppingRule, StopReason, Trace

logger = logging.getLogger(__name__)

REFRESH_EVERY = 1000
COEF_RANGE = (1e-12, 1e12)
DET_FLOOR = 1e-6
NORM_TOL = 1e-10


class Mode(str, enum.Enum):
    NAIVE = "naive"
    IMPLICIT = "implicit"


def shrink(w, a):
    """Soft threshold sign(w_j) max(|w_j| - a, 0)."""
    if a < 0:
        raise ValidationError(f"shrinkage level must be >= 0, got {a}")
    w = np.asarray(w, dtype=np.float64)
    if a == 0:
        return w.copy()
    return np.sign(w) * np.maximum(np.abs(w) - a, 0.0)


@dataclass
class SolverState:
    t: int
    w: np.ndarray
    u: np.ndarray
    margins_w: np.ndarray
    margins_u: np.ndarray


@dataclass
class RunResult:
    """``w`` is the last iterate of the normalized problem the solver ran on;
    ``w_final`` is the same vector mapped to the caller's feature scale
    (the pipeline unscales it when the input was not normalized)."""

    w_final: np.ndarray
    trace: Trace
    iterations: int
    stop_reason: StopReason
    w: np.ndarray = None
    info: dict = field(default_factory=dict)


def require_normalized(X):
    sq = segment_sums(X.values**2, X.col_ptr[:-1], X.column_nnz())
    bad = np.flatnonzero(np.abs(sq - 1.0) > NORM_TOL)
    if bad.size:
        raise ValidationError(
            f"solver needs unit-norm columns; column {int(bad[0])} has squared norm {sq[bad[0]]:.6g}"
        )


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite("iterate became non-finite")


def _column_product(X, cols, coef):
    """X[:, cols] @ coef as a sparse (rows, contributions) pair."""
    rows, vals, lengths = X.gather_columns(cols)
    return rows, vals * np.repeat(coef, lengths)


def _dense_product(X, cols, coef):
    """X[:, cols] @ coef, accumulated in ascending column order."""
    rows, contrib = _column_product(X, cols, coef)
    return np.bincount(rows, weights=contrib, minlength=X.n_rows)


# subset sampling --------------------------------------------------------


class SubsetSampler:
    """Draws S_t. Uniform subsets use a partial Fisher-Yates shuffle on a
    persistent permutation (O(P) per draw); block sampling takes one uniform
    index from each of P contiguous blocks of size d / P."""

    def __init__(self, d, P, sampling, gen):
        self.d, self.P = int(d), int(P)
        self.sampling = Sampling(sampling)
        self.gen = gen
        if not 1 <= self.P <= self.d:
            raise ValidationError(f"need 1 <= P <= d, got P={P}, d={d}")
        if self.sampling is Sampling.BLOCK:
            if self.d % self.P:
                raise ValidationError(f"block sampling needs P | d, got P={P}, d={d}")
            self.block = self.d // self.P
            self.offsets = np.arange(self.P, dtype=np.int64) * self.block
        else:
            self.perm = np.arange(self.d, dtype=np.int64)
            self._low = np.arange(self.P, dtype=np.int64)

    def draw(self):
        if self.sampling is Sampling.BLOCK:
            return self.offsets + self.gen.integers(0, self.block, size=self.P)
        if self.P == self.d:
            return np.arange(self.d, dtype=np.int64)
        perm = self.perm
        picks = self.gen.integers(self._low, self.d)
        for k, r in enumerate(picks.tolist()):
            perm[k], perm[r] = perm[r], perm[k]
        return np.sort(perm[: self.P])


def sample_subset(d, P, sampling, gen):
    """One draw of S_t (sorted ascending) from a fresh sampler."""
    return SubsetSampler(d, P, sampling, gen).draw()


# checkpointing ----------------------------------------------------------


class _Recorder:
    def __init__(self, obj, stop, f_star, record_grad, workers):
        self.obj, self.stop, self.f_star = obj, stop, f_star
        self.need_grad = record_grad or stop.grad_norm_tol > 0
        self.workers = workers
        self.trace = Trace()
        self.clock = Stopwatch()
        self._last_obj = None

    def due(self, steps):
        return steps % self.stop.checkpoint_every == 0 or steps == self.stop.max_iter

    def record(self, t, w, margins_w):
        """Record F(w_t); returns a StopReason or None."""
        self.clock.pause()
        F = full_value(self.obj, w, margins_w)
        if not np.isfinite(F):
            raise NonFinite(f"objective is not finite at t={t}")
        grad = None
        if self.need_grad:
            grad = optimality_residual(self.obj, full_gradient(self.obj, margins_w, self.workers), w)
        sub = None if self.f_star is None else F - self.f_star
        self.trace.append(t, self.clock.elapsed, F, sub, grad)
        reason = None
        if self.stop.grad_norm_tol > 0 and grad <= self.stop.grad_norm_tol:
            reason = StopReason.GRAD_NORM_TOL
        elif self.stop.objective_tol > 0 and self._last_obj is not None:
            scale = max(abs(self._last_obj), np.finfo(float).tiny)
            if abs(self._last_obj - F) <= self.stop.objective_tol * scale:
                reason = StopReason.OBJECTIVE_TOL
        self._last_obj = F
        self.clock.start()
        return reason


def _start(obj, w0):
    d = obj.X.n_cols
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=np.float64)
    if w.shape != (d,):
        raise ValidationError(f"warm start must have length {d}")
    m = obj.X.matvec(w)
    return SolverState(1, w, w.copy(), m, m.copy())


def _finish(rec, w, steps, reason, info):
    info = dict(info)
    info["wall_ns"] = rec.clock.elapsed
    return RunResult(w.copy(), rec.trace, steps, reason, w, info)


# accelerated gradient descent ---------------------------------------------


def agd_solve(obj, option=COption.RHO, stop=None, report=None, w0=None, f_star=None,
              workers=1, record_grad=False, force=False, seed=0, history=None):
    """Parallel accelerated gradient descent with step 1/(c beta).

    ``option`` picks c: the spectral radius rho (FISTA), the row sparsity
    kappa, or the weighted sparsity kappa_bar. Each iteration is

        w_{t+1} = shrink(u_t - eta grad f(u_t), lam eta)
        u_{t+1} = (1 - gamma_t) w_{t+1} + gamma_t w_t

    ``history``, if a list, receives a copy of w_t after every step.
    """
    stop = stop or StoppingRule()
    X = obj.X
    require_normalized(X)
    report = report or analyze_sparsity(X, seed=seed)
    c = step_size_c(option, report, force=force)
    eta = 1.0 / (c * obj.beta)
    s = _start(obj, w0)
    rec = _Recorder(obj, stop, f_star, record_grad, workers)
    rec.clock.start()
    reason = rec.record(1, s.w, s.margins_w)
    steps = 0
    while reason is None and steps < stop.max_iter:
        t = s.t
        g = full_gradient(obj, s.margins_u, workers)
        w_new = shrink(s.u - eta * g, obj.lam * eta)
        gam = gamma(t)
        u_new = (1.0 - gam) * w_new + gam * s.w
        mw_new = X.matvec(w_new)
        if (t % REFRESH_EVERY) == 0:
            mu_new = X.matvec(u_new)
        else:
            mu_new = (1.0 - gam) * mw_new + gam * s.margins_w
        _check_finite(w_new, u_new)
        s = SolverState(t + 1, w_new, u_new, mw_new, mu_new)
        steps += 1
        if history is not None:
            history.append(s.w.copy())
        if rec.due(steps):
            reason = rec.record(s.t, s.w, s.margins_w)
    rec.clock.pause()
    info = {"algorithm": f"agd-{COption(option).value}", "c": c, "eta": eta,
            "beta": obj.beta, "lambda": obj.lam}
    return _finish(rec, s.w, steps, reason or StopReason.MAX_ITER, info)


# baseline Shotgun ------------------------------------------------------------


def shotgun_solve(obj, P, stop=None, sampling=Sampling.UNIFORM, w0=None, f_star=None,
                  seed=0, workers=1, record_grad=False, rho=None, subsets=None):
    """Shotgun: P random coordinates updated at once with step 1/beta.

    ``subsets`` optionally overrides sampling with an iterable of index sets.
    """
    stop = stop or StoppingRule()
    X, d = obj.X, obj.X.n_cols
    if obj.lam != 0:
        raise ValidationError("the Shotgun baseline here is implemented for lambda = 0")
    require_normalized(X)
    if rho is not None:
        sig = sigma(P, d, rho, sampling)
        if 0.5 * (1.0 + sig) >= 1.0:
            logger.warning("Shotgun with P=%d has (1+sigma)/2 = %.3g >= 1; it may diverge", P, 0.5 * (1 + sig))
    sampler = None if subsets is not None else SubsetSampler(d, P, sampling, _rng.stream(seed, _rng.SUBSETS))
    it_subsets = iter(subsets) if subsets is not None else None
    s = _start(obj, w0)
    w, mw = s.w, s.margins_w
    step = 1.0 / obj.beta
    rec = _Recorder(obj, stop, f_star, record_grad, workers)
    rec.clock.start()
    reason = rec.record(1, w, mw)
    steps = 0
    while reason is None and steps < stop.max_iter:
        S = sampler.draw() if sampler else np.sort(np.asarray(next(it_subsets), dtype=np.int64))
        gS = gradient_coordinates(obj, S, mw, workers)
        delta = -step * gS
        w[S] = w[S] + delta
        rows, contrib = _column_product(X, S, delta)
        np.add.at(mw, rows, contrib)
        steps += 1
        if steps % REFRESH_EVERY == 0:
            mw = X.matvec(w)
        _check_finite(w)
        if rec.due(steps):
            reason = rec.record(steps + 1, w, mw)
    rec.clock.pause()
    info = {"algorithm": "shotgun", "P": int(P), "eta": 1.0, "beta": obj.beta,
            "sampling": Sampling(sampling).value, "lambda": 0.0}
    return _finish(rec, w, steps, reason or StopReason.MAX_ITER, info)


# accelerated Shotgun ------------------------------------------------------


def accel_shotgun_step(state, obj, params, S, workers=1):
    """One literal accelerated Shotgun iteration on an explicit state.

    w_{t+1,j} = u_{t,j} - (eta/beta) grad_j f(u_t) for j in S, else u_{t,j};
    u_{t+1} = (1 - gamma_t) w_{t+1} + gamma_t w_t + c_t (u_t - w_{t+1}).
    """
    if obj.lam != 0:
        raise ValidationError("accelerated Shotgun requires lambda = 0")
    t = state.t
    S = np.asarray(S, dtype=np.int64)
    gS = gradient_coordinates(obj, S, state.margins_u, workers)
    w_new = state.u.copy()
    w_new[S] = state.u[S] - (params.eta / obj.beta) * gS
    delta = w_new[S] - state.u[S]
    gam = gamma(t)
    c = params.c(t)
    u_new = (1.0 - gam) * w_new + gam * state.w + c * (state.u - w_new)
    mw_new = state.margins_u + _dense_product(obj.X, S, delta)
    mu_new = (1.0 - gam) * mw_new + gam * state.margins_w + c * (state.margins_u - mw_new)
    _check_finite(w_new, u_new)
    return SolverState(t + 1, w_new, u_new, mw_new, mu_new)


class ImplicitState:
    """w = aw p + bw q and u = au p + bu q, with cached X p and X q.

    Only the sampled coordinates of p and q (and the rows of the sampled
    columns in the margin caches) are touched per iteration; a full
    rebuild happens only when the coefficient matrix becomes ill-conditioned
    or leaves a safe magnitude range.
    """

    def __init__(self, X, w, u, margins_w, margins_u):
        self.X = X
        self.p, self.q = w.copy(), u.copy()
        self.mp, self.mq = margins_w.copy(), margins_u.copy()
        self.aw, self.bw, self.au, self.bu = 1.0, 0.0, 0.0, 1.0
        self.touches = 0
        self.rebuilds = 0
        self.rebuild_touches = 0

    def w(self):
        return self.aw * self.p + self.bw * self.q

    def u(self):
        return self.au * self.p + self.bu * self.q

    def margins_w(self):
        return self.aw * self.mp + self.bw * self.mq

    def margins_u(self):
        return self.au * self.mp + self.bu * self.mq

    def step(self, obj, S, scale, gam, c):
        """Advance one iteration given the sampled set and eta / beta."""
        X = self.X
        rows, vals, lengths = X.gather_columns(S)
        offsets = np.zeros(len(S), dtype=np.int64)
        np.cumsum(lengths[:-1], out=offsets[1:])
        mu_rows = self.au * self.mp[rows] + self.bu * self.mq[rows]
        gS = segment_sums(vals * obj.loss.deriv(mu_rows, obj.y[rows]), offsets, lengths)
        u_S = self.au * self.p[S] + self.bu * self.q[S]
        delta = (u_S - scale * gS) - u_S
        k = 1.0 - gam - c
        aw, bw = self.au, self.bu
        au = gam * self.aw + (1.0 - gam) * self.au
        bu = gam * self.bw + (1.0 - gam) * self.bu
        self.touches += 3 * len(rows) + 4 * len(S)
        det = aw * bu - bw * au
        big = max(abs(aw), abs(bw), abs(au), abs(bu))
        if not (COEF_RANGE[0] <= big <= COEF_RANGE[1]) or abs(det) < DET_FLOOR * big * big:
            self._rebuild(aw, bw, au, bu, S, delta, k, rows, vals, lengths)
            return
        self.aw, self.bw, self.au, self.bu = aw, bw, au, bu
        dp = (bu - bw * k) / det * delta
        dq = (aw * k - au) / det * delta
        self.p[S] += dp
        self.q[S] += dq
        rep = np.repeat
        np.add.at(self.mp, rows, vals * rep(dp, lengths))
        np.add.at(self.mq, rows, vals * rep(dq, lengths))

    def _rebuild(self, aw, bw, au, bu, S, delta, k, rows, vals, lengths):
        w = aw * self.p + bw * self.q
        u = au * self.p + bu * self.q
        mw = aw * self.mp + bw * self.mq
        mu = au * self.mp + bu * self.mq
        w[S] += delta
        u[S] += k * delta
        contrib = vals * np.repeat(delta, lengths)
        np.add.at(mw, rows, contrib)
        np.add.at(mu, rows, k * contrib)
        self.p, self.q, self.mp, self.mq = w, u, mw, mu
        self.aw, self.bw, self.au, self.bu = 1.0, 0.0, 0.0, 1.0
        self.rebuilds += 1
        self.rebuild_touches += 2 * (len(w) + len(mw))

    def refresh_margins(self):
        self.mp = self.X.matvec(self.p)
        self.mq = self.X.matvec(self.q)


def accel_shotgun_solve(obj, params, stop=None, mode=Mode.NAIVE, w0=None, f_star=None,
                        seed=0, workers=1, record_grad=False, subsets=None, history=None):
    """Accelerated Shotgun (lambda = 0).

    Both modes consume the same subset stream for a given seed. ``history``,
    if a list, receives a copy of w_t after every step (testing aid).
    """
    stop = stop or StoppingRule()
    mode = Mode(mode)
    X, d = obj.X, obj.X.n_cols
    if obj.lam != 0:
        raise ValidationError(
            "accelerated Shotgun assumes no regularization (lambda = 0); "
            "use an AGD option for L1-regularized problems"
        )
    if params.d != d:
        raise ValidationError(f"params were resolved for d={params.d}, data has d={d}")
    require_normalized(X)
    sampler = None
    if subsets is None:
        sampler = SubsetSampler(d, params.P, params.sampling, _rng.stream(seed, _rng.SUBSETS))
    else:
        subsets = iter(subsets)
    s = _start(obj, w0)
    imp = ImplicitState(X, s.w, s.u, s.margins_w, s.margins_u) if mode is Mode.IMPLICIT else None
    rec = _Recorder(obj, stop, f_star, record_grad, workers)
    scale = params.eta / obj.beta
    rec.clock.start()
    reason = rec.record(1, s.w, s.margins_w)
    steps = 0
    while reason is None and steps < stop.max_iter:
        t = steps + 1
        S = sampler.draw() if sampler else np.sort(np.asarray(next(subsets), dtype=np.int64))
        if imp is None:
            s = accel_shotgun_step(s, obj, params, S, workers)
            if s.t % REFRESH_EVERY == 0:
                s = replace(s, margins_w=X.matvec(s.w), margins_u=X.matvec(s.u))
        else:
            imp.step(obj, S, scale, gamma(t), params.c(t))
            if (t + 1) % REFRESH_EVERY == 0:
                imp.refresh_margins()
        steps += 1
        if history is not None:
            history.append(s.w.copy() if imp is None else imp.w())
        if rec.due(steps):
            if imp is None:
                reason = rec.record(steps + 1, s.w, s.margins_w)
            else:
                w = imp.w()
                _check_finite(w)
                reason = rec.record(steps + 1, w, imp.margins_w())
    rec.clock.pause()
    w_last = s.w if imp is None else imp.w()
    info = {
        "algorithm": "accel-shotgun",
        "mode": mode.value,
        "P": params.P,
        "eta": params.eta,
        "sigma": params.sigma,
        "c_factor": params.factor,
        "sampling": params.sampling.value,
        "beta": obj.beta,
        "lambda": 0.0,
    }
    if imp is not None:
        info.update(touches=imp.touches, rebuilds=imp.rebuilds, rebuild_touches=imp.rebuild_touches)
    return _finish(rec, w_last, steps, reason or StopReason.MAX_ITER, info)
