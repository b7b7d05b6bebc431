"""Acceleration sequences, step-size rules, parameter selection and bounds.

theta_0 = 0, theta_{t+1} = (1 + sqrt(1 + 4 theta_t^2)) / 2 and
gamma_t = (1 - theta_t) / theta_{t+1} drive the momentum of both solvers;
c_t is the extra step-back coefficient of accelerated Shotgun.
"""

import enum
import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import UnconvergedRho, ValidationError


class HypothesisViolation(ValidationError):
    """(eta / 2)(1 + sigma) < 1 does not hold."""


class COption(str, enum.Enum):
    RHO = "rho"
    KAPPA = "kappa"
    KAPPA_BAR = "kappa_bar"


class Sampling(str, enum.Enum):
    UNIFORM = "uniform"
    BLOCK = "block"


class ThetaSchedule:
    """Growable, thread-safe cache of theta_t in extended precision."""

    _GROW = 4096

    def __init__(self):
        self._lock = threading.Lock()
        self._ext = np.zeros(1, dtype=np.longdouble)
        self._f64 = np.zeros(1)

    def _extend(self, t):
        with self._lock:
            have = len(self._ext)
            if t < have:
                return
            new = max(t + 1, 2 * have, have + self._GROW)
            ext = np.empty(new, dtype=np.longdouble)
            ext[:have] = self._ext
            one, half, four = np.longdouble(1), np.longdouble(0.5), np.longdouble(4)
            th = ext[have - 1]
            for k in range(have, new):
                th = half * (one + np.sqrt(one + four * th * th))
                ext[k] = th
            f64 = ext.astype(np.float64)
            # publish both arrays together; readers see the old or new pair
            self._ext, self._f64 = ext, f64

    def __call__(self, t):
        if t < 0:
            raise ValidationError(f"theta index must be >= 0, got {t}")
        if t >= len(self._f64):
            self._extend(t)
        return float(self._f64[t])

    def values(self, t_max):
        """theta_0 .. theta_{t_max} as float64."""
        if t_max >= len(self._f64):
            self._extend(t_max)
        return self._f64[: t_max + 1].copy()

    def extended(self, t):
        if t >= len(self._ext):
            self._extend(t)
        return self._ext[t]


_THETA = ThetaSchedule()


def theta(t):
    return _THETA(t)


def gamma(t):
    if t < 1:
        raise ValidationError(f"gamma index must be >= 1, got {t}")
    return (1.0 - _THETA(t)) / _THETA(t + 1)


def step_size_c(option, report, force=False):
    """The constant c of the gradient step 1/(c beta)."""
    option = COption(option)
    if option is COption.RHO:
        if not report.rho_converged and not force:
            raise UnconvergedRho("spectral radius estimate did not converge")
        return float(report.rho)
    if option is COption.KAPPA:
        return float(report.kappa)
    return float(report.kappa_bar)


def sigma(P, d, rho, sampling=Sampling.UNIFORM):
    """Interference between P simultaneous coordinate updates."""
    if not 1 <= P <= d:
        raise ValidationError(f"need 1 <= P <= d, got P={P}, d={d}")
    if Sampling(sampling) is Sampling.BLOCK:
        return (rho - 1.0) * P / d
    if d == 1:
        return 0.0
    # the ratio is exactly 1.0 at P = d, so sigma = rho - 1 there
    return (rho - 1.0) * ((P - 1) / (d - 1))


def step_slack(eta, sig):
    """1 - (eta / 2)(1 + sigma).

    At eta = 1/(1 + sigma) the product eta * (1 + sigma) can round a few ulps
    away from 1; the slack is pinned to exactly 1/2 there.
    """
    prod = eta * (1.0 + sig)
    if abs(prod - 1.0) <= 4 * np.finfo(float).eps:
        return 0.5
    return 1.0 - 0.5 * prod


def check_hypothesis(eta, sig):
    if not eta > 0:
        raise HypothesisViolation(f"eta must be positive, got {eta}")
    if not step_slack(eta, sig) > 0:
        raise HypothesisViolation(
            f"(eta/2)(1+sigma) = {0.5 * eta * (1 + sig):.6g} must be < 1 "
            f"(eta={eta:.6g}, sigma={sig:.6g})"
        )


def c_factor(P, d, eta, sig):
    """The t-independent part 1 - (2P/d)(1 - (eta/2)(1 + sigma))."""
    return 1.0 - (2.0 * P / d) * step_slack(eta, sig)


def c_t(t, P, d, eta, sig):
    return theta(t) / theta(t + 1) * c_factor(P, d, eta, sig)


def eta_star(sig):
    return 1.0 / (1.0 + sig)


def p_star(d, rho):
    """Best P at eta = 1: (2/3)((d - 1)/(rho - 1) + 1), rounded half up and
    clamped to [1, d]; every P is admissible when rho <= 1."""
    if rho <= 1.0:
        return d
    raw = (2.0 / 3.0) * ((d - 1) / (rho - 1.0) + 1.0)
    return int(min(max(math.floor(raw + 0.5), 1), d))


def theorem1_bound(c, beta, R2, t):
    """2 c beta ||w_1 - w*||^2 / t^2 for the full-gradient method."""
    if t < 1:
        raise ValidationError("the full-gradient bound needs t >= 1")
    return 2.0 * c * beta * R2 / (t * t)


def theorem2_bound(beta, d, P, eta, sig, R2, t):
    """Bound on E[F(w_t)] - F* for accelerated Shotgun, valid for t > 1."""
    if t <= 1:
        raise ValidationError("the parallel bound needs t > 1")
    check_hypothesis(eta, sig)
    return beta * d * d * R2 / (t * t * P * P * eta * step_slack(eta, sig))


def iterations_to_eps(kind, params, eps):
    """Smallest t whose explicit bound is <= eps.

    ``kind`` is ``"theorem1"`` (params c, beta, R2) or ``"theorem2"``
    (params beta, d, P, eta, sigma, R2).
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    if kind == "theorem1":
        bound = lambda t: theorem1_bound(params["c"], params["beta"], params["R2"], t)
        t_min = 1
    elif kind == "theorem2":
        p = params
        bound = lambda t: theorem2_bound(p["beta"], p["d"], p["P"], p["eta"], p["sigma"], p["R2"], t)
        t_min = 2
    else:
        raise ValidationError(f"unknown bound kind {kind!r}")
    # bound(t) = K / t^2
    K = bound(t_min) * t_min * t_min
    t = max(t_min, math.ceil(math.sqrt(K / eps)))
    while bound(t) > eps:
        t += 1
    while t > t_min and bound(t - 1) <= eps:
        t -= 1
    return t


@dataclass(frozen=True)
class ShotgunParams:
    """Resolved parameters of one accelerated Shotgun run.

    ``c_option`` names the spectral quantity (rho, or its upper bounds
    kappa_bar / kappa) used in sigma.
    """

    P: int
    d: int
    eta: float
    sigma: float
    sampling: Sampling = Sampling.UNIFORM
    c_option: COption = COption.RHO
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sampling", Sampling(self.sampling))
        object.__setattr__(self, "c_option", COption(self.c_option))
        if not 1 <= self.P <= self.d:
            raise ValidationError(f"need 1 <= P <= d, got P={self.P}, d={self.d}")
        if self.sampling is Sampling.BLOCK and self.d % self.P:
            raise ValidationError(f"block sampling needs P | d, got P={self.P}, d={self.d}")
        if self.lam != 0:
            raise ValidationError(
                "accelerated Shotgun is defined for lambda = 0 only "
                "(no regularization); use an AGD option for lambda > 0"
            )
        check_hypothesis(self.eta, self.sigma)

    @classmethod
    def resolve(cls, d, report, P="auto", eta="auto", sampling=Sampling.UNIFORM,
                c_option=COption.RHO, force=False):
        """Fill in ``"auto"`` P (P*) and eta (eta*) from a sparsity report."""
        spectral = step_size_c(c_option, report, force=force)
        if P == "auto":
            P = p_star(d, spectral)
        P = int(P)
        sig = sigma(P, d, spectral, sampling)
        eta = eta_star(sig) if eta == "auto" else float(eta)
        return cls(P, d, eta, sig, sampling, c_option)

    @property
    def slack(self):
        return step_slack(self.eta, self.sigma)

    @property
    def factor(self):
        return c_factor(self.P, self.d, self.eta, self.sigma)

    def c(self, t):
        return theta(t) / theta(t + 1) * self.factor

    def bound(self, beta, R2, t):
        return theorem2_bound(beta, self.d, self.P, self.eta, self.sigma, R2, t)
