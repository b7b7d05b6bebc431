"""Stopping rules and per-checkpoint convergence traces."""

import csv
import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFinite, ValidationError

TRACE_HEADER = ("iter", "elapsed_ns", "objective", "suboptimality", "grad_inf_norm")


class StopReason(str, enum.Enum):
    MAX_ITER = "MaxIter"
    OBJECTIVE_TOL = "ObjectiveTol"
    GRAD_NORM_TOL = "GradNormTol"


@dataclass(frozen=True)
class StoppingRule:
    """Stop when any criterion fires; a zero tolerance disables it.

    ``objective_tol`` compares successive checkpoint objectives relatively;
    ``grad_norm_tol`` bounds the infinity norm of the (sub)gradient residual.
    """

    max_iter: int = 1000
    objective_tol: float = 0.0
    grad_norm_tol: float = 0.0
    checkpoint_every: int = 1

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValidationError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        if int(self.checkpoint_every) != self.checkpoint_every or self.checkpoint_every < 1:
            raise ValidationError("checkpoint_every must be an integer >= 1")
        for name in ("objective_tol", "grad_norm_tol"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class Trace:
    """Checkpoint rows. ``iter`` is the index t of the recorded iterate w_t,
    so the starting point is t = 1 and t - 1 steps have been taken."""

    iters: list = field(default_factory=list)
    elapsed_ns: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    suboptimality: list = field(default_factory=list)
    grad_inf_norm: list = field(default_factory=list)

    def append(self, it, elapsed, obj, subopt=None, grad=None):
        if self.iters and it <= self.iters[-1]:
            raise ValidationError("trace iterations must be strictly increasing")
        if not math.isfinite(obj):
            raise NonFinite(f"objective is not finite at t={it}")
        self.iters.append(int(it))
        self.elapsed_ns.append(int(elapsed))
        self.objective.append(float(obj))
        self.suboptimality.append(None if subopt is None else float(subopt))
        self.grad_inf_norm.append(None if grad is None else float(grad))

    def __len__(self):
        return len(self.iters)

    def rows(self):
        return zip(self.iters, self.elapsed_ns, self.objective, self.suboptimality, self.grad_inf_norm)

    def array(self, name):
        col = self.iters if name == "iter" else getattr(self, name)
        return np.array([np.nan if v is None else v for v in col], dtype=float)

    def with_reference(self, f_star):
        """Copy with the suboptimality column filled from ``f_star``."""
        out = Trace()
        for it, el, ob, _, gr in self.rows():
            out.append(it, el, ob, ob - f_star, gr)
        return out

    def numeric_rows(self):
        """Rows without the timing column, for reproducibility comparisons."""
        return [(i, o, s, g) for i, _, o, s, g in self.rows()]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(TRACE_HEADER)
            for row in self.rows():
                wr.writerow(["" if v is None else repr(v) for v in row])

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if tuple(header) != TRACE_HEADER:
                raise ValidationError(f"unexpected trace header {header}")
            for it, el, ob, sub, gr in rd:
                out.append(int(it), int(el), float(ob),
                           float(sub) if sub else None, float(gr) if gr else None)
        return out


class Stopwatch:
    """Wall clock that can be paused while checkpoints are evaluated."""

    def __init__(self):
        self._total = 0
        self._start = None

    def start(self):
        self._start = time.perf_counter_ns()

    def pause(self):
        if self._start is not None:
            self._total += time.perf_counter_ns() - self._start
            self._start = None

    @property
    def elapsed(self):
        extra = 0 if self._start is None else time.perf_counter_ns() - self._start
        return self._total + extra
