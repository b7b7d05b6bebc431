"""Smooth losses and the L1-regularized empirical objective.

All gradients are taken from cached margins (the vector X @ w), never from
w itself: one coordinate of the gradient then costs one pass over a single
column's stored entries.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import segment_sums
from .errors import ValidationError
from .parallel import chunks, run_chunks

GRAD_CHUNK = 1024
SUBSET_CHUNK = 64


class LossKind(str, enum.Enum):
    SQUARE = "square"
    LOGISTIC = "logistic"


_BETA = {LossKind.SQUARE: 1.0, LossKind.LOGISTIC: 0.25}


@dataclass(frozen=True)
class LossModel:
    kind: LossKind

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))

    @property
    def beta(self):
        """Uniform bound on the second derivative in the prediction."""
        return _BETA[self.kind]

    def value(self, yhat, y):
        return loss_value(self.kind, yhat, y)

    def deriv(self, yhat, y):
        return loss_deriv(self.kind, yhat, y)


def loss_value(kind, yhat, y):
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if LossKind(kind) is LossKind.SQUARE:
        return 0.5 * (yhat - y) ** 2
    m = y * yhat
    # ln(1 + e^{-m}) without overflow for large |m|
    return np.maximum(0.0, -m) + np.log1p(np.exp(-np.abs(m)))


def loss_deriv(kind, yhat, y):
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if LossKind(kind) is LossKind.SQUARE:
        return yhat - y
    return -y * expit(-y * yhat)


@dataclass(frozen=True, eq=False)
class Objective:
    """F(w) = sum_i loss(x_i . w, y_i) + lam * ||w||_1."""

    dataset: object
    loss: LossModel
    lam: float = 0.0

    def __post_init__(self):
        if not isinstance(self.loss, LossModel):
            object.__setattr__(self, "loss", LossModel(self.loss))
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ValidationError(f"lambda must be finite and non-negative, got {self.lam}")
        if self.loss.kind is LossKind.LOGISTIC:
            y = self.dataset.y
            if not np.all((y == 1.0) | (y == -1.0)):
                raise ValidationError("logistic loss requires labels in {-1, +1}")

    @property
    def X(self):
        return self.dataset.X

    @property
    def y(self):
        return self.dataset.y

    @property
    def beta(self):
        return self.loss.beta

    def margins(self, w):
        return self.X.matvec(w)


def smooth_value(obj, margins):
    return float(np.sum(obj.loss.value(margins, obj.y)))


def full_value(obj, w, margins):
    return smooth_value(obj, margins) + obj.lam * float(np.sum(np.abs(w)))


def full_gradient(obj, margins_u, workers=1):
    """Gradient of the smooth part, X^T g with g_i = loss'((Xu)_i, y_i)."""
    g = obj.loss.deriv(margins_u, obj.y)
    d = obj.X.n_cols
    if workers <= 1:
        return obj.X.column_dots(g)
    out = np.empty(d)

    def work(a, b):
        out[a:b] = obj.X.column_dots(g, np.arange(a, b))

    run_chunks(work, chunks(d, GRAD_CHUNK), workers)
    return out


def gradient_coordinate(obj, j, margins_u):
    """One gradient coordinate, touching only column j's stored entries."""
    if not 0 <= j < obj.X.n_cols:
        raise IndexError(f"coordinate {j} out of range for d={obj.X.n_cols}")
    rows, vals = obj.X.column(j)
    g = obj.loss.deriv(margins_u[rows], obj.y[rows])
    return float(segment_sums(vals * g, np.zeros(1, np.int64), np.array([len(rows)]))[0])


def gradient_coordinates(obj, cols, margins_u, workers=1):
    """Gradient entries for an index set; per-column results do not depend
    on how ``cols`` is chunked across workers."""
    cols = np.asarray(cols, dtype=np.int64)
    g = obj.loss.deriv(margins_u, obj.y)
    if workers <= 1 or len(cols) <= 1:
        return obj.X.column_dots(g, cols)
    out = np.empty(len(cols))

    def work(a, b):
        out[a:b] = obj.X.column_dots(g, cols[a:b])

    run_chunks(work, chunks(len(cols), SUBSET_CHUNK), workers)
    return out


def optimality_residual(obj, grad, w):
    """Infinity norm of the minimum-norm subgradient of F at w.

    With lam = 0 this is the gradient infinity norm.
    """
    if obj.lam == 0:
        return float(np.max(np.abs(grad))) if len(grad) else 0.0
    r = np.where(
        w != 0,
        grad + obj.lam * np.sign(w),
        np.maximum(np.abs(grad) - obj.lam, 0.0),
    )
    return float(np.max(np.abs(r)))
