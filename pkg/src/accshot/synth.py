"""Synthetic sparse regression / classification problems with a planted solution."""

import numpy as np
from scipy.special import expit

from . import rng as _rng
from .data import Dataset, SparseColMatrix, normalize_columns
from .errors import ValidationError
from .loss import LossKind


def random_sparse_matrix(n, d, density, gen):
    """Bernoulli(density) pattern with standard normal values.

    A column that comes out empty gets one entry in a uniformly chosen row so
    that every feature can be normalized.
    """
    mask = gen.random((d, n)) < density
    empty = ~mask.any(axis=1)
    if empty.any():
        mask[np.flatnonzero(empty), gen.integers(0, n, size=int(empty.sum()))] = True
    cols, rows = np.nonzero(mask)  # column-major order, rows ascending
    vals = gen.standard_normal(len(rows))
    vals[vals == 0.0] = 1.0
    return SparseColMatrix.from_coo(n, d, rows, cols, vals)


def generate(n, d, density, loss="square", noise_std=0.0, w_star_nnz=None, seed=0):
    """Return ``(dataset, w_star)``.

    The dataset is column-normalized (its ``scales`` are the raw column
    norms) and ``w_star`` lives in the normalized feature space. Square loss:
    y = X w* + noise_std * N(0, 1). Logistic: y_i = +1 with probability
    sigmoid((X w*)_i), else -1.
    """
    if n < 1 or d < 1:
        raise ValidationError("n and d must be >= 1")
    if not 0 < density <= 1:
        raise ValidationError(f"density must be in (0, 1], got {density}")
    if noise_std < 0:
        raise ValidationError("noise_std must be >= 0")
    k = min(d, max(1, d // 10)) if w_star_nnz is None else int(w_star_nnz)
    if not 0 <= k <= d:
        raise ValidationError(f"w_star_nnz must be in [0, d], got {k}")
    X = random_sparse_matrix(n, d, density, _rng.stream(seed, _rng.DATA))
    Xn, scales = normalize_columns(X)
    gen = _rng.stream(seed, _rng.DATA, 1)
    w_star = np.zeros(d)
    support = gen.choice(d, size=k, replace=False)
    w_star[support] = gen.standard_normal(k)
    m = Xn.matvec(w_star)
    kind = LossKind(loss)
    if kind is LossKind.SQUARE:
        y = m + noise_std * _rng.stream(seed, _rng.NOISE).standard_normal(n)
    else:
        draw = _rng.stream(seed, _rng.LABELS).random(n)
        y = np.where(draw < expit(m), 1.0, -1.0)
    meta = {"generator": dict(n=n, d=d, density=density, loss=kind.value,
                              noise_std=noise_std, w_star_nnz=k, seed=seed)}
    return Dataset(Xn, y, scales, True, meta), w_star
