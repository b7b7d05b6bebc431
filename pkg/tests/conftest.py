import numpy as np
import pytest

from accshot.data import Dataset, SparseColMatrix
from accshot.pipeline import Problem
from accshot.synth import generate


def example_matrix():
    return SparseColMatrix.from_dense([[0.6, 0.8], [0.8, 0.0], [0.0, 0.6]])


def identity_dataset(y):
    y = np.asarray(y, dtype=float)
    d = len(y)
    return Dataset(SparseColMatrix.from_dense(np.eye(d)), y, np.ones(d), True)


def random_problem(n=40, d=60, density=0.1, loss="square", lam=0.0, seed=0, noise_std=0.0):
    ds, w_star = generate(n, d, density, loss, noise_std=noise_std, seed=seed)
    return Problem(ds, loss, lam, seed=seed), w_star


@pytest.fixture
def ex_matrix():
    return example_matrix()
