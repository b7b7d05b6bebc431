import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from accshot.data import (
    Dataset,
    SparseColMatrix,
    analyze_sparsity,
    drop_zero_columns,
    load_dataset,
    normalize_columns,
    save_dataset,
    segment_sums,
    sparsity_measures,
    spectral_radius,
    unscale_solution,
)
from accshot.errors import (
    DuplicateIndex,
    EmptyDataset,
    IndexOutOfRange,
    ParseError,
    UnsortedIndices,
    ValidationError,
    ZeroColumn,
)
from accshot.rng import stream
from accshot.synth import random_sparse_matrix

from conftest import example_matrix


def rand_matrix(n, d, density, seed):
    return random_sparse_matrix(n, d, density, stream(seed, 0))


# construction ---------------------------------------------------------------


def test_from_dense_layout(ex_matrix):
    assert ex_matrix.shape == (3, 2)
    assert ex_matrix.col_ptr.tolist() == [0, 2, 4]
    assert ex_matrix.row_idx.tolist() == [0, 1, 0, 2]
    np.testing.assert_array_equal(ex_matrix.toarray(), [[0.6, 0.8], [0.8, 0], [0, 0.6]])


def test_arrays_are_read_only(ex_matrix):
    with pytest.raises(ValueError):
        ex_matrix.values[0] = 1.0


@pytest.mark.parametrize(
    "col_ptr,row_idx,values",
    [
        ([0, 1], [0], [0.0]),  # stored zero
        ([0, 1], [0], [np.nan]),
        ([0, 2], [1, 0], [1.0, 2.0]),  # unsorted rows
        ([0, 2], [0, 0], [1.0, 2.0]),  # repeated row
        ([0, 1], [5], [1.0]),  # row out of range
        ([1, 1], [0], [1.0]),  # col_ptr[0] != 0
        ([0, 2], [0], [1.0]),  # col_ptr[-1] != nnz
    ],
)
def test_invalid_storage_rejected(col_ptr, row_idx, values):
    with pytest.raises(ValidationError):
        SparseColMatrix(3, 1, np.array(col_ptr), np.array(row_idx), np.array(values))


def test_from_coo_rejects_duplicates():
    with pytest.raises(ValidationError):
        SparseColMatrix.from_coo(2, 2, [0, 0], [1, 1], [1.0, 2.0])


def test_scipy_round_trip():
    X = rand_matrix(30, 20, 0.2, 1)
    assert SparseColMatrix.from_scipy(X.to_scipy()) == X
    np.testing.assert_array_equal(X.toarray(), X.to_scipy().toarray())


def test_matvec_and_column_dots_match_dense():
    X = rand_matrix(25, 15, 0.3, 2)
    A = X.toarray()
    g = np.linspace(-1, 1, 25)
    w = np.linspace(2, -2, 15)
    np.testing.assert_allclose(X.matvec(w), A @ w, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(X.column_dots(g), A.T @ g, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(X.column_dots(g, [3, 7]), (A.T @ g)[[3, 7]], rtol=1e-13, atol=1e-14)


def test_segment_sums_handles_empty_segments():
    prod = np.array([1.0, 2.0, 3.0])
    out = segment_sums(prod, np.array([0, 1, 1, 3]), np.array([1, 0, 2, 0]))
    np.testing.assert_array_equal(out, [1.0, 0.0, 5.0, 0.0])


# normalization --------------------------------------------------------------


def test_normalize_identity():
    Xn, s = normalize_columns(SparseColMatrix.from_dense(np.eye(2)))
    np.testing.assert_array_equal(Xn.toarray(), np.eye(2))
    np.testing.assert_array_equal(s, [1, 1])


def test_normalize_diagonal():
    Xn, s = normalize_columns(SparseColMatrix.from_dense([[2, 0], [0, 3]]))
    np.testing.assert_array_equal(Xn.toarray(), np.eye(2))
    np.testing.assert_array_equal(s, [2, 3])


def test_zero_column_error_and_drop(caplog):
    X = SparseColMatrix.from_dense([[1, 0], [0, 0]])
    with pytest.raises(ZeroColumn) as exc:
        normalize_columns(X)
    assert exc.value.column == 1
    Xd, kept = drop_zero_columns(X)
    assert "dropping 1 empty column" in caplog.text
    assert Xd.shape == (2, 1) and kept.tolist() == [0]


@pytest.mark.parametrize(
    "w,scales,expected",
    [([1.5, 0], [2, 3], [0.75, 0]), ([0.3, -2], [1, 1], [0.3, -2]), ([0, 0], [5, 7], [0, 0])],
)
def test_unscale(w, scales, expected):
    np.testing.assert_allclose(unscale_solution(np.array(w), np.array(scales)), expected, rtol=0, atol=0)


def test_dataset_validation():
    X = example_matrix()
    with pytest.raises(ValidationError):
        Dataset(X, np.zeros(2))
    with pytest.raises(ValidationError):
        Dataset(X.scale_columns(np.array([2.0, 1.0])), np.zeros(3), np.ones(2), True)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.floats(0.05, 1.0), st.integers(0, 2**32))
def test_normalize_idempotent(n, d, density, seed):
    Xn, _ = normalize_columns(rand_matrix(n, d, density, seed))
    Xnn, s2 = normalize_columns(Xn)
    np.testing.assert_allclose(s2, 1.0, rtol=0, atol=1e-15)
    np.testing.assert_allclose(Xnn.values, Xn.values, rtol=0, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**32))
def test_normalize_invariant_to_column_scaling(n, d, seed):
    X = rand_matrix(n, d, 0.3, seed)
    D = np.exp(np.random.default_rng(seed).uniform(-5, 5, d))
    a, _ = normalize_columns(X)
    b, _ = normalize_columns(X.scale_columns(D))
    np.testing.assert_allclose(b.values, a.values, rtol=0, atol=1e-12)


# sparsity measures ----------------------------------------------------------


def test_sparsity_example(ex_matrix):
    counts, kappa, kappa_bar = sparsity_measures(ex_matrix)
    assert counts.tolist() == [2, 1, 1]
    assert kappa == 2
    assert kappa_bar == pytest.approx(1.64, abs=1e-15)


def test_sparsity_identity_and_dense():
    _, k, kb = sparsity_measures(SparseColMatrix.from_dense(np.eye(5)))
    assert (k, kb) == (1, 1.0)
    h = 1 / np.sqrt(2)
    _, k, kb = sparsity_measures(SparseColMatrix.from_dense([[h, h], [h, h]]))
    assert k == 2 and kb == pytest.approx(2.0, rel=1e-15)


@pytest.mark.parametrize(
    "dense,rho",
    [(np.eye(2), 1.0), ([[0.6, 0.8], [0.8, 0], [0, 0.6]], 1.48), (np.full((2, 2), 1 / np.sqrt(2)), 2.0)],
)
def test_spectral_radius_examples(dense, rho):
    est, converged = spectral_radius(SparseColMatrix.from_dense(dense))
    assert converged
    assert est == pytest.approx(rho, rel=1e-9)


def test_spectral_radius_matches_dense_eigensolver():
    X = rand_matrix(60, 40, 0.1, 3)
    Xn, _ = normalize_columns(X)
    A = Xn.toarray()
    rho, conv = spectral_radius(Xn)
    assert conv
    assert rho == pytest.approx(np.linalg.eigvalsh(A.T @ A)[-1], rel=1e-7)


def test_spectral_radius_unconverged_is_reported():
    Xn, _ = normalize_columns(rand_matrix(60, 40, 0.1, 3))
    rho, conv = spectral_radius(Xn, tol=1e-15, max_iter=2)
    assert not conv and rho > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(2, 40), st.floats(0.05, 1.0), st.integers(0, 2**32))
def test_power_iteration_monotone(n, d, density, seed):
    Xn, _ = normalize_columns(rand_matrix(n, d, density, seed))
    _, _, hist = spectral_radius(Xn, seed=seed, return_history=True)
    assert np.all(np.diff(hist) >= -1e-12 * hist[-1])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.floats(0.02, 1.0), st.integers(0, 2**32))
def test_lemma_ordering_and_weighted_average(n, d, density, seed):
    Xn, _ = normalize_columns(rand_matrix(n, d, density, seed))
    rep = analyze_sparsity(Xn, seed=seed)
    assert rep.rho_converged
    assert rep.rho <= rep.kappa_bar + 10 * 1e-9 * max(1.0, rep.kappa_bar)
    assert rep.kappa_bar <= rep.kappa + 1e-12
    assert rep.row_counts.min() - 1e-12 <= rep.kappa_bar
    assert 1 <= rep.kappa <= d


# file format ------------------------------------------------------------------


def test_parse_single_line(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("1 1:0.6 2:0.8\n")
    ds = load_dataset(p)
    np.testing.assert_array_equal(ds.X.toarray(), [[0.6, 0.8]])
    assert ds.y.tolist() == [1.0]


def test_comments_and_blank_lines(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("# hello\n\n-1 2:1.5\n# x\n1 1:2e-1\n")
    ds = load_dataset(p)
    np.testing.assert_array_equal(ds.X.toarray(), [[0, 1.5], [0.2, 0]])
    assert ds.y.tolist() == [-1.0, 1.0]


def test_empty_file(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("")
    with pytest.raises(EmptyDataset):
        load_dataset(p)
    p.write_text("# only a comment\n")
    with pytest.raises(EmptyDataset):
        load_dataset(p)


@pytest.mark.parametrize(
    "line,err",
    [
        ("1 2:1 1:1", UnsortedIndices),
        ("1 1:1 1:2", DuplicateIndex),
        ("1 0:1", IndexOutOfRange),
        ("1 1:abc", ParseError),
        ("abc 1:1", ParseError),
        ("1 1:0", ParseError),
        ("1 1:nan", ParseError),
        ("1 11", ParseError),
    ],
)
def test_parse_errors(tmp_path, line, err):
    p = tmp_path / "bad.txt"
    p.write_text(f"1 1:1\n{line}\n")
    with pytest.raises(err) as exc:
        load_dataset(p)
    assert exc.value.line == 2


def test_round_trip_example(tmp_path):
    X = example_matrix()
    ds = Dataset(X, np.array([1.0, -1.0, 0.5]))
    save_dataset(ds, tmp_path / "x.txt")
    assert load_dataset(tmp_path / "x.txt") == ds


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**32), st.booleans())
def test_round_trip_random(tmp_path_factory, n, d, seed, normalized):
    X = rand_matrix(n, d, 0.3, seed)
    y = np.random.default_rng(seed).standard_normal(n)
    ds = Dataset(X, y)
    if normalized:
        ds = ds.normalize()
    path = tmp_path_factory.mktemp("rt") / "ds.txt"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back == ds
    assert back.X.shape == (n, d)


def test_trailing_empty_columns_survive_round_trip(tmp_path):
    X = SparseColMatrix.from_coo(2, 4, [0], [0], [1.0])
    ds = Dataset(X, np.zeros(2))
    save_dataset(ds, tmp_path / "t.txt")
    assert load_dataset(tmp_path / "t.txt").X.shape == (2, 4)


def test_to_scipy_is_csc(ex_matrix):
    assert sparse.isspmatrix_csc(ex_matrix.to_scipy()) or ex_matrix.to_scipy().format == "csc"
