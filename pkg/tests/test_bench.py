import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accshot.bench import BenchSpec, bench, fit_slope, mean_trace, reference_optimum
from accshot.loss import full_gradient
from accshot.trace import StoppingRule, Trace

from conftest import random_problem


@settings(max_examples=50, deadline=None)
@given(st.floats(-4, -0.2), st.floats(1e-3, 1e3))
def test_fit_slope_recovers_power_law(p, a):
    t = np.arange(1, 2001)
    slope, used = fit_slope(t, a * t**p, (10, 1000))
    assert slope == pytest.approx(p, abs=1e-9)
    assert used == 991


def test_fit_slope_skips_nonpositive():
    t = np.arange(1, 101, dtype=float)
    s = t**-2.0
    s[50:] = 0.0
    slope, used = fit_slope(t, s, (1, 100))
    assert slope == pytest.approx(-2.0) and used == 50
    assert np.isnan(fit_slope(t, np.zeros(100))[0])


def test_mean_trace():
    a, b = Trace(), Trace()
    for tr, v in ((a, 3.0), (b, 5.0)):
        tr.append(1, 10, v)
        tr.append(2, 20, v - 1)
    m = mean_trace([a, b], 1.0)
    assert m.objective == [4.0, 3.0]
    assert m.suboptimality == [3.0, 2.0]
    c = Trace()
    c.append(1, 0, 1.0)
    with pytest.raises(ValueError):
        mean_trace([a, c], 0.0)


@pytest.mark.parametrize("lam", [0.0, 0.3])
def test_reference_optimum(lam):
    prob, _ = random_problem(60, 30, 0.2, lam=lam, seed=3, noise_std=0.1)
    ref = reference_optimum(prob, tol=1e-10, checkpoint_every=10)
    assert ref.converged and ref.residual <= 1e-10
    if lam == 0:
        g = full_gradient(prob.obj, prob.obj.margins(ref.w_star))
        assert np.max(np.abs(g)) <= 1e-10


def test_bench_seeds_distinct_and_recorded():
    prob, _ = random_problem(30, 40, 0.2, seed=4)
    spec = BenchSpec(["shotgun", "accel-shotgun"], stop=StoppingRule(50), seeds=4)
    summary, traces = bench(prob, spec)
    s1 = summary["algorithms"]["shotgun"]["seeds"]
    s2 = summary["algorithms"]["accel-shotgun"]["seeds"]
    assert len(set(s1 + s2)) == 8
    assert all(tr.suboptimality[-1] is not None for tr in traces.values())


def test_bench_concurrent_matches_sequential():
    prob, _ = random_problem(30, 40, 0.2, seed=5)
    kw = dict(stop=StoppingRule(40), seeds=2)
    seq, tseq = bench(prob, BenchSpec(["agd2", "accel-shotgun"], **kw))
    con, tcon = bench(prob, BenchSpec(["agd2", "accel-shotgun"], concurrent=True, **kw))
    for k in tseq:
        assert tseq[k].numeric_rows() == tcon[k].numeric_rows()


def test_bench_rejects_unknown_algorithm():
    prob, _ = random_problem(30, 40, 0.2, seed=5)
    with pytest.raises(ValueError):
        bench(prob, BenchSpec(["newton"], stop=StoppingRule(5)))


def test_rate_separation_on_ill_conditioned_chain():
    # bidiagonal design: X^T X has eigenvalues down to ~1/d^2, so 1000
    # iterations stay in the sublinear regime
    from accshot.data import Dataset, SparseColMatrix
    from accshot.pipeline import Problem
    from accshot.schedule import ShotgunParams, p_star
    from accshot.solver import accel_shotgun_solve, shotgun_solve

    d = 200
    rows = np.r_[np.arange(d), np.arange(1, d + 1)]
    cols = np.r_[np.arange(d), np.arange(d)]
    X = SparseColMatrix.from_coo(d + 1, d, rows, cols, np.full(2 * d, 2**-0.5))
    y = np.zeros(d + 1)
    y[0] = 1.0
    prob = Problem(Dataset(X, y, np.ones(d), True), "square", 0.0)
    A = X.toarray()
    w_ls = np.linalg.lstsq(A, y, rcond=None)[0]
    f_star = 0.5 * np.sum((A @ w_ls - y) ** 2)
    P = p_star(d, prob.report.rho)
    params = ShotgunParams.resolve(d, prob.report, P=P, eta=1.0, force=True)
    stop = StoppingRule(1000)
    acc = np.mean([accel_shotgun_solve(prob.obj, params, stop, seed=s).trace.objective for s in range(5)], 0)
    sg = np.mean([shotgun_solve(prob.obj, P, stop, seed=s).trace.objective for s in range(5)], 0)
    t = np.arange(1, 1002)
    slope_acc, _ = fit_slope(t, acc - f_star)
    slope_sg, _ = fit_slope(t, sg - f_star)
    assert slope_acc <= -1.7
    assert -1.3 <= slope_sg <= -0.3
