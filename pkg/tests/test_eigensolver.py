from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from growthfrag import KernelSpec, ProblemSpec, RateSpec
from growthfrag.discretization import assemble_adjoint, assemble_direct, build_grid, make_truncation
from growthfrag.eigensolver import (
    SolverConfig, Stage, continuation_solve, make_schedule, observed_order, restart_spread,
    solve_stage, solve_truncated, support_infimum, three_grid_order, verify_bounds,
)
from growthfrag.errors import ConfigurationError, NonConvergenceError
from growthfrag.oracles import dense_spectrum, example_linear_beta, example_linear_tau

from conftest import first_example, linear_growth


def _op(problem, R, N, eta=1e-4, kind="uniform"):
    g = build_grid(R, N, kind)
    return assemble_direct(problem, g, make_truncation(problem, g, eta))


@pytest.fixture(scope="module")
def ex1_triple():
    return solve_stage(first_example(), Stage(20.0, 1e-4, 2000), SolverConfig())


def test_first_example_lambda(ex1_triple):
    tr, _ = ex1_triple
    assert abs(tr.lam - 1.0) < 1e-2
    assert tr.residual_direct <= 1e-9 and tr.residual_dual <= 1e-9


def test_first_example_normalizations(ex1_triple):
    tr, _ = ex1_triple
    assert np.dot(tr.U, tr.dx) == pytest.approx(1.0, abs=1e-12)
    assert np.dot(tr.U * tr.phi, tr.dx) == pytest.approx(1.0, abs=1e-12)
    assert np.all(tr.U >= 0) and np.all(tr.phi >= 0)


def test_linear_growth_row_one():
    tr, _ = solve_stage(linear_growth(1), Stage(20.0, 1e-4, 2000), SolverConfig())
    ex = example_linear_tau(1.0, 1.0, 1)
    assert abs(tr.lam - 1.0) < 1e-2
    assert np.dot(np.abs(tr.U - ex.U(tr.x)), tr.dx) < 1e-2
    inner = tr.x <= 10
    slope = np.polyfit(tr.x[inner], tr.phi[inner], 1)[0]
    assert slope == pytest.approx(1.0, rel=3e-2)


@pytest.mark.parametrize("problem", [first_example(), linear_growth(2),
                                     first_example(kernel=KernelSpec.mitosis())],
                         ids=["first", "row2", "mitosis"])
def test_dense_oracle_n50(problem):
    op = _op(problem, 10.0, 50, eta=1e-2)
    tr = solve_truncated(op, assemble_adjoint(op), SolverConfig())
    ds = dense_spectrum(op)
    assert abs(tr.lam - ds.perron_value) <= 1e-10 * max(1.0, abs(ds.perron_value))
    assert np.dot(np.abs(tr.U - ds.perron_vector), op.grid.widths) < 1e-8


def test_adjoint_lambda_matches(ex1_triple):
    tr, _ = ex1_triple
    assert abs(tr.lambda_adjoint - tr.lam) <= 1e-10


def test_nonconvergence_carries_iterate():
    op = _op(first_example(), 20.0, 200)
    with pytest.raises(NonConvergenceError) as info:
        solve_truncated(op, assemble_adjoint(op), SolverConfig(max_iter=1, tol_lambda=1e-300, warm_iterations=0))
    assert info.value.last_iterate is not None


def test_support_infimum_uniform_is_zero(ex1_triple):
    assert support_infimum(ex1_triple[0]) == 0.0


def test_support_infimum_mitosis_bounded_by_half_b():
    # beta vanishes below b = 2, equal mitosis
    p = ProblemSpec(RateSpec.constant(1.0), RateSpec.linear(1.0, b=2.0), KernelSpec.mitosis())
    tr, _ = solve_stage(p, Stage(20.0, 1e-3, 2000), SolverConfig())
    assert support_infimum(tr) <= 1.0
    # below b/2 only the boundary inflow delta feeds U
    low = tr.x < 1.0
    assert np.dot(tr.U[low], tr.dx[low]) <= 2 * tr.trunc.delta
    m = support_infimum(tr, threshold=1e-2)
    assert m == pytest.approx(1.0, abs=2 * tr.grid.max_width)


def test_support_infimum_linear_growth_zero():
    tr, _ = solve_stage(linear_growth(1), Stage(20.0, 1e-4, 1000), SolverConfig())
    assert support_infimum(tr) == 0.0


def test_closed_form_max_tau_u_oracle():
    # tau = 1, so tau U = U; X = x here
    ex = example_linear_beta(1.0, 1.0)
    res = optimize.minimize_scalar(lambda x: -ex.U(x), bounds=(0, 5), method="bounded",
                                   options={"xatol": 1e-12})
    assert res.x == pytest.approx(math.sqrt(3) - 1, abs=1e-6)
    assert -res.fun == pytest.approx(2 / math.e, abs=1e-10)


def test_verify_bounds_first_example(ex1_triple):
    tr, op = ex1_triple
    d = verify_bounds(tr, op.problem)
    assert d["lower_bound_ok"] and d["upper_bound_ok"] and d["lambda_positive"]
    assert d["half_max_tauU"] == pytest.approx(1 / math.e, abs=2e-2)
    assert d["dual_growth"]["k"] == 1.0
    assert d["dual_growth_ok"]


def test_verify_bounds_number_balance_row_one():
    tr, op = solve_stage(linear_growth(1), Stage(30.0, 1e-5, 3000), SolverConfig())
    d = verify_bounds(tr, op.problem)
    assert abs(d["number_balance_gap"]) < 1e-6
    assert d["int_beta_U"] == pytest.approx(1.0, abs=1e-2)


def test_restarts_agree():
    op = _op(first_example(), 20.0, 400)
    r = restart_spread(op, restarts=10, seed=1)
    assert r["lambda_spread"] <= 1e-10
    assert r["U_l1_spread"] <= 1e-8


def test_positive_lambda_every_stage():
    res = continuation_solve(first_example(), make_schedule(5.0, 250, 1e-2, 3))
    assert all(lam > 0 for lam in res.lambdas)
    assert res.lambda_positive_from_R == 5.0


def test_continuation_first_example():
    sched = [Stage(10.0, 1e-2, 1000), Stage(20.0, 1e-3, 2000), Stage(40.0, 1e-4, 4000)]
    res = continuation_solve(first_example(), sched)
    assert res.verdict == "converged"
    assert all(abs(lam - 1.0) < 1e-2 for lam in res.lambdas)
    assert abs(res.extrapolated_lambda - 1.0) < 1e-3


def _nonexist_schedule():
    return make_schedule(10.0, 600, 1e-2, 4, R_growth=2.0, eta_decay=0.1, N_growth=1.0)


@pytest.mark.parametrize("slope", [1.0, 2.0])
def test_continuation_diverging_first_moment(slope):
    p = ProblemSpec(RateSpec.affine(1.0, slope), RateSpec.constant(1.0), KernelSpec.uniform())
    res = continuation_solve(p, _nonexist_schedule(), grid_kind="geometric")
    assert res.verdict == "diverging_first_moment"
    assert all(b > a for a, b in zip(res.first_moments, res.first_moments[1:]))


@pytest.mark.parametrize("slope", [0.5, 2.0])
def test_continuation_lambda_not_settling(slope):
    p = ProblemSpec(RateSpec.linear(slope), RateSpec.constant(1.0), KernelSpec.uniform())
    res = continuation_solve(p, _nonexist_schedule(), grid_kind="geometric")
    assert res.verdict == "lambda_not_settling"


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        make_schedule(10.0, 100, 1e-2, 0)
    s = make_schedule(10.0, 100, 1e-2, 3)
    assert [st.R for st in s] == [10.0, 20.0, 40.0] and [st.N for st in s] == [100, 200, 400]


def test_observed_order_helpers():
    assert observed_order([0.1, 0.05, 0.025], [1e-2, 5e-3, 2.5e-3]) == pytest.approx(1.0)
    assert three_grid_order([1.04, 1.02, 1.01]) == pytest.approx(1.0)


@settings(max_examples=15, deadline=None)
@given(tau0=st.floats(0.25, 4.0), beta0=st.floats(0.25, 4.0))
def test_property_invariants_first_example_family(tau0, beta0):
    p = first_example(tau0, beta0)
    R = 20.0 * math.sqrt(tau0 / beta0)
    tr, op = solve_stage(p, Stage(R, 1e-3 * math.sqrt(tau0 / beta0), 200), SolverConfig())
    d = verify_bounds(tr, p)
    assert tr.lam > 0
    assert d["lower_bound_ok"]
    assert abs(tr.lambda_adjoint - tr.lam) <= 1e-9 * max(1.0, tr.lam)
    m = support_infimum(tr)
    beyond = tr.x > m + 2 * tr.grid.max_width
    assert np.all(tr.U[beyond] > 0)
    assert np.all(tr.phi[tr.x < R - 2 * tr.grid.max_width] > 0)
    assert abs(tr.lam - math.sqrt(tau0 * beta0)) < 0.1 * math.sqrt(tau0 * beta0)
