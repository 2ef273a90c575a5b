import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neumann_eigen import (ConfigurationError, DiscreteProblem, EllipticityBounds, Interval, Linear, PucciMinus,
                           PucciPlus, Robin, SolveConfig, apply_discrete_operator, build_grid, solve_neumann,
                           solve_shifted, solve_sign_changing)
from neumann_eigen.solve import zeroth_bound

from suite import PI, SUITE, bellman, isaacs, linear_sine, pucci_minus_drift, pucci_plus_sine

B12 = EllipticityBounds(1.0, 2.0)


def interval(n, op, gamma=0.0, lam=0.0, rhs=0.0):
    return DiscreteProblem(build_grid(Interval(0, 1), n), op, Robin(gamma), lam, rhs)


def test_zero_rhs_gives_zero():
    p = interval(41, PucciPlus(B12, zeroth="1+x"))
    u = solve_shifted(p, 3.0, np.zeros(41))
    assert np.all(u == 0.0)


def _manufactured_error(n):
    p = interval(n, Linear(zeroth=1.0))
    x = p.grid.nodes[:, 0]
    rhs = 1 + np.cos(2 * np.pi * x)
    u = solve_shifted(p, 0.0, rhs)
    exact = 1 + np.cos(2 * np.pi * x) / (1 + 4 * np.pi ** 2)
    return np.max(np.abs(u - exact))


def test_manufactured_solution_second_order():
    e1, e2 = _manufactured_error(41), _manufactured_error(81)
    assert e1 < 2e-3
    assert e1 / e2 > 3.5


@pytest.mark.parametrize("c0, sigma, rho", [(1.0, 2.0, 3.0), (0.0, 1.5, -2.0), (2.5, 0.5, 1.0)])
def test_constant_solution_of_shifted_problem(c0, sigma, rho):
    for op in (Linear(zeroth=c0), PucciPlus(B12, zeroth=c0), PucciMinus(B12, zeroth=c0)):
        p = interval(31, op)
        u = solve_shifted(p, sigma, np.full(31, rho))
        assert np.allclose(u, rho / (c0 + sigma), atol=1e-12)


def test_constant_case_below_eigenvalue():
    p = interval(51, PucciPlus(B12, zeroth=2.0), lam=1.0, rhs=1.0)
    r = solve_neumann(p)
    assert r.status == "converged"
    assert np.allclose(r.solution, 1.0, atol=1e-8)
    assert r.final_residual <= SolveConfig().outer_tol


def test_constant_case_above_eigenvalue_diverges():
    p = interval(51, PucciPlus(B12, zeroth=2.0), lam=3.0, rhs=1.0)
    r = solve_neumann(p)
    assert r.status == "diverged"


def test_positive_solution_for_positive_rhs():
    p = pucci_plus_sine(101).with_lambda(0.2).with_rhs(1.0)
    r = solve_neumann(p)
    assert r.status == "converged" and r.monotone_flag
    assert np.min(r.solution) > 0


def test_converged_report_meets_tolerance():
    cfg = SolveConfig()
    for name, make in SUITE.items():
        p = make().with_lambda(-1.0).with_rhs(1.0)
        r = solve_neumann(p, cfg)
        assert r.status == "converged", name
        assert r.final_residual <= cfg.outer_tol * max(1.0, np.max(np.abs(r.solution))), name


def test_zero_rhs_converges_to_zero():
    p = isaacs(101).with_lambda(-0.5)
    r = solve_neumann(p)
    assert r.status == "converged"
    assert np.max(np.abs(r.solution)) <= SolveConfig().outer_tol


def test_sigma_must_exceed_bound():
    p = interval(21, Linear(zeroth="x"), lam=0.5)
    assert zeroth_bound(p) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        solve_neumann(p, SolveConfig(sigma=1.5))
    r = solve_neumann(p.with_rhs(1.0), SolveConfig(sigma=1.6))
    assert r.sigma == 1.6


@pytest.mark.parametrize("kwargs", [{"inner_tol": 0}, {"outer_tol": -1}, {"norm_cap": 0}, {"max_outer": 0},
                                    {"method": "jacobi"}])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        SolveConfig(**kwargs)


def test_default_sigma():
    p = pucci_minus_drift(41).with_lambda(-0.3)
    r = solve_neumann(p.with_rhs(1.0))
    assert r.sigma == pytest.approx(2 * 1.0 + 0.3)


def _rhs(seed, n):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, n)


@given(seed=st.integers(0, 2 ** 31), lam=st.floats(-2.0, 0.3))
@settings(max_examples=15)
def test_iterates_nondecreasing(seed, lam):
    p = bellman(41).with_lambda(lam)
    g = _rhs(seed, 41)
    r = solve_neumann(p.with_rhs(g))
    assert r.status == "converged"
    assert r.monotone_flag
    assert np.min(r.solution) >= -1e-12


@given(seed=st.integers(0, 2 ** 31), lam=st.floats(-2.0, 0.3))
@settings(max_examples=15)
def test_discrete_comparison(seed, lam):
    p = pucci_plus_sine(41).with_lambda(lam)
    g1 = _rhs(seed, 41)
    g2 = g1 + _rhs(seed + 1, 41)
    cfg = SolveConfig()
    u1 = solve_neumann(p.with_rhs(g1), cfg).solution
    u2 = solve_neumann(p.with_rhs(g2), cfg).solution
    tol = cfg.outer_tol * max(1.0, np.max(np.abs(u2)))
    assert np.all(u1 <= u2 + 10 * tol)


def test_deterministic():
    p = isaacs(61).with_lambda(0.1).with_rhs("1+x")
    a, b = solve_neumann(p), solve_neumann(p)
    assert a.to_dict() == b.to_dict()
    assert np.array_equal(a.solution, b.solution)


@pytest.mark.parametrize("make", [pucci_plus_sine, pucci_minus_drift, bellman, isaacs])
def test_inner_methods_agree(make):
    p = make(15)
    rhs = np.linspace(-1, 2, 15)
    sigma = zeroth_bound(p) + 1.0
    u_pol = solve_shifted(p, sigma, rhs, SolveConfig(inner_tol=1e-12))
    u_gs = solve_shifted(p, sigma, rhs, SolveConfig(inner_tol=1e-11, method="gauss_seidel"))
    assert np.allclose(u_pol, u_gs, atol=1e-9)
    res = apply_discrete_operator(p, u_pol) + sigma * u_pol * p.grid.interior_mask
    assert np.max(np.abs((res - rhs * p.grid.interior_mask))) <= 1e-9


@pytest.mark.parametrize("make, g", [(pucci_plus_sine, "10*(x-0.6)"), (linear_sine, f"cos(2*{PI}*x)")])
def test_sign_changing_rhs(make, g):
    p = make(61).with_lambda(0.2).with_rhs(g)
    r = solve_sign_changing(p)
    assert r.status == "converged"
    assert r.monotone_flag
    assert np.max(np.abs(apply_discrete_operator(p, r.solution))) <= 1e-7
    if make is linear_sine:
        assert r.solution.min() < 0 < r.solution.max()
