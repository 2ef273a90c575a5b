import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neumann_eigen import (ConfigurationError, DiscreteProblem, Dirichlet, EigenConfig, EllipticityBounds, Interval,
                           Linear, NonConvergenceError, PucciMinus, PucciPlus, Robin, SolveConfig, beta2_threshold,
                           build_grid, constant_bounds, dirichlet_eigenvalue, dual_operator, feasibility_probe,
                           linear_reference_eigen, principal_eigenfunction, principal_eigenvalue,
                           principal_eigenvalues)
from neumann_eigen.eigen import FEASIBLE, INFEASIBLE, probes_monotone
from neumann_eigen.oracle import tridiagonal_dirichlet_eigenvalue

from suite import PI, SIN, SUITE, bellman, isaacs, laplacian, linear_sine, pucci_minus_drift, pucci_plus_sine

B12 = EllipticityBounds(1.0, 2.0)
CFG = EigenConfig()


def interval(n, op, gamma=0.0):
    return DiscreteProblem(build_grid(Interval(0, 1), n), op, Robin(gamma))


# ------------------------------------------------------------------- probes

@pytest.mark.parametrize("op", [PucciPlus(B12, zeroth=2.0), PucciMinus(B12, zeroth=2.0), Linear(zeroth=2.0)])
def test_probe_constant_case(op):
    p = interval(41, op)
    below = feasibility_probe(p, 1.0)
    assert below.status == FEASIBLE
    assert np.allclose(below.solution, 1.0, atol=1e-10)
    assert below.norm == pytest.approx(1.0)
    assert feasibility_probe(p, 2.5).status == INFEASIBLE


@pytest.mark.parametrize("method", ["policy", "iteration"])
def test_probe_methods_agree(method):
    p = pucci_plus_sine(61)
    cfg = EigenConfig(probe_method=method)
    bar = principal_eigenvalue(p, with_eigenfunction=False).lam
    assert feasibility_probe(p, bar - 0.05, cfg).status == FEASIBLE
    assert feasibility_probe(p, bar + 0.05, cfg).status == INFEASIBLE


def test_probe_accepts_solve_config():
    p = interval(21, Linear(zeroth=1.0))
    assert feasibility_probe(p, 0.0, SolveConfig()).status == FEASIBLE


def test_probe_below_lower_bound_is_feasible():
    p = interval(101, PucciPlus(B12, zeroth=SIN), gamma=1.0)
    lo, _ = constant_bounds(p)
    r = feasibility_probe(p, lo - 1.0)
    assert r.status == FEASIBLE
    assert np.min(r.solution) > 0


def test_probes_monotone_helper():
    assert probes_monotone([(0.0, FEASIBLE), (1.0, INFEASIBLE), (0.5, FEASIBLE)])
    assert not probes_monotone([(0.0, INFEASIBLE), (1.0, FEASIBLE)])
    assert probes_monotone([(0.0, FEASIBLE)])


# ------------------------------------------------------------------- bounds

def test_bounds_linear_sine():
    lo, hi = constant_bounds(linear_sine())
    assert lo == pytest.approx(2.0, abs=1e-12)
    assert hi == pytest.approx(3.0, abs=1e-12)


def test_bounds_constant():
    lo, hi = constant_bounds(interval(31, PucciMinus(B12, zeroth=1.7)))
    assert lo == pytest.approx(1.7, abs=1e-12) and hi == pytest.approx(1.7, abs=1e-12)


def test_bounds_robin_self_consistent():
    p = interval(101, Linear(zeroth="1+x"), gamma=1.0)
    lo, hi = constant_bounds(p)
    assert lo < hi
    for eps in (1e-6, 1e-2):
        assert feasibility_probe(p, lo - eps).status == FEASIBLE
    bar = principal_eigenvalue(p, with_eigenfunction=False).lam
    assert lo <= bar <= hi


def test_bounds_require_robin():
    p = DiscreteProblem(build_grid(Interval(0, 1), 11), Linear(), Dirichlet())
    with pytest.raises(ConfigurationError):
        constant_bounds(p)


# --------------------------------------------------------------- eigenvalues

@pytest.mark.parametrize("op", [PucciPlus(B12, zeroth=2.0), PucciMinus(EllipticityBounds(0.5, 3.0), zeroth=2.0)])
def test_constant_coefficient_eigenvalues(op):
    bar, under = principal_eigenvalues(interval(51, op))
    assert bar.lam == pytest.approx(2.0, abs=CFG.bisect_tol)
    assert under.lam == pytest.approx(2.0, abs=CFG.bisect_tol)
    assert np.allclose(bar.eigenfunction, 1.0, atol=1e-8)
    assert np.allclose(under.eigenfunction, -1.0, atol=1e-8)


def test_linear_matches_oracle():
    p = interval(201, Linear(zeroth=SIN))
    ref, vec = linear_reference_eigen(p)
    est = principal_eigenvalue(p)
    assert abs(est.lam - ref) <= 10 * CFG.bisect_tol
    assert np.max(np.abs(est.eigenfunction - vec)) <= 1e-6


def test_shift_moves_both_eigenvalues():
    s = 0.75
    base = interval(101, PucciPlus(B12, zeroth=SIN), gamma=0.5)
    shifted = interval(101, PucciPlus(B12, zeroth=f"{SIN}+{s}"), gamma=0.5)
    b0, u0 = principal_eigenvalues(base)
    b1, u1 = principal_eigenvalues(shifted)
    assert b1.lam - b0.lam == pytest.approx(s, abs=2 * CFG.bisect_tol)
    assert u1.lam - u0.lam == pytest.approx(s, abs=2 * CFG.bisect_tol)
    assert np.max(np.abs(b1.eigenfunction - b0.eigenfunction)) <= 1e-6


@pytest.mark.parametrize("name", list(SUITE))
def test_estimate_invariants(name):
    bar, under = principal_eigenvalues(SUITE[name]())
    for est, sign in ((bar, 1), (under, -1)):
        lo, hi = est.bracket
        assert lo <= est.lam <= hi
        assert hi - lo <= CFG.bisect_tol
        assert abs(np.max(np.abs(est.eigenfunction)) - 1.0) <= 1e-12
        assert np.min(sign * est.eigenfunction) > 0
        assert probes_monotone(est.history)
        assert est.residual < 1e-5


def test_bracket_endpoints_certified():
    p = bellman(101)
    est = principal_eigenvalue(p, with_eigenfunction=False)
    lo, hi = est.bracket
    assert feasibility_probe(p, lo).status == FEASIBLE
    assert feasibility_probe(p, hi).status == INFEASIBLE


@pytest.mark.parametrize("make", [linear_sine, laplacian])
def test_linear_operators_self_dual(make):
    bar, under = principal_eigenvalues(make(101), with_eigenfunction=False)
    assert abs(bar.lam - under.lam) <= 2 * CFG.bisect_tol


def test_under_is_dual_bar():
    p = pucci_minus_drift(101)
    under = principal_eigenfunction(p, "under")
    dual = principal_eigenvalue(p.with_operator(dual_operator(p.operator)))
    assert under.lam == dual.lam
    assert np.array_equal(under.eigenfunction, -dual.eigenfunction)


def test_pucci_gap_nonzero_and_collapses():
    bar, under = principal_eigenvalues(pucci_plus_sine(101), with_eigenfunction=False)
    assert abs(bar.lam - under.lam) > 0.1
    same = interval(101, PucciPlus(EllipticityBounds(1.0, 1.0), zeroth=SIN))
    bar, under = principal_eigenvalues(same, with_eigenfunction=False)
    assert abs(bar.lam - under.lam) <= 2 * CFG.bisect_tol


def test_eigenfunction_simplicity():
    p = isaacs(101)
    a = principal_eigenfunction(p, "bar", ladder_step=0.1)
    b = principal_eigenfunction(p, "bar", ladder_step=0.03)
    assert np.max(np.abs(a.eigenfunction - b.eigenfunction)) <= 10 * CFG.eig_tol


def test_ladder_exhaustion_raises():
    cfg = EigenConfig(eig_tol=1e-30, max_rungs=4)
    with pytest.raises(NonConvergenceError):
        principal_eigenfunction(pucci_plus_sine(41), "bar", cfg)


def test_infeasible_lower_end_is_configuration_error():
    cfg = EigenConfig(lambda_lo=5.0)
    with pytest.raises(ConfigurationError):
        principal_eigenvalue(pucci_plus_sine(41), cfg, with_eigenfunction=False)


def test_which_validation():
    with pytest.raises(ValueError):
        principal_eigenfunction(pucci_plus_sine(11), "middle")


# ----------------------------------------------------------------- Dirichlet

def test_dirichlet_tridiagonal_formula():
    p = laplacian(201)
    est = dirichlet_eigenvalue(p, with_eigenfunction=False)
    assert abs(est.lam - tridiagonal_dirichlet_eigenvalue(p.grid.h)) <= 10 * CFG.bisect_tol
    assert est.lam == pytest.approx(math.pi ** 2, rel=1e-4)


def test_neumann_laplacian_is_zero():
    est = principal_eigenvalue(laplacian(201), with_eigenfunction=False)
    assert abs(est.lam) <= CFG.bisect_tol


@pytest.mark.parametrize("name", list(SUITE))
def test_neumann_below_dirichlet(name):
    p = SUITE[name]()
    n = principal_eigenvalue(p, with_eigenfunction=False).lam
    d = dirichlet_eigenvalue(p, with_eigenfunction=False).lam
    assert n < d


# ----------------------------------------------------------------- threshold

def test_beta2_example():
    # hand reduction of the threshold at a=A=1, N=2, R=1, rho=1/2, beta1=1, k=2
    expected = (8 / math.e) / (11.25 - 1 / math.e)
    assert beta2_threshold(1, 1, 2, 1, 0.5, 1, 2) == pytest.approx(expected, rel=1e-14)


def test_beta2_limits():
    near_R = [beta2_threshold(1, 2, 2, 1, 1 - t, 1, 2) for t in (1e-2, 1e-4, 1e-6)]
    assert near_R[0] > near_R[1] > near_R[2] and near_R[2] < 1e-4
    small_b1 = [beta2_threshold(1, 2, 2, 1, 0.5, b, 2) for b in (1e-2, 1e-4, 1e-6)]
    assert small_b1[0] > small_b1[1] > small_b1[2] and small_b1[2] < 1e-4


@pytest.mark.parametrize("args", [(1, 2, 2, 1, 1.0, 1, 2), (1, 2, 2, 1, 0.0, 1, 2), (2, 1, 2, 1, 0.5, 1, 2),
                                  (1, 2, 2, 1, 0.5, 0, 2), (1, 2, 2, 1, 0.5, 1, -1), (1, 2, 0, 1, 0.5, 1, 2)])
def test_beta2_domain_errors(args):
    with pytest.raises(ConfigurationError):
        beta2_threshold(*args)


@given(a=st.floats(0.1, 2), ratio=st.floats(1, 4), dim=st.integers(1, 4), rho=st.floats(0.05, 0.95),
       beta1=st.floats(0.1, 5), k=st.floats(0.1, 10))
@settings(max_examples=100)
def test_beta2_positive_when_numerator_dominates(a, ratio, dim, rho, beta1, k):
    A = a * ratio
    value = beta2_threshold(a, A, dim, 1.0, rho, beta1, k)
    # with R = 1 the middle term of the denominator is non-negative iff 2NA >= (N-1) a (1 + rho)
    if 2 * dim * A >= (dim - 1) * a * (1 + rho):
        assert value > 0


# ---------------------------------------------------------------- properties

@given(lam=st.floats(-3.0, 3.0))
@settings(max_examples=30)
def test_probe_monotone_in_lambda(lam):
    p = pucci_plus_sine(41)
    bar = _BAR_41
    status = feasibility_probe(p, lam).status
    if lam < bar - 1e-7:
        assert status == FEASIBLE
    elif lam > bar + 1e-7:
        assert status == INFEASIBLE


_BAR_41 = principal_eigenvalue(pucci_plus_sine(41), with_eigenfunction=False).lam


@given(s=st.floats(-2.0, 2.0))
@settings(max_examples=10)
def test_constant_shift_property(s):
    base = principal_eigenvalue(linear_sine(41), with_eigenfunction=False).lam
    shifted = principal_eigenvalue(interval(41, Linear(zeroth=f"2+{SIN}+({s!r})")), with_eigenfunction=False).lam
    assert shifted - base == pytest.approx(s, abs=2 * CFG.bisect_tol)
