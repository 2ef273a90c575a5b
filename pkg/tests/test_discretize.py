import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neumann_eigen import (Bellman, DiscreteProblem, Dirichlet, EllipticityBounds, Interval, Isaacs, Linear,
                           PucciMinus, PucciPlus, RadialBall, Rectangle, Robin, apply_discrete_boundary,
                           apply_discrete_operator, build_grid, certify_solution_class, ConfigurationError)

B12 = EllipticityBounds(1.0, 2.0)


def interval(n=11, op=None, gamma=0.0, lam=0.0, rhs=0.0):
    return DiscreteProblem(build_grid(Interval(0, 1), n), op or Linear(), Robin(gamma), lam, rhs)


def test_constant_function_residual():
    p = interval(op=Linear(zeroth=3.5))
    res = apply_discrete_operator(p, np.ones(p.grid.n_nodes))
    assert np.allclose(res[p.grid.interior], 3.5, atol=1e-12)
    assert np.allclose(res[p.grid.boundary], 0.0, atol=1e-12)


@pytest.mark.parametrize("op, expected", [(Linear(), -2.0), (PucciPlus(B12), -4.0), (PucciMinus(B12), -2.0)])
def test_quadratic_residual(op, expected):
    p = interval(21, op)
    x = p.grid.nodes[:, 0]
    res = apply_discrete_operator(p, x ** 2)
    assert np.allclose(res[p.grid.interior], expected, atol=1e-10)


def test_boundary_examples():
    p = interval(11)
    g = p.grid
    one = np.ones(g.n_nodes)
    assert all(abs(apply_discrete_boundary(p, one, b)) < 1e-12 for b in g.boundary)
    x = g.nodes[:, 0]
    assert apply_discrete_boundary(p, x, g.n_nodes - 1) == pytest.approx(1.0, abs=1e-12)
    assert apply_discrete_boundary(p, x, 0) == pytest.approx(-1.0, abs=1e-12)
    q = interval(11, gamma=2.0)
    assert apply_discrete_boundary(q, one, 0) == pytest.approx(2.0, abs=1e-12)
    d = DiscreteProblem(g, Linear(), Dirichlet())
    assert apply_discrete_boundary(d, x, g.n_nodes - 1) == 1.0
    with pytest.raises(ValueError):
        apply_discrete_boundary(p, x, 3)


def test_negative_gamma_rejected():
    with pytest.raises(ConfigurationError):
        interval(gamma=-1.0)


def test_non_square_cells_rejected():
    with pytest.raises(ConfigurationError):
        DiscreteProblem(build_grid(Rectangle(0, 1, 0, 2), 5), PucciPlus(B12))


def test_direction_sets():
    assert interval().direction_set == [(1.0,)]
    p = DiscreteProblem(build_grid(Rectangle(0, 1, 0, 1), 5), PucciPlus(B12))
    assert len(p.direction_set) == 4


def test_certificates():
    p = interval(op=Linear(zeroth="1+x"))
    n = p.grid.n_nodes
    zero = np.zeros(n)
    assert certify_solution_class(p, zero, "sub").certified
    assert certify_solution_class(p, zero, "super").certified
    assert certify_solution_class(p.with_lambda(2.0), np.ones(n), "sub").certified
    rep = certify_solution_class(p.with_lambda(1.5), np.ones(n), "sub")
    assert not rep.certified and rep.margin < 0
    assert rep.to_dict()["violations"]
    with pytest.raises(ValueError):
        certify_solution_class(p, zero, "both")


def test_exponential_barrier_is_supersolution():
    p = interval(41, PucciPlus(B12, zeroth="sin(x)"), gamma=1.5)
    v = np.exp(-1.5 * p.grid.distance)
    rep = certify_solution_class(p.with_lambda(-1e4), v, "super")
    assert rep.certified and rep.min_u > 0


def test_quadratic_consistency_2d():
    g = build_grid(Rectangle(0, 1, 0, 1), 9)
    x, y = g.nodes.T
    I = g.interior
    # axis-aligned Hessian diag(2, -6): the axis frame is exact and no frame exceeds it
    u = x ** 2 - 3 * y ** 2
    res = apply_discrete_operator(DiscreteProblem(g, PucciPlus(B12)), u)
    assert np.allclose(res[I], -(2 * 2 - 6), atol=1e-9)
    # diagonal-aligned Hessian with eigenvalues 4 (along (1,1)) and -8 (along (1,-1))
    u = (x + y) ** 2 - 2 * (x - y) ** 2
    res = apply_discrete_operator(DiscreteProblem(g, PucciMinus(B12)), u)
    assert np.allclose(res[I], -(1 * 4 + 2 * -8), atol=1e-9)
    # per-axis second differences
    res = apply_discrete_operator(DiscreteProblem(g, Linear(["1", "2"])), 5 * x ** 2 + x * y + 7 * y ** 2)
    assert np.allclose(res[I], -(10 + 2 * 14), atol=1e-9)


def test_radial_quadratic():
    g = build_grid(RadialBall(1.0, 2), 21)
    r = g.nodes[:, 0]
    res = apply_discrete_operator(DiscreteProblem(g, Linear()), r ** 2)
    assert np.allclose(res[g.interior], -4.0, atol=1e-9)
    g = build_grid(RadialBall(1.0, 3), 21)
    r = g.nodes[:, 0]
    res = apply_discrete_operator(DiscreteProblem(g, Linear()), r ** 2)
    far = g.interior[r[g.interior] >= 2 * g.h]
    assert np.allclose(res[far], -6.0, atol=1e-9)
    assert res[0] == pytest.approx(-6.0)


def monotone_cases():
    fam1 = Linear("1+x", "30", "x")
    fam2 = Linear("2", "-40*x", "1")
    fam3 = Linear("0.5", "5", "-1")
    return {
        "pucci_plus_1d": interval(17, PucciPlus(B12, "25*sin(6*x)", "x"), gamma="1+x"),
        "pucci_minus_1d": interval(17, PucciMinus(B12, "-3", "1")),
        "linear_upwind": interval(17, Linear("0.1", "50*(x-0.5)", "2")),
        "drift_into_wall": interval(17, Linear("0.1", "200", "0"), gamma=1.0),
        "bellman": interval(17, Bellman((fam1, fam2, fam3)), gamma=0.5),
        "isaacs": interval(17, Isaacs(((fam1, fam2), (fam3,)))),
        "radial": DiscreteProblem(build_grid(RadialBall(1.0, 3), 17), PucciPlus(B12, "4*r", "r"), Robin(1.0)),
        "pucci_2d": DiscreteProblem(build_grid(Rectangle(0, 1, 0, 1), 9),
                                    PucciPlus(B12, ["3", "-2*x"], "x*y"), Robin("x")),
        "isaacs_2d": DiscreteProblem(build_grid(Rectangle(0, 1, 0, 1), 9),
                                     Isaacs(((Linear(["1", "2"], ["1", "1"]), fam3),), "min"), Robin(1.0)),
    }


MONO = monotone_cases()


@pytest.mark.parametrize("name", list(MONO))
def test_monotone_interior_rows(name):
    p = MONO[name]
    s = p.scheme
    rng = np.random.default_rng(1)
    # neighbours of interior node i: any other node touched by one of its leaves
    touched = abs(sum(abs(K) for K in s.leaves)).tocsr()
    for _ in range(1000):
        u = rng.normal(size=s.n)
        i = rng.choice(s.I)
        row = touched.getrow(i).indices
        row = row[row != i]
        j = rng.choice(row)
        eps = 10 ** rng.uniform(-6, 0)
        v = u.copy()
        v[j] += eps
        before = apply_discrete_operator(p, u)[i]
        after = apply_discrete_operator(p, v)[i]
        assert after <= before + 1e-9 * (1 + abs(before))


@pytest.mark.parametrize("name", list(MONO))
def test_monotone_reduced_scheme(name):
    s = MONO[name].scheme
    rng = np.random.default_rng(2)
    for _ in range(300):
        u = rng.normal(size=s.nI)
        i, j = rng.choice(s.nI, size=2, replace=False)
        v = u.copy()
        v[j] += 10 ** rng.uniform(-6, 0)
        before = s.combine(s.reduced_leaf_values(u))[i]
        after = s.combine(s.reduced_leaf_values(v))[i]
        assert after <= before + 1e-9 * (1 + abs(before))
    # every linearization is a Z-matrix
    for K in s._reduced:
        off = K.toarray() - np.diag(K.diagonal())
        assert np.all(off <= 1e-12)


@pytest.mark.parametrize("name", list(MONO))
@given(t=st.floats(0, 20), seed=st.integers(0, 2 ** 31))
@settings(max_examples=25)
def test_joint_homogeneity(name, t, seed):
    p = MONO[name]
    rng = np.random.default_rng(seed)
    u = rng.normal(size=p.grid.n_nodes)
    g = rng.normal(size=p.grid.n_nodes)
    base = apply_discrete_operator(p.with_lambda(0.7).with_rhs(g), u)
    scaled = apply_discrete_operator(p.with_lambda(0.7).with_rhs(t * g), t * u)
    assert np.allclose(scaled, t * base, rtol=1e-12, atol=1e-9 * (1 + t))


def test_frame_symmetry():
    g = build_grid(Rectangle(0, 1, 0, 1), 9)
    p = DiscreteProblem(g, PucciPlus(B12, zeroth="x*y"), Robin("x*y"))
    x, y = g.nodes.T
    u = np.sin(3 * x) * np.cos(2 * y) + np.sin(3 * y) * np.cos(2 * x) + x * y
    res = apply_discrete_operator(p, u).reshape(9, 9)
    assert np.allclose(res, res.T, atol=1e-9)


def test_scheme_info():
    p = DiscreteProblem(build_grid(Interval(0, 1), 11), Linear("0.01", "10"), Robin())
    assert p.scheme.info["upwind_nodes"] > 0
    r = DiscreteProblem(build_grid(RadialBall(1.0, 3), 41), PucciPlus(B12), Robin())
    assert r.scheme.info["forward_radial_nodes"] > 0
    assert r.scheme.structure == "concave"
    assert MONO["isaacs"].scheme.structure == "general"


def test_boundary_rows_lowered_only_where_needed():
    assert MONO["drift_into_wall"].scheme.info["first_order_boundary_nodes"] == 1
    assert MONO["pucci_plus_1d"].scheme.info["first_order_boundary_nodes"] == 0
    # diagonal frames next to edges need the two-point row, axis-only stencils do not
    g = build_grid(Rectangle(0, 1, 0, 1), 9)
    assert DiscreteProblem(g, PucciPlus(B12), Robin()).scheme.info["first_order_boundary_nodes"] > 0
    assert DiscreteProblem(g, Linear(["1", "2"]), Robin()).scheme.info["first_order_boundary_nodes"] == 0


def test_three_node_interval():
    p = DiscreteProblem(build_grid(Interval(0, 1), 3), Linear(zeroth=1.0), Robin(1.0))
    assert p.scheme.elimination.shape == (2, 1)
