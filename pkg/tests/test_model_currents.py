from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from morse_ruelle.errors import ArtifactError
from morse_ruelle.manifold import DegreeMismatch
from morse_ruelle.model_currents import (
    LinearModelSpec,
    TestForm,
    contract_with_V,
    dump,
    eigenvalue,
    exterior_derivative,
    generator,
    lie_derivative,
    make_current,
    pair,
    parse_dump,
    property_suite,
    scaling_pullback,
)


@st.composite
def specs(draw, max_n=4):
    n = draw(st.integers(1, max_n))
    r = draw(st.integers(0, n))
    mags = [Fraction(draw(st.integers(1, 12)), draw(st.integers(1, 5))) for _ in range(n)]
    return LinearModelSpec.rational([-m if j < r else m for j, m in enumerate(mags)], r)


@st.composite
def currents(draw):
    spec = draw(specs())
    k = draw(st.integers(0, spec.n))
    terms = []
    for _ in range(draw(st.integers(1, 3))):
        gamma = draw(st.lists(st.integers(0, 3), min_size=spec.r, max_size=spec.r))
        beta = draw(st.lists(st.integers(0, 3), min_size=spec.n - spec.r, max_size=spec.n - spec.r))
        L = draw(st.permutations(range(spec.n)))[:k]
        c = Fraction(draw(st.integers(-9, 9)), draw(st.integers(1, 4)))
        terms.append((gamma, beta, L, c))
    return spec, make_current(spec, terms)


def test_unstable_manifold_germ():
    spec = LinearModelSpec.rational([-1, -2, 3])
    u = generator(spec, (0, 0, 0), (), ())
    ((key, c),) = u.terms
    assert key == ((0, 0), (0,), (0, 1)) and c == 1
    assert lie_derivative(spec, u).is_zero()
    assert contract_with_V(spec, u).is_zero()
    assert exterior_derivative(spec, u).is_zero()


def test_unpacked_generator():
    spec = LinearModelSpec.rational([-1, 2])
    u = generator(spec, (1, 1), (0,), (1,))
    assert u.terms == ((((1,), (1,), (1,)), Fraction(1)),)
    assert u.degree == 1
    assert dump(u) == "1 * y^(1) * D^(1)[delta] * dx{} ^ dy{2}"


def test_one_dimensional_delta():
    spec = LinearModelSpec.rational([-1])
    delta = make_current(spec, [((0,), (), (), 1)])
    assert lie_derivative(spec, delta) == delta
    assert eigenvalue(spec, (0,), (0,), ()) == 1
    germ = generator(spec, (0,), (), ())
    assert lie_derivative(spec, germ).is_zero()


def test_contraction_of_degree_zero():
    spec = LinearModelSpec.rational([-1, 2])
    u = make_current(spec, [((2,), (1,), (), 3)])
    assert contract_with_V(spec, u).is_zero()


@settings(max_examples=200, deadline=None)
@given(spec=specs(), data=st.data())
def test_eigenvalue_formula(spec, data):
    alpha = data.draw(st.lists(st.integers(0, 3), min_size=spec.n, max_size=spec.n))
    I = tuple(sorted(data.draw(st.sets(st.integers(0, spec.r - 1), max_size=spec.r)))) if spec.r else ()
    J = tuple(sorted(data.draw(st.sets(st.integers(spec.r, spec.n - 1), max_size=spec.n - spec.r)))) if spec.r < spec.n else ()
    u = generator(spec, alpha, I, J)
    lam = sum((alpha[j] + (j in I or j in J)) * abs(spec.chi[j]) for j in range(spec.n))
    assert eigenvalue(spec, alpha, I, J) == lam
    assert lie_derivative(spec, u) == u.scale(lam)
    assert u.degree == spec.r - len(I) + len(J)


@pytest.mark.parametrize("n,r", [(1, 0), (1, 1), (2, 1), (3, 2), (4, 2)])
def test_eigenvalue_symbolic(n, r):
    spec = LinearModelSpec.symbolic(n, r)
    alpha = tuple(range(1, n + 1))
    u = generator(spec, alpha, tuple(range(r))[:1], tuple(range(r, n))[:1])
    lam = eigenvalue(spec, alpha, tuple(range(r))[:1], tuple(range(r, n))[:1])
    assert lie_derivative(spec, u) == u.scale(lam)


@settings(max_examples=100, deadline=None)
@given(currents())
def test_cartan_formula(sc):
    spec, u = sc
    lhs = lie_derivative(spec, u)
    rhs = exterior_derivative(spec, contract_with_V(spec, u)) + contract_with_V(spec, exterior_derivative(spec, u))
    assert lhs == rhs


@settings(max_examples=100, deadline=None)
@given(currents())
def test_nilpotent_and_commuting(sc):
    spec, u = sc
    assert exterior_derivative(spec, exterior_derivative(spec, u)).is_zero()
    assert contract_with_V(spec, contract_with_V(spec, u)).is_zero()
    assert exterior_derivative(spec, lie_derivative(spec, u)) == lie_derivative(spec, exterior_derivative(spec, u))


@settings(max_examples=100, deadline=None)
@given(currents())
def test_dump_round_trip(sc):
    spec, u = sc
    assert parse_dump(spec, dump(u)) == u


def test_parse_error():
    spec = LinearModelSpec.rational([-1])
    with pytest.raises(ArtifactError):
        parse_dump(spec, "3 * x^(1)")


def test_scaling_identity_and_homogeneity():
    spec = LinearModelSpec.rational([-1, Fraction(3, 2)])
    u = generator(spec, (2, 1), (0,), ())
    assert scaling_pullback(spec, u, 1) == u
    s = sympy.Symbol("s", positive=True)
    lam = eigenvalue(spec, (2, 1), (0,), ())
    ((_, c),) = scaling_pullback(spec, u, s).terms
    assert sympy.simplify(c - s ** sympy.Rational(lam.numerator, lam.denominator)) == 0


def test_scaling_mixed_terms_no_cross():
    spec = LinearModelSpec.rational([-1, 2])
    u = make_current(spec, [((0,), (0,), (0,), 1), ((1,), (2,), (0,), 1)])
    s = sympy.Symbol("s", positive=True)
    coeffs = [c for _, c in scaling_pullback(spec, u, s).terms]
    assert sympy.simplify(coeffs[0] - 1) == 0
    # the second term: delta' scales by s^2, y^2 by s^4, dx by s^-1
    assert sympy.simplify(coeffs[1] - s**5) == 0


def test_pairing_examples():
    spec = LinearModelSpec.rational([-1])
    u = generator(spec, (0,), (), ())
    phi = TestForm(1, 1, {(): {((0,), ()): 3, ((1,), ()): 5}})
    assert pair(spec, u, phi) == 3
    du = make_current(spec, [((1,), (), (0,), 1)])
    assert pair(spec, du, TestForm(1, 1, {(): {((2,), ()): 1}})) == 0
    assert pair(spec, du, TestForm(1, 1, {(): {((1,), ()): 1}})) == -1


def test_pairing_degree_mismatch():
    spec = LinearModelSpec.rational([-1, 2])
    u = generator(spec, (0, 0), (), ())
    with pytest.raises(DegreeMismatch):
        pair(spec, u, TestForm(2, 1, {(): {((0,), (0,)): 1}}))


def test_pairing_scaling_duality():
    # <(phi^{ln s})^* u, x^1> = s^lambda <u, x^1> on a monomial test function
    spec = LinearModelSpec.rational([-2])
    u = make_current(spec, [((1,), (), (0,), 1)])
    s = sympy.Symbol("s", positive=True)
    lam = eigenvalue(spec, (1,), (), ())
    phi = TestForm(1, 1, {(): {((1,), ()): 1}})
    lhs = pair(spec, scaling_pullback(spec, u, s), phi)
    assert sympy.simplify(lhs - s ** int(lam) * pair(spec, u, phi)) == 0


def test_property_suite_small():
    rows = property_suite(n_random=40, seed=3, max_n=3, exhaustive_n=2)
    assert rows and all(r.passed for r in rows)
