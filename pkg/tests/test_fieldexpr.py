import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bondimass import fieldexpr as fx
from helpers import fd4, interior_point, random_expression


def ev(text, u=0.0, theta=0.0, psi=0.0):
    return float(fx.evaluate(fx.parse(text), u, theta, psi))


# ---------------------------------------------------------------------------
# parse

def test_parse_zero_is_constant():
    e = fx.parse("0")
    assert e is fx.ZERO


def test_power_binds_tighter_than_product():
    e = fx.parse("sin(theta)^2 * cos(2*psi)")
    assert e.kind == "binop" and e.op == "*"
    assert e.left is fx.parse("sin(theta)^2")
    assert ev("sin(theta)^2 * cos(2*psi)", theta=0.7, psi=0.3) == pytest.approx(math.sin(0.7) ** 2 * math.cos(0.6))


def test_parse_evaluates_simple_product():
    assert ev("u*sin(theta)^2", u=2, theta=math.pi / 2) == pytest.approx(2.0)


@pytest.mark.parametrize("text, expected", [
    ("2^3^2", 512.0),          # right associative
    ("-2^2", -4.0),            # ^ above unary minus
    ("8/4/2", 1.0),            # left associative
    ("1-2-3", -4.0),
    ("2*3+4*5", 26.0),
    ("-(-3)", 3.0),
])
def test_precedence_and_associativity(text, expected):
    assert ev(text) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("text, offset", [("sin(theta", 9), ("1 +", 3), ("(u))", 3), ("2 ** 3", 3)])
def test_syntax_error_reports_offset(text, offset):
    with pytest.raises(fx.ExprSyntaxError) as info:
        fx.parse(text)
    assert info.value.offset == offset


@pytest.mark.parametrize("text", ["x + 1", "foo(u)", "r*2", "sin(r)"])
def test_unknown_and_reserved_identifiers(text):
    with pytest.raises(fx.UnknownIdentifierError):
        fx.parse(text)


# ---------------------------------------------------------------------------
# eval

def test_csc_value():
    assert ev("csc(theta)", theta=math.pi / 6) == pytest.approx(2.0, rel=1e-15)


@pytest.mark.parametrize("text, binding", [
    ("cot(theta)", dict(theta=0.0)),
    ("csc(theta)", dict(theta=math.pi)),
    ("ln(u)", dict(u=0.0)),
    ("ln(u)", dict(u=-1.0)),
    ("1/u", dict(u=0.0)),
    ("sqrt(u)", dict(u=-4.0)),
])
def test_domain_errors(text, binding):
    with pytest.raises(fx.DomainError):
        ev(text, **binding)


def test_exp_ln_inverse_pair():
    assert abs(ev("exp(ln(u))", u=3.7) - 3.7) <= 1e-15 * 3.7 * 2


def test_evaluate_broadcasts_arrays():
    th = np.linspace(0.1, 3.0, 7)
    got = fx.evaluate(fx.parse("sin(theta)*u"), 2.0, th, 0.0)
    np.testing.assert_allclose(got, 2 * np.sin(th), rtol=1e-15)


# ---------------------------------------------------------------------------
# diff

def test_diff_chain_rule():
    d = fx.diff(fx.parse("sin(theta)^2"), "theta")
    th = np.linspace(0.1, 3.0, 11)
    np.testing.assert_allclose(fx.evaluate(d, 0, th, 0), 2 * np.sin(th) * np.cos(th), rtol=1e-14, atol=1e-15)


def test_diff_linear_in_u():
    d = fx.diff(fx.parse("u*sin(theta)^2"), "u")
    rng = np.random.default_rng(1)
    u, th, ps = rng.uniform(-3, 3, 10), rng.uniform(0.1, 3, 10), rng.uniform(0, 6, 10)
    np.testing.assert_allclose(fx.evaluate(d, u, th, ps), np.sin(th) ** 2, rtol=1e-15)


def test_cot_derivative_identity():
    e = fx.diff(fx.parse("cot(theta)"), "theta") + fx.parse("csc(theta)^2")
    th = np.random.default_rng(2).uniform(0.01, math.pi - 0.01, 20)
    assert np.max(np.abs(fx.evaluate(e, 0, th, 0))) < 1e-12 * np.max(1 / np.sin(th) ** 2)


def test_derivatives_of_constants_vanish():
    assert fx.diff(fx.parse("3.5"), "u") is fx.ZERO
    assert fx.diff(fx.parse("sin(theta)"), "psi") is fx.ZERO


def test_diff_against_fd_every_function():
    funcs = ["sin", "cos", "tan", "cot", "csc", "sec", "exp", "ln", "sqrt", "sinh", "cosh"]
    rng = np.random.default_rng(3)
    for f in funcs:
        text = f"{f}(1.1 + 0.3*sin(theta) + 0.2*cos(psi))"
        e = fx.parse(text)
        for v, i in (("theta", 1), ("psi", 2)):
            p = list(interior_point(rng))
            sym = float(fx.evaluate(fx.diff(e, v), *p))

            def g(x, p=p, i=i):
                q = list(p)
                q[i] = x
                return float(fx.evaluate(e, *q))

            num = fd4(g, p[i])
            assert abs(sym - num) <= 1e-7 * max(abs(sym), 1e-3 * abs(g(p[i])), 1e-12), (text, v)


# ---------------------------------------------------------------------------
# simplify

def test_simplify_identities():
    assert fx.simplify(fx.parse("0*sin(theta)+1*u")) is fx.U
    assert fx.simplify(fx.parse("(u+0)^1")) is fx.U
    assert fx.simplify(fx.parse("-(-u)")) is fx.U
    assert fx.simplify(fx.parse("2*3+1")) is fx.parse("7")


def test_simplify_second_derivative():
    e = fx.simplify(fx.diff(fx.diff(fx.parse("sin(theta)"), "theta"), "theta"))
    rng = np.random.default_rng(4)
    th = rng.uniform(0, math.pi, 50)
    np.testing.assert_allclose(fx.evaluate(e, 0, th, 0), -np.sin(th), rtol=1e-14, atol=1e-16)


# ---------------------------------------------------------------------------
# properties

expressions = st.integers(min_value=0, max_value=2**32 - 1).map(
    lambda s: random_expression(np.random.default_rng(s), depth=3))
points = st.tuples(st.floats(-1, 1), st.floats(0.3, math.pi - 0.3), st.floats(0, 2 * math.pi))


@settings(max_examples=60, deadline=None)
@given(expressions, points)
def test_round_trip_evaluates_identically(text, p):
    e = fx.parse(text)
    back = fx.parse(fx.to_string(e))
    a, b = float(fx.evaluate(e, *p)), float(fx.evaluate(back, *p))
    assert abs(a - b) <= 1e-14 * max(1.0, abs(a))


@settings(max_examples=60, deadline=None)
@given(expressions, points)
def test_simplify_preserves_value(text, p):
    e = fx.parse(text)
    a, b = float(fx.evaluate(e, *p)), float(fx.evaluate(fx.simplify(e), *p))
    assert abs(a - b) <= 1e-14 * max(1.0, abs(a))


@settings(max_examples=60, deadline=None)
@given(expressions, expressions, st.floats(-3, 3), st.floats(-3, 3), points,
       st.sampled_from(["u", "theta", "psi"]))
def test_diff_is_linear(f, g, a, b, p, v):
    F, G = fx.parse(f), fx.parse(g)
    lhs = float(fx.evaluate(fx.diff(a * F + b * G, v), *p))
    rhs = a * float(fx.evaluate(fx.diff(F, v), *p)) + b * float(fx.evaluate(fx.diff(G, v), *p))
    assert abs(lhs - rhs) <= 1e-11 * max(1.0, abs(lhs), abs(rhs))


@settings(max_examples=60, deadline=None)
@given(expressions, points)
def test_mixed_partials_commute(text, p):
    sf = fx.ScalarField(text)
    a = float(fx.evaluate(fx.diff(fx.diff(sf.expr, "theta"), "psi"), *p))
    b = float(fx.evaluate(fx.diff(fx.diff(sf.expr, "psi"), "theta"), *p))
    assert abs(a - b) <= 1e-9 * max(1.0, abs(a))
    assert float(sf(*p, n_theta=1, n_psi=1)) == pytest.approx(a, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(expressions, points, st.sampled_from([0, 1, 2]))
def test_symbolic_partial_matches_fd(text, p, i):
    e = fx.parse(text)
    v = ("u", "theta", "psi")[i]
    sym = float(fx.evaluate(fx.diff(e, v), *p))

    def g(x):
        q = list(p)
        q[i] = x
        return float(fx.evaluate(e, *q))

    num = fd4(g, p[i])
    assert abs(sym - num) <= 1e-7 * max(abs(sym), 1e-3 * abs(g(p[i])), 1e-12)


def test_scalar_field_caches_partials():
    sf = fx.ScalarField("u^2*sin(theta)*cos(psi)")
    assert sf.d(1, 1, 1) is sf.d(1, 1, 1)
    assert float(sf(1.0, 0.5, 0.2, n_u=1, n_theta=1, n_psi=1)) == pytest.approx(-2 * math.cos(0.5) * math.sin(0.2))


def test_taylor2_is_quadratic_in_u():
    e = fx.taylor2(fx.parse("exp(u)*sin(theta)"))
    th = 0.8
    assert float(fx.evaluate(e, 0.1, th, 0)) == pytest.approx((1 + 0.1 + 0.005) * math.sin(th), rel=1e-14)
