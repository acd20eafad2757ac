from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esme.polynomials import (
    MultiPoly,
    PolynomialSyntaxError,
    parse_poly,
    poly_add,
    poly_diff,
    poly_eval,
    poly_mul,
)

V = ("a", "b", "t")


def P(text):
    return parse_poly(text, V)


def test_add_cancels():
    assert (P("a") + P("-a")).is_zero()
    s = P("a*t") + P("b*t")
    assert len(s.terms) == 2
    assert poly_add(P("a*t + b"), MultiPoly.zero(V)) == P("a*t + b")


def test_mul_examples():
    assert poly_mul(P("a+b"), P("a-b")) == P("a^2 - b^2")
    assert P("a*t") * MultiPoly.constant(1, V) == P("a*t")
    assert P("a^2/2*t^2") * P("a*t") == P("1/2*a^3*t^3")


def test_mismatched_variables():
    with pytest.raises(ValueError):
        parse_poly("a", ("a",)) + parse_poly("a", ("a", "b"))


def test_diff_examples():
    assert poly_diff(P("a*t - a^2*t^2/2"), "a") == P("t - a*t^2")
    assert poly_diff(P("a*t"), "b").is_zero()
    assert poly_diff(P("a^3*b^2*t^4/4"), "a") == P("3/4*a^2*b^2*t^4")
    with pytest.raises(ValueError):
        poly_diff(P("a"), "z")


def test_eval_examples():
    assert poly_eval(P("a*t - a^2*t^2/2"), {"a": 1, "b": 0, "t": Fraction(1, 4)}) == 0.21875
    assert poly_eval(MultiPoly.zero(V), {"a": 3, "b": 1, "t": 2}) == 0
    with pytest.raises(KeyError):
        poly_eval(P("a"), {"a": 1})


def test_eval_paper_fbm_first_moment():
    # Decimal coefficients of the fBM first-moment polynomial; evaluation at (1, 2)
    # must equal the coefficient sum weighted by the monomials.
    text = (
        "0.25*a - 0.03125*a^2 + 0.00260417*a^3 + 0.00044726*a^2*b - 0.000111815*a^3*b"
        " + 0.00000497138*a^4*b + 0.00116494*a^3*b^2 - 0.000115953*a^4*b^2"
        " + 0.00000253676*a^4*b^3"
    )
    p = parse_poly(text, ("a", "b"))
    expected = (
        0.25 - 0.03125 + 0.00260417 + 0.00044726 * 2 - 0.000111815 * 2 + 4.97138e-6 * 2
        + 0.00116494 * 4 - 0.000115953 * 4 + 2.53676e-6 * 8
    )
    assert poly_eval(p, {"a": 1, "b": 2}) == pytest.approx(expected, rel=1e-12)


def test_degree():
    p = P("a^3*b^2*t + a")
    assert p.degree() == 6
    assert p.degree(["a"]) == 3
    assert MultiPoly.zero(V).degree() == -1


def test_print_and_parse_roundtrip_examples():
    p = P("1/6*a^3*t^3 - a*t + 3/2")
    assert str(p) == "3/2 - a*t + 1/6*a^3*t^3"
    assert parse_poly(str(p), V) == p
    assert str(MultiPoly.zero(V)) == "0"
    assert str(P("-a^2")) == "-a^2"


def test_parse_errors_report_position():
    with pytest.raises(PolynomialSyntaxError) as err:
        parse_poly("a*(1-y", ("a", "y"))
    assert "column" in str(err.value)
    with pytest.raises(PolynomialSyntaxError):
        parse_poly("a*z", ("a", "y"))
    with pytest.raises(PolynomialSyntaxError):
        parse_poly("a/y", ("a", "y"))


def test_parse_accepts_double_star_and_decimals():
    assert parse_poly("b*y**2", ("b", "y")) == parse_poly("b*y^2", ("b", "y"))
    assert parse_poly("0.5*y", ("y",)) == parse_poly("1/2*y", ("y",))


def test_substitute_and_embed():
    p = P("a*t - a^2*t^2/2")
    q = p.substitute({"t": Fraction(1, 4)})
    assert q == P("1/4*a - 1/32*a^2")
    assert q.embed(("a",)).variables == ("a",)
    with pytest.raises(ValueError):
        p.embed(("a",))


# -- ring axioms on random polynomials ---------------------------------------

terms = st.dictionaries(
    st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2)),
    st.fractions(min_value=-5, max_value=5, max_denominator=7),
    max_size=5,
)
polys = terms.map(lambda t: MultiPoly(V, t))


@settings(max_examples=60)
@given(polys, polys, polys)
def test_ring_axioms(p, q, s):
    assert (p * q) * s == p * (q * s)
    assert p * (q + s) == p * q + p * s
    assert p * q == q * p
    assert p + q == q + p
    if not p.is_zero() and not q.is_zero():
        assert (p * q).degree() == p.degree() + q.degree()


@settings(max_examples=60)
@given(polys, polys)
def test_leibniz_rule(p, q):
    assert poly_diff(p * q, "a") == poly_diff(p, "a") * q + p * poly_diff(q, "a")


@settings(max_examples=60)
@given(polys, polys, st.tuples(*[st.floats(-2, 2)] * 3))
def test_eval_is_homomorphism(p, q, point):
    assign = dict(zip(V, point))
    lhs = poly_eval(p * q, assign)
    rhs = poly_eval(p, assign) * poly_eval(q, assign)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@given(polys)
def test_text_roundtrip(p):
    assert parse_poly(str(p), V) == p
