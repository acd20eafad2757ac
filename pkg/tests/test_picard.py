from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from esme.drivers import expected_sig_time_bm, time_scaled_pair
from esme.picard import (
    PicardExpansion,
    TruncationError,
    VectorField,
    augment_time_scaled,
    expected_response_signature,
    lift_to_word,
    max_driver_length,
    picard_expansions,
    picard_level1,
)
from esme.polynomials import MultiPoly, parse_poly
from esme.signature import batch_signature_entries
from esme.words import enumerate_words

from oracles import numeric_picard, path_iterated_integral, refine

FIRST_CORRECTED = "a*t - 1/2*a^2*t^2 + 1/6*a^3*t^3 + 1/4*a^3*b^2*t^4 - 1/10*a^4*b^2*t^5"


def test_constant_field_one_step():
    vf = VectorField.from_strings([["theta"]], ["y"], ["theta"])
    (exp,) = picard_level1(vf, 1)
    assert list(exp.coefficients) == [(1,)]
    assert exp.coefficients[(1,)] == parse_poly("theta", exp.variables)


def test_zero_expansion_at_r0(diffusion_field):
    (exp,) = picard_level1(diffusion_field, 0)
    assert exp.coefficients == {}
    esig = expected_sig_time_bm(Fraction(1, 4), 4)
    assert expected_response_signature(exp, esig).is_zero()


def test_linear_field_two_steps():
    vf = VectorField.from_strings([["theta*y"]], ["y"], ["theta"])
    (exp,) = picard_level1(vf, 2)
    assert exp.variables == ("theta", "y0")
    assert set(exp.coefficients) == {(1,), (1, 1)}
    assert exp.coefficients[(1,)] == parse_poly("theta*y0", exp.variables)
    assert exp.coefficients[(1, 1)] == parse_poly("theta^2*y0", exp.variables)


def test_linear_field_against_brute_force():
    vf = VectorField.from_strings([["theta*y"]], ["y"], ["theta"])
    (exp,) = picard_level1(vf, 2, y0=[1.5])
    X = refine(np.array([[0.0], [0.4], [-0.3], [0.9]]), 3000)
    Y = numeric_picard(vf.numeric({"theta": 0.7}), [1.5], X, 2)
    symbolic = sum(
        c.evaluate({"theta": 0.7}) * path_iterated_integral(X, w) for w, c in exp.coefficients.items()
    )
    assert symbolic == pytest.approx(Y[-1, 0], rel=1e-6)


def test_lift_length_one_unchanged(diffusion_field):
    level1 = picard_level1(diffusion_field, 2, y0=[0])
    assert lift_to_word(level1, (1,)).coefficients == level1[0].coefficients


def test_lift_square_of_single_term():
    variables = ("alpha",)
    alpha = MultiPoly.variable("alpha", variables)
    level1 = [PicardExpansion((1,), 1, 1, variables, {(1,): alpha})]
    lifted = lift_to_word(level1, (1, 1))
    assert lifted.coefficients == {(1, 1): alpha * alpha}


def test_diffusion_first_moment(diffusion_field):
    exps = picard_expansions(diffusion_field, 3, [(1,)], y0=[0])
    esig = expected_sig_time_bm(None, 14, symbol="t")
    got = expected_response_signature(exps[(1,)], esig)
    assert got.embed(("a", "b", "t")) == parse_poly(FIRST_CORRECTED, ("a", "b", "t"))


def test_diffusion_first_moment_at_quarter(diffusion_field):
    exps = picard_expansions(diffusion_field, 3, [(1,)], y0=[0])
    numeric = expected_response_signature(exps[(1,)], expected_sig_time_bm(Fraction(1, 4), 7))
    formula = parse_poly(FIRST_CORRECTED, ("a", "b", "t"))
    value = formula.evaluate({"a": 1, "b": 2, "t": 0.25})
    assert numeric.evaluate({"a": 1, "b": 2}) == pytest.approx(value, rel=1e-15)


def test_constant_field_expected_value():
    vf = VectorField.from_strings([["theta", "0"]], ["y"], ["theta"])
    (exp,) = picard_level1(vf, 1, y0=[0])
    got = expected_response_signature(exp, expected_sig_time_bm(Fraction(3, 2), 2))
    assert got == parse_poly("3/2*theta", ("theta",))


def test_truncation_error(diffusion_field):
    exps = picard_expansions(diffusion_field, 3, [(1,)], y0=[0])
    with pytest.raises(TruncationError):
        expected_response_signature(exps[(1,)], expected_sig_time_bm(1, 5))


def test_symbolic_initial_condition(diffusion_field):
    exps = picard_expansions(diffusion_field, 2, [(1,)])
    esig = expected_sig_time_bm(Fraction(1, 4), 8)
    sym = expected_response_signature(exps[(1,)], esig, y0=[Fraction(1, 3)])
    num = expected_response_signature(
        picard_expansions(diffusion_field, 2, [(1,)], y0=[Fraction(1, 3)])[(1,)], esig
    )
    assert sym == num


def test_expansion_json_roundtrip(diffusion_field):
    exp = picard_expansions(diffusion_field, 2, [(1, 1)], y0=[0])[(1, 1)]
    back = PicardExpansion.from_dict(exp.to_dict())
    assert back.coefficients == exp.coefficients
    assert back.response_word == exp.response_word and back.r == exp.r


def test_vector_field_validation():
    with pytest.raises(ValueError):
        VectorField.from_strings([["a", "b"], ["a"]], ["y", "z"], ["a", "b"])
    with pytest.raises(ValueError):
        VectorField.from_strings([["a"]], ["y", "z"], ["a"])


def test_augmented_field_reproduces_time_scaled_copy(diffusion_field):
    # Oracle: Y(c)_T of the joint system equals Y_{cT} of the original one.
    c = 0.5
    aug = augment_time_scaled(diffusion_field)
    assert aug.state == ("y", "y_c") and aug.n == 4
    exps = picard_expansions(aug, 2, [(1,), (2,), (1, 2)], y0=[0, 0])
    t = np.linspace(0, 1, 9)
    rng = np.random.default_rng(5)
    base = np.stack([t, np.concatenate([[0], np.cumsum(rng.normal(0, 0.3, 8))])], axis=1)
    joint = time_scaled_pair(base[None], t, c)[0]
    theta = {"a": 0.8, "b": 1.3}
    words = sorted({w for e in exps.values() for w in e.coefficients})
    sig = dict(zip(words, batch_signature_entries(np.diff(joint, axis=0)[None], words)[0]))
    value = {tau: sum(a.evaluate(theta) * sig[w] for w, a in e.coefficients.items())
             for tau, e in exps.items()}
    fine = refine(base, 2000)
    Y = numeric_picard(diffusion_field.numeric(theta), [0], fine, 2)[:, 0]
    mid = (fine.shape[0] - 1) // 2
    assert value[(1,)] == pytest.approx(Y[-1], rel=1e-6)
    assert value[(2,)] == pytest.approx(Y[mid], rel=1e-6)
    # Y(c) is Y run at half speed: the joint path (Y_t, Y_{t/2}) has this cross integral.
    half = Y[np.arange(fine.shape[0]) // 2]
    cross = path_iterated_integral(np.stack([Y, half], axis=1), (1, 2))
    assert value[(1, 2)] == pytest.approx(cross, rel=1e-4)


# -- oracle equivalence: symbolic expansion vs numeric Picard -----------------

FIELDS = {
    "diffusion": (VectorField.from_strings([["a*(1-y)", "b*y^2"]], ["y"], ["a", "b"]),
                  {"a": 1.0, "b": 2.0}, [0.0]),
    "coupled": (VectorField.from_strings(
        [["a*z", "1 + y*z"], ["b - y^2", "a*y"]], ["y", "z"], ["a", "b"]),
        {"a": 0.6, "b": -0.4}, [0.3, -0.2]),
}
DRIVER = np.array([[0.0, 0.0], [0.2, 0.35], [0.45, -0.1], [0.6, 0.25], [0.9, 0.05]])


@pytest.mark.property
@pytest.mark.parametrize("name", sorted(FIELDS))
@pytest.mark.parametrize("r", [1, 2, 3])
def test_symbolic_matches_numeric_picard(name, r):
    vf, theta, y0 = FIELDS[name]
    taus = [(1,), (1, 1)] if vf.m == 1 else [(1,), (2,), (1, 2)]
    if r == 3 and vf.m == 2:
        taus = [(1,), (2,)]
    exps = picard_expansions(vf, r, taus, y0=y0)
    words = sorted({w for e in exps.values() for w in e.coefficients})
    sig = dict(zip(words, batch_signature_entries(np.diff(DRIVER, axis=0)[None], words)[0]))
    fine = refine(DRIVER, 4000)
    Y = numeric_picard(vf.numeric(theta), y0, fine, r)
    for tau in taus:
        symbolic = sum(a.evaluate(theta) * sig[w] for w, a in exps[tau].coefficients.items())
        oracle = path_iterated_integral(Y, tau)
        assert symbolic == pytest.approx(oracle, rel=1e-6, abs=1e-12), tau


# -- degree bound on random fields ------------------------------------------------

@st.composite
def random_fields(draw):
    m = draw(st.integers(1, 2))
    n = draw(st.integers(1, 2))
    state = ["y", "z"][:m]
    names = state + ["p"]
    monomials = enumerate_words(m + 1, 0, 2)
    rows = []
    for _ in range(m):
        row = []
        for _ in range(n):
            terms = {}
            for mono in draw(st.lists(st.sampled_from(monomials), max_size=3)):
                exps = [0] * (m + 1)
                for letter in mono:
                    exps[letter - 1] += 1
                terms[tuple(exps)] = draw(st.integers(-3, 3).filter(bool))
            row.append(MultiPoly(names, terms))
        rows.append(row)
    r = draw(st.integers(1, 3 if m == 1 else 2))
    return VectorField(rows, state, ["p"]), r


@pytest.mark.property
@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(random_fields())
def test_picard_degree_bound(field_and_r):
    vf, r = field_and_r
    q = vf.q
    # Length-2 response words at r = 3 square the expansion size; keep the suite fast.
    taus = enumerate_words(vf.m, 1, 1 if r == 3 else 2)[:3]
    exps = picard_expansions(vf, r, taus)
    for tau, exp in exps.items():
        bound = max_driver_length(len(tau), q, r)
        if q >= 2:
            assert bound == len(tau) * (q**r - 1) // (q - 1)
        elif q == 1:
            assert bound == len(tau) * r
        else:
            # Constant fields: every step integrates the same one-letter words.
            assert bound == len(tau) <= len(tau) * r
        for sigma, alpha in exp.coefficients.items():
            assert 1 <= len(sigma) <= bound
            assert alpha.degree(exp.initial_vars) <= len(tau) * q**r
