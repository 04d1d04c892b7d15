"""Expression grammar, evaluation, canonical printing, and bound estimates."""

from __future__ import annotations

import numpy as np
import pytest

from splitgame import EvaluationError, ParseError, evaluate, \
    lipschitz_bound, parse


def _ev(text, x=(), t=0.0, u=(), v=()):
    return evaluate(parse(text), x, t, u, v)


# --- grammar ----------------------------------------------------------------


def test_abs_of_difference():
    assert _ev("abs(x1 - u1)", x=(0.0,), u=(1.0,)) == 1.0


def test_product_of_controls():
    assert _ev("u1*v1", u=(1.0,), v=(-1.0,)) == -1.0


def test_exponential_identity():
    for t in (0.0, 0.3, 1.0):
        assert _ev("exp(0*t)*2", t=t) == 2.0


def test_precedence_additive_left_associative():
    assert _ev("1 - 2 - 3") == -4.0
    assert _ev("6/3/2") == 1.0


def test_precedence_product_over_sum():
    assert _ev("2*3 + 4*5") == 26.0


def test_power_right_associative():
    assert _ev("2^3^2") == 512.0


def test_unary_minus_binds_tighter_than_power():
    assert _ev("-x1^2", x=(2.0,)) == 4.0
    assert _ev("-(x1^2)", x=(2.0,)) == -4.0


def test_min_max_pow_functions():
    assert _ev("min(2, 3)") == 2.0
    assert _ev("max(2, 3)") == 3.0
    assert _ev("pow(2, 10)") == 1024.0


def test_nested_parentheses_and_time():
    assert _ev("(1 - t)*(t + 1)", t=0.5) == pytest.approx(0.75)


# --- errors -----------------------------------------------------------------


def test_unclosed_call_reports_offset():
    with pytest.raises(ParseError) as err:
        parse("min(x1,")
    assert err.value.position == 7
    assert "offset 7" in str(err.value)


def test_unknown_identifier_rejected():
    with pytest.raises(ParseError):
        parse("x1 + foo")
    with pytest.raises(ParseError):
        parse("sin(x1)")


def test_arity_mismatch_rejected():
    with pytest.raises(ParseError):
        parse("abs(x1, u1)")
    with pytest.raises(ParseError):
        parse("min(x1)")


def test_trailing_garbage_rejected():
    with pytest.raises(ParseError):
        parse("x1 + 1)")


def test_empty_input_rejected():
    with pytest.raises(ParseError):
        parse("")


def test_division_by_zero_raises_evaluation_error():
    with pytest.raises(EvaluationError):
        _ev("1/x1", x=(0.0,))


def test_dimension_check():
    e = parse("x2 + u1*v3")
    e.check_dimensions(2, 1, 3)
    with pytest.raises(ValueError):
        e.check_dimensions(1, 1, 3)
    with pytest.raises(ValueError):
        e.check_dimensions(2, 1, 2)


# --- canonical printing ------------------------------------------------------


def _random_expression(rng: np.random.Generator, depth: int) -> str:
    """Random expression text over +, -, *, abs, min, max, exp and leaves."""
    if depth == 0 or rng.random() < 0.3:
        kind = rng.integers(0, 5)
        if kind == 0:
            return f"{rng.uniform(-2.0, 2.0):.4f}"
        return ("x1", "t", "u1", "v1")[kind - 1]
    a = _random_expression(rng, depth - 1)
    b = _random_expression(rng, depth - 1)
    form = rng.integers(0, 6)
    if form == 0:
        return f"({a} + {b})"
    if form == 1:
        return f"({a} - {b})"
    if form == 2:
        return f"({a})*({b})"
    if form == 3:
        return f"-({a})"
    if form == 4:
        return f"min({a}, {b})" if rng.random() < 0.5 else f"max({a}, {b})"
    return f"abs({a})" if rng.random() < 0.5 else f"exp({a})"


def test_print_parse_round_trip_evaluates_identically():
    rng = np.random.Generator(np.random.Philox(23))
    for _ in range(40):
        text = _random_expression(rng, 4)
        e1 = parse(text)
        e2 = parse(e1.to_text())
        for _ in range(100):
            x = (rng.uniform(-1.0, 1.0),)
            t = rng.uniform(0.0, 1.0)
            u = (rng.uniform(-1.0, 1.0),)
            v = (rng.uniform(-1.0, 1.0),)
            assert evaluate(e1, x, t, u, v) == evaluate(e2, x, t, u, v)


def test_printed_form_is_stable():
    e = parse("t*u1*v1 + (1 - t)*abs(x1 - u1)")
    assert parse(e.to_text()).to_text() == e.to_text()


# --- bound estimates ---------------------------------------------------------


def test_constant_bounds():
    est = lipschitz_bound(parse("3"), [[0.0, 1.0]], (0.0, 1.0),
                          [[0.0]], [[0.0]])
    assert est.sup_bound == 3.0
    assert est.lip_x == 0.0
    assert est.lip_t == 0.0


def test_abs_slope_is_one():
    est = lipschitz_bound(parse("abs(x1 - u1)"), [[0.0, 1.0]], (0.0, 1.0),
                          [[0.0], [1.0]], [[0.0]])
    assert est.lip_x == pytest.approx(1.0, abs=1e-6)
    assert est.sup_bound == pytest.approx(1.0, abs=1e-12)


def test_bilinear_partial_derivatives():
    # d(x*t)/dx = t <= 1 and d(x*t)/dt = x <= 2 on the sampled box.
    est = lipschitz_bound(parse("x1*t"), [[0.0, 2.0]], (0.0, 1.0),
                          [[0.0]], [[0.0]])
    assert est.sup_bound == pytest.approx(2.0, abs=1e-9)
    assert est.lip_x == pytest.approx(1.0, abs=1e-9)
    assert est.lip_t == pytest.approx(2.0, abs=1e-9)


def test_estimates_never_exceed_true_constants():
    # Finite differences of 2*x1 + t can reach but not exceed the slopes.
    est = lipschitz_bound(parse("2*x1 + t"), [[-1.0, 1.0]], (0.0, 1.0),
                          [[0.0]], [[0.0]])
    assert est.lip_x <= 2.0 + 1e-9
    assert est.lip_t <= 1.0 + 1e-9
    assert est.sup_bound <= 3.0 + 1e-9
