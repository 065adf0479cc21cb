import math

import pytest
from hypothesis import given, settings, strategies as st

from cmslab import kernels
from cmslab.expr import (ArityError, Binary, Call, DimensionError, DomainError, ExprSyntaxError,
                         Num, UnknownIdentifier, Unary, Var, compile_expr, evaluate,
                         fold_constants, is_predicate, parse, to_source, variables)

P0 = "(1/6)*sin(x1)^2 + 17/24"


def test_parse_product():
    assert parse("0.5*x1") == Binary("*", Num(0.5), Var(1))


def test_parse_example3_probability():
    e = parse(P0)
    assert e == Binary("+", Binary("*", Binary("/", Num(1), Num(6)),
                                   Binary("^", Call("sin", (Var(1),)), Num(2))),
                       Binary("/", Num(17), Num(24)))


def test_unbalanced_call_offset():
    with pytest.raises(ExprSyntaxError) as err:
        parse("sin(")
    assert err.value.offset == 4
    assert err.value.expected


def test_offsets_are_bytes():
    with pytest.raises(ExprSyntaxError) as err:
        parse("x1 ≤ 2 )")
    # "≤" is three bytes in UTF-8
    assert err.value.offset == 9


@pytest.mark.parametrize("src, exc", [
    ("foo(x1)", UnknownIdentifier), ("y", UnknownIdentifier), ("min(x1)", ArityError),
    ("sin(x1, x1)", ArityError), ("1 +", ExprSyntaxError), ("x1 < 2 < 3", ExprSyntaxError),
    ("", ExprSyntaxError), ("1e999", ExprSyntaxError),
])
def test_parse_errors(src, exc):
    with pytest.raises(exc):
        parse(src)


def test_dimension_check():
    with pytest.raises(UnknownIdentifier):
        parse("x3", dimension=2)
    with pytest.raises(DimensionError):
        evaluate(parse("x2"), (1.0,))


def test_eval_examples():
    assert evaluate(parse("x1"), (0.25,)) == 0.25
    assert evaluate(parse(P0), (0.0,)) == pytest.approx(17 / 24, abs=1e-15)
    with pytest.raises(DomainError):
        evaluate(parse("log(x1)"), (0.0,))
    with pytest.raises(DomainError):
        evaluate(parse("1/x1"), (0.0,))


def test_precedence_and_associativity():
    assert evaluate(parse("2^3^2"), ()) == 512
    assert evaluate(parse("-2^2"), ()) == -4
    assert evaluate(parse("2^-1"), ()) == 0.5
    assert evaluate(parse("8/4/2"), ()) == 1
    assert evaluate(parse("1 - 2 - 3"), ()) == -4


def test_predicates():
    e = parse("x1 >= 0 and x1 < 0.5 or x1 > 2")
    assert is_predicate(e) and not is_predicate(parse("x1 + 1"))
    assert evaluate(e, (0.25,)) is True or evaluate(e, (0.25,)) == 1
    assert not evaluate(e, (1.0,))
    assert evaluate(e, (3.0,))


def test_variables_and_pi():
    assert variables(parse("x1 + x3*pi")) == {1, 3}
    assert evaluate(parse("cos(pi)"), ()) == -1


def test_fold_keeps_failing_subtrees():
    folded = fold_constants(parse("1/0 + x1"))
    assert isinstance(folded, Binary) and folded.left == Binary("/", Num(1.0), Num(0.0))
    assert fold_constants(parse("2*pi*x1")) == Binary("*", Num(2 * math.pi), Var(1))


# ---------------------------------------------------------------- properties

_leaf = st.one_of(st.floats(0, 100, allow_nan=False).map(Num), st.integers(1, 2).map(Var))


def _extend(children):
    return st.one_of(
        st.builds(lambda a: Unary("-", a), children),
        st.builds(Binary, st.sampled_from(["+", "-", "*", "/", "^"]), children, children),
        st.builds(lambda f, a: Call(f, (a,)), st.sampled_from(["sin", "cos", "exp", "log", "abs"]), children),
        st.builds(lambda f, a, b: Call(f, (a, b)), st.sampled_from(["min", "max"]), children, children),
    )


exprs = st.recursive(_leaf, _extend, max_leaves=12)


@given(exprs)
def test_round_trip(e):
    src = to_source(e)
    again = parse(src)
    assert parse(to_source(again)) == again
    assert to_source(again) == src


@settings(max_examples=300)
@given(exprs, st.floats(-3, 3), st.floats(-3, 3))
def test_compiled_matches_scalar(e, a, b):
    try:
        expected = evaluate(e, (a, b))
    except (DomainError, OverflowError):
        expected = None
    pack = kernels.build_pack([e], [], [], [], [])
    import numpy as np
    for name in kernels.BACKENDS:
        try:
            got = kernels.eval_batch(pack, 0, np.array([[a, b]]), backend_name=name)[0]
        except DomainError:
            got = None
        if expected is None:
            # the scalar path may overflow where libm returns inf; both must refuse
            assert got is None
        else:
            assert got is not None and (got == expected or math.isclose(got, expected, rel_tol=1e-12))


def test_eval_is_pure():
    e = parse(P0)
    vals = {evaluate(e, (0.3,)).hex() for _ in range(5)}
    assert len(vals) == 1


def test_compile_stack_depth():
    p = compile_expr(parse("x1 + (x1 * (x1 - (x1 / (x1 + 1))))"))
    assert p.stack_depth == 6
