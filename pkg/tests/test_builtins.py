import math

import pytest
from hypothesis import given, settings, strategies as st

from fieldcalc import ExportTree, FieldRuntimeError, RoundContext, eval_round, parse
from fieldcalc import builtins as bi
from fieldcalc.values import NbrMap

finite = st.floats(allow_nan=False, allow_infinity=False, width=32)
maps = st.dictionaries(st.integers(0, 40), finite, max_size=12).map(NbrMap)


@pytest.mark.parametrize("op, empty", [
    ("min", math.inf), ("max", -math.inf), ("sum", 0.0), ("any", False), ("all", True)])
def test_empty_fold_identities(op, empty):
    assert bi.hood_fold(op, NbrMap()) == empty


def test_small_folds():
    assert bi.hood_fold("sum", NbrMap({1: 1.0, 2: 1.0, 3: 1.0})) == 3.0
    assert bi.hood_fold("min", NbrMap({1: 2.5, 2: 1.0})) == 1.0
    assert bi.hood_fold("any", NbrMap({1: False, 2: True})) is True


@settings(max_examples=200)
@given(maps, st.randoms(use_true_random=False))
def test_folds_ignore_map_order(m, rnd):
    keys = list(m)
    rnd.shuffle(keys)
    shuffled = NbrMap((k, m[k]) for k in keys)
    for op in ("min", "max", "sum"):
        a, b = bi.hood_fold(op, m), bi.hood_fold(op, shuffled)
        assert repr(a) == repr(b)


@settings(max_examples=200)
@given(maps, maps)
def test_lifting_intersects_and_is_pointwise(a, b):
    out = bi.lift(bi.BUILTINS["+"].fn, (a, b))
    assert set(out) == set(a) & set(b)
    assert all(out[k] == a[k] + b[k] for k in out)


@given(maps, finite)
def test_scalars_broadcast(m, x):
    out = bi.lift(bi.BUILTINS["*"].fn, (m, x))
    assert out == {k: v * x for k, v in m.items()}
    lifted_fold = bi.hood_fold("min", bi.lift(bi.BUILTINS["+"].fn, (m, 1.0)))
    assert lifted_fold == (min(v + 1.0 for v in m.values()) if m else math.inf)


def test_division_by_zero_is_ieee():
    div = bi.BUILTINS["/"].fn
    assert div(1.0, 0.0) == math.inf
    assert div(-1.0, 0.0) == -math.inf
    assert math.isnan(div(0.0, 0.0))


def test_min_max_with_nan_and_tuples():
    assert bi.vmin(math.nan, 2.0) == 2.0
    assert bi.vmax(3.0, math.nan) == 3.0
    assert bi.vmin((1.0, 5.0), (1.0, 2.0)) == (1.0, 2.0)
    assert bi.vmax((2.0,), (1.0, 9.0)) == (2.0,)


def test_equality_is_exact_and_typed():
    eq = bi.BUILTINS["=="].fn
    assert eq(1.0, 1.0) and not eq(1.0, True)
    assert eq((1.0, True), (1.0, True))
    assert bi.BUILTINS["approxEq"].fn(1.0, 1.0 + 1e-12, 1e-9)


def test_mux_evaluates_both_branches_and_selects():
    assert eval_round(parse("mux(true, 1, 2)"), RoundContext(0))[0] == 1.0
    with pytest.raises(FieldRuntimeError, match="mux expects Bool"):
        eval_round(parse("mux(1, 1, 2)"), RoundContext(0))


def test_sense_reads_sensors():
    ctx = RoundContext(0, sensors={"temp": 21.5})
    assert eval_round(parse('sense("temp")'), ctx)[0] == 21.5
    with pytest.raises(FieldRuntimeError, match="unbound sensor 'x'"):
        eval_round(parse('sense("x")'), ctx)


def test_tuples_and_get():
    assert eval_round(parse("get(tuple(1, 2, 3), 2)"), RoundContext(0))[0] == 3.0
    with pytest.raises(FieldRuntimeError):
        eval_round(parse("get(tuple(1), 4)"), RoundContext(0))


def test_fold_hood_is_ordered_by_id():
    ctx = RoundContext(5, nbr_exports={9: ExportTree(), 2: ExportTree(), 4: ExportTree()}, nbr_ranges={9: 1.0, 2: 1.0, 4: 1.0})
    # Subtraction is order sensitive: ((0 - 2) - 4) - 9
    assert eval_round(parse("foldHood(nbrId(), 0, -)"), ctx)[0] == -15.0
    assert eval_round(parse("uid()"), ctx)[0] == 5.0


def test_type_errors_mention_types():
    with pytest.raises(bi.BuiltinTypeError, match="Bool"):
        bi.BUILTINS["+"].fn(True, 1.0)


def test_registry_is_listed():
    names = [row[0] for row in bi.describe()]
    assert names == sorted(names)
    for required in ("mux", "minHood", "sumHood", "nbrRange", "sense"):
        assert required in names


@settings(max_examples=100)
@given(st.lists(finite, min_size=1, max_size=10))
def test_min_hood_agrees_with_python_min(xs):
    m = NbrMap(enumerate(xs))
    assert bi.hood_fold("min", m) == min(xs)
    assert bi.hood_fold("sum", m) == sum(m[k] for k in sorted(m))
