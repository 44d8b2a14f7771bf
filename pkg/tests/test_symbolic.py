import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergopt.symbolic import (
    AlphabetMismatch,
    Cylinder,
    EventuallyPeriodicPoint,
    Word,
    lex_compare,
    lyndon_words,
    parse_point,
    preimage_words,
    shift_truncate,
    symbol_distance,
)

EPP = EventuallyPeriodicPoint


def pts(d=2):
    sym = st.integers(0, d - 1)
    return st.builds(lambda h, c: EPP(tuple(h), tuple(c), d),
                     st.lists(sym, max_size=6), st.lists(sym, min_size=1, max_size=4))


def test_lex_examples():
    assert lex_compare(EPP((0,), (1,)), EPP((1,), (0,))) == -1
    assert lex_compare(EPP((1, 0), (1,)), EPP((), (1,))) == -1
    assert lex_compare(EPP((0, 1), (0, 1)), EPP((), (0, 1))) == 0


def test_canonical_forms_compare_equal():
    a = EPP((1, 0, 1), (0, 1, 0, 1))
    b = EPP((1,), (0, 1))
    assert a == b and hash(a) == hash(b)
    assert str(EPP((1, 1), (1,))) == "|1"
    assert parse_point("0101|01") == parse_point("|01")


def test_distance_examples():
    a = EPP((), (0, 1))
    assert symbol_distance(a, a) == 0.0
    assert symbol_distance(EPP((), (0,)), EPP((), (1,))) == 1.0
    assert symbol_distance(EPP((0, 1, 0), (0,)), EPP((0, 1, 1), (0,))) == 0.25


def test_shift_truncate_examples():
    s, p = shift_truncate(EPP((), (0, 1)), 5)
    assert p.symbols == (0, 1, 0, 1, 0) and s == EPP((), (1, 0))
    w = EPP((1, 0), (1,))
    assert shift_truncate(w, 0) == (w, Word((), 2))
    assert shift_truncate(EPP((1,), (0,)), 1) == (EPP((), (0,)), Word((1,), 2))


def test_preimage_examples():
    assert set(preimage_words(EPP((), (1,)))) == {EPP((), (1,)), EPP((0,), (1,))}
    assert set(preimage_words(EPP((), (0, 1)))) == {EPP((0,), (0, 1)), EPP((), (1, 0))}
    three = preimage_words(EPP((), (2,), 3))
    assert len(three) == 3 and EPP((), (2,), 3) in three


def test_alphabet_mismatch():
    with pytest.raises(AlphabetMismatch):
        lex_compare(EPP((), (0,), 2), EPP((), (0,), 3))
    with pytest.raises(AlphabetMismatch):
        symbol_distance(EPP((), (0,), 2), EPP((), (0,), 3))
    with pytest.raises(ValueError):
        Word((2,), 2)


def test_cylinder_membership():
    c = Cylinder(Word((0, 1), 2))
    assert EPP((0,), (1,)) in c
    assert EPP((), (1,)) not in c


def test_lyndon_counts():
    # necklace counts for d = 2: 2, 1, 2, 3, 6, 9, 18, 30
    counts = [0] * 9
    for w in lyndon_words(2, 8):
        counts[len(w)] += 1
    assert counts[1:] == [2, 1, 2, 3, 6, 9, 18, 30]


@given(pts(), st.integers(0, 20))
def test_shift_truncate_reconcatenates(w, k):
    s, p = shift_truncate(w, k)
    assert p.symbols + s.expand(64) == w.expand(k + 64)


@given(pts())
def test_preimages_shift_back(w):
    pre = preimage_words(w)
    assert len(pre) == w.d
    for p in pre:
        assert p.shift(1) == w


@given(pts(), pts())
def test_order_is_antisymmetric_and_matches_equality(a, b):
    assert lex_compare(a, b) == -lex_compare(b, a)
    assert (lex_compare(a, b) == 0) == (a == b) == (symbol_distance(a, b) == 0.0)


@given(pts(), pts(), pts())
def test_order_consistent_with_distance(a, b, c):
    x, y, z = sorted([a, b, c], key=lambda p: p.expand(64))
    assert symbol_distance(x, z) >= max(symbol_distance(x, y), symbol_distance(y, z))


@given(pts(3))
def test_expansion_reproduces_representation(w):
    reps = EPP(w.head + w.cycle, w.cycle + w.cycle, 3)
    assert reps == w and reps.expand(40) == w.expand(40)
