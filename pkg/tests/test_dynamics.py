import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergopt.dynamics import ExpandingMapSpec, MapSpecError, all_words
from ergopt.symbolic import Word


def test_inverse_branch_examples(doubling):
    assert doubling.inverse_branch_apply((0,), 1.0) == 0.5
    assert doubling.inverse_branch_apply((0, 1), 0.0) == 0.5
    assert doubling.inverse_branch_apply((), 0.3) == 0.3
    with pytest.raises(ValueError):
        doubling.inverse_branch_apply((2,), 0.3)


def test_forward_step_examples(doubling, minus_doubling):
    assert doubling.forward_step(0.3) == pytest.approx((0.6, 0))
    assert doubling.forward_step(0.75) == (0.5, 1)
    fx, s = minus_doubling.forward_step(1 / 6)
    assert s == 0 and fx == pytest.approx(2 / 3, abs=1e-15)


def test_cylinder_interval_examples(doubling):
    assert doubling.cylinder_interval((0,)) == (0.0, 0.5)
    assert doubling.cylinder_interval(Word((0, 1))) == (0.5, 0.75)


def test_periodic_points(doubling, minus_doubling):
    assert doubling.periodic_point_from_word((1,)) == 1.0
    assert doubling.periodic_point_from_word((0, 1)) == pytest.approx(2 / 3, abs=1e-15)
    assert minus_doubling.periodic_point_from_word((1,)) == pytest.approx(2 / 3, abs=1e-15)


def test_orbit_enumeration(doubling, pot_x):
    orbits = doubling.enumerate_periodic_orbits(2)
    got = sorted(tuple(sorted(round(p, 12) for p in o.points)) for o in orbits)
    assert got == [(0.0,), (round(1 / 3, 12), round(2 / 3, 12)), (1.0,)]
    assert len(doubling.enumerate_periodic_orbits(3)) == 5
    top = doubling.enumerate_periodic_orbits(8, pot_x.A)[0]
    assert top.itinerary.symbols == (1,) and top.average == 1.0


def test_contraction_audit():
    lam, ok = ExpandingMapSpec(["x/2", "(x+1)/2"], 0.5).contraction_audit()
    assert ok and lam == pytest.approx(0.5, abs=1e-9)
    assert not ExpandingMapSpec(["x/2", "(x+1)/2"], 0.4).contraction_audit()[1]
    pert = ExpandingMapSpec(["x/2 + 0.01*sin(pi*x)", "(x+1)/2"], 0.55)
    lam, ok = pert.contraction_audit()
    # derivative 1/2 + 0.01*pi*cos(pi*x) peaks at x = 0
    assert ok and lam == pytest.approx(0.5 + 0.01 * np.pi, abs=1e-6)


@pytest.mark.parametrize("branches, orientation", [
    (["x/2", "x/2 + 0.4"], "preserving"),
    (["x/2", "(x+1)/2"], "reversing"),
    (["x/3", "(x+1)/3"], "preserving"),
])
def test_malformed_maps_rejected(branches, orientation):
    with pytest.raises(MapSpecError):
        ExpandingMapSpec(branches, 0.5, orientation)


NONLINEAR = ExpandingMapSpec(["x*(3-x)/4", "1/2 + x*(1+x)/4"], 0.75)


@given(x=st.floats(1e-6, 1 - 1e-6), i=st.integers(0, 1))
def test_forward_inverse_round_trip(x, i):
    for fmap in (ExpandingMapSpec(["x/2", "(x+1)/2"], 0.5),
                 ExpandingMapSpec(["(1-x)/2", "(2-x)/2"], 0.5, "reversing"), NONLINEAR):
        fx, s = fmap.forward_step(fmap.inverse_branch_apply((i,), x))
        assert s == i and fx == pytest.approx(x, abs=1e-12)


@pytest.mark.parametrize("word", [(0, 1), (0, 0, 1), (0, 1, 1, 0, 1), (1, 1, 0)])
def test_itinerary_consistency(doubling, minus_doubling, word):
    for fmap in (doubling, minus_doubling, NONLINEAR):
        x0 = fmap.periodic_point_from_word(word)
        x, syms = x0, []
        for _ in word:
            x, s = fmap.forward_step(x)
            syms.append(s)
        assert abs(x - x0) <= 1e-10
        # the forward itinerary reads the word right to left
        assert tuple(reversed(syms)) == word


@pytest.mark.parametrize("k", [1, 3, 6])
def test_cylinders_tile(doubling, minus_doubling, k):
    for fmap in (doubling, minus_doubling):
        iv = fmap.cylinder_partition(k)
        iv = iv[np.argsort(iv[:, 0])]
        assert iv[0, 0] == 0.0 and iv[-1, 1] == 1.0
        assert np.allclose(iv[1:, 0], iv[:-1, 1], atol=1e-15)
        assert np.all(iv[:, 1] - iv[:, 0] <= 0.5 ** k + 1e-15)


def test_cylinder_nesting(doubling):
    for w in all_words(2, 5):
        a, b = doubling.cylinder_interval(tuple(w))
        # dropping the first (innermost) symbol gives the enclosing cylinder
        c, d = doubling.cylinder_interval(tuple(w[1:]))
        assert c <= a <= b <= d
