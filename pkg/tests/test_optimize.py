import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergopt import ExpandingMapSpec, PotentialSpec
from ergopt.optimize import (
    NotUniquelyMaximizing,
    SubactionConvergenceError,
    I_star,
    aubry_test,
    calibrated_subaction,
    deviation_I,
    dual_calibrated_subaction,
    error_R,
    mane_potential,
    max_ergodic_average,
    peierls_barrier,
    r_star_good,
)
from ergopt.symbolic import EventuallyPeriodicPoint as EPP

DOUBLING = ExpandingMapSpec(["x/2", "(x+1)/2"], 0.5)
MINUS_DOUBLING = ExpandingMapSpec(["(1-x)/2", "(2-x)/2"], 0.5, "reversing")
X = PotentialSpec(A="x")
EX61 = PotentialSpec(A="-(1-x)^2")
COS = PotentialSpec(A="cos(2*pi*x)")


def first_symbol(points):
    return np.array([p.symbol(0) for p in points], dtype=float)


def constant_dual(points):
    return np.full(len(points), 0.3)


def planted_dual(points):
    # 1 on [1]; 1 - 2^-r on [0 1^r 0]: 1^inf stays the unique maximizing cycle
    # while the preimage 0 1^inf is calibrated with R* = 0
    out = []
    for p in points:
        syms = p.expand(64)
        if syms[0] == 1:
            out.append(1.0)
            continue
        r = next((i for i, s in enumerate(syms[1:]) if s == 0), 63)
        out.append(1.0 - 2.0**-r)
    return np.array(out)


@pytest.fixture(scope="module")
def sub_x():
    return calibrated_subaction(DOUBLING, X, 1.0, 128)


@pytest.fixture(scope="module")
def sub_61():
    return calibrated_subaction(MINUS_DOUBLING, EX61, -1 / 9, 128)


# ------------------------------------------------------------------ m(A)

def test_max_average_linear():
    res = max_ergodic_average(DOUBLING, X, 8)
    assert res.m == pytest.approx(1.0, abs=1e-15)
    assert res.orbit.points == pytest.approx((1.0,))
    assert "period" in res.caveat


def test_max_average_example_61():
    res = max_ergodic_average(MINUS_DOUBLING, EX61, 8)
    assert res.m == pytest.approx(-1 / 9, abs=1e-10)
    assert res.orbit.points == pytest.approx((2 / 3,), abs=1e-12)


def test_max_average_cos():
    res = max_ergodic_average(DOUBLING, COS, 8)
    assert res.m == pytest.approx(1.0, abs=1e-12)
    assert res.orbit.period == 1 and res.orbit.points[0] in (0.0, 1.0)


@pytest.mark.parametrize("eps", [1e-2, 1e-3])
def test_value_is_one_lipschitz(eps):
    rng = np.random.default_rng(3)
    m0 = max_ergodic_average(DOUBLING, COS, 8).m
    xs = np.linspace(0, 1, 4097)
    for _ in range(5):
        a, b, c = rng.normal(size=3)
        psi = f"{a:.6f}*sin(2*pi*x) + {b:.6f}*x^2 + {c:.6f}"
        pert = PotentialSpec(A=f"cos(2*pi*x) + {eps}*({psi})")
        sup_psi = np.max(np.abs(PotentialSpec(A=psi).A(xs)))
        m1 = max_ergodic_average(DOUBLING, pert, 8).m
        assert abs(m1 - m0) <= eps * sup_psi * (1 + 1e-9)


# ---------------------------------------------------------- subactions

def test_constant_potential_subaction():
    sub = calibrated_subaction(DOUBLING, PotentialSpec(A="0.7"), 0.7, 32)
    assert np.allclose(sub.V.values, 0.0, atol=1e-14)
    assert np.allclose(error_R(sub, np.linspace(0, 1, 9)), 0.0, atol=1e-14)


def test_subaction_linear(sub_x):
    assert np.max(np.abs(sub_x.V.values - (sub_x.V.nodes - 1.0))) <= 1e-8
    assert sub_x.calibration_defect() <= 2e-12


def test_subaction_example_61(sub_61):
    x = sub_61.V.nodes
    quad = -x**2 / 3 + 2 * x / 9
    diff = sub_61.V.values - quad
    assert np.max(diff) - np.min(diff) <= 1e-6


def test_wrong_m_reports_drift():
    with pytest.raises(SubactionConvergenceError) as err:
        calibrated_subaction(DOUBLING, X, 0.9, 64, max_iter=300)
    assert err.value.drift == pytest.approx(0.1, abs=1e-6)


def test_subaction_unique_up_to_constant():
    for fmap, pot, m in ((DOUBLING, X, 1.0), (MINUS_DOUBLING, EX61, -1 / 9)):
        a = calibrated_subaction(fmap, pot, m, 128, anchor_x=1.0)
        b = calibrated_subaction(fmap, pot, m, 128, anchor_x=0.3)
        diff = a.V.values - b.V.values
        assert np.max(diff) - np.min(diff) <= 2e-12 * 10


def test_holder_budget():
    # Lipschitz exponent: ||V||_Lip <= lam / (1 - lam) * ||A||_Lip
    cases = ((DOUBLING, X, 1.0), (MINUS_DOUBLING, EX61, -1 / 9),
             (DOUBLING, PotentialSpec(A="sin(2*pi*x)/4 + x/2"), None))
    for fmap, pot, m in cases:
        if m is None:
            m = max_ergodic_average(fmap, pot, 8).m
            sub = calibrated_subaction(fmap, pot, m, 128, tol=1e-10, max_iter=50000)
        else:
            sub = calibrated_subaction(fmap, pot, m, 128)
        x = sub.V.nodes
        v = sub.V.values
        dx = np.abs(x[:, None] - x[None, :])
        q = np.abs(v[:, None] - v[None, :])[dx > 0] / dx[dx > 0]
        bound = fmap.lam / (1 - fmap.lam) * pot.lipschitz()
        assert q.max() <= 1.05 * bound


# ------------------------------------------------------------- R and I

def test_error_R_examples(sub_x):
    assert error_R(sub_x, 0.75) == pytest.approx(0.0, abs=1e-9)
    assert error_R(sub_x, 0.25) == pytest.approx(1.0, abs=1e-9)


def test_R_example_61(sub_61):
    # identity-derived value; the printed 0.665 does not satisfy the calibration identity
    assert error_R(sub_61, 1 / 6) == pytest.approx(5 / 9, abs=1e-6)


@given(st.floats(0.0, 1.0))
def test_calibration_inequalities(x):
    for sub in (_SUBS["x"], _SUBS["61"]):
        assert error_R(sub, x) >= -1e-9
        # some preimage of x is calibrated
        pre = [b(np.float64(x)) for b in sub.fmap.branches]
        assert min(error_R(sub, float(y)) for y in pre) == pytest.approx(0.0, abs=1e-9)


_SUBS = {"x": calibrated_subaction(DOUBLING, X, 1.0, 128),
         "61": calibrated_subaction(MINUS_DOUBLING, EX61, -1 / 9, 128)}


def test_deviation_examples(sub_x, sub_61):
    assert deviation_I(sub_x, 1.0, 15).value == pytest.approx(0.0, abs=1e-9)
    assert deviation_I(sub_61, 2 / 3, 15).value == pytest.approx(0.0, abs=1e-9)
    dev = deviation_I(sub_x, 0.75, 20)
    assert dev.value == pytest.approx(18.0, abs=1e-8)
    assert dev.infinite
    assert np.all(np.diff(np.cumsum(dev.terms)) >= 0)
    with pytest.raises(ValueError):
        deviation_I(sub_x, 0.5, 0)


def test_deviation_positive_off_support(sub_61):
    # 1/6 maps onto the maximizing point 2/3 but is not on it
    dev = deviation_I(sub_61, 1 / 6, 10)
    assert dev.value == pytest.approx(5 / 9, abs=1e-6)
    assert not dev.infinite


# ------------------------------------------------------- Mane and Aubry

def test_mane_examples():
    s11 = mane_potential(DOUBLING, X, 1.0, 1.0, 1.0, 1e-3, 20)
    assert s11.value == pytest.approx(0.0, abs=1e-3)
    # shortest return to 0 is the fixed point itself, one step at cost -1
    s00 = mane_potential(DOUBLING, X, 1.0, 0.0, 0.0, 1e-3, 20)
    assert s00.value == pytest.approx(-1.0, abs=1e-12)
    const = PotentialSpec(A="0.4")
    assert mane_potential(DOUBLING, const, 0.4, 0.3, 0.8, 1e-3, 14).value == pytest.approx(
        0.0, abs=1e-12)


def test_peierls_examples():
    h11 = peierls_barrier(DOUBLING, X, 1.0, 1.0, 1.0, 1e-3, 10, 20)
    assert h11.value == pytest.approx(0.0, abs=1e-3)
    for x, y in ((0.3, 0.7), (1.0, 0.4), (0.0, 0.0)):
        h = peierls_barrier(DOUBLING, X, 1.0, x, y, 1e-2, 6, 12).value
        s = mane_potential(DOUBLING, X, 1.0, x, y, 1e-2, 12).value
        assert h <= s + 1e-12
    const = PotentialSpec(A="0.4")
    assert peierls_barrier(DOUBLING, const, 0.4, 0.5, 0.5, 1e-3, 4, 12).value == pytest.approx(
        0.0, abs=1e-12)


def test_peierls_equals_mane_from_aubry_point():
    for y in (0.2, 0.55, 0.9):
        h = peierls_barrier(DOUBLING, X, 1.0, 1.0, y, 1e-3, 10, 18).value
        s = mane_potential(DOUBLING, X, 1.0, 1.0, y, 1e-3, 18).value
        assert abs(h - s) <= 2e-3


def test_aubry_membership():
    assert aubry_test(DOUBLING, X, 1.0, 1.0)
    assert not aubry_test(DOUBLING, X, 1.0, 0.0)
    assert aubry_test(MINUS_DOUBLING, EX61, -1 / 9, 2 / 3)


def test_mane_rejects_bad_eps():
    with pytest.raises(ValueError):
        mane_potential(DOUBLING, X, 1.0, 0.5, 0.5, 0.0)


# ------------------------------------------------------------ dual side

def test_dual_table_linear():
    table = dual_calibrated_subaction(first_symbol, 1.0, 8, 2, (1,))
    assert np.allclose(table.values, 0.0, atol=1e-14)
    table = dual_calibrated_subaction(constant_dual, 0.3, 8, 2, (0,))
    assert np.allclose(table.values, 0.0, atol=1e-14)
    with pytest.raises(ValueError):
        dual_calibrated_subaction(first_symbol, 1.0, 3, 2, (1,))


def test_dual_table_error_bound_shrinks():
    b8 = dual_calibrated_subaction(first_symbol, 1.0, 8, 2, (1,), holder=2.0).error_bound
    b12 = dual_calibrated_subaction(first_symbol, 1.0, 12, 2, (1,), holder=2.0).error_bound
    assert b12 < b8


def test_I_star_examples():
    table = dual_calibrated_subaction(first_symbol, 1.0, 8, 2, (1,))
    one = EPP((), (1,))
    assert I_star(one, table, first_symbol, 1.0).value == 0.0
    assert I_star(EPP((0,), (1,)), table, first_symbol, 1.0).value == pytest.approx(1.0)
    assert I_star(EPP((0, 0), (1,)), table, first_symbol, 1.0).value == pytest.approx(2.0)
    never = I_star(EPP((), (0,)), table, first_symbol, 1.0)
    assert never.infinite and never.value == float("inf")


def test_r_star_good_linear():
    table = dual_calibrated_subaction(first_symbol, 1.0, 8, 2, (1,))
    rep = r_star_good((1,), table, first_symbol, 1.0)
    assert rep.ok and rep.min_R == pytest.approx(1.0) and rep.witnesses == ()


def test_r_star_refuses_non_unique():
    table = dual_calibrated_subaction(constant_dual, 0.3, 6, 2, (0,))
    with pytest.raises(NotUniquelyMaximizing):
        r_star_good((0,), table, constant_dual, 0.3)


def test_r_star_planted_zero():
    table = dual_calibrated_subaction(planted_dual, 1.0, 8, 2, (1,))
    rep = r_star_good((1,), table, planted_dual, 1.0)
    assert not rep.ok
    assert rep.min_R == pytest.approx(0.0, abs=1e-12)
    assert [w for w, _ in rep.witnesses] == [EPP((0,), (1,))]
