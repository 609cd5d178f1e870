"""Battle technology tests: curves, gain functions, and single battles.

Expected values carry their derivations: closed-form algebra re-verified by
independent numeric oracles (finite differences, best-response grid search,
bracketed bisection).
"""

import math

import numpy as np
import pytest

from contestlab import (
    DomainError,
    Noisy,
    RatioForm,
    Serial,
    Tullock,
    UnsupportedKindError,
    augmented_gain,
    eval_gamma,
    parse_sf,
    phi,
    psi,
    psi_inverse,
    solve_battle,
)

THETA_GRID = np.logspace(-6, 6, 121)

HOMOGENEOUS = [
    Tullock(1.0),
    Tullock(0.5),
    Tullock(0.3),
    Serial(0.5),
    Serial(0.25),
    Noisy(Tullock(1.0), 0.7),
    Noisy(Serial(0.5), 0.4),
]


class TestGamma:
    def test_tullock_values(self):
        sf = Tullock(1.0)
        assert eval_gamma(sf, 1.0) == 0.5  # symmetry forces the half
        # theta/(1+theta) by substituting the ratio into the winning odds
        assert eval_gamma(sf, 3.0) == pytest.approx(0.75, abs=1e-15)
        assert eval_gamma(sf, 0.0) == 0.0

    @pytest.mark.parametrize("sf", [s for s in HOMOGENEOUS if not isinstance(s, Noisy)])
    def test_boundary_limits(self, sf):
        assert eval_gamma(sf, 0.0) == 0.0
        assert eval_gamma(sf, math.inf) == 1.0

    @pytest.mark.parametrize("sf", HOMOGENEOUS)
    def test_complement_symmetry(self, sf):
        lhs = eval_gamma(sf, THETA_GRID) + eval_gamma(sf, 1.0 / THETA_GRID)
        np.testing.assert_allclose(lhs, 1.0, atol=1e-12)

    @pytest.mark.parametrize("sf", HOMOGENEOUS)
    def test_monotone(self, sf):
        vals = eval_gamma(sf, THETA_GRID)
        assert np.all(np.diff(vals) > 0)

    def test_noisy_mixture(self):
        base = Tullock(1.0)
        sf = Noisy(base, 0.7)
        expected = 0.7 * eval_gamma(base, THETA_GRID) + 0.15
        np.testing.assert_allclose(eval_gamma(sf, THETA_GRID), expected, rtol=1e-15)

    def test_ratio_form_rejected(self):
        with pytest.raises(UnsupportedKindError):
            eval_gamma(RatioForm("pow", alpha=0.8), 1.0)


class TestPhi:
    def test_tullock_values(self):
        sf = Tullock(1.0)
        # theta^2/(1+theta)^2 by differentiating theta/(1+theta)
        assert phi(sf, 1.0) == pytest.approx(0.25, abs=1e-15)
        assert phi(sf, 3.0) == pytest.approx(9.0 / 16.0, abs=1e-15)
        assert phi(sf, 0.0) == 0.0

    @pytest.mark.parametrize("sf", HOMOGENEOUS)
    def test_finite_difference_oracle(self, sf):
        # phi(t) = gamma(t) - t gamma'(t), with gamma' from central differences;
        # the even-count grid keeps the stencil off the piecewise curves' joint
        for theta in np.logspace(-3, 3, 24):
            h = 1e-6 * theta
            slope = (eval_gamma(sf, theta + h) - eval_gamma(sf, theta - h)) / (2 * h)
            expected = eval_gamma(sf, theta) - theta * slope
            assert phi(sf, theta) == pytest.approx(expected, abs=5e-9)

    @pytest.mark.parametrize("sf", HOMOGENEOUS)
    def test_strictly_increasing(self, sf):
        vals = phi(sf, THETA_GRID)
        assert np.all(np.diff(vals) > 0)

    @pytest.mark.parametrize("sf", [s for s in HOMOGENEOUS if not isinstance(s, Noisy)])
    def test_balanced_value_in_open_half(self, sf):
        assert 0.0 < phi(sf, 1.0) < 0.5

    def test_large_theta_guard(self):
        sf = Tullock(1.0)
        assert phi(sf, 1e18) <= 1.0 - 1e-15
        assert phi(sf, math.inf) == 1.0

    @pytest.mark.parametrize("sf", HOMOGENEOUS)
    def test_complement_consistency(self, sf):
        for theta in np.logspace(-4, 4, 17):
            assert sf.phi_complement(theta) == pytest.approx(1.0 - phi(sf, theta), abs=1e-13)


class TestSolveBattle:
    def test_symmetric_tullock(self):
        eq = solve_battle(Tullock(1.0), 1.0, 1.0)
        assert eq.effort_a == pytest.approx(0.25, abs=1e-15)
        assert eq.effort_b == pytest.approx(0.25, abs=1e-15)
        assert eq.win_prob_a == 0.5
        assert eq.payoff_a == pytest.approx(0.25, abs=1e-15)

    def test_lopsided_tullock(self):
        eq = solve_battle(Tullock(1.0), 3.0, 1.0)
        assert eq.win_prob_a == pytest.approx(0.75, abs=1e-15)
        assert eq.payoff_a == pytest.approx(27.0 / 16.0, abs=1e-14)  # 3 phi(3)
        assert eq.payoff_b == pytest.approx(1.0 / 16.0, abs=1e-14)  # phi(1/3)

    @pytest.mark.parametrize("sf", HOMOGENEOUS + [RatioForm("pow", 0.8), RatioForm("powsum", 0.5, 0.9)])
    @pytest.mark.parametrize("stakes", [(1.0, 1.0), (3.0, 1.0), (0.2, 1.7)])
    def test_best_response_property(self, sf, stakes):
        # perturbing either equilibrium effort must not raise that player's payoff
        da, db = stakes
        eq = solve_battle(sf, da, db)
        assert eq.payoff_a >= 0.0 and eq.payoff_b >= 0.0

        def payoff_a(xa):
            return _win_prob(sf, xa, eq.effort_b) * da - xa

        def payoff_b(xb):
            return (1.0 - _win_prob(sf, eq.effort_a, xb)) * db - xb

        for bump in (1 + 1e-4, 1 - 1e-4):
            assert payoff_a(eq.effort_a * bump) <= eq.payoff_a + 1e-8
            assert payoff_b(eq.effort_b * bump) <= eq.payoff_b + 1e-8

    def test_invariants(self):
        eq = solve_battle(Serial(0.5), 2.0, 0.7)
        assert eq.win_prob_a + eq.win_prob_b == pytest.approx(1.0, abs=1e-15)
        assert eq.payoff_a == pytest.approx(eq.win_prob_a * 2.0 - eq.effort_a, abs=1e-13)
        assert eq.gain_ratio_a == pytest.approx(eq.payoff_a / 2.0, abs=1e-13)

    @pytest.mark.parametrize("sf", HOMOGENEOUS)
    def test_effort_ratio_equals_stake_ratio(self, sf):
        # a hallmark of ratio-only technologies, via the derivative symmetry
        for da, db in [(2.0, 1.0), (0.3, 1.7), (5.0, 0.2)]:
            eq = solve_battle(sf, da, db)
            assert eq.effort_a / eq.effort_b == pytest.approx(da / db, rel=1e-12)
            assert eq.win_prob_a == pytest.approx(eval_gamma(sf, da / db), rel=1e-13)

    def test_ratio_pow_matches_tullock(self):
        # the power curve makes the ratio-form game identical to the
        # homogeneous closed form, so the numeric FOC path must reproduce it
        rf, tu = RatioForm("pow", alpha=0.8), Tullock(0.8)
        for ratio in np.logspace(-2, 2, 20):
            a = solve_battle(rf, ratio, 1.0)
            b = solve_battle(tu, ratio, 1.0)
            assert a.effort_a == pytest.approx(b.effort_a, abs=1e-8)
            assert a.effort_b == pytest.approx(b.effort_b, abs=1e-8)
            assert a.win_prob_a == pytest.approx(b.win_prob_a, abs=1e-8)
            assert a.payoff_a == pytest.approx(b.payoff_a, abs=1e-8)

    def test_ratio_powsum_foc_residual(self):
        sf = RatioForm("powsum", alpha=0.5, beta=0.9)
        for da, db in [(1.0, 1.0), (5.0, 1.0), (0.3, 2.0)]:
            eq = solve_battle(sf, da, db)
            ga, gb = sf.curve_value(eq.effort_a), sf.curve_value(eq.effort_b)
            s2 = (ga + gb) ** 2
            assert abs(sf.curve_prime(eq.effort_a) * gb * da / s2 - 1.0) <= 1e-12
            assert abs(sf.curve_prime(eq.effort_b) * ga * db / s2 - 1.0) <= 1e-12

    def test_noisy_scales_base_efforts(self):
        base = Tullock(1.0)
        sf = Noisy(base, 0.6)
        eq = solve_battle(sf, 2.0, 1.0)
        ref = solve_battle(base, 0.6 * 2.0, 0.6 * 1.0)
        assert eq.effort_a == pytest.approx(ref.effort_a, abs=1e-15)
        assert eq.win_prob_a == pytest.approx(0.6 * ref.win_prob_a + 0.2, abs=1e-15)

    def test_noisy_gain_ratio_identity(self):
        base = Tullock(1.0)
        for q in (0.3, 0.7, 1.0):
            sf = Noisy(base, q)
            for ratio in (0.5, 1.0, 4.0):
                eq = solve_battle(sf, ratio, 1.0)
                base_pi = phi(base, ratio)
                assert eq.gain_ratio_a == pytest.approx(
                    0.5 * (1 - q) + q * base_pi, abs=1e-13
                )

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            solve_battle(Tullock(1.0), 0.0, 1.0)
        with pytest.raises(DomainError):
            solve_battle(Tullock(1.0), 1.0, -2.0)


class TestGainRatioSum:
    @pytest.mark.parametrize("sf", HOMOGENEOUS + [RatioForm("powsum", 0.5, 0.9)])
    def test_bounded_below_one(self, sf):
        worst = 0.0
        for ratio in np.linspace(1.0, 10.0, 19):
            a = solve_battle(sf, ratio, 1.0)
            worst = max(worst, a.gain_ratio_a + a.gain_ratio_b)
        assert worst < 1.0
        assert 1.0 - worst > 1e-3  # a measurable gap remains


class TestAugmentedGain:
    def test_degenerate_limits(self):
        sf = Tullock(1.0)
        assert augmented_gain(sf, 5.0, 0.0) == 5.0
        assert augmented_gain(sf, 1.0, 1.0) == pytest.approx(0.25, abs=1e-15)
        assert augmented_gain(sf, 0.0, 1.0) == 0.0

    @pytest.mark.parametrize("sf", [Tullock(0.5), Serial(0.5), RatioForm("powsum", 0.5, 0.9)])
    def test_continuity_toward_zero_stake(self, sf):
        at_zero = augmented_gain(sf, 1.0, 0.0)
        near = augmented_gain(sf, 1.0, 1e-7)
        assert near == pytest.approx(at_zero, abs=1e-3)

    def test_bounds(self):
        sf = Serial(0.3)
        for dp in (0.5, 1.0, 4.0):
            for d in (0.0, 0.1, 2.0):
                value = augmented_gain(sf, dp, d)
                assert 0.0 <= value <= dp

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            augmented_gain(Tullock(1.0), -1.0, 1.0)


class TestPsi:
    def test_tullock_unit_closed_form(self):
        # psi(t) = t^2/(t+2) for the unit Tullock curve, by direct algebra
        sf = Tullock(1.0)
        assert psi(sf, 2.0) == pytest.approx(1.0, abs=1e-15)
        for theta in (0.5, 1.0, 3.7, 10.0):
            assert psi(sf, theta) == pytest.approx(theta**2 / (theta + 2), rel=1e-14)

    def test_inverse_known_roots(self):
        sf = Tullock(1.0)
        assert psi_inverse(sf, 1.0) == pytest.approx(2.0, abs=1e-13)
        # root of t^2 - 3t - 6, from psi(t) = 3
        assert psi_inverse(sf, 3.0) == pytest.approx((3 + math.sqrt(33)) / 2, rel=1e-14)

    @pytest.mark.parametrize("sf", HOMOGENEOUS)
    def test_round_trip(self, sf):
        for y in np.logspace(-3, 5, 17):
            theta = psi_inverse(sf, y)
            assert abs(psi(sf, theta) - y) <= 1e-12 * max(1.0, y)

    @pytest.mark.parametrize("sf", HOMOGENEOUS)
    def test_increasing_and_below_identity(self, sf):
        grid = np.logspace(-2, 4, 25)
        vals = [psi(sf, t) for t in grid]
        assert all(b > a for a, b in zip(vals[:-1], vals[1:]))
        assert all(v < t for v, t in zip(vals, grid))


class TestParse:
    @pytest.mark.parametrize(
        "text",
        [
            "tullock:r=1",
            "tullock:r=0.5",
            "serial:alpha=0.5",
            "ratio:pow,alpha=0.8",
            "ratio:powsum,alpha=0.5,beta=0.9",
            "noisy:q=0.7,base=tullock:r=1",
            "noisy:q=0.4,base=ratio:pow,alpha=0.8",
        ],
    )
    def test_round_trip(self, text):
        sf = parse_sf(text)
        assert parse_sf(sf.spec_string()) == sf

    @pytest.mark.parametrize(
        "bad",
        ["tullock", "tullock:r=2", "serial:alpha=1.5", "ratio:cubic,alpha=1",
         "noisy:q=0.5", "pow:alpha=1", "tullock:r=abc"],
    )
    def test_rejects_malformed(self, bad):
        with pytest.raises(DomainError):
            parse_sf(bad)


def _win_prob(sf, xa: float, xb: float) -> float:
    """Success probability at an effort profile, for grid-search oracles."""
    if isinstance(sf, Noisy):
        return sf.q * _win_prob(sf.base, xa, xb) + 0.5 * (1.0 - sf.q)
    if isinstance(sf, RatioForm):
        return sf.win_prob(xa, xb)
    if xa == 0.0 and xb == 0.0:
        return 0.5
    if xb == 0.0:
        return 1.0
    return eval_gamma(sf, xa / xb)
