import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _refs import bs_call, random_params, random_spec
from hob.binaries import asset_binary, bond_binary, price_q_binary, q_binary
from hob.errors import MissingDate, TimeAfterFirstExpiry, ValidationError
from hob.oracle import McConfig, mc_price_portfolio
from hob.replication import (AssetForward, Cash, Portfolio, PortfolioTerm, expiry_payoff,
                             leg_from_dict, leg_payoff, leg_to_dict, portfolio_from_dict,
                             portfolio_to_dict, price_portfolio)


def P(*pairs):
    return Portfolio(tuple(PortfolioTerm(w, leg) for w, leg in pairs))


class TestPricing:
    def test_empty(self, params):
        assert price_portfolio(100.0, 0.0, Portfolio(), params) == 0.0

    def test_bond_parity(self, params):
        p = P((1.0, bond_binary((1,), (100,), (1.0,))), (1.0, bond_binary((-1,), (100,), (1.0,))))
        for x in (30.0, 100.0, 250.0):
            assert price_portfolio(x, 0.25, p, params) == pytest.approx(
                math.exp(-0.05 * 0.75), abs=1e-15)

    def test_call_from_legs(self, div_params):
        p = P((1.0, asset_binary((1,), (100,), (2.0,))), (-100.0, bond_binary((1,), (100,), (2.0,))))
        q = price_q_binary(95.0, 0.0, q_binary((1,), (100,), (2.0,), 100), div_params)
        assert abs(price_portfolio(95.0, 0.0, p, div_params) - q) <= 1e-12
        assert abs(q - bs_call(95.0, 100, 2.0, 0.03, 0.02, 0.3)) <= 1e-10

    def test_cash_and_forward(self, div_params):
        p = P((3.0, Cash(2.0, 1.5)), (-1.0, AssetForward(1.5)))
        expected = 6 * math.exp(-0.03 * 1.0) - 80 * math.exp(-0.02 * 1.0)
        assert price_portfolio(80.0, 0.5, p, div_params) == pytest.approx(expected, abs=1e-12)

    def test_time_after_leg(self, params):
        with pytest.raises(TimeAfterFirstExpiry):
            price_portfolio(100.0, 1.0, P((1.0, Cash(1.0, 1.0))), params)
        with pytest.raises(TimeAfterFirstExpiry):
            price_portfolio(100.0, 1.0, P((1.0, bond_binary((1,), (100,), (1.0,)))), params)

    def test_nonfinite_weight(self):
        with pytest.raises(ValidationError):
            PortfolioTerm(math.nan, Cash(1.0, 1.0))

    def test_linearity(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            p = random_params(rng)
            legs = [random_spec(rng, str(rng.choice(["asset", "bond", "q"])), int(rng.integers(1, 4)))
                    for _ in range(4)]
            w = rng.normal(size=4)
            p1 = P((w[0], legs[0]), (w[1], legs[1]))
            p2 = P((w[2], legs[2]), (w[3], legs[3]), (1.0, Cash(5.0, 2.0)))
            whole = price_portfolio(100.0, 0.0, p1 + p2, p)
            parts = price_portfolio(100.0, 0.0, p1, p) + price_portfolio(100.0, 0.0, p2, p)
            assert abs(whole - parts) <= 1e-12
            assert price_portfolio(100.0, 0.0, p1.scaled(-2.0), p) == pytest.approx(
                -2 * price_portfolio(100.0, 0.0, p1, p), abs=1e-12)

    def test_dates(self):
        p = P((1.0, asset_binary((1, 1), (1, 1), (0.5, 2.0))), (1.0, Cash(1.0, 1.0)))
        assert p.dates() == [0.5, 1.0, 2.0]
        assert len(p) == 2


class TestPayoff:
    def test_examples(self):
        assert leg_payoff(bond_binary((1,), (100,), (1.0,)), {1.0: 101.0}) == 1.0
        assert leg_payoff(asset_binary((1, 1), (100, 100), (1.0, 2.0)), {1.0: 99.0, 2.0: 150.0}) == 0.0
        assert leg_payoff(q_binary((-1,), (100,), (1.0,), 100), {1.0: 90.0}) == 10.0

    def test_strict_indicator(self):
        assert leg_payoff(bond_binary((1,), (100,), (1.0,)), {1.0: 100.0}) == 0.0
        assert leg_payoff(bond_binary((-1,), (100,), (1.0,)), {1.0: 100.0}) == 0.0

    def test_missing_date(self):
        with pytest.raises(MissingDate):
            leg_payoff(asset_binary((1, 1), (100, 100), (1.0, 2.0)), {2.0: 150.0})
        with pytest.raises(MissingDate):
            expiry_payoff(P((1.0, Cash(1.0, 3.0))), {1.0: 1.0})

    def test_vectorised(self):
        leg = q_binary((1, 1), (90, 100), (1.0, 2.0), 95)
        path = {1.0: np.array([80.0, 95.0, 95.0]), 2.0: np.array([120.0, 99.0, 120.0])}
        assert np.array_equal(leg_payoff(leg, path), [0.0, 0.0, 25.0])

    def test_expiry_payoff_rolls_forward(self):
        p = P((2.0, Cash(1.0, 1.0)), (1.0, AssetForward(2.0)))
        path = {1.0: 50.0, 2.0: 60.0}
        assert expiry_payoff(p, path) == 62.0
        assert expiry_payoff(p, path, rate=0.1) == pytest.approx(60.0 + 2 * math.exp(0.1))
        assert expiry_payoff(Portfolio(), {}) == 0.0

    def test_mc_consistency(self):
        rng = np.random.default_rng(9)
        p = random_params(rng)
        port = P((1.0, random_spec(rng, "q", 2)), (-0.5, random_spec(rng, "asset", 3)),
                 (20.0, random_spec(rng, "bond", 1)), (1.0, Cash(3.0, 1.0)))
        est = mc_price_portfolio(100.0, 0.0, port, p, McConfig(1_000_000, 3))
        assert abs(est.mean - price_portfolio(100.0, 0.0, port, p)) <= 3 * est.std_error


_legs = st.one_of(
    st.builds(Cash, st.floats(-1e6, 1e6), st.floats(0.01, 10)),
    st.builds(AssetForward, st.floats(0.01, 10)),
    st.builds(lambda s, xi, gaps, k: q_binary(s[:len(gaps)], xi[:len(gaps)],
                                              np.cumsum(gaps), k),
              st.lists(st.sampled_from([1, -1]), min_size=3, max_size=3),
              st.lists(st.floats(1e-3, 1e4), min_size=3, max_size=3),
              st.lists(st.floats(0.01, 3), min_size=1, max_size=3),
              st.floats(1e-3, 1e4)),
)


class TestJson:
    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1e9, 1e9), _legs), max_size=6))
    def test_round_trip(self, terms):
        p = P(*terms)
        text = json.dumps(portfolio_to_dict(p))
        assert portfolio_from_dict(json.loads(text)) == p

    def test_leg_format(self):
        leg = q_binary((1, -1), (90.0, 100.0), (1.0, 2.0), 95.0)
        assert leg_to_dict(leg) == {"type": "binary", "kind": "q", "signs": ["+", "-"],
                                    "exercise_prices": [90.0, 100.0], "expiries": [1.0, 2.0],
                                    "strike": 95.0}
        assert "strike" not in leg_to_dict(bond_binary((1,), (100,), (1.0,)))

    @pytest.mark.parametrize("bad,field", [
        ({"type": "cash", "amount": 1.0}, "pay_date"),
        ({"type": "cash", "amount": "x", "pay_date": 1.0}, "amount"),
        ({"type": "swap"}, "type"),
        ({"type": "binary", "kind": "digital", "signs": ["+"], "exercise_prices": [1.0],
          "expiries": [1.0]}, "kind"),
        ({"type": "binary", "kind": "bond", "signs": ["?"], "exercise_prices": [1.0],
          "expiries": [1.0]}, "signs"),
    ])
    def test_bad_legs(self, bad, field):
        with pytest.raises(ValidationError) as exc:
            leg_from_dict(bad)
        assert exc.value.field == field

    def test_bad_portfolio(self):
        with pytest.raises(ValidationError):
            portfolio_from_dict({"terms": [{"weight": 1.0}]})
        with pytest.raises(ValidationError):
            portfolio_from_dict([])
