import math

import numpy as np
import pytest

from _refs import bs_call, bs_put
from hob.binaries import MarketParams, asset_binary, bond_binary, q_binary
from hob.errors import TimeAfterFirstExpiry, ValidationError
from hob.exotics import BermudanPut, ExtendableCall, TwiceShoutCall, price_bermudan_put
from hob.oracle import (BATCH, GridConfig, McConfig, fd_extendable, lattice_bermudan,
                        lattice_bermudan_richardson, mc_price_portfolio, mc_twice_shout,
                        normal_stream, quadrature_standard_option)
from hob.replication import Cash, Portfolio, PortfolioTerm

CALL = 10.450583572185565


def single(leg, w=1.0):
    return Portfolio((PortfolioTerm(w, leg),))


class TestConfig:
    def test_mc(self):
        with pytest.raises(ValidationError):
            McConfig(1)
        with pytest.raises(ValidationError):
            McConfig(10, seed=-1)

    def test_grid(self):
        with pytest.raises(ValidationError):
            GridConfig(n_space=49)
        with pytest.raises(ValidationError):
            GridConfig(n_time_per_interval=10)
        with pytest.raises(ValidationError):
            GridConfig(x_max_multiple=3.0)


class TestStream:
    def test_normal_moments(self):
        z = normal_stream(1, 0, 1_000_000)
        assert abs(z.mean()) < 5e-3 and abs(z.std() - 1) < 5e-3
        assert np.all(np.isfinite(z))

    def test_streams_are_keyed(self):
        assert np.array_equal(normal_stream(5, 2, 100), normal_stream(5, 2, 100))
        assert not np.array_equal(normal_stream(5, 2, 100), normal_stream(5, 3, 100))
        assert not np.array_equal(normal_stream(5, 2, 100), normal_stream(6, 2, 100))

    def test_prefix_stable(self):
        assert np.array_equal(normal_stream(9, 0, 50), normal_stream(9, 0, 500)[:50])


class TestMonteCarlo:
    def test_cash_exact(self, params):
        est = mc_price_portfolio(100.0, 0.0, single(Cash(1.0, 2.0)), params, McConfig(1000, 1))
        assert est.mean == pytest.approx(math.exp(-0.1), abs=1e-15)
        assert est.std_error == 0.0

    def test_tiny_exercise_bond(self, params):
        est = mc_price_portfolio(100.0, 0.0, single(bond_binary((1,), (1e-12,), (1.0,))), params,
                                 McConfig(1000, 1))
        assert est.mean == pytest.approx(math.exp(-0.05), abs=1e-15)
        assert est.std_error == 0.0

    def test_call(self, params):
        est = mc_price_portfolio(100.0, 0.0, single(q_binary((1,), (100,), (1.0,), 100)), params,
                                 McConfig(1_000_000, 42))
        assert abs(est.mean - CALL) <= 3 * est.std_error
        assert est.n_paths == 1_000_000

    def test_deterministic(self, params):
        p = single(asset_binary((1, -1), (95, 105), (0.5, 1.0)))
        cfg = McConfig(3 * BATCH + 17, 2024, antithetic=True)
        assert mc_price_portfolio(100.0, 0.0, p, params, cfg) == \
            mc_price_portfolio(100.0, 0.0, p, params, cfg)

    def test_antithetic(self, params):
        p = single(q_binary((1,), (100,), (1.0,), 100))
        plain = mc_price_portfolio(100.0, 0.0, p, params, McConfig(200_000, 3))
        anti = mc_price_portfolio(100.0, 0.0, p, params, McConfig(200_000, 3, antithetic=True))
        assert anti.std_error <= 1.01 * plain.std_error
        assert abs(anti.mean - CALL) <= 3 * anti.std_error

    def test_time_after_dates(self, params):
        with pytest.raises(TimeAfterFirstExpiry):
            mc_price_portfolio(100.0, 1.0, single(Cash(1.0, 1.0)), params, McConfig(10))

    def test_empty(self, params):
        assert mc_price_portfolio(100.0, 0.0, Portfolio(), params, McConfig(10)).mean == 0.0


class TestShoutMc:
    def test_deterministic_limit(self):
        c = TwiceShoutCall(100.0, (0.5, 1.0), 1.5)
        p = MarketParams(0.0, 0.0, 1e-12)
        for x in (90.0, 110.0):
            est = mc_twice_shout(x, c, p, McConfig(1000, 1))
            assert est.mean == pytest.approx(max(x - 100.0, 0.0), abs=1e-9)

    def test_small_strike_floor(self, div_params):
        c = TwiceShoutCall(1e-9, (0.5, 1.0), 1.5)
        est = mc_twice_shout(100.0, c, div_params, McConfig(100_000, 4))
        floor = 100.0 * math.exp((0.03 - 0.02) * 0.5 - 0.03 * 1.5)
        assert est.mean >= floor - 3 * est.std_error

    def test_seeded(self, params):
        c = TwiceShoutCall(100.0, (0.5, 1.0), 1.5)
        a = mc_twice_shout(100.0, c, params, McConfig(100_000, 42))
        b = mc_twice_shout(100.0, c, params, McConfig(100_000, 42))
        assert a == b


class TestQuadrature:
    def test_bond_and_asset(self, div_params):
        assert quadrature_standard_option(80.0, 0.5, 2.0, lambda z: 1.0, div_params) == \
            pytest.approx(math.exp(-0.03 * 1.5), abs=1e-9)
        assert quadrature_standard_option(80.0, 0.5, 2.0, lambda z: z, div_params) == \
            pytest.approx(80.0 * math.exp(-0.02 * 1.5), abs=1e-8)

    def test_call(self, params):
        got = quadrature_standard_option(100.0, 0.0, 1.0, lambda z: max(z - 100.0, 0.0), params,
                                         accuracy=1e-9, breakpoints=[100.0])
        assert abs(got - CALL) <= 1e-9

    def test_time(self, params):
        with pytest.raises(TimeAfterFirstExpiry):
            quadrature_standard_option(100.0, 1.0, 1.0, lambda z: z, params)


class TestLattice:
    def test_european_convergence(self, params):
        ref = bs_put(100.0, 100.0, 1.0, 0.05, 0.0, 0.2)
        c = BermudanPut(100.0, (1.0,))
        errs = [abs(lattice_bermudan(100.0, c, params, n) - ref) for n in (500, 1000, 2000)]
        assert errs[2] < 1.5e-3
        assert errs[0] / errs[1] >= 1.7 and errs[1] / errs[2] >= 1.7

    def test_self_convergence(self, params):
        c = BermudanPut(100.0, (0.5, 1.0))
        p2000 = lattice_bermudan(100.0, c, params, 2000)
        p4000 = lattice_bermudan(100.0, c, params, 4000)
        _, err4000 = lattice_bermudan_richardson(100.0, c, params, 4000)
        assert abs(p2000 - p4000) < 3 * err4000 + 1e-12

    def test_matches_closed_form(self, params):
        c = BermudanPut(100.0, (0.5, 1.0))
        est, err = lattice_bermudan_richardson(100.0, c, params, 2000)
        assert abs(est - price_bermudan_put(100.0, 0.0, c, params)) < max(3 * err, 5e-3)

    def test_min_steps(self, params):
        with pytest.raises(ValidationError):
            lattice_bermudan(100.0, BermudanPut(100.0, (1.0,)), params, 99)


class TestFiniteDifference:
    def test_european(self, params):
        c = ExtendableCall((1.0,), (100.0,), ())
        assert abs(fd_extendable(100.0, c, params) - CALL) < 2e-3

    def test_second_order(self, params):
        c = ExtendableCall((1.0,), (100.0,), ())
        v = [fd_extendable(100.0, c, params, GridConfig(n, n // 2)) for n in (200, 400, 800)]
        assert abs(v[0] - v[1]) / abs(v[1] - v[2]) >= 1.7

    def test_huge_premium_is_european(self, params):
        c = ExtendableCall((1.0, 2.0), (100.0, 110.0), (1e4,))
        assert abs(fd_extendable(100.0, c, params) - CALL) < 2e-3

    def test_dividends(self, div_params):
        c = ExtendableCall((0.75,), (90.0,), ())
        ref = bs_call(110.0, 90.0, 0.75, 0.03, 0.02, 0.3)
        assert abs(fd_extendable(110.0, c, div_params) - ref) < 5e-3

    def test_time(self, params):
        with pytest.raises(TimeAfterFirstExpiry):
            fd_extendable(100.0, ExtendableCall((1.0,), (100.0,), ()), params, t=1.0)
