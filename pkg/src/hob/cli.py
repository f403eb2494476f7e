"""``hob price <file>``: price a JSON contract file and print a JSON report.

Exit codes: 0 success, 2 invalid input, 3 numerical failure (for example an
exercise boundary that cannot be bracketed).  Errors go to stderr as JSON.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Union

from . import exotics, oracle
from .binaries import BinarySpec, MarketParams
from .errors import HobError, NumericalError, ParseError, ValidationError
from .replication import (Portfolio, PortfolioTerm, leg_first_date, leg_from_dict,
                          portfolio_from_dict, portfolio_to_dict, price_portfolio)

SCHEMA_VERSION = 1
CONTRACT_TYPES = ("bermudan_put", "extendable_call", "twice_shout_call", "raw_binary", "portfolio")

Contract = Union[exotics.BermudanPut, exotics.ExtendableCall, exotics.TwiceShoutCall,
                 BinarySpec, Portfolio]


@dataclass(frozen=True)
class ContractFile:
    market: MarketParams
    spot: float
    time: float
    contract_type: str
    contract: Contract


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _obj(data, name: str) -> Mapping:
    if not isinstance(data, Mapping):
        raise ValidationError(f"{name} must be an object", field=name)
    return data


def _req(data: Mapping, key: str):
    if key not in data:
        raise ValidationError(f"missing required field {key!r}", field=key)
    return data[key]


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(f"{name} must be a finite number, got {value!r}", field=name)
    return float(value)


def _numbers(value, name: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ValidationError(f"{name} must be a list of numbers", field=name)
    return tuple(_number(v, name) for v in value)


def parse_contract(source: str | Path) -> ContractFile:
    """Parse a contract from a path or from JSON text.

    Raises:
        ParseError: not valid UTF-8 JSON.
        ValidationError: a field violates its constraint; ``field`` names it.
    """
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            text = Path(source).read_bytes().decode("utf-8")
        except OSError as exc:
            raise ParseError(f"cannot read {source}: {exc.strerror}") from None
        except UnicodeDecodeError as exc:
            raise ParseError(f"{source} is not UTF-8: {exc}") from None
    else:
        text = source
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    return contract_from_dict(data)


def contract_from_dict(data) -> ContractFile:
    data = _obj(data, "root")
    version = data.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported version {version!r}", field="version")

    market = _obj(_req(data, "market"), "market")
    params = MarketParams(_number(_req(market, "r"), "r"), _number(_req(market, "q"), "q"),
                          _number(_req(market, "sigma"), "sigma"))
    valuation = _obj(_req(data, "valuation"), "valuation")
    spot = _number(_req(valuation, "spot"), "spot")
    t = _number(valuation.get("time", 0.0), "time")
    if not spot > 0:
        raise ValidationError("spot must be positive", field="spot")
    if not t >= 0:
        raise ValidationError("time must be nonnegative", field="time")

    spec = _obj(_req(data, "contract"), "contract")
    kind = _req(spec, "type")
    if kind not in CONTRACT_TYPES:
        raise ValidationError(f"unknown contract type {kind!r}", field="type")

    if kind == "bermudan_put":
        contract = exotics.BermudanPut(_number(_req(spec, "strike"), "strike"),
                                       _numbers(_req(spec, "exercise_dates"), "exercise_dates"))
        _after(t, contract.exercise_dates[0], "exercise_dates")
    elif kind == "extendable_call":
        contract = exotics.ExtendableCall(
            _numbers(_req(spec, "decision_dates"), "decision_dates"),
            _numbers(_req(spec, "strikes"), "strikes"),
            _numbers(spec.get("extension_premiums", []), "extension_premiums"))
        _after(t, contract.decision_dates[0], "decision_dates")
    elif kind == "twice_shout_call":
        contract = exotics.TwiceShoutCall(_number(_req(spec, "strike"), "strike"),
                                          _numbers(_req(spec, "shout_dates"), "shout_dates"),
                                          _number(_req(spec, "final_expiry"), "final_expiry"))
        _after(t, contract.shout_dates[0], "shout_dates")
    elif kind == "raw_binary":
        contract = leg_from_dict({**spec, "type": "binary"})
        _after(t, contract.first_date, "expiries")
    else:
        contract = portfolio_from_dict(spec)
        for term in contract.terms:
            _after(t, leg_first_date(term.leg), "terms")
    return ContractFile(params, spot, t, kind, contract)


def _after(t: float, first: float, name: str):
    if not first > t:
        raise ValidationError(f"{name} must all be after the valuation time {t}", field=name)


# ---------------------------------------------------------------------------
# pricing
# ---------------------------------------------------------------------------

def replication_portfolio(cf: ContractFile, tol: float | None = None) -> Portfolio:
    c, p, t = cf.contract, cf.market, cf.time
    if cf.contract_type == "bermudan_put":
        return exotics.bermudan_portfolio(c, t, p, tol)
    if cf.contract_type == "extendable_call":
        return exotics.extendable_portfolio(c, t, p, tol)
    if cf.contract_type == "twice_shout_call":
        if not t < c.shout_dates[0]:
            raise ValidationError("twice-shout pricing needs time before the first shout date",
                                  field="time")
        return exotics.twice_shout_portfolio(c, p)
    if cf.contract_type == "raw_binary":
        return Portfolio((PortfolioTerm(1.0, c),))
    return c


def _boundaries(cf: ContractFile, tol: float | None):
    if cf.contract_type == "bermudan_put":
        return {"a": list(exotics.bermudan_boundaries(cf.contract, cf.market, tol).a)}
    if cf.contract_type == "extendable_call" and cf.contract.n_extensions:
        pairs = exotics.extendable_boundaries(cf.contract, cf.market, tol).pairs
        return {"a": [a for a, _ in pairs], "b": [b for _, b in pairs]}
    return None


def parse_oracle(text: str) -> tuple:
    parts = text.split(":")
    try:
        if parts[0] == "mc" and len(parts) == 3:
            return ("mc", int(parts[1]), int(parts[2]))
        if parts[0] == "grid" and len(parts) == 2:
            return ("grid", int(parts[1]))
    except ValueError:
        pass
    raise ValidationError(f"--oracle expects mc:<paths>:<seed> or grid:<n>, got {text!r}",
                          field="oracle")


def _run_oracle(cf: ContractFile, spec: tuple, portfolio: Portfolio, closed: float) -> dict:
    c, p, x, t = cf.contract, cf.market, cf.spot, cf.time
    if spec[0] == "mc":
        cfg = oracle.McConfig(spec[1], spec[2])
        if cf.contract_type == "twice_shout_call":
            est = oracle.mc_twice_shout(x, c, p, cfg, t)
            name = "mc_payoff"
        else:
            est = oracle.mc_price_portfolio(x, t, portfolio, p, cfg)
            name = "mc_replication"
        return {"name": name, "estimate": est.mean, "std_error": est.std_error,
                "n_paths": est.n_paths, "seed": spec[2], "abs_diff": abs(est.mean - closed)}
    n = spec[1]
    if cf.contract_type == "bermudan_put":
        if n < 200:
            raise ValidationError("grid:<n> needs n >= 200 for the lattice", field="oracle")
        est, err = oracle.lattice_bermudan_richardson(x, c, p, n, t)
        return {"name": "lattice_richardson", "estimate": est, "tolerance": err, "steps": n,
                "abs_diff": abs(est - closed)}
    if cf.contract_type == "extendable_call":
        if n < 200:
            raise ValidationError("grid:<n> needs n >= 200 for the PDE grid", field="oracle")
        fine = oracle.fd_extendable(x, c, p, oracle.GridConfig(n, n // 2), t)
        coarse = oracle.fd_extendable(x, c, p, oracle.GridConfig(n // 2, n // 4), t)
        # second order: the fine-grid error is about a third of the difference
        return {"name": "crank_nicolson", "estimate": fine, "tolerance": abs(fine - coarse),
                "n_space": n, "n_time_per_interval": n // 2, "abs_diff": abs(fine - closed)}
    raise ValidationError(f"no grid oracle for contract type {cf.contract_type}", field="oracle")


def run_price(cf: ContractFile, oracle_spec: str | None = None, emit_portfolio: bool = False,
              delta: bool = False, tol: float | None = None, timing: bool = False) -> dict:
    """Build the price report for a parsed contract file."""
    started = time.perf_counter()
    oracle_parsed = parse_oracle(oracle_spec) if oracle_spec else None
    portfolio = replication_portfolio(cf, tol)
    price = price_portfolio(cf.spot, cf.time, portfolio, cf.market, tol)
    report: dict = {
        "version": SCHEMA_VERSION,
        "contract_type": cf.contract_type,
        "spot": cf.spot,
        "time": cf.time,
        "closed_form_price": price,
    }
    bounds = _boundaries(cf, tol)
    if bounds is not None:
        report["boundaries"] = bounds
    if delta:
        h = 1e-4 * cf.spot
        up = price_portfolio(cf.spot + h, cf.time, portfolio, cf.market, tol)
        dn = price_portfolio(cf.spot - h, cf.time, portfolio, cf.market, tol)
        report["delta"] = (up - dn) / (2.0 * h)
    if oracle_parsed:
        report["oracle"] = _run_oracle(cf, oracle_parsed, portfolio, price)
    if emit_portfolio:
        report["portfolio"] = portfolio_to_dict(portfolio)
    if timing:
        report["timing_ms"] = 1e3 * (time.perf_counter() - started)
    return report


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hob", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    price = sub.add_parser("price", help="price a contract file")
    price.add_argument("file", help="contract JSON file, or - for stdin")
    price.add_argument("--oracle", help="mc:<paths>:<seed> or grid:<n>")
    price.add_argument("--emit-portfolio", action="store_true",
                       help="include the replication portfolio in the report")
    price.add_argument("--delta", action="store_true",
                       help="central-difference delta with step 1e-4 * spot")
    price.add_argument("--tol", type=float, help="multivariate normal CDF tolerance")
    price.add_argument("--timing", action="store_true",
                       help="add wall-clock timing (makes the report non-reproducible)")
    return parser


def _fail(exc: Exception, code: int) -> int:
    body = {"error": type(exc).__name__, "message": str(exc)}
    field = getattr(exc, "field", None)
    if field:
        body["field"] = field
    print(json.dumps(body), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.tol is not None and not args.tol > 0:
            raise ValidationError("--tol must be positive", field="tol")
        if args.file == "-":
            cf = parse_contract(sys.stdin.read())
        else:
            cf = parse_contract(Path(args.file))
        report = run_price(cf, args.oracle, args.emit_portfolio, args.delta, args.tol,
                           args.timing)
    except (ParseError, ValidationError) as exc:
        return _fail(exc, 2)
    except NumericalError as exc:
        return _fail(exc, 3)
    except HobError as exc:
        return _fail(exc, 3)
    print(json.dumps(report, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
