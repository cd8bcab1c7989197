"""Command-line workbench: price, sweep, bound, selftest.

Configuration is an INI file with [model], [dynamics], [option], [run] and
optionally [sweep] sections; command-line flags override it.  Output is CSV
with 17 significant digits so files are byte-stable for a fixed config.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .bounds import remainder_bound
from .charfun import CfSettings, cf_put_price
from .model import DomainError, ModelParams, OptionSpec, ParameterError, make_cumulant, validate
from .montecarlo import McSettings, mc_put_price
from .pricer import taylor_prices

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
ORACLES = ("cf", "mc", "both", "none")
AXES = ("strike", "expiry", "lambda", "b", "order")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    params: ModelParams
    strikes: List[float]
    expiries: List[float]
    orders: List[int] = field(default_factory=lambda: [2, 3])
    oracle: str = "cf"
    seed: int = 20240601
    threads: int = 1
    out: Optional[str] = None
    mc: McSettings = field(default_factory=McSettings)
    cf: CfSettings = field(default_factory=CfSettings)
    bound_method: str = "auto"
    axis: Optional[str] = None
    values: List[float] = field(default_factory=list)


def _floats(text, name, errs):
    try:
        vals = [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        errs.append(f"{name}: not a number list ({text!r})")
        return []
    return vals


def _get(cp, sec, key, default=None):
    if cp.has_section(sec) and cp.has_option(sec, key):
        return cp.get(sec, key).strip()
    return default


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError([f"cannot read config {path}: {exc}"])
        except configparser.Error as exc:
            raise ConfigError([f"malformed config: {exc}"])
    errs = []

    def num(sec, key, default=None, cast=float):
        raw = _get(cp, sec, key)
        if raw is None:
            if default is None:
                errs.append(f"[{sec}] {key}: missing")
                return math.nan
            return default
        try:
            return cast(raw)
        except ValueError:
            errs.append(f"[{sec}] {key}: invalid value {raw!r}")
            return math.nan

    kind = _get(cp, "model", "kind", "ig")
    a = num("model", "a")
    b = num("model", "b")
    lam = num("dynamics", "lambda")
    rho = num("dynamics", "rho")
    r = num("dynamics", "r", 0.0)
    s2 = num("dynamics", "sigma0_sq")
    s0 = num("dynamics", "s0", 1.0)
    try:
        cm = make_cumulant(kind, a, b)
    except ValueError as exc:
        errs.append(f"[model] kind: {exc}")
        cm = make_cumulant("ig", 1.0, 1.0)
    params = ModelParams(lam, rho, r, s2, s0, cm)

    strike_txt = overrides.get("strike")
    if strike_txt is None:
        strike_txt = _get(cp, "option", "strike", "")
    expiry_txt = overrides.get("expiry")
    if expiry_txt is None:
        expiry_txt = _get(cp, "option", "expiry", "")
    strikes = _floats(strike_txt, "strike", errs)
    expiries = _floats(expiry_txt, "expiry", errs)
    if not strikes:
        errs.append("strike grid is empty")
    if not expiries:
        errs.append("expiry grid is empty")
    errs += [f"strike must be positive ({k})" for k in strikes if not k > 0]
    errs += [f"expiry must be positive ({t})" for t in expiries if not t > 0]

    orders_txt = overrides.get("order") or _get(cp, "run", "orders", "2,3")
    try:
        orders = [int(v) for v in str(orders_txt).split(",") if v.strip()]
    except ValueError:
        errs.append(f"orders: not an integer list ({orders_txt!r})")
        orders = []
    if not orders:
        errs.append("order list is empty")
    errs += [f"order must be >= 2 ({n})" for n in orders if n < 2]

    oracle = overrides.get("oracle") or _get(cp, "run", "oracle", "cf")
    if oracle not in ORACLES:
        errs.append(f"oracle must be one of {ORACLES}")
    seed = overrides.get("seed")
    seed = int(seed) if seed is not None else int(num("run", "seed", 20240601, int))
    threads = overrides.get("threads")
    threads = int(threads) if threads is not None else int(num("run", "threads", 1, int))
    if threads < 1:
        errs.append("threads must be >= 1")
    out = overrides.get("out") or _get(cp, "run", "out")

    try:
        mc = McSettings(
            paths=int(num("run", "mc_paths", 100_000, int)),
            grid_steps_per_year=int(num("run", "mc_steps_per_year", 250, int)),
            seed=seed,
            antithetic=_get(cp, "run", "mc_antithetic", "false").lower() in ("1", "true", "yes"),
            conditional=_get(cp, "run", "mc_conditional", "true").lower() in ("1", "true", "yes"),
            threads=max(threads, 1),
        )
    except (ValueError, TypeError) as exc:
        errs.append(f"mc settings: {exc}")
        mc = McSettings()
    try:
        cf = CfSettings(
            damping=num("run", "cf_damping", 0.75),
            grid_points=int(num("run", "cf_grid_points", 2 ** 14, int)),
            u_max=num("run", "cf_u_max", 400.0),
            quadrature=_get(cp, "run", "cf_quadrature", "adaptive"),
            side=_get(cp, "run", "cf_side", "otm"),
        )
    except (ValueError, TypeError) as exc:
        errs.append(f"cf settings: {exc}")
        cf = CfSettings()

    axis = overrides.get("axis") or _get(cp, "sweep", "axis")
    values_txt = overrides.get("values") or _get(cp, "sweep", "values", "")
    values = _floats(values_txt, "sweep values", errs) if values_txt else []
    method = overrides.get("method") or _get(cp, "run", "bound_method", "auto")

    if not errs:
        v = validate(params)
        errs += v.errors
        top = max(orders)
        if v.max_order is not None and top > v.max_order:
            errs.append(f"order {top} exceeds the largest order with finite moments ({v.max_order})")
    if errs:
        raise ConfigError(errs)
    return RunConfig(params, strikes, expiries, orders, oracle, seed, threads, out, mc, cf, method, axis, values)


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(header, rows, out):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(row.get(h)) for h in header])
    text = buf.getvalue()
    if out and out != "-":
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


def _pmap(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _oracles(cfg: RunConfig, params, option):
    cf = mc = None
    if cfg.oracle in ("cf", "both"):
        cf = cf_put_price(params, option, cfg.cf)
    if cfg.oracle in ("mc", "both"):
        mc = mc_put_price(params, option, cfg.mc)
    return cf, mc


def _price_point(cfg: RunConfig, params, K, T, with_bound=True):
    option = OptionSpec(K, T)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = taylor_prices(params, option, cfg.orders)
        cf, mc = _oracles(cfg, params, option)
        rows = []
        for pr in res:
            row = {
                "K": K, "T": T, "N": pr.order, "price": pr.value, "base_bs": pr.base_bs,
                "sum_corrections": pr.sum_corrections,
            }
            if with_bound:
                row["bound_total"] = remainder_bound(pr.order, params, option, cfg.bound_method).total
            if cf is not None:
                row["cf_price"] = cf.price
                row["cf_flag"] = cf.flagged
            if mc is not None:
                row["mc_price"] = mc.price
                row["mc_se"] = mc.std_error
            rows.append(row)
    return rows


def _oracle_cols(cfg):
    cols = []
    if cfg.oracle in ("cf", "both"):
        cols += ["cf_price", "cf_flag"]
    if cfg.oracle in ("mc", "both"):
        cols += ["mc_price", "mc_se"]
    return cols


def cmd_price(cfg: RunConfig) -> str:
    pts = [(K, T) for T in cfg.expiries for K in cfg.strikes]
    parts = _pmap(lambda p: _price_point(cfg, cfg.params, p[0], p[1]), pts, cfg.threads)
    rows = [r for part in parts for r in part]
    header = ["K", "T", "N", "price", "base_bs", "sum_corrections", "bound_total"] + _oracle_cols(cfg)
    return write_csv(header, rows, cfg.out)


def _sweep_point(cfg: RunConfig, axis, value, K, T):
    params = cfg.params
    local = replace(cfg)
    if axis == "strike":
        K = value
    elif axis == "expiry":
        T = value
    elif axis == "lambda":
        params = params.replace(lam=value)
    elif axis == "b":
        params = params.with_cumulant(b=value)
    elif axis == "order":
        local.orders = [int(value)]
    rows = _price_point(local, params, K, T, with_bound=False)
    for row in rows:
        row["axis"] = axis
        row["value"] = value
        ref = row.get("cf_price", row.get("mc_price"))
        if ref is not None:
            err = abs(row["price"] - ref)
            row["abs_error"] = err
            row["log10_error"] = math.log10(err) if err > 0 else -math.inf
    return rows


def cmd_sweep(cfg: RunConfig, axis: str) -> str:
    if axis not in AXES:
        raise ConfigError([f"axis must be one of {AXES}"])
    if not cfg.values:
        raise ConfigError(["sweep values are empty"])
    if axis == "order" and any(v < 2 or v != int(v) for v in cfg.values):
        raise ConfigError(["order sweep values must be integers >= 2"])
    Ks = cfg.strikes if axis != "strike" else [None]
    Ts = cfg.expiries if axis != "expiry" else [None]
    pts = [(v, K, T) for v in cfg.values for T in Ts for K in Ks]
    parts = _pmap(lambda p: _sweep_point(cfg, axis, *p), pts, cfg.threads)
    rows = [r for part in parts for r in part]
    header = ["axis", "value", "K", "T", "N", "price"] + _oracle_cols(cfg)
    if cfg.oracle != "none":
        header += ["abs_error", "log10_error"]
    if axis == "b" and cfg.oracle != "none":
        header.append("slope")
        groups = {}
        for row in rows:
            groups.setdefault((row["K"], row["T"], row["N"]), []).append(row)
        for grp in groups.values():
            pts = [(math.log(r["value"]), math.log(r["abs_error"])) for r in grp if r["abs_error"] > 0]
            slope = float(np.polyfit(*zip(*pts), 1)[0]) if len(pts) >= 2 else None
            for r in grp:
                r["slope"] = slope
    return write_csv(header, rows, cfg.out)


def cmd_bound(cfg: RunConfig) -> str:
    def one(pt):
        K, T = pt
        option = OptionSpec(K, T)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = {p.order: p.value for p in taylor_prices(cfg.params, option, cfg.orders)}
            cf = cf_put_price(cfg.params, option, cfg.cf) if cfg.oracle != "none" else None
            out = []
            for N in cfg.orders:
                rep = remainder_bound(N, cfg.params, option, cfg.bound_method, threads=1)
                realized = abs(res[N] - cf.price) if cf is not None else None
                for row in rep.rows():
                    row.update({
                        "K": K, "T": T, "N": N, "method": rep.method,
                        "realized_error": realized,
                        "unreliable": rep.unreliable,
                        "boundary_ok": rep.diagnostics.get("boundary_ok", True),
                    })
                    out.append(row)
        return out

    pts = [(K, T) for T in cfg.expiries for K in cfg.strikes]
    rows = [r for part in _pmap(one, pts, cfg.threads) for r in part]
    header = ["K", "T", "N", "method", "key", "m_value", "moment_factor", "term", "total",
              "realized_error", "unreliable", "boundary_ok"]
    return write_csv(header, rows, cfg.out)


# reference points: IG(1,10), rho=-0.3, r=0.05, sigma0^2=0.5, S0=K=100, T=1
_SELFTEST_TAYLOR = [(1.0, 2, 20.4190804502570), (2.0, 2, 17.7518437702305),
                    (5.0, 2, 14.0562498792883), (5.0, 3, 14.0561187808593)]
_SELFTEST_CF = [(1.0, 20.4192290946107), (3.0, 16.0190649810317)]


def cmd_selftest(out=None) -> bool:
    from .model import InverseGaussian

    rows = []
    ok = True
    base = ModelParams(1.0, -0.3, 0.05, 0.5, 100.0, InverseGaussian(1.0, 10.0))
    opt = OptionSpec(100.0, 1.0)
    for lam, N, ref in _SELFTEST_TAYLOR:
        val = taylor_prices(base.replace(lam=lam), opt, [N])[0].value
        good = abs(val - ref) <= 1e-6
        ok &= good
        rows.append({"check": f"taylor_N{N}_lambda{lam:g}", "value": val, "reference": ref, "pass": good})
    for lam, ref in _SELFTEST_CF:
        val = cf_put_price(base.replace(lam=lam), opt).price
        good = abs(val - ref) <= 1e-5 * ref
        ok &= good
        rows.append({"check": f"cf_lambda{lam:g}", "value": val, "reference": ref, "pass": good})
    write_csv(["check", "value", "reference", "pass"], rows, out)
    return ok


def build_parser():
    p = argparse.ArgumentParser(prog="bnstaylor", description="Taylor-expansion pricing of puts under BNS models")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="INI config file")
        sp.add_argument("--order", help="comma-separated Taylor orders, e.g. 2,3")
        sp.add_argument("--oracle", choices=ORACLES)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out", help="CSV output path (default stdout)")
        sp.add_argument("--strike", help="comma-separated strikes (overrides config)")
        sp.add_argument("--expiry", help="comma-separated expiries (overrides config)")

    common(sub.add_parser("price", help="Taylor prices with bounds and oracles"))
    sw = sub.add_parser("sweep", help="sweep one axis against an oracle")
    common(sw)
    sw.add_argument("--axis", choices=AXES)
    sw.add_argument("--values", help="comma-separated axis values")
    bd = sub.add_parser("bound", help="remainder bounds with realized errors")
    common(bd)
    bd.add_argument("--method", choices=("auto", "cauchy_schwarz", "rho_zero", "raw_theorem"))
    st = sub.add_parser("selftest", help="check reference digits")
    st.add_argument("--out")
    st.add_argument("--seed", type=int)
    st.add_argument("--threads", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return EXIT_OK if cmd_selftest(args.out) else EXIT_NUMERIC
        ov = {k: getattr(args, k, None) for k in ("order", "oracle", "seed", "threads", "out", "strike",
                                                   "expiry", "axis", "values", "method")}
        cfg = load_config(args.config, ov)
        if args.command == "price":
            cmd_price(cfg)
        elif args.command == "sweep":
            if not cfg.axis:
                raise ConfigError(["sweep needs --axis or [sweep] axis"])
            cmd_sweep(cfg, cfg.axis)
        elif args.command == "bound":
            cmd_bound(cfg)
    except (ConfigError, ParameterError) as exc:
        for msg in getattr(exc, "errors", [str(exc)]):
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
