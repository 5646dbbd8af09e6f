"""Batch entry point.

    hestonbarrier --config run.json [--validators fd,fft,reference_kernel]
                  [--out-dir DIR] [--upsilon U] [--solver tsvd|minres|lu]

Writes ``git_prices.csv``, ``phi_surface.csv``, ``basis_lattice.csv``,
``positivity.csv`` and ``run_meta.json``; the FD validator adds
``fd_prices.csv`` and ``errors.csv``.  Exit status 1 means a bad config,
2 a numerical failure (details per cell in ``errors.csv``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, PricingError
from .lmvf import SOLVERS, basis_theta, positivity_f
from .model import BarrierContract, MarketState, OptionKind, as_curve, build_model
from .pricer import GitConfig, PriceTable, batch_price, vanilla_put
from .validators import HestonParams, cross_validate, fd_price, fft_vanilla_put, kernel_spot_check

log = logging.getLogger(__name__)

SCHEMA = 1
VALIDATORS = ("fd", "fft", "reference_kernel")
_MODEL_KEYS = ("m", "theta0", "sigma0", "rho0")
_NUMERIC_KEYS = {
    "n_t", "n_v", "v_m", "epsilon", "upsilon", "rel_tol", "abs_tol",
    "max_subdivisions", "simpson_nodes", "exact_kummer", "solver", "rcond", "minres_tol",
}


@dataclass
class RunConfig:
    model: dict
    spot: float
    v0: float
    barrier: object
    strikes: list
    maturities: list
    segments: int = 10
    kind: OptionKind = OptionKind.DOWN_OUT_PUT
    numerics: GitConfig = field(default_factory=GitConfig)
    validators: set = field(default_factory=set)
    out_dir: Path = Path("out")

    @classmethod
    def from_dict(cls, raw: dict, base: Path = Path(".")) -> "RunConfig":
        if raw.get("schema") != SCHEMA:
            raise ConfigError(f"config needs \"schema\": {SCHEMA}")
        missing = [k for k in (*_MODEL_KEYS, "spot", "v0", "barrier", "strikes", "maturities") if k not in raw]
        if missing:
            raise ConfigError(f"missing keys: {', '.join(missing)}")
        model = {k: float(raw[k]) for k in _MODEL_KEYS}
        for k in ("theta_k", "sigma_k", "r", "q"):
            model[k] = float(raw.get(k, 0.0))
        strikes = sorted(float(k) for k in raw["strikes"])
        maturities = sorted(float(t) for t in raw["maturities"])
        if any(t <= 0 for t in maturities) or any(k <= 0 for k in strikes):
            raise ConfigError("strikes and maturities must be positive")
        num = dict(raw.get("numerics", {}))
        unknown = set(num) - _NUMERIC_KEYS
        if unknown:
            raise ConfigError(f"unknown numerics keys: {sorted(unknown)}")
        if isinstance(num.get("epsilon"), dict):
            try:
                num["epsilon"] = {float(k): float(e) for k, e in num["epsilon"].items()}
            except ValueError as exc:
                raise ConfigError("epsilon map needs numeric strikes and values") from exc
        if "solver" in num and num["solver"] not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}")
        try:
            numerics = GitConfig(**num)
            numerics.quad(1.0)  # validates tolerances
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        val = raw.get("validators", {})
        flags = {k for k, on in val.items() if on} if isinstance(val, dict) else set(val)
        _check_validators(flags)
        out = Path(raw.get("outputs", {}).get("dir", "out"))
        try:
            kind = OptionKind(raw.get("kind", OptionKind.DOWN_OUT_PUT.value))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(
            model=model, spot=float(raw["spot"]), v0=float(raw["v0"]), barrier=as_curve(raw["barrier"]),
            strikes=strikes, maturities=maturities, segments=int(raw.get("segments", 10)), kind=kind,
            numerics=numerics, validators=flags, out_dir=out if out.is_absolute() else base / out,
        )


def _check_validators(flags) -> None:
    bad = set(flags) - set(VALIDATORS)
    if bad:
        raise ConfigError(f"unknown validators: {sorted(bad)}")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(raw, path.parent)


def _model_for(cfg: RunConfig, maturity: float):
    p = cfg.model
    return build_model(p["m"], p["theta0"], p["sigma0"], p["rho0"], p["theta_k"], p["sigma_k"],
                       p["r"], p["q"], maturity=maturity, segments=cfg.segments)


def emit_plot_data(out_dir, table: PriceTable, phis: dict) -> dict:
    """Long-format CSVs for plotting; returns flags for ``run_meta.json``."""
    out_dir = Path(out_dir)
    with open(out_dir / "phi_surface.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strike", "maturity", "t", "v", "phi"])
        for (K, T), phi in sorted(phis.items()):
            tk, vl = phi.grid.centers()
            for t, v, val in zip(tk, vl, phi(tk, vl)):
                w.writerow([f"{K:g}", f"{T:.10g}", f"{t:.10g}", f"{v:.10g}", f"{val:.10g}"])
    # basis shape around (t_k, nu_l) = (1, 10) with eps = 0.1
    eps, nu_l, t_k = 0.1, 10.0, 1.0
    tt, nn = np.meshgrid(np.linspace(t_k - 3, t_k + 3, 25), np.linspace(nu_l - 3, nu_l + 3, 25), indexing="ij")
    th = basis_theta(tt, nn, (t_k, nu_l), eps)
    with open(out_dir / "basis_lattice.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "nu", "theta"])
        for a, b, c in zip(tt.ravel(), nn.ravel(), th.ravel()):
            w.writerow([f"{a:.6g}", f"{b:.6g}", f"{c:.10g}"])
    omega = np.linspace(0.0, 20.0, 41)
    fmin = math.inf
    with open(out_dir / "positivity.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "nu_l", "eps", "F"])
        for nu in (0.25, 0.5, 1.0, 2.0):
            for e in (0.5, 1.0, 3.0, 5.0):
                vals = positivity_f(omega, nu, e)
                fmin = min(fmin, float(vals.min()))
                for o, val in zip(omega, vals):
                    w.writerow([f"{o:g}", f"{nu:g}", f"{e:g}", f"{val:.10g}"])
    return {"basis_peak": float(th.max()), "positivity_min": fmin, "positivity_ok": bool(fmin > 0)}


def run(cfg: RunConfig) -> int:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    market = MarketState(cfg.spot, cfg.v0)
    table = PriceTable()
    phis = {}
    failures = []
    numerics = {k: getattr(cfg.numerics, k) for k in sorted(_NUMERIC_KEYS)}
    if isinstance(numerics["epsilon"], dict):
        numerics["epsilon"] = {f"{k:g}": e for k, e in numerics["epsilon"].items()}
    meta = {"schema": SCHEMA, "numerics": numerics,
            "validators": sorted(cfg.validators), "timings": {}}
    for T in cfg.maturities:
        model = _model_for(cfg, T)
        start = time.perf_counter()
        try:
            tab, ph = batch_price(model, cfg.barrier, market, cfg.strikes, [T], cfg.numerics, cfg.kind)
        except ConfigError:
            raise
        except PricingError as exc:
            log.error("T=%g: %s", T, exc)
            failures.extend((K, T, f"{type(exc).__name__}: {exc}") for K in cfg.strikes)
            continue
        meta["timings"][f"{T:.10g}"] = time.perf_counter() - start
        table.rows.extend(tab.rows)
        phis.update(ph)
        meta.setdefault("residuals", {}).update({f"{K:g},{T:.10g}": g.residual for (K, T), g in ph.items()})
    table.to_csv(out / "git_prices.csv")

    if "fd" in cfg.validators:
        fd_tab = PriceTable()
        for T in cfg.maturities:
            model = _model_for(cfg, T)
            for K in cfg.strikes:
                t0 = time.perf_counter()
                p = fd_price(model, BarrierContract(K, T, cfg.barrier), market)
                if cfg.kind is OptionKind.DOWN_IN_PUT:
                    p = vanilla_put(model, market, K, T) - p
                fd_tab.add(K, T, p, "fd", time.perf_counter() - t0)
        fd_tab.to_csv(out / "fd_prices.csv")
        _write_errors(out / "errors.csv", table, fd_tab, failures)
        if table.rows:
            _, summary = cross_validate(table, fd_tab)
            meta["fd_summary"] = summary
    elif failures:
        _write_errors(out / "errors.csv", table, None, failures)

    if "fft" in cfg.validators:
        frozen = _model_for(cfg, cfg.maturities[-1]).frozen_at(0.0)
        params = HestonParams.from_model(frozen, cfg.v0)
        meta["fft_vanilla"] = {f"{K:g},{T:.10g}": float(fft_vanilla_put(params, cfg.spot, K, T))
                               for T in cfg.maturities for K in cfg.strikes}
    if "reference_kernel" in cfg.validators:
        T = cfg.maturities[0]
        meta["reference_kernel"] = kernel_spot_check(
            _model_for(cfg, T), BarrierContract(cfg.strikes[0], T, cfg.barrier), market, cfg.numerics, n_entries=3
        )
    meta["plot"] = emit_plot_data(out, table, phis)
    meta["failures"] = [{"strike": K, "maturity": T, "error": e} for K, T, e in failures]
    with open(out / "run_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=float)
    return 2 if failures else 0


def _write_errors(path, git: PriceTable, fd: PriceTable | None, failures) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strike", "maturity", "git", "fd", "rel_err_pct", "status"])
        for K, T, p, _, _ in git.rows:
            f = fd.lookup(K, T) if fd is not None else math.nan
            e = 100.0 * (p - f) / f if f else math.nan
            w.writerow([f"{K:g}", f"{T:.10g}", f"{p:.6g}", f"{f:.6g}", f"{e:.4g}", "ok"])
        for K, T, msg in failures:
            f = fd.lookup(K, T) if fd is not None else math.nan
            w.writerow([f"{K:g}", f"{T:.10g}", "", f"{f:.6g}", "", msg])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hestonbarrier", description="Heston barrier Put pricing by the GIT method")
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--validators", default=None, help="comma list of fd, fft, reference_kernel")
    ap.add_argument("--out-dir", default=None, help="output directory (overrides the config)")
    ap.add_argument("--upsilon", type=float, default=None, help="truncation point of the xi-integrals")
    ap.add_argument("--solver", choices=SOLVERS, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.validators is not None:
            flags = {v.strip() for v in args.validators.split(",") if v.strip()}
            _check_validators(flags)
            cfg = replace(cfg, validators=flags)
        if args.out_dir is not None:
            cfg = replace(cfg, out_dir=Path(args.out_dir))
        if args.upsilon is not None:
            cfg = replace(cfg, numerics=replace(cfg.numerics, upsilon=args.upsilon))
            cfg.numerics.quad(1.0)
        if args.solver is not None:
            cfg = replace(cfg, numerics=replace(cfg.numerics, solver=args.solver))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except PricingError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
