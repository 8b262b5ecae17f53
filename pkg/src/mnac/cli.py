"""Command-line entry point: ``mnac capacity|sweep|exponent|simulate|fig1|validate|codebook``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from . import capacity as cap
from . import codec, exponent, harness, plotting, report

log = logging.getLogger("mnac")


def _units_scale(units: str) -> float:
    return 1.0 if units == "nats" else 1.0 / cap.LN2


def _emit(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)


def cmd_capacity(args) -> int:
    if args.k is not None:
        params = cap.SystemParams.from_k(args.n, args.ell, args.k, args.power)
    else:
        params = cap.SystemParams(args.n, args.ell, args.alpha, args.power)
    rep = cap.symmetric_capacity(params, cap.RegimeCase(args.regime))
    shown = rep.display(args.units)
    header = ("n", "ell", "alpha", "k", "c1", "theta", "capacity", "regime", "units")
    row = (params.n, params.ell, params.alpha, params.k, shown["c1"], shown["theta"], shown["capacity"],
           shown["regime"], args.units)
    text = report.write(args.out, header, [row])
    _emit(text, args.out)
    return 0


def cmd_sweep(args) -> int:
    law = cap.ScalingLaw(power=args.power, ell_coef=args.ell_coef, ell_exp=args.ell_exp,
                         k_coef=args.k_coef, k_exp=args.k_exp)
    grid = cap.log_grid(args.n_min, args.n_max, args.points)
    diag = cap.classify_regime(law, grid)
    rows = cap.sweep_capacity(law, grid)
    meta = {"ell_n": f"{args.ell_coef}*n^{args.ell_exp}", "k_n": f"{args.k_coef}*n^{args.k_exp}",
            "power": args.power, "regime": diag.regime.label,
            "assumption1_ok": diag.assumption1_ok, "assumption2_ok": diag.assumption2_ok}
    text = report.write(args.out, cap.SWEEP_HEADER,
                        [(r.n, r.ell, r.alpha, r.k, r.c1_nats, r.theta, r.capacity_nats, r.capacity_bits) for r in rows],
                        meta)
    _emit(text, args.out)
    if args.out not in (None, "-"):
        scale = _units_scale(args.units)
        plotting.plot_capacity_curves(
            {f"ell_n = {args.ell_coef} n^{args.ell_exp}": ([r.n for r in rows], [r.capacity_nats * scale for r in rows])},
            Path(args.out).with_suffix(".svg"), units=args.units,
        )
        last = rows[-1]
        print(f"C({last.n}) = {last.capacity_nats * scale:.6g} {args.units}  [{diag.regime.label}]")
    return 0


def cmd_exponent(args) -> int:
    p_prime = exponent.default_p_prime(args.power, args.power_margin)
    v = args.v if args.v is not None else exponent.achievable_message_length(args.n, args.k, p_prime, args.epsilon)
    params = exponent.ExponentParams(args.n, args.k, p_prime, v)
    res = exponent.error_exponent_er(params)
    bound = exponent.union_error_bound(params, res)
    meta = {"n": args.n, "k": args.k, "power": args.power, "p_prime": p_prime, "v_nats": v,
            "epsilon": args.epsilon, "Er": res.er, "union_bound": bound.decoding}
    rows = [(j + 1, g, r, f) for j, (g, r, f) in enumerate(zip(res.gammas, res.argmax_rho, res.f_values))]
    text = report.write(args.out, ("k", "gamma", "rho_star", "f_star"), rows, meta)
    _emit(text, args.out)
    print(f"Er={res.er!r}")
    return 0


def _config(args) -> harness.ExperimentConfig:
    flags = {k: getattr(args, k, None) for k in ("seed", "trials", "out", "units", "detector", "decoder",
                                                   "n", "ell", "alpha", "power", "epsilon", "workers")}
    for item in args.set or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise harness.ConfigError(f"--set expects key=value, got {item!r}")
        flags[key.strip()] = val.strip()
    return harness.parse_config(args.config, flags)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    est = harness.estimate_error_probability(cfg)
    s = est.scheme
    text = report.write(cfg.out, ("n", "n0", "m", "ell", "alpha") + harness.ESTIMATE_HEADER[1:8],
                        [(s.n, s.n0, s.m, s.ell, s.alpha) + harness._estimate_row(s.n, est)[1:8]], cfg.echo())
    _emit(text, cfg.out)
    print(f"P_e ~ {est.p_hat:.4g} +/- {est.half_width:.2g} ({est.errors}/{est.trials})", file=sys.stderr)
    return 0


def cmd_fig1(args) -> int:
    out = Path(args.out or "fig1_out")
    paths = harness.run_fig1(out, units=args.units, points=args.points)
    for p in paths.values():
        print(p)
    return 0


def cmd_validate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out or "validate_out")
    rep = harness.run_scheme_validation(cfg, out)
    for name, ok in rep.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if all(rep.verdicts.values()) else 1


def cmd_codebook(args) -> int:
    if args.load:
        cb = codec.load(args.load)
        print(f"n={cb.n} n0={cb.n0} ell={cb.ell} M={cb.m} seed={cb.seed} "
              f"power_ok={int(cb.power_ok.sum())}/{cb.ell} max_power={cb.codeword_power().max():.6g}")
        return 0
    cfg = _config(args)
    scheme = harness.resolve_scheme(cfg)
    cb = codec.generate(scheme.n, scheme.n0, scheme.m, scheme.ell, scheme.power, scheme.p_prime,
                        cfg.seed, policy=cfg.power_policy)
    codec.dump(cb, args.dump)
    print(f"wrote {args.dump}: n={cb.n} n0={cb.n0} ell={cb.ell} M={cb.m}")
    return 0


def _common(p: argparse.ArgumentParser, experiment: bool = False) -> None:
    p.add_argument("--out", help="output path ('-' for stdout)")
    p.add_argument("--units", choices=harness.UNITS, default="nats")
    if experiment:
        p.add_argument("--config", help="key = value config file or preset name (tiny, small, fig1)")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--detector", choices=("exhaustive", "greedy"))
        p.add_argument("--decoder", choices=("exhaustive", "iterative"))
        p.add_argument("--workers", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--ell", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--power", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mnac", description=__doc__)
    ap.add_argument("--version", action="version", version=f"mnac {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capacity", help="symmetric capacity at one operating point")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ell", type=int, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--alpha", type=float)
    g.add_argument("--k", type=float)
    p.add_argument("--power", type=float, required=True)
    p.add_argument("--regime", type=int, choices=(1, 2, 3), default=1)
    _common(p)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("sweep", help="capacity along a scaling law ell_n = a n^b, k_n = c n^d")
    p.add_argument("--power", type=float, default=2.0)
    p.add_argument("--ell-coef", type=float, default=1.0)
    p.add_argument("--ell-exp", type=float, default=1.0)
    p.add_argument("--k-coef", type=float, default=0.25)
    p.add_argument("--k-exp", type=float, default=1.0)
    p.add_argument("--n-min", type=int, default=100)
    p.add_argument("--n-max", type=int, default=10_000)
    p.add_argument("--points", type=int, default=41)
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("exponent", help="error exponent Er over gamma = j/k")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--power", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--power-margin", type=float, default=0.05)
    p.add_argument("--v", type=float, help="message length in nats (default: backed off from C1 by epsilon)")
    _common(p)
    p.set_defaults(func=cmd_exponent)

    p = sub.add_parser("simulate", help="Monte Carlo block error probability of the two-stage scheme")
    _common(p, experiment=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fig1", help="capacity curves for k_n = n/4 (CSV + SVG into --out dir)")
    p.add_argument("--points", type=int, default=41)
    _common(p)
    p.set_defaults(func=cmd_fig1)

    p = sub.add_parser("validate", help="scheme behaviour checks (CSV + SVG into --out dir)")
    _common(p, experiment=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("codebook", help="dump or inspect a binary codebook")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--dump", metavar="PATH")
    g.add_argument("--load", metavar="PATH")
    _common(p, experiment=True)
    p.set_defaults(func=cmd_codebook)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (harness.ConfigError, codec.InfeasibleError, ValueError) as exc:
        print(f"mnac: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
