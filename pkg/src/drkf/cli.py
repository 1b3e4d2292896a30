"""Command-line entry point.

Exit codes: 0 success, 2 infeasible, 1 numerical failure or bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import finite, freq, harness, ratapprox
from .errors import DRKFError, Infeasible
from .sslib import StateSpaceModel, scalar_model, tracking_model

log = logging.getLogger("drkf")

PRESETS = {"tracking": tracking_model, "scalar": scalar_model}


def _model(args) -> StateSpaceModel:
    if args.config:
        return StateSpaceModel.from_json(args.config)
    return PRESETS[args.preset]()


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(summary: dict) -> None:
    print(json.dumps(summary, indent=2, default=float))


def cmd_synth_finite(args) -> dict:
    res = finite.fw_solve_finite(_model(args), args.T, args.rho * math.sqrt(args.T), finite.FiniteConfig(tol=args.tol))
    out = _out(args)
    res.write_csv(out / "finite_filter.csv")
    res.write_json(out / "finite_summary.json")
    return res.summary()


def cmd_synth_infinite(args) -> dict:
    res = freq.solve_infinite(_model(args), args.rho, args.N, freq.InfiniteConfig(tol=args.tol))
    out = _out(args)
    res.write_csv(out / "infinite_samples.csv")
    res.write_json(out / "infinite_summary.json")
    return res.summary()


def cmd_ratapprox(args) -> dict:
    res = freq.solve_infinite(_model(args), args.rho, args.N, freq.InfiniteConfig(tol=args.tol))
    M = res.M_star.scalar
    if args.eps is not None:
        fit = ratapprox.least_order(M, args.eps, args.max_order)
    else:
        fit = ratapprox.best_precision(M, args.order)
    (_out(args) / "rational_fit.json").write_text(fit.to_json())
    return fit.to_dict()


def _bank(args) -> harness.FilterBank:
    return harness.FilterBank(_model(args), args.rho, args.T, args.N, args.tol)


def cmd_simulate(args) -> dict:
    cfg = harness.ExperimentConfig(_model(args), rho=args.rho, T=args.T, N=args.N, trials=args.trials, seed=args.seed,
                                   noise=args.noise, ar_phi=args.phi, filters=tuple(args.filters), tol=args.tol)
    res = harness.simulate(cfg)
    (_out(args) / "mse_curves.csv").write_text(res.to_csv())
    return {"time_average": res.time_average, "stderr": res.stderr, "final_step": {k: float(v[-1]) for k, v in res.mse.items()},
            "worst_case_per_step": res.worst_case, "trials": res.trials}


def cmd_freqresp(args) -> dict:
    text = harness.freq_response_report(_bank(args), args.filters)
    path = _out(args) / "freq_response.csv"
    path.write_text(text)
    return {"csv": str(path), "filters": args.filters}


def cmd_evaluate(args) -> dict:
    bank = _bank(args)
    horizon = args.T if args.horizon == "finite" else None
    return {name: harness.evaluate_worst_case(bank, name, args.rho, horizon) for name in args.filters}


def cmd_bench(args) -> dict:
    rows = harness.bench_scaling(_model(args), args.T_list, args.rho, args.N, args.repeats, args.tol)
    (_out(args) / "bench.csv").write_text(harness.bench_csv(rows))
    return {"rows": rows}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drkf", description="Wasserstein distributionally robust Kalman filtering")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, T=True, N=True):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--config", help="model JSON with keys A, B, C_y, C_s")
        g.add_argument("--preset", choices=sorted(PRESETS), default="tracking")
        sp.add_argument("--rho", type=float, default=1.0, help="per-step Wasserstein radius")
        sp.add_argument("--tol", type=float, default=1e-6)
        sp.add_argument("--out", default="drkf_out")
        if T:
            sp.add_argument("--T", type=int, default=50)
        if N:
            sp.add_argument("--N", type=int, default=1024)

    filters = ["kalman", "drkf_finite", "drkf_infinite"]

    sp = sub.add_parser("synth-finite", help="finite-horizon synthesis")
    common(sp, N=False)
    sp.set_defaults(func=cmd_synth_finite)

    sp = sub.add_parser("synth-infinite", help="infinite-horizon synthesis")
    common(sp, T=False)
    sp.set_defaults(func=cmd_synth_infinite)

    sp = sub.add_parser("ratapprox", help="rational fit of the worst-case spectrum")
    common(sp, T=False)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--order", type=int, default=2)
    g.add_argument("--eps", type=float)
    sp.add_argument("--max-order", type=int, default=20)
    sp.set_defaults(func=cmd_ratapprox)

    sp = sub.add_parser("simulate", help="Monte-Carlo MSE curves")
    common(sp)
    sp.add_argument("--noise", choices=["white", "ar", "worst", "zero"], default="white")
    sp.add_argument("--phi", type=float, default=0.8)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--filters", nargs="+", default=filters)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("freqresp", help="error spectrum per filter")
    common(sp)
    sp.add_argument("--filters", nargs="+", default=["kalman", "drkf_infinite", "large_rho_hinf_proxy"])
    sp.set_defaults(func=cmd_freqresp)

    sp = sub.add_parser("evaluate", help="worst-case MSE of filters")
    common(sp)
    sp.add_argument("--horizon", choices=["infinite", "finite"], default="infinite")
    sp.add_argument("--filters", nargs="+", default=["kalman", "drkf_infinite"])
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("bench", help="synthesis runtime versus horizon")
    common(sp, T=False)
    sp.add_argument("--T-list", type=int, nargs="+", default=[10, 25, 50])
    sp.add_argument("--repeats", type=int, default=3)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _emit(args.func(args))
    except Infeasible as exc:
        log.error("infeasible: %s", exc)
        return 2
    except (DRKFError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
