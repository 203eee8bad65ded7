"""Command-line front end.

Subcommands: ``endpoints``, ``sweep``, ``ksweep``, ``montecarlo``,
``gen-channels``.  Exit codes: 0 ok, 2 configuration error, 3 solver error.
"""

import argparse
import csv
import io
import json
import logging
import math
import sys

import numpy as np

from .beamforming import ScaOptions, solve_p2_sca
from .config import RunConfig
from .covariance import P1Options, solve_p1
from .endpoints import crb_min_point, rate_max_point
from .errors import ContractError, InfeasibleError, SolverError
from .estimation import ScatterTarget, mc_crb_check
from .model import (
    beamforming_rate,
    crb_trace,
    generate_rayleigh_channels,
    isotropic_covariance,
    multicast_rate,
    read_channels_csv,
    write_channels_csv,
)

log = logging.getLogger("crbrate")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _fmt(x):
    if x is None:
        return ""
    x = float(x)
    return "inf" if math.isinf(x) else repr(x)


def load_channels(run, users=None, seed=None):
    if run.channels and users is None:
        ch = read_channels_csv(run.channels)
    else:
        ch = generate_rayleigh_channels(
            users or run.users, run.n_tx, run.seed if seed is None else seed, run.normalize_channels
        )
    ch.check(run.system)
    return ch


def sweep_grid(run, crb_com):
    cfg = run.system
    lo = run.gamma_lo if run.gamma_lo is not None else cfg.crb_min * 1.0001
    if lo < cfg.crb_min * (1 - 1e-9):
        raise ContractError(f"gamma_lo={lo} is below CRB_min={cfg.crb_min}")
    hi = crb_com if run.gamma_hi is None else min(run.gamma_hi, crb_com)
    if math.isinf(hi):
        raise ContractError("CRB_com is infinite for these channels; set gamma_hi")
    if hi <= lo:
        raise ContractError(f"empty sweep range [{lo}, {hi}]")
    if run.spacing == "log":
        return np.geomspace(lo, hi, run.points)
    return np.linspace(lo, hi, run.points)


def _certified_optimal(sol, cfg, gamma_bar, ch):
    s = sol.covariance
    if crb_trace(s, cfg) > gamma_bar * (1 + 1e-4) or np.real(np.trace(s)) > cfg.power * (1 + 1e-6):
        return None
    return multicast_rate(s, ch, cfg)


def _certified_beamforming(sol, cfg, gamma_bar, ch):
    d = sol.diagnostics
    if (
        d["crb_excess"] > gamma_bar * 1e-4
        or d["power_excess"] > cfg.power * 1e-6
        or d["sensing_min_eig"] < -1e-8 * cfg.power
    ):
        return None
    return beamforming_rate(sol.w, sol.s_s, ch, cfg)


def evaluate_schemes(run, ch, gamma_bar, endpoint=None):
    """Rates and statuses of the requested schemes at one CRB threshold."""
    cfg = run.system
    rates, status = {}, {}
    p1 = None
    if "optimal" in run.schemes or "beamforming" in run.schemes:
        try:
            p1 = solve_p1(ch, cfg, gamma_bar, P1Options(gap_tol=run.gap_tol, endpoint=endpoint))
            rate = _certified_optimal(p1, cfg, gamma_bar, ch)
            rates["optimal"], status["optimal"] = rate, "ok" if rate is not None else "uncertified"
        except InfeasibleError:
            rates["optimal"], status["optimal"] = None, "infeasible"
        except SolverError as exc:
            log.warning("optimal covariance failed at gamma=%s: %s", gamma_bar, exc)
            rates["optimal"], status["optimal"] = None, "solver_error"
    if "beamforming" in run.schemes:
        if p1 is None:
            rates["beamforming"], status["beamforming"] = None, status["optimal"]
        else:
            opts = ScaOptions(sca_tol=run.sca_tol, max_sca_iter=run.max_sca_iter)
            try:
                sol = solve_p2_sca(ch, cfg, gamma_bar, opts=opts, p1=p1)
                rate = _certified_beamforming(sol, cfg, gamma_bar, ch)
                rates["beamforming"] = rate
                status["beamforming"] = "ok" if rate is not None else "uncertified"
            except SolverError as exc:
                log.warning("beamforming failed at gamma=%s: %s", gamma_bar, exc)
                rates["beamforming"], status["beamforming"] = None, "solver_error"
    if "isotropic" in run.schemes:
        if gamma_bar >= cfg.crb_min * (1 - 1e-9):
            rates["isotropic"] = multicast_rate(isotropic_covariance(cfg), ch, cfg)
            status["isotropic"] = "ok"
        else:
            rates["isotropic"], status["isotropic"] = None, "infeasible"
    if "optimal" not in run.schemes:
        rates.pop("optimal", None)
        status.pop("optimal", None)
    return rates, status


def cmd_endpoints(run):
    cfg = run.system
    ch = load_channels(run)
    sen, _ = crb_min_point(ch, cfg)
    com, _, _ = rate_max_point(ch, cfg)
    return {
        "crb_min": sen.crb,
        "r_sen": sen.rate,
        "r_max": com.rate,
        "crb_com": "inf" if math.isinf(com.crb) else com.crb,
    }


def cmd_sweep(run):
    cfg = run.system
    ch = load_channels(run)
    com_point, s_com, _ = rate_max_point(ch, cfg)
    grid = sweep_grid(run, com_point.crb)
    schemes = [s for s in ("optimal", "beamforming", "isotropic") if s in run.schemes]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["gamma"] + [f"rate_{s}" for s in schemes] + [f"status_{s}" for s in schemes])
    for gamma_bar in grid:
        log.info("sweep gamma=%s", gamma_bar)
        rates, status = evaluate_schemes(run, ch, float(gamma_bar), endpoint=(com_point, s_com))
        writer.writerow(
            [_fmt(gamma_bar)] + [_fmt(rates[s]) for s in schemes] + [status[s] for s in schemes]
        )
    return out.getvalue()


def cmd_k_sweep(run, k_list=None):
    k_list = [int(k) for k in (k_list or run.k_list)]
    schemes = [s for s in ("optimal", "beamforming", "isotropic") if s in run.schemes]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["k"] + [f"rate_{s}" for s in schemes] + [f"status_{s}" for s in schemes])
    for k in k_list:
        sums = {s: [] for s in schemes}
        for j in range(run.trials):
            seed = np.random.SeedSequence([run.seed, k, j])
            ch = load_channels(run, users=k, seed=seed)
            log.info("ksweep K=%d draw %d", k, j)
            rates, _ = evaluate_schemes(run, ch, run.gamma_bar)
            for s in schemes:
                if rates[s] is not None:
                    sums[s].append(rates[s])
        means = [_fmt(np.mean(sums[s])) if sums[s] else "" for s in schemes]
        stats = [
            "ok" if len(sums[s]) == run.trials else f"failed:{run.trials - len(sums[s])}/{run.trials}"
            for s in schemes
        ]
        writer.writerow([k] + means + stats)
    return out.getvalue()


def cmd_montecarlo(run):
    cfg = run.system
    if run.mc_scheme == "isotropic":
        s = isotropic_covariance(cfg)
    else:
        ch = load_channels(run)
        p1 = solve_p1(ch, cfg, run.gamma_bar, P1Options(gap_tol=run.gap_tol))
        if run.mc_scheme == "optimal":
            s = p1.covariance
        else:
            s = solve_p2_sca(ch, cfg, run.gamma_bar, p1=p1).s_x
    target = ScatterTarget.default(cfg.n_tx, run.seed)
    report = mc_crb_check(s, target, cfg, run.mc_trials, run.seed)
    report["scheme"] = run.mc_scheme
    return report


def cmd_gen_channels(run):
    return generate_rayleigh_channels(run.users, run.n_tx, run.seed, run.normalize_channels)


def build_parser():
    parser = argparse.ArgumentParser(prog="crbrate", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (powers in dB)")
    common.add_argument("--seed", type=int, help="channel / Monte Carlo seed (overrides config)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--channels", help="channel CSV (overrides seeded generation)")
    common.add_argument("--log", help="write progress log to this file")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("endpoints", parents=[common], help="CRB_min / R_sen and CRB_com / R_max")
    sub.add_parser("sweep", parents=[common], help="rate of every scheme over a CRB grid")
    ks = sub.add_parser("ksweep", parents=[common], help="average rates versus number of users")
    ks.add_argument("--k", type=int, nargs="+", help="user counts (overrides config k_list)")
    sub.add_parser("montecarlo", parents=[common], help="LS estimation error versus the CRB")
    sub.add_parser("gen-channels", parents=[common], help="write seeded Rayleigh channels to CSV")
    return parser


def _write(text, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = [logging.FileHandler(args.log)] if args.log else [logging.StreamHandler(sys.stderr)]
    logging.basicConfig(
        level=logging.INFO if args.log else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
        handlers=handlers,
        force=True,
    )
    try:
        run = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise ContractError("seed must be non-negative")
            run.seed = args.seed
        if args.channels:
            run.channels = args.channels

        if args.command == "endpoints":
            _write(_json(cmd_endpoints(run)), args.out)
        elif args.command == "sweep":
            _write(cmd_sweep(run), args.out)
        elif args.command == "ksweep":
            _write(cmd_k_sweep(run, args.k), args.out)
        elif args.command == "montecarlo":
            _write(_json(cmd_montecarlo(run)), args.out)
        else:
            ch = cmd_gen_channels(run)
            if args.out:
                write_channels_csv(ch, args.out)
            else:
                buf = io.StringIO()
                write_channels_csv(ch, buf)
                sys.stdout.write(buf.getvalue())
    except (ContractError, InfeasibleError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except SolverError as exc:
        log.error("solver error: %s", exc)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
