"""Command-line entry point: ``rootflip design | sweep | verify``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure or failed
check, 4 resource cap. Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import plotting
from .agent import DeepRFSearch
from .bloch import (SpinGrid, refocusing_profile, simulate_refocusing_profile,
                    simulate_spin_echo, write_profile_csv)
from .config import STRATEGIES, RunConfig, build_config
from .errors import NumericalError, RootFlipError, ValidationError
from .filters import beta_bounds, beta_ripples, design_matched_excitation
from .pulse import _atomic_write, duration_for_peak, read_pulse_csv, scaled, write_pulse_csv
from .roots import FlipContext, RootPattern, apply_pattern, write_pattern, write_root_dump
from .search import (exhaustive_search, greedy_tree_search, monte_carlo_search,
                     write_outcome_json, write_trace_csv)
from .slr import forward_slr

BLOCH_TOL = 1e-3
DRIFT_TOL = 1e-12
PAIR_TOL = 0.02
# keys left out when comparing reruns
TIMING_KEYS = ("timing",)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _add_design_flags(p):
    g = p.add_argument_group("design")
    g.add_argument("--config", help="JSON file with any RunConfig field")
    g.add_argument("--nb", type=int)
    g.add_argument("--tbw", type=float)
    g.add_argument("--band-gap", dest="band_gap", type=float)
    g.add_argument("--n-points", dest="n_points", type=int)
    g.add_argument("--passband-ripple", dest="passband_ripple", type=float)
    g.add_argument("--stopband-ripple", dest="stopband_ripple", type=float)
    g.add_argument("--peak", dest="peak_constraint_gauss", type=float, help="B1 cap in Gauss")
    g.add_argument("--transition-scale", dest="transition_scale", type=float)
    g.add_argument("--ci", action="store_true", default=None, help="small built-in test profile")
    g.add_argument("--out", dest="output_dir", help="output directory")
    g.add_argument("--no-plots", dest="plots", action="store_false", default=None)


def _add_search_flags(p):
    g = p.add_argument_group("search")
    g.add_argument("--strategy", choices=STRATEGIES)
    g.add_argument("--budget", dest="flip_budget", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--lr", dest="learning_rate", type=float)
    g.add_argument("--no-greedy", dest="greedy", action="store_false", default=None)
    g.add_argument("--raw-state", dest="normalize_state", action="store_false", default=None,
                   help="feed unnormalized amplitudes to the policy")
    g.add_argument("--baseline", action="store_true", default=None)
    g.add_argument("--memoize", action="store_true", default=None)
    g.add_argument("--no-reproduction", dest="reproduction", action="store_false", default=None)


def build_parser():
    parser = _Parser(prog="rootflip", description="Root-flipped multiband refocusing pulses.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("design", help="search root patterns and write the best pulse")
    _add_design_flags(p)
    _add_search_flags(p)
    p.add_argument("--checkpoint", help="DeepRF checkpoint path written during the run")
    p.add_argument("--checkpoint-every", type=int, default=50, help="iterations between saves")
    p.add_argument("--resume", help="resume DeepRF from this checkpoint")
    p.add_argument("--excitation", action="store_true", help="also design the matched excitation")

    p = sub.add_parser("sweep", help="DeepRF vs Monte-Carlo over one parameter")
    _add_design_flags(p)
    _add_search_flags(p)
    p.add_argument("--axis", choices=("tbw", "band_gap", "peak"), required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=None)

    p = sub.add_parser("verify", help="ripple and Bloch checks for pulse files")
    _add_design_flags(p)
    p.add_argument("--pulse", required=True, help="refocusing pulse CSV")
    p.add_argument("--compare", help="second refocusing pulse CSV for a pair-profile comparison")
    p.add_argument("--spins", type=int, default=1001)
    return parser


def _config(args) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if v is not None}
    return build_config(flags, getattr(args, "config", None))


def _embedded_config(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    d.pop("output_dir")
    d.pop("plots")
    return d


def run_strategy(cfg: RunConfig, ctx, checkpoint=None, every=50, resume=None):
    if cfg.strategy == "exhaustive":
        return exhaustive_search(ctx)
    if cfg.strategy == "mc":
        return monte_carlo_search(ctx, cfg.flip_budget, cfg.seed)
    if cfg.strategy == "greedy":
        return greedy_tree_search(RootPattern.zeros(ctx.n_root), ctx, cfg.flip_budget,
                                  memoize=cfg.memoize)
    if resume:
        search = DeepRFSearch.load(resume, ctx)
    else:
        search = DeepRFSearch(ctx, cfg.flip_budget, cfg.seed, greedy=cfg.greedy,
                              learning_rate=cfg.learning_rate,
                              normalize_state=cfg.normalize_state, baseline=cfg.baseline,
                              memoize_greedy=cfg.memoize)
    while not search.done:
        search.run(max_iterations=every if checkpoint else None)
        if checkpoint:
            search.save(checkpoint)
    return search.outcome()


def cmd_design(args) -> dict:
    cfg = _config(args)
    spec = cfg.spec()
    out = Path(cfg.output_dir)
    t0 = time.perf_counter()
    ctx = FlipContext(spec)
    outcome = run_strategy(cfg, ctx, args.checkpoint, args.checkpoint_every, args.resume)
    zeros = RootPattern.zeros(ctx.n_root)
    base_peak = ctx.peak(zeros.bits)
    pulse = scaled(ctx.pulse(outcome.best_pattern), spec)
    ref = scaled(ctx.pulse(zeros), spec)
    dur = duration_for_peak(outcome.best_peak, spec.n_points, spec.peak_constraint_gauss)
    base_dur = duration_for_peak(base_peak, spec.n_points, spec.peak_constraint_gauss)

    out.mkdir(parents=True, exist_ok=True)
    write_pulse_csv(pulse, out / "pulse.csv")
    write_pattern(out / "pattern.txt", outcome.best_pattern)
    write_trace_csv(out / "trace.csv", outcome.trace, spec.n_points, spec.peak_constraint_gauss,
                    pulse.gamma_hz_per_gauss)
    write_root_dump(out / "roots.csv", ctx.root_set, outcome.best_pattern)
    result = outcome.to_dict(dur)
    wall = result.pop("wall_time_s")
    payload = {
        "config": _embedded_config(cfg),
        "n_root": ctx.n_root,
        "result": result,
        "min_phase": {"peak_rad": base_peak, "duration_ms": base_dur},
        "duration_ratio_vs_min_phase": base_dur / dur,
    }
    if args.excitation:
        exc = design_matched_excitation(ctx.beta(outcome.best_pattern), spec)
        exc.dwell_s = pulse.dwell_s
        write_pulse_csv(exc, out / "excitation.csv")
        payload["excitation"] = {"n_points": exc.n_points, "duration_ms": exc.duration_ms,
                                 "phase_deviation_rad": exc.meta["phase_deviation"],
                                 "rephase_samples": exc.meta["rephase_samples"]}
    payload["timing"] = {"search_wall_time_s": wall, "total_wall_time_s": time.perf_counter() - t0}
    write_outcome_json(out / "outcome.json", payload)
    if cfg.plots:
        x = [k for k, _ in outcome.trace]
        y = [duration_for_peak(p, spec.n_points, spec.peak_constraint_gauss) for _, p in outcome.trace]
        plotting.plot_traces({outcome.method: (x, y)}, out / "trace")
        plotting.plot_pulse(pulse, out / "pulse", reference=ref)
        flipped = np.zeros(ctx.root_set.roots.size, dtype=bool)
        elig = np.zeros_like(flipped)
        elig[ctx.root_set.eligible_indices] = True
        for bit, i, j in zip(outcome.best_pattern.bits, ctx.root_set.eligible_indices,
                             ctx.root_set.mirror_map):
            if bit:
                flipped[[i, j]] = True
        plotting.plot_roots(apply_pattern(ctx.root_set, outcome.best_pattern), elig, flipped,
                            out / "roots")
    return payload


def _sweep_point(cfg: RunConfig, seeds):
    ctx = FlipContext(cfg.spec())
    rows = []
    for seed in seeds:
        deep = run_strategy(cfg.with_(strategy="deeprf", seed=seed), ctx)
        mc = monte_carlo_search(ctx, cfg.flip_budget, seed)
        rows.append((seed, ctx.n_root, deep.best_peak, mc.best_peak))
    return rows


def cmd_sweep(args) -> dict:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    seeds = args.seeds if args.seeds else [cfg.seed]
    lines = ["axis,value,seed,n_root,deeprf_duration_ms,mc_duration_ms,gain,status,message"]
    summary = []
    base_rows = None
    for value in args.values:
        try:
            if args.axis == "peak":
                point = cfg.with_(peak_constraint_gauss=value)
                point.validate()
                # the search works in radians and does not depend on the B1 cap
                if base_rows is None:
                    base_rows = _sweep_point(cfg, seeds)
                rows = base_rows
            else:
                point = cfg.with_(**{args.axis: value})
                point.validate()
                rows = _sweep_point(point, seeds)
        except RootFlipError as exc:
            lines.append(f"{args.axis},{value!r},,,,,,error,{type(exc).__name__}: {exc}")
            summary.append({"value": value, "status": "error", "message": str(exc)})
            continue
        gains = []
        for seed, n_root, deep_peak, mc_peak in rows:
            d = duration_for_peak(deep_peak, point.n_points, point.peak_constraint_gauss)
            m = duration_for_peak(mc_peak, point.n_points, point.peak_constraint_gauss)
            gains.append(m / d)
            lines.append(f"{args.axis},{value!r},{seed},{n_root},{d!r},{m!r},{m / d!r},ok,")
        summary.append({"value": value, "status": "ok", "mean_gain": float(np.mean(gains)),
                        "gains": gains})
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / f"sweep_{args.axis}.csv", "\n".join(lines) + "\n")
    payload = {"config": _embedded_config(cfg), "axis": args.axis, "seeds": seeds,
               "points": summary}
    write_outcome_json(out / f"sweep_{args.axis}.json", payload)
    ok = [s for s in summary if s["status"] == "ok"]
    if cfg.plots and ok:
        plotting.plot_sweep([s["value"] for s in ok], [s["mean_gain"] for s in ok],
                            out / f"sweep_{args.axis}", args.axis)
    return payload


def _design_beta(pulse):
    """Real design-domain beta of an x-axis pulse (the transform's B is 1j * beta)."""
    b = forward_slr(pulse).b_coeffs
    return (b / 1j).real if np.max(np.abs(b.real)) < 1e-9 * np.max(np.abs(b)) else b / 1j


def cmd_verify(args) -> dict:
    cfg = _config(args)
    spec = cfg.spec()
    out = Path(cfg.output_dir)
    pulse = read_pulse_csv(args.pulse)
    if pulse.n_points != spec.n_points:
        raise ValidationError(f"pulse has {pulse.n_points} samples, config expects {spec.n_points}")
    b = _design_beta(pulse)
    pass_dev, stop_level = beta_ripples(b, spec)
    _, pass_bound, stop_bound = beta_bounds(spec)
    grid = SpinGrid.for_pulse(pulse, spec.tbw, count=args.spins)
    mxy, drift = simulate_refocusing_profile(pulse, grid, return_drift=True)
    w = grid.frequencies(pulse.dwell_s, pulse.gamma_hz_per_gauss)
    analytic = np.abs(np.polyval(b[::-1], np.exp(-1j * w))) ** 2
    bloch_dev = float(np.max(np.abs(np.abs(mxy) - analytic)))
    checks = {
        "passband_ripple": {"value": pass_dev, "bound": 1.25 * pass_bound},
        "stopband_level": {"value": stop_level, "bound": 1.25 * stop_bound},
        "bloch_vs_analytic": {"value": bloch_dev, "bound": BLOCH_TOL},
        "norm_drift_per_step": {"value": drift, "bound": DRIFT_TOL},
    }
    out.mkdir(parents=True, exist_ok=True)
    write_profile_csv(out / "refocusing_profile.csv", grid.positions, mxy)
    profiles = {"refocusing (Bloch)": np.abs(mxy)}
    if args.compare:
        other = read_pulse_csv(args.compare)
        echoes = []
        for p in (pulse, other):
            exc = design_matched_excitation(_design_beta(p), spec)
            exc.dwell_s = p.dwell_s
            g = SpinGrid.for_pulse(p, spec.tbw, count=args.spins)
            mag, ph = simulate_spin_echo(exc, p, g)
            echoes.append((mag, ph, exc))
        for name, (mag, ph, _) in zip(("pulse", "compare"), echoes):
            write_profile_csv(out / f"spin_echo_{name}.csv", grid.positions, mag * np.exp(1j * ph))
        sel = echoes[0][2].meta["layout"].passband_mask(w)
        diff = float(np.max(np.abs(echoes[0][0] - echoes[1][0])[sel]))
        checks["pair_profile_difference"] = {"value": diff, "bound": PAIR_TOL}
        profiles.update({"spin echo": echoes[0][0], "spin echo (compare)": echoes[1][0]})
    for c in checks.values():
        c["pass"] = bool(c["value"] <= c["bound"])
    report = {"config": _embedded_config(cfg), "pulse": str(args.pulse), "checks": checks,
              "pass": all(c["pass"] for c in checks.values())}
    write_outcome_json(out / "verify.json", report)
    if cfg.plots:
        plotting.plot_profiles(grid.positions, profiles, out / "profiles")
    return report


COMMANDS = {"design": cmd_design, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        payload = COMMANDS[args.command](args)
    except RootFlipError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": 3}),
              file=sys.stderr)
        return 3
    except MemoryError as exc:
        print(json.dumps({"error": "MemoryError", "message": str(exc), "exit_code": 4}),
              file=sys.stderr)
        return 4
    print(json.dumps({k: v for k, v in payload.items() if k != "config"}, indent=2))
    if args.command == "verify" and not payload["pass"]:
        return NumericalError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
