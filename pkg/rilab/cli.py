"""Main CLI entry point for rilab."""

import argparse
import dataclasses
import functools
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from rilab import coarse, config, coupling, events, explore, harness, interfaces, observables
from rilab.errors import ConfigError, CriterionFailure
from rilab.excursions import read_packet
from rilab.interlacements import sample_process, vacant_field, write_rle
from rilab.lattice import AnnulusSpec, Box, SiteSet, read_path, read_sites, write_sites
from rilab.potential import box_capacity_bounds, equilibrium_measure
from rilab.walks import WalkConfig

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool = False):
    """Configure logging.

    Args:
        verbose: If True, set level to DEBUG. Otherwise INFO.
                 Can also be overridden via RILAB_LOG_LEVEL env var.
    """
    # Environment variable takes precedence if set
    env_level = os.environ.get("RILAB_LOG_LEVEL")
    if env_level:
        level = getattr(logging, env_level.upper(), logging.INFO)
    else:
        level = logging.DEBUG if verbose else logging.INFO

    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Box):
        return {"lo": list(obj.lo), "hi": list(obj.hi)}
    if isinstance(obj, set | frozenset):
        return sorted(obj)
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def emit(obj, out: str | None = None) -> None:
    """Print JSON to stdout, or write it to ``out``."""
    text = json.dumps(obj, sort_keys=True, indent=2, default=_jsonable)
    if out:
        Path(out).write_text(text + "\n")
        print(f"✅ Wrote {out}")
    else:
        print(text)


def exits(handler):
    """Map errors onto exit codes: 2 config, 3 criterion failure, 4 runtime."""
    @functools.wraps(handler)
    def run(args):
        try:
            handler(args)
        except (ConfigError, FileNotFoundError, FileExistsError) as e:
            print(f"❌ {e}", file=sys.stderr)
            sys.exit(2)
        except CriterionFailure as e:
            print(f"❌ {e}", file=sys.stderr)
            sys.exit(3)
        except Exception as e:
            print(f"❌ Error: {e}", file=sys.stderr)
            sys.exit(4)
    return run


def load_settings(args, **flags) -> config.ExperimentConfig:
    """The --config file (or rilab.yaml) with explicit flags applied on top."""
    return config.resolve_config(args.config).override(**flags)


def _walks(settings: config.ExperimentConfig) -> WalkConfig:
    return WalkConfig(kappa=settings.kappa)


def _rng(seed: int) -> np.random.Generator:
    return harness.trial_rng(seed, 0)


def _site(text: str) -> tuple[int, ...]:
    return tuple(int(c) for c in text.split(","))


@exits
def cmd_init(args):
    """Execute init command."""
    result = config.init_config(target_dir=args.directory)
    print(f"✨ Wrote {result}")
    print()
    print("📋 Next steps:")
    print(f"   1. Edit {config.CONFIG_NAME} to pick an experiment and its parameters")
    print("   2. Run: rilab run --out records.jsonl")
    print("   3. Run: rilab plotdata --records records.jsonl --kind decay")


@exits
def cmd_cap(args):
    """Execute cap command."""
    settings = load_settings(args, kappa=args.kappa, seed=args.seed, mode=args.mode,
                             escape_trials=args.trials)
    if args.set:
        K = read_sites(args.set)
        label = args.set
    else:
        K = SiteSet.from_box(Box.ball(args.box, settings.d))
        label = f"B_{args.box}"
    cfg = _walks(settings)
    measure = equilibrium_measure(K, mode=settings.mode, n=settings.escape_trials, cfg=cfg,
                                  rng=_rng(settings.seed))
    report = {"set": label, "sites": len(K), "cap": measure.total, "stderr": measure.stderr,
              "mode": settings.mode,
              "bias_bound": cfg.bias_bound(K.d) if settings.mode == "mc" else 0.0,
              "truncated": measure.truncated}
    if args.box is not None:
        report["box_bounds"] = list(box_capacity_bounds(2 * args.box + 1, K.d))
    emit(report, args.out)


@exits
def cmd_sample_vacant(args):
    """Execute sample-vacant command."""
    settings = load_settings(args, seed=args.seed, margin=args.window_margin)
    u = args.u if args.u is not None else settings.levels[0]
    u_max = max(args.umax or u, u)
    box = Box.ball(args.L, settings.d)
    K = SiteSet.from_box(box)
    s = sample_process(K, u_max, _walks(settings), _rng(settings.seed),
                       measure=events.box_measure(box),
                       coverage=box.expand(settings.margin))
    V = vacant_field(s, u, box)
    if args.dump:
        write_rle(args.dump, V)
        print(f"✅ Dumped V^{u:g} to {args.dump}", file=sys.stderr)
    emit({"L": args.L, "u": u, "u_max": u_max, "trajectories": s.count,
          "vacant_fraction": float(V.occupancy.mean()), "truncated": s.truncated,
          "jump_levels": s.jump_levels(u).tolist()}, args.out)


def _event_spec(name: str, L: int, u: float, v: float | None, delta: float,
                d: int, L0_minus: int = events.FRAME_SIDE_MIN) -> events.EventSpec:
    origin = (0,) * d
    if name in ("locuniq", "two_arms"):
        kind = "euclidean-double" if name == "two_arms" else "euclidean-ball"
        return events.EventSpec(name, u=u, v=v, delta=delta, d=d, annulus=AnnulusSpec(kind, L))
    if name == "tau_tr":
        return events.EventSpec(name, L=L, u=u, d=d, points=(origin, (L,) + origin[1:]))
    if name in events.BOX_LOCAL_EVENTS:
        return events.EventSpec(name, L=L, u=u, v=v, delta=delta, z=origin, d=d)
    if name in ("w_minus", "o_minus_set"):
        return events.EventSpec(name, u=u, z=origin, L0_minus=L0_minus,
                                region=Box.ball(L, d), d=d)
    if name in events.FINE_EVENTS:
        return events.EventSpec(name, u=u, z=origin, L0=L, d=d)
    return events.EventSpec(name, L=L, u=u, v=v, delta=delta, d=d)


@exits
def cmd_events(args):
    """Execute events command."""
    settings = load_settings(args, seed=args.seed, trials=args.trials, delta=args.delta,
                             L0_minus=args.L0_minus)
    L = args.L or settings.L
    u = args.u if args.u is not None else settings.levels[0]
    spec = _event_spec(args.event, L, u, args.v, settings.delta, settings.d,
                       L0_minus=settings.L0_minus)
    cfg = _walks(settings)
    measure = events.box_measure(events.event_window(spec))
    hits = 0
    for i in range(settings.trials):
        rng = harness.trial_rng(settings.seed, i)
        hits += events.event_trial(spec, rng, cfg, measure).verdict
    record = harness.EstimateRecord(args.event, spec.params(), "rate", trials=settings.trials,
                                    total=hits, total_sq=hits, seed=settings.seed)
    row = {"event": args.event, "params": spec.params(), "hits": hits,
           "trials": settings.trials, "p_hat": record.estimate, "stderr": record.stderr,
           "lo": record.interval[0], "hi": record.interval[1]}
    line = json.dumps(row, sort_keys=True)
    if args.out:
        with open(args.out, "a") as f:
            f.write(line + "\n")
        print(f"✅ Appended to {args.out}")
    else:
        print(line)


@exits
def cmd_couple(args):
    """Execute couple command."""
    settings = load_settings(args, seed=args.seed, trials=args.trials, L=args.L, K=args.K,
                             test_mode=True)
    L, K, d = settings.L, settings.K, settings.d
    kernel = coupling.entrance_kernel_for(L, K, d, k_min=settings.k_min)
    rng = _rng(settings.seed)
    conditioned = included = truncated = 0
    for _ in range(settings.trials):
        record = coupling.slt_couple(L, K, m=args.m, rng=rng, eps=args.eps, m0=args.m0, d=d,
                                     k_min=settings.k_min, kernel=kernel)
        truncated += record.truncated
        if record.counter:
            conditioned += 1
            included += record.incl
    A = SiteSet.from_box(Box.ball(L, d))
    mixing = coupling.entrance_mixing_stat(A, A, K, L, (K * L + 1,) + (0,) * (d - 1))
    emit({"params": {"L": L, "K": K, "m": args.m, "eps": args.eps, "m0": args.m0, "d": d},
          "trials": settings.trials, "counter_events": conditioned,
          "incl_given_U_rate": included / conditioned if conditioned else None,
          "truncated_excursions": truncated, "mixing_max_dev": mixing.max_dev}, args.out)


@exits
def cmd_coarsen(args):
    """Execute coarsen command."""
    settings = load_settings(args, seed=args.seed, N=args.N, K=args.K, L=args.L)
    shells = coarse.build_shells(settings.N, settings.K, settings.L, settings.d,
                                 k_min=settings.k_min)
    stats = coarse.family_stats(shells)
    if args.path:
        paths = [read_path(args.path)]
    else:
        rng = _rng(settings.seed)
        paths = [coarse.random_crossing(settings.N, rng, settings.d)
                 for _ in range(args.random_crossings)]
    reports = []
    for gamma in paths:
        C = coarse.extract_coarsening(gamma, shells)
        report = coarse.check_coarsening(C, shells, gamma)
        reports.append({**dataclasses.asdict(report), "passed": report.passed,
                        "points": C.points.tolist()})
    emit({"N": shells.N, "K": shells.K, "L": shells.L, "n": stats.n,
          "counts": list(stats.counts), "log_family": stats.log_family, "gamma": stats.gamma,
          "within_gamma": stats.within_gamma, "coarsenings": reports}, args.out)


@exits
def cmd_interfaces(args):
    """Execute interfaces command."""
    U = read_sites(args.U)
    V = Box.ball(args.V, U.d)
    sigma = read_sites(args.Sigma)
    result = interfaces.blocking_interfaces(U, V, sigma)
    report = interfaces.verify_interface_properties(result, U, V, sigma)
    if args.layers_dir:
        target = Path(args.layers_dir)
        target.mkdir(parents=True, exist_ok=True)
        for i, layer in enumerate(result.layers, start=1):
            write_sites(target / f"layer_{i}.txt", layer)
        print(f"✅ Wrote {len(result)} layers to {target}", file=sys.stderr)
    emit({"layers": len(result), "sizes": [len(layer) for layer in result.layers],
          "surrounding": report.surrounding, "crossing": report.crossing,
          "maximal": report.maximal, "k_sigma": report.k_sigma, "k_layers": report.k_layers,
          "passed": report.passed}, args.out)


@exits
def cmd_explore(args):
    """Execute explore command."""
    settings = load_settings(args, seed=args.seed, N=args.N, L=args.L, L0=args.L0,
                             test_mode=True)
    d = settings.d
    geometry = explore.ExploreGeometry(
        z=(0,) * d, N=settings.N, L=settings.L, L0=settings.L0,
        y=_site(args.y) if args.y else (0,) * d)
    if args.packet:
        source = read_packet(args.packet)
    else:
        u = args.u if args.u is not None else settings.levels[0]
        measure = events.box_measure(geometry.window)
        s = sample_process(measure.base, u, _walks(settings), _rng(settings.seed),
                           measure=measure)
        source = vacant_field(s, u)
    ctx = explore.sigma_good_points(source, source, source, geometry)
    state = explore.run_exploration(_site(args.x), source, geometry, ctx)
    encounter = explore.encounter_times(state, ctx)
    replay = explore.replay_check(state, _rng(settings.seed + 1))
    emit({**state.snapshot(), "walk": [list(w) for w in state.walk],
          "good_cells": sorted(list(y) for y in ctx.good),
          "invariants_ok": state.invariants_ok,
          "encounter_report": {"located": encounter.located, "complete": encounter.complete,
                               "connected": encounter.connected},
          "replay": dataclasses.asdict(replay)}, args.out)


@exits
def cmd_observable(args):
    """Execute observable command."""
    settings = load_settings(args, seed=args.seed, trials=args.trials, eps=args.eps,
                             L=args.L, K=args.K, test_mode=True)
    rng = _rng(settings.seed)
    cfg = _walks(settings)
    u = args.u if args.u is not None else settings.levels[0]
    n = settings.trials
    if args.check in ("kac", "laplace"):
        K = SiteSet.from_box(Box.ball(args.radius, settings.d))
        if args.check == "kac":
            report = observables.kac_test(K, n, rng, cfg)
        else:
            report = observables.laplace_check(K, u, args.a, n, rng, cfg)
        out = {**dataclasses.asdict(report), "check": args.check}
        if args.check == "laplace":
            out["z"] = report.z
        emit(out, args.out)
        return
    W = observables.weight_V(coarse.line_coarsening(args.boxes, settings.K, settings.L,
                                                    settings.d))
    if args.check == "tail":
        u_plus = settings.u_plus or 2 * u * (1 + settings.eps)
        u_minus = args.u_minus if args.u_minus is not None else u * (1 - settings.eps) / 2
        report = observables.tail_check(W, u, u_plus, u_minus, settings.eps, n, rng, cfg)
        emit({**dataclasses.asdict(report), "check": "tail", "passed": report.passed,
              "cap": W.cap}, args.out)
    else:
        emit({"check": "additivity", "cap": W.cap,
              "pvalue": observables.additivity_pvalue(W, u, n, rng, cfg)}, args.out)


@exits
def cmd_run(args):
    """Execute run command."""
    settings = load_settings(args, experiment=args.experiment, trials=args.trials,
                             seed=args.seed)
    print("=" * 60)
    print(f"Experiment: {settings.experiment}")
    print("=" * 60)
    records = harness.run_experiment(settings, start=args.start, workers=args.workers)
    for r in records:
        lo, hi = r.interval
        print(f"  {r.params}: {r.estimate:.4g} [{lo:.4g}, {hi:.4g}] over {r.trials} trials")
    if args.out:
        harness.write_jsonl(records, args.out, timing=args.timing, append=args.append)
        print(f"✅ Wrote {len(records)} records to {args.out}")
    else:
        sys.stdout.write(harness.dumps_jsonl(records, args.timing))


@exits
def cmd_verify(args):
    """Execute verify command."""
    print("=" * 60)
    print(f"Acceptance suite ({args.level})")
    print("=" * 60)
    print()
    report = harness.verify_suite(args.level, only=args.only, fixtures_path=args.fixtures,
                                  workers=args.workers)
    for r in report.results:
        mark = "✅" if r.passed else "❌"
        detail = f" ({r.detail})" if r.detail else ""
        print(f"{mark} {r.number:2d} {r.name}{detail} [{r.seconds:.1f}s]")
    if args.out:
        emit(report.to_dict(), args.out)
    print()
    report.raise_for_failure()
    print("✅ All criteria passed")


@exits
def cmd_plotdata(args):
    """Execute plotdata command."""
    records = harness.read_jsonl(args.records)
    text = harness.emit_plotdata(records, args.kind)
    if args.out:
        Path(args.out).write_text(text)
        print(f"✅ Wrote {args.out}")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="rilab - random interlacements laboratory",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "-v", "--verbose",
        action="store_true",
        help="Enable debug logging",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment config (default: rilab.yaml if present)")
    common.add_argument("--out", help="Write the result here instead of stdout")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    init_parser = subparsers.add_parser("init", help="Write a commented rilab.yaml")
    init_parser.add_argument("-d", "--directory",
                             help="Directory to write into (default: current directory)")
    init_parser.set_defaults(func=cmd_init)

    cap_parser = subparsers.add_parser("cap", parents=[common], help="Capacity of a set")
    target = cap_parser.add_mutually_exclusive_group(required=True)
    target.add_argument("--set", help="Site-set file")
    target.add_argument("--box", type=int, help="Use the box B_R")
    cap_parser.add_argument("--mode", choices=["exact", "mc"])
    cap_parser.add_argument("--trials", type=int, help="Escape trials per site (mc)")
    cap_parser.add_argument("--kappa", type=float, help="Kill radius factor")
    cap_parser.add_argument("--seed", type=int)
    cap_parser.set_defaults(func=cmd_cap)

    vacant_parser = subparsers.add_parser("sample-vacant", parents=[common],
                                          help="Sample V^u on a box")
    vacant_parser.add_argument("--L", type=int, required=True, help="Radius of the box")
    vacant_parser.add_argument("--u", type=float)
    vacant_parser.add_argument("--umax", type=float, help="Largest sampled label")
    vacant_parser.add_argument("--window-margin", type=int, dest="window_margin")
    vacant_parser.add_argument("--seed", type=int)
    vacant_parser.add_argument("--dump", help="Write the occupancy bitmap (RLE)")
    vacant_parser.set_defaults(func=cmd_sample_vacant)

    events_parser = subparsers.add_parser("events", parents=[common],
                                          help="Estimate the frequency of an event")
    events_parser.add_argument("--event", required=True, choices=sorted(events.ALL_EVENTS))
    events_parser.add_argument("--L", type=int)
    events_parser.add_argument("--u", type=float)
    events_parser.add_argument("--v", type=float)
    events_parser.add_argument("--delta", type=float)
    events_parser.add_argument("--L0-minus", type=int, dest="L0_minus",
                               help="Frame side of w_minus and o_minus_set")
    events_parser.add_argument("--trials", type=int)
    events_parser.add_argument("--seed", type=int)
    events_parser.set_defaults(func=cmd_events)

    couple_parser = subparsers.add_parser("couple", parents=[common],
                                          help="Soft-local-time coupling trials")
    couple_parser.add_argument("--L", type=int)
    couple_parser.add_argument("--K", type=int)
    couple_parser.add_argument("--m", type=int, default=coupling.DEFAULT_HORIZON)
    couple_parser.add_argument("--eps", type=float, default=coupling.DEFAULT_EPS)
    couple_parser.add_argument("--m0", type=int, default=coupling.DEFAULT_M0)
    couple_parser.add_argument("--trials", type=int)
    couple_parser.add_argument("--seed", type=int)
    couple_parser.set_defaults(func=cmd_couple)

    coarsen_parser = subparsers.add_parser("coarsen", parents=[common],
                                           help="Coarse-grain crossings of B_N")
    coarsen_parser.add_argument("--N", type=int)
    coarsen_parser.add_argument("--K", type=int)
    coarsen_parser.add_argument("--L", type=int)
    paths = coarsen_parser.add_mutually_exclusive_group(required=True)
    paths.add_argument("--path", help="Path file")
    paths.add_argument("--random-crossings", type=int, dest="random_crossings")
    coarsen_parser.add_argument("--seed", type=int)
    coarsen_parser.set_defaults(func=cmd_coarsen)

    interfaces_parser = subparsers.add_parser("interfaces", parents=[common],
                                              help="Blocking interfaces of Σ")
    interfaces_parser.add_argument("--U", required=True, help="Site-set file")
    interfaces_parser.add_argument("--V", type=int, required=True, help="Radius of the box V")
    interfaces_parser.add_argument("--Sigma", required=True, help="Site-set file")
    interfaces_parser.add_argument("--layers-dir", dest="layers_dir",
                                   help="Write each layer as a site-set file here")
    interfaces_parser.set_defaults(func=cmd_interfaces)

    explore_parser = subparsers.add_parser("explore", parents=[common],
                                           help="Explore a cluster from ∂C̃_z")
    explore_parser.add_argument("--x", required=True, help="Start site, e.g. -7,0,0")
    explore_parser.add_argument("--L0", type=int)
    explore_parser.add_argument("--N", type=int)
    explore_parser.add_argument("--L", type=int)
    explore_parser.add_argument("--y", help="Reference point of the fine cells")
    explore_parser.add_argument("--packet", help="Packet file (default: sample V^u)")
    explore_parser.add_argument("--u", type=float)
    explore_parser.add_argument("--seed", type=int)
    explore_parser.set_defaults(func=cmd_explore)

    observable_parser = subparsers.add_parser("observable", parents=[common],
                                              help="Checks of the harmonic observables")
    observable_parser.add_argument("--check", required=True,
                                   choices=["kac", "laplace", "tail", "additivity"])
    observable_parser.add_argument("--u", type=float)
    observable_parser.add_argument("--a", type=float, default=0.3)
    observable_parser.add_argument("--radius", type=int, default=2, help="Σ = B_R (kac, laplace)")
    observable_parser.add_argument("--boxes", type=int, default=2, help="Boxes of the coarsening")
    observable_parser.add_argument("--K", type=int)
    observable_parser.add_argument("--L", type=int)
    observable_parser.add_argument("--eps", type=float)
    observable_parser.add_argument("--u-minus", type=float, dest="u_minus")
    observable_parser.add_argument("--trials", type=int)
    observable_parser.add_argument("--seed", type=int)
    observable_parser.set_defaults(func=cmd_observable)

    run_parser = subparsers.add_parser("run", parents=[common],
                                       help="Run the configured batch experiment")
    run_parser.add_argument("--experiment", choices=config.EXPERIMENTS)
    run_parser.add_argument("--trials", type=int)
    run_parser.add_argument("--seed", type=int)
    run_parser.add_argument("--start", type=int, default=0, help="Index of the first trial")
    run_parser.add_argument("--workers", type=int, help="Pool size (default: RILAB_THREADS)")
    run_parser.add_argument("--append", action="store_true", help="Append to --out")
    run_parser.add_argument("--timing", action="store_true", help="Record wall times")
    run_parser.set_defaults(func=cmd_run)

    verify_parser = subparsers.add_parser("verify", parents=[common],
                                          help="Run the acceptance criteria")
    verify_parser.add_argument("--level", choices=["fast", "full"], default="fast")
    verify_parser.add_argument("--only", type=int, nargs="+", metavar="N")
    verify_parser.add_argument("--fixtures", help="Alternative fixture file")
    verify_parser.add_argument("--workers", type=int)
    verify_parser.set_defaults(func=cmd_verify)

    plot_parser = subparsers.add_parser("plotdata", parents=[common],
                                        help="CSV from JSONL records")
    plot_parser.add_argument("--records", required=True, help="JSONL file")
    plot_parser.add_argument("--kind", required=True, choices=sorted(harness.PLOT_COLUMNS))
    plot_parser.set_defaults(func=cmd_plotdata)
    return parser


def main():
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args()

    # Configure logging based on -v flag
    configure_logging(verbose=args.verbose)

    if not args.command:
        parser.print_help()
        sys.exit(1)

    args.func(args)


if __name__ == "__main__":
    main()
