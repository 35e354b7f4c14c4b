"""Command-line front end: ``risjcas {run,sweep,gradcheck,refbp,convergence}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys

from . import harness, verify
from .baselines import ALL_SCHEMES, SchemeId
from .model import sample_channels
from .refbp import design_reference, dump_csv
from .solver import admm_solve


def _schemes(text: str | None) -> tuple[SchemeId, ...]:
    if not text:
        return (SchemeId.PROPOSED,)
    if text == "all":
        return ALL_SCHEMES
    return tuple(SchemeId(s.strip()) for s in text.split(",") if s.strip())


def _overrides(args) -> dict:
    out = {}
    for item in args.set or ():
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if args.seed is not None:
        out["base_seed"] = str(args.seed)
    return out


def _config(args):
    return harness.load_config(args.config, desk=args.desk, overrides=_overrides(args))


def _write_rows(rows, args) -> None:
    if args.out:
        harness.emit(rows, args.out, args.format)
    elif args.format == "json":
        json.dump([harness.row_dict(r) for r in rows], sys.stdout, indent=1)
        print()
    else:
        print(harness.CSV_HEADER)
        cols = harness.CSV_HEADER.split(",")[1:]
        for r in rows:
            print(",".join([r.scheme] + [harness._fmt(getattr(r, c)) for c in cols]))


def cmd_run(args) -> int:
    cfg = _config(args)
    rows = [harness.run_trial(cfg, s, args.trial) for s in _schemes(args.scheme)]
    _write_rows(rows, args)
    return int(any(r.failed for r in rows))


def cmd_sweep(args) -> int:
    if args.axis is None and args.config is None:
        raise SystemExit("sweep needs --config <sweep file> or --axis/--values")
    if args.config is not None and args.axis is None:
        spec = harness.SweepSpec.from_file(args.config, desk=args.desk, overrides=_overrides(args))
        if args.trials is not None or args.scheme is not None or args.values is not None:
            spec = harness.SweepSpec(
                base=spec.base,
                axis=spec.axis,
                values=harness._parse_list(args.values) if args.values else spec.values,
                trials=args.trials if args.trials is not None else spec.trials,
                schemes=_schemes(args.scheme) if args.scheme else spec.schemes,
            )
    else:
        if not args.values:
            raise SystemExit("--axis requires --values")
        spec = harness.SweepSpec(
            base=_config(args),
            axis=args.axis,
            values=tuple(harness._parse_list(args.values)),
            trials=args.trials if args.trials is not None else 20,
            schemes=_schemes(args.scheme),
        )
    result = harness.run_sweep(spec, parallel=args.parallel)
    _write_rows(result.rows, args)
    print(f"# summary over {spec.trials} trials per point", file=sys.stderr)
    for rec in result.summary:
        print(
            f"# {rec['scheme']:12s} {spec.axis}={rec['axis']:g}: "
            f"bp_mse_db {rec['bp_mse_db_mean']:.3f} +- {rec['bp_mse_db_std']:.3f}, "
            f"feasibility {rec['feasibility_mean']:.3f} +- {rec['feasibility_std']:.3f}, "
            f"failed {rec['failed']}",
            file=sys.stderr,
        )
    return int(any(r.failed for r in result.rows))


def cmd_gradcheck(args) -> int:
    results = verify.run_all(args.scale)
    for res in results:
        print(res.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return int(bool(failed))


def cmd_refbp(args) -> int:
    cfg = _config(args)
    seed = harness.trial_seed(cfg.base_seed, args.trial)
    ref = design_reference(cfg, sample_channels(cfg, seed), seed)
    out = args.out or sys.stdout
    if isinstance(out, str):
        dump_csv(ref, cfg.angle_grid, out)
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["angle_deg"] + [f"ref_sc{n}" for n in range(cfg.n_sc)])
        for ang, row in zip(cfg.angle_grid, ref.values):
            w.writerow([f"{ang:.9g}"] + [f"{x:.9g}" for x in row])
    print(f"# reference scale {ref.scale:.9g}", file=sys.stderr)
    return 0


def cmd_convergence(args) -> int:
    cfg = _config(args)
    seed = harness.trial_seed(cfg.base_seed, args.trial)
    ch = sample_channels(cfg, seed)
    ref = design_reference(cfg, ch, seed)
    state, _ = admm_solve(cfg, ch, ref, seed, min_iters=cfg.admm_max_iters)
    cols = ["iteration", "objective", "aux_objective", "lagrangian", "residual", "rel_residual",
            "feasibility", "rho1", "rho2", "rho3"]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for h in state.history:
            w.writerow([harness._fmt(getattr(h, c)) for c in cols])
    finally:
        if args.out:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risjcas", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, rows=True):
        sp.add_argument("--config", help="key=value scenario (or sweep) file")
        sp.add_argument("--desk", action="store_true", help="start from the small desk scenario")
        sp.add_argument("--seed", type=lambda s: int(s, 0), help="base seed (u64)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--out", help="output path (default: stdout)")
        if rows:
            sp.add_argument("--format", choices=("csv", "json"), default="csv")
            sp.add_argument("--scheme", help="scheme id, comma list, or 'all'")

    sp = sub.add_parser("run", help="one trial of one scenario")
    common(sp)
    sp.add_argument("--trial", type=int, default=0)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="Monte-Carlo sweep over one axis")
    common(sp)
    sp.add_argument("--axis", choices=harness.SWEEP_AXES)
    sp.add_argument("--values", help="comma-separated axis values")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--parallel", type=int, default=1, help="worker processes")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gradcheck", help="run the verification suites")
    sp.add_argument("--scale", choices=("small", "default"), default="default")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("refbp", help="dump the reference beampattern")
    common(sp, rows=False)
    sp.add_argument("--trial", type=int, default=0)
    sp.set_defaults(func=cmd_refbp)

    sp = sub.add_parser("convergence", help="dump the per-iteration ADMM history")
    common(sp, rows=False)
    sp.add_argument("--trial", type=int, default=0)
    sp.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
