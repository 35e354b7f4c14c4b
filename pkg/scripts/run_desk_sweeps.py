"""Monte-Carlo sweeps over users, RIS size, SINR threshold and SNR at desk scale.

Writes one CSV per axis into ``--outdir`` and prints the per-point summary.

    python3 scripts/run_desk_sweeps.py --outdir results --trials 20 --parallel 1
"""

import argparse
from pathlib import Path

from risjcas.baselines import ALL_SCHEMES
from risjcas.harness import SweepSpec, emit, load_config, run_sweep

AXES = {
    "n_users": (1, 2, 3),
    "n_ris": (4, 8, 16),
    "sinr_threshold_db": (0, 3, 6, 9),
    "snr_db": (15, 25, 35),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--axes", default=",".join(AXES), help="comma-separated subset of axes")
    args = ap.parse_args()

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    base = load_config(desk=True)
    for axis in args.axes.split(","):
        spec = SweepSpec(base, axis, AXES[axis], trials=args.trials, schemes=ALL_SCHEMES)
        res = run_sweep(spec, parallel=args.parallel)
        emit(res.rows, out / f"sweep_{axis}.csv")
        print(f"== {axis}")
        for rec in res.summary:
            print(
                f"{rec['scheme']:12s} {rec['axis']:6g}  mse {rec['bp_mse_db_mean']:7.2f} dB  "
                f"feas {rec['feasibility_mean']:.3f}  sinr {rec['avg_sinr_db_mean']:6.2f} dB  "
                f"failed {rec['failed']}"
            )


if __name__ == "__main__":
    main()
