"""Paired-seed comparison of all four schemes at desk scale (win rates and means).

    python3 scripts/ris_benefit.py --trials 20 --set gamma_db=8
"""

import argparse

import numpy as np

from risjcas.baselines import ALL_SCHEMES
from risjcas.verify import desk_config, paired_runs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    cfg = desk_config(**dict(s.split("=", 1) for s in args.set))
    res = paired_runs(cfg, ALL_SCHEMES, args.trials)
    for name, v in res.items():
        print(f"{name:12s} mse {v[:, 0].mean():7.2f} dB  feasibility {v[:, 1].mean():.3f}")
    p, h, f, fr = res["proposed"], res["hb_rnd_ris"], res["fdb_ris"], res["fdb_rnd_ris"]
    print(f"proposed beats hb_rnd_ris on MSE in {np.mean(p[:, 0] < h[:, 0]):.0%} of pairs")
    print(f"proposed beats hb_rnd_ris on feasibility in {np.mean(p[:, 1] > h[:, 1]):.0%} of pairs "
          f"(ties {np.mean(p[:, 1] == h[:, 1]):.0%})")
    print(f"fdb_ris beats fdb_rnd_ris on MSE in {np.mean(f[:, 0] < fr[:, 0]):.0%} of pairs")


if __name__ == "__main__":
    main()
