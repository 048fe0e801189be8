"""Convergence sweep over the standard non-Gaussian channels.

Writes one JSON and one CSV report per (channel, alpha) into the output
directory and prints the final distances.

    python3 scripts/run_convergence.py --out results/convergence --cutoff 24 --kmax 7
"""

import argparse
from pathlib import Path

from bosonic_clt.analysis import convergence_study
from bosonic_clt.channels import (
    additive_noise_channel,
    dephasing_channel,
    replacement_channel,
    two_point_noise,
    von_mises,
)
from bosonic_clt.fock import FockSpaceConfig, fock_state


def channels(cfg):
    return {
        "dephasing_k2": dephasing_channel(von_mises(2.0), cfg),
        "replacement_fock1": replacement_channel(fock_state(1, cfg)),
        "two_point_noise": additive_noise_channel(two_point_noise(0.5), cfg),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results/convergence")
    parser.add_argument("--cutoff", type=int, default=24)
    parser.add_argument("--kmax", type=int, default=7)
    parser.add_argument("--alpha", type=complex, nargs="+", default=[0.0, 0.5, 1.0])
    parser.add_argument("--check-k", type=int, default=1, help="Kraus-level cross-check depth")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = FockSpaceConfig(args.cutoff)
    for name, ch in channels(cfg).items():
        for alpha in args.alpha:
            rep = convergence_study(ch, alpha, args.kmax, channel_check_k=args.check_k)
            stem = f"{name}_alpha{alpha.real:g}{alpha.imag:+g}j"
            (out / f"{stem}.json").write_text(rep.to_json() + "\n")
            (out / f"{stem}.csv").write_text(rep.to_csv())
            dist = rep.column("trace_distance")
            print(f"{stem:40s} k=1 {dist[1]:.4e}  k={args.kmax} {dist[-1]:.4e}")


if __name__ == "__main__":
    main()
