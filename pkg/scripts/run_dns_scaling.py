"""Check how pore-scale velocities scale when the period is halved.

Solves the pore-resolving reference problem at two periods and compares
mean velocity magnitudes along horizontal lines: near the obstacle-top
line the mean speed should halve with the period, while inside the
porous band it should quarter (the bulk velocity follows the
permeability, which scales with the squared period).
"""

from __future__ import annotations

import argparse
from pathlib import Path

from stokesdarcy.dns import DnsResolution, solve_dns
from stokesdarcy.io import write_csv
from stokesdarcy.presets import CONFIGURATIONS, PRESETS


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", type=int, default=1, choices=(1, 2, 3))
    parser.add_argument("--configuration", default="C1", choices=("C1", "C2"))
    parser.add_argument(
        "--ells", type=float, nargs=2, default=[1.0 / 10.0, 1.0 / 20.0]
    )
    parser.add_argument("--cells", type=int, default=10, help="elements per pore")
    parser.add_argument("--order", type=int, default=2, choices=(1, 2))
    parser.add_argument("--lines", type=float, nargs="+", default=[0.0, -0.2])
    parser.add_argument("--out", type=Path, default=Path("results/dns_scaling.csv"))
    args = parser.parse_args()

    preset = PRESETS[args.preset]
    s_hat = CONFIGURATIONS[args.configuration].size_ratio
    resolution = DnsResolution(n_per_cell=args.cells, order=args.order)

    speeds = {}
    for ell in args.ells:
        lattice = preset.lattice(ell, s_hat)
        solution = solve_dns(preset, lattice, resolution)
        speeds[ell] = {y: solution.mean_speed(y) for y in args.lines}
        print(
            f"ell={ell:g}: "
            + ", ".join(f"|u|(y={y:g})={speeds[ell][y]:.6e}" for y in args.lines)
        )
        del solution

    coarse, fine = args.ells
    rows = []
    for y in args.lines:
        ratio = speeds[fine][y] / speeds[coarse][y]
        rows.append([y, speeds[coarse][y], speeds[fine][y], ratio])
        print(f"y={y:g}: ratio {ratio:.4f}")

    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(
        args.out,
        ["y", f"speed_ell_{coarse:g}", f"speed_ell_{fine:g}", "ratio"],
        rows,
    )
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
