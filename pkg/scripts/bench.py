"""Rasterizer throughput report (tiled vs reference) written to a JSON file.

Defaults are the full-scale setting: 100k random Gaussians at 1024x1024.  The
reference path visits every Gaussian at every pixel, so expect it to take
minutes per frame at that size.
"""

import argparse
import sys

from gprt.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gaussians", type=int, default=100_000)
    ap.add_argument("--resolution", type=int, default=1024)
    ap.add_argument("--repetitions", type=int, default=1)
    ap.add_argument("--out", default="bench_report.json")
    args = ap.parse_args()
    return cli_main(["bench", "--gaussians", str(args.gaussians), "--resolution", str(args.resolution),
                     "--repetitions", str(args.repetitions), "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
