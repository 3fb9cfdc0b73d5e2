"""Demo: reproduce the MNIST accuracy table with the published protocol.

Needs the four MNIST IDX files on disk (this sandbox has no network
access, so nothing is downloaded automatically). Each grid cell trains
for 200 epochs; a full grid is several CPU-hours.

Usage:
    python3 demos/04_mnist_table.py --data-dir data/mnist \
        --sizes 300,1000 --seeds 0,1,2 --out runs/mnist_table
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from click.testing import CliRunner

from pkgcn.cli import main as cli_main

FILES = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data-dir", default="data/mnist")
    ap.add_argument("--sizes", default="300,1000")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--out", default="runs/mnist_table")
    ap.add_argument("--arch", default="cnn1", choices=["cnn1", "cnn2"])
    args = ap.parse_args()

    data_dir = Path(args.data_dir)
    missing = [f for f in FILES if not (data_dir / f).exists() and not (data_dir / (f + ".gz")).exists()]
    if missing:
        print(f"MNIST files missing from {data_dir}:")
        for f in missing:
            print(f"  {f}[.gz]")
        print("\nDownload the standard IDX files (e.g. from an MNIST mirror),")
        print("place them there, and re-run. Nothing to do without them.")
        sys.exit(2)

    # published protocol: 40 epochs stage one, 160 stage two, AdaDelta defaults
    config = {
        "dataset": "mnist",
        "data_dir": str(data_dir),
        "arch": args.arch,
        "e1": 40,
        "e2": 160,
        "seeds": [int(s) for s in args.seeds.split(",")],
        "out_dir": args.out,
    }
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as f:
        json.dump(config, f)
        config_path = f.name

    print(f"Running the {args.sizes} x (baseline, v1, v2) x {args.seeds} grid...")
    result = CliRunner().invoke(
        cli_main,
        ["reproduce-table", "--config", config_path, "--sizes", args.sizes],
        catch_exceptions=False,
    )
    print(result.output)
    print(f"Per-run rows: {args.out}/results.csv; mean/std table: {args.out}/summary.csv")
    sys.exit(result.exit_code)


if __name__ == "__main__":
    main()
