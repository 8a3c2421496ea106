"""Run a scaled-down benchmark sweep through the command line entry point.

Sweeps two deadlines and two epsilon values over one simple and one hard
10-vertex instance with both estimators, prints the built-in summary
tables, then reads the CSV back and shows the row layout.  The same entry
point with no size flags reproduces the full default sweep.
"""

import csv
import tempfile
from pathlib import Path

from dsop.cli import main as cli_main


def main():
    out = Path(tempfile.mkdtemp()) / "sweep.csv"
    argv = [
        "benchmark",
        "--out", str(out),
        "--vertices", "10",
        "--deadlines", "15", "25",
        "--epsilons", "0.2", "0.4",
        "--reps", "1",
        "--hard-reps", "1",
        "--max-iterations", "40",
        "--sample-count", "80",
        "--seed", "11",
    ]
    code = cli_main(argv)
    print(f"\nexit code {code}, csv at {out}")

    with out.open() as fh:
        lines = fh.read().splitlines()
    print(f"{len(lines)} lines (version comment, header, one row per run):")
    for line in lines[:4]:
        print(f"  {line}")

    rows = list(csv.DictReader(line for line in lines if not line.startswith("#")))
    by_method = {}
    for row in rows:
        by_method.setdefault((row["method"], row["estimator"]), []).append(
            float(row["reward"])
        )
    print("\nmean reward by method and estimator:")
    for (method, estimator), rewards in sorted(by_method.items()):
        print(f"  {method:>2s} / {estimator:<8s} {sum(rewards) / len(rewards):7.1f}")

    sidecar = out.with_suffix(".csv.paths.json")
    print(f"\nsidecar with per-row paths and generator settings: {sidecar.name}, "
          f"exists: {sidecar.exists()}")


if __name__ == "__main__":
    main()
