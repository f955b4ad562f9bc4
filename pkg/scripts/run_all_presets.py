#!/usr/bin/env python3
"""Run every experiment preset and collect the final-epoch numbers.

Usage: python scripts/run_all_presets.py [--out DIR] [--only NAME ...]

Writes each preset's artifacts to DIR/<preset>/ and prints a one-line
summary (final average global accuracy and total client traffic) per
preset. Everything is seeded; re-running reproduces identical files.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from fedmail.cli import main as fedmail_main
from fedmail.config import PRESETS


def run_one(name: str, out_root: Path) -> dict:
    out = out_root / name
    start = time.perf_counter()
    code = fedmail_main(["run", "--preset", name, "--out", str(out)])
    elapsed = time.perf_counter() - start
    if code != 0:
        raise SystemExit(f"preset {name} failed with exit code {code}")
    summary = json.loads((out / "summary.json").read_text())
    return {
        "preset": name,
        "seconds": elapsed,
        "final_epoch": summary["final_epoch"],
        "global_avg_accuracy": summary["averages"]["global"]["accuracy"],
        "bytes_per_client_per_epoch": summary["ledger"]["bytes_per_active_client_per_epoch"],
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/presets", help="output root directory")
    parser.add_argument("--only", nargs="*", help="subset of preset names to run")
    args = parser.parse_args(argv)

    names = args.only or sorted(PRESETS)
    unknown = set(names) - set(PRESETS)
    if unknown:
        parser.error(f"unknown presets: {', '.join(sorted(unknown))}")

    out_root = Path(args.out)
    results = []
    for name in names:
        result = run_one(name, out_root)
        results.append(result)
        print(
            f"{result['preset']:<16} epoch {result['final_epoch']:>3} "
            f"acc {result['global_avg_accuracy']:.4f} "
            f"{result['bytes_per_client_per_epoch']:>9} B/client/epoch "
            f"({result['seconds']:.1f}s)"
        )
    (out_root / "index.json").write_text(json.dumps(results, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
