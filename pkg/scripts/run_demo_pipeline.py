#!/usr/bin/env python3
"""Run the full offline pipeline (mock backend, hashing embedder) over a
dataset and print the resulting vocabulary and subset report."""

import argparse
import json
import sys
from pathlib import Path

from proctag.cli import run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", default="demo_data/records.jsonl")
    ap.add_argument("--out", default="demo_out")
    ap.add_argument("--ratio", type=float, default=0.3)
    args = ap.parse_args()

    code = run(["pipeline", "--backend", "mock",
                "--dataset", args.dataset, "--out", args.out,
                "--mode", "ratio", "--ratio", str(args.ratio)])
    if code != 0:
        sys.exit(code)

    out = Path(args.out)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    vocab = json.loads((out / manifest["vocab"]).read_text(encoding="utf-8"))
    sample = json.loads((out / manifest["sample"]).read_text(encoding="utf-8"))

    stages = vocab["stages"]
    print("\nvocabulary size by stage:")
    for stage in ("raw", "filtered", "clustered", "aggregated"):
        print(f"  {stage:<11} {len(stages[stage])}")
    if vocab["merges"]:
        print("applied merges:")
        for m in vocab["merges"]:
            print(f"  {m['first']} + {m['second']} -> {m['merged']} "
                  f"(support {m['support']}, confidence {m['confidence']:.2f})")
    print(f"\nselected {sample['count']} records at ratio {args.ratio}; "
          f"subset coverage {sample['coverage']:.3f}")
    print(f"subset assessment: {json.dumps(sample['assessment'])}")


if __name__ == "__main__":
    main()
