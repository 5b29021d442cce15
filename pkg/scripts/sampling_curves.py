#!/usr/bin/env python3
"""Compare tag coverage of greedy selection against random sampling across
data ratios, on the tag profiles of a finished pipeline run."""

import argparse
import json
from pathlib import Path

from proctag.assess import SampleSpec, random_sample, sample, tag_coverage
from proctag.tagnorm import TagProfile


def load_profiles(out_dir: Path) -> list[TagProfile]:
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    profiles = []
    for line in (out_dir / manifest["tags"]).read_text(encoding="utf-8").splitlines():
        obj = json.loads(line)
        tags = obj["annotations"]["tags"].get("aggregated") or []
        profiles.append(TagProfile(obj["record_id"], list(tags), stage="aggregated"))
    return profiles


def coverage_of(ids, profiles):
    chosen = set(ids)
    subset = [p for p in profiles if p.record_id in chosen]
    return tag_coverage(subset, profiles) if subset else 0.0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_out", help="pipeline output directory")
    ap.add_argument("--seeds", type=int, default=25, help="random baselines per ratio")
    args = ap.parse_args()

    profiles = load_profiles(Path(args.out))
    print(f"{len(profiles)} records\n")
    print(f"{'ratio':>6} {'greedy':>8} {'random(mean)':>13}")
    for pct in (5, 10, 20, 30, 50, 75, 100):
        ratio = pct / 100
        greedy = coverage_of(sample(profiles, SampleSpec(mode="ratio", ratio=ratio)),
                             profiles)
        rand = sum(coverage_of(random_sample(profiles, ratio, seed), profiles)
                   for seed in range(args.seeds)) / args.seeds
        print(f"{pct:>5}% {greedy:>8.3f} {rand:>13.3f}")


if __name__ == "__main__":
    main()
