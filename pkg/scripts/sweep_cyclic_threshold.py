#!/usr/bin/env python3
"""Sweep the cyclic threshold over one synthetic benchmark.

Prints mean AP per threshold value, mirroring the kind of ablation one
would run on real data to pick the filter width.
"""

import argparse
import time

from noctis.assignment import run_matching
from noctis.descriptors import read_scene_proposals, read_template_library
from noctis.evaluation import average_precision, load_ground_truth
from noctis.scoring import ScoreConfig
from noctis.synth import SynthConfig, generate_benchmark


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=2025)
    p.add_argument("--objects", type=int, default=5)
    p.add_argument("--templates", type=int, default=7)
    p.add_argument("--proposals", type=int, default=20)
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--grid", type=int, default=16)
    p.add_argument("--noise-sigma", type=float, default=0.15)
    p.add_argument("--distractor-fraction", type=float, default=0.2)
    p.add_argument(
        "--thresholds", type=float, nargs="+", default=[0, 1, 2, 3, 4, 5, 6, 7, 8]
    )
    p.add_argument("--out", required=True)
    return p.parse_args()


def main():
    args = parse_args()
    cfg = SynthConfig(
        seed=args.seed,
        n_objects=args.objects,
        n_templates=args.templates,
        n_proposals=args.proposals,
        embed_dim=args.embed_dim,
        grid=args.grid,
        noise_sigma=args.noise_sigma,
        distractor_fraction=args.distractor_fraction,
    )
    generate_benchmark(cfg, args.out)
    lib = read_template_library(f"{args.out}/templates")
    scene = read_scene_proposals(f"{args.out}/proposals")
    gts = load_ground_truth(f"{args.out}/gt.json")

    print(f"{'delta_ct':>9}  {'mean_ap':>8}  {'dets':>5}  {'secs':>6}")
    for delta_ct in args.thresholds:
        t0 = time.monotonic()
        dets = run_matching(scene, lib, ScoreConfig(delta_ct=delta_ct))
        elapsed = time.monotonic() - t0
        mean_ap = average_precision(dets, gts).mean_ap
        print(f"{delta_ct:9.1f}  {mean_ap:8.4f}  {len(dets):5d}  {elapsed:6.2f}")


if __name__ == "__main__":
    main()
