"""Pointwise and uniform bootstrap coverage on a Monte Carlo config.

Example: python scripts/coverage_study.py configs/mc_interval_mean.yaml --R 100
"""
import argparse
import json

import yaml

from blpbounds.mc import DGPSpec, coverage_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config")
    ap.add_argument("--R", type=int, help="override the number of replications")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    with open(args.config, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    m = cfg["mc"]
    rep = coverage_experiment(DGPSpec.from_dict(m["dgp"]), args.R or m["R"], m["n"], m["B"],
                              m["level"], cfg.get("seed", 0), uniform=m.get("uniform", True),
                              threads=args.threads)
    print(json.dumps(rep, indent=2))


if __name__ == "__main__":
    main()
