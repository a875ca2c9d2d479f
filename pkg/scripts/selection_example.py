"""Selection bounds on the shipped example data, with and without the
stochastic-dominance restriction, projected onto the slope."""
import argparse
from dataclasses import replace
from pathlib import Path

from blpbounds.config import RunConfig
from blpbounds.dataset import load_csv
from blpbounds.pipeline import run_pipeline
from blpbounds.support import project_bounds

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=ROOT / "configs" / "selection_dominance.yaml", type=Path)
    args = ap.parse_args()
    cfg = RunConfig.load(args.config)
    ds = load_csv(cfg.data_path(), cfg["data"]["roles"])
    restricted = cfg.pipeline(ds.d)
    plain = replace(restricted, restriction=None)
    rows = []
    for name, p in (("no restriction", plain), ("stochastic dominance", restricted)):
        _, ss = run_pipeline(ds, p)
        lo, hi = project_bounds(ss, 1)
        rows.append((name, lo, hi))
    print(f"{'alpha':>6} " + " ".join(f"{name:>24}" for name, _, _ in rows))
    for a, alpha in enumerate(restricted.grid.values):
        cells = " ".join(f"[{lo[a]:9.4f}, {hi[a]:9.4f}]" for _, lo, hi in rows)
        print(f"{alpha:6.3f} {cells}")


if __name__ == "__main__":
    main()
