"""Regenerate the example datasets under data/ from the synthetic designs."""
import argparse
from pathlib import Path

from blpbounds.dataset import Dataset, save_csv
from blpbounds.mc import DGPSpec, simulate_dgp

DESIGNS = {
    "interval_example.csv": (DGPSpec(kind="interval_mean", half_width=0.5), 800, 101),
    "quantile_example.csv": (DGPSpec(kind="interval_quantile", half_width=0.3), 800, 102),
    "selection_example.csv": (DGPSpec(kind="selection", noise="uniform",
                                      v_levels=(0.0, 1.0, 2.0), v_probs=(0.75, 0.85, 0.95)),
                              1000, 103),
    "point_example.csv": (DGPSpec(kind="interval_mean", half_width=0.0), 400, 104),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).resolve().parent.parent / "data", type=Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, (spec, n, seed) in DESIGNS.items():
        ds = simulate_dgp(spec, n, seed)
        ds = Dataset({k: v for k, v in ds.columns.items() if k != "const"}, ds.roles)
        save_csv(ds, args.out / name)
        print(f"wrote {args.out / name} ({n} rows)")


if __name__ == "__main__":
    main()
