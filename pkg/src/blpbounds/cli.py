"""Command-line front end.

Usage::

    blpbounds [--threads N] {validate,bounds,support,infer,test,mc} CONFIG [--set k=v ...] [--out DIR]
    blpbounds plot REPORT --kind {bounds_vs_alpha,band_vs_alpha,polygon_2d} [--out FILE]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.  On failure a single JSON line ``{"error": ..., "exit": ..., "message": ...}``
is written to stderr.  ``BLPBOUNDS_OUTPUT_DIR`` and ``BLPBOUNDS_THREADS``
override the output directory and thread count.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import crossing_diagnostic
from .config import RunConfig, json_ready
from .dataset import (Dataset, JitterPlan, discrete_columns, jitter_discrete, load_csv,
                      validate)
from .errors import BlpError, ConfigError, DataError, NumericalError, ParameterError
from .inference import (bayesian_bootstrap, pointwise_report, sign_positivity_test,
                        uniform_band)
from .mc import DGPSpec, coverage_experiment, default_pipeline
from .pipeline import prepare
from .support import beta1_closed_form, project_bounds, reconstruct_polygon_2d

ENV_OUT = "BLPBOUNDS_OUTPUT_DIR"
ENV_THREADS = "BLPBOUNDS_THREADS"
PLOT_KINDS = ("bounds_vs_alpha", "band_vs_alpha", "polygon_2d")


# ------------------------------------------------------------------ output

class Run:
    """Carries the effective config and writes provenance-stamped files."""

    def __init__(self, cfg: RunConfig, out_dir: Path, threads: int, caught=None):
        self.cfg = cfg
        self.out = out_dir
        self.threads = threads
        self.warnings: list[str] = []
        self._caught = caught if caught is not None else []

    @property
    def provenance(self) -> dict:
        return {"version": __version__, "seed": self.cfg.seed,
                "config_hash": self.cfg.config_hash}

    def write_json(self, name: str, payload: dict) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        doc = {"provenance": self.provenance, "config": self.cfg.tree,
               "warnings": sorted(set(self.warnings) | {str(w.message) for w in self._caught}),
               **payload}
        path = self.out / name
        path.write_text(json.dumps(json_ready(doc), sort_keys=True, indent=1) + "\n",
                        encoding="utf-8")
        return path

    def write_csv(self, name: str, header, rows) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        write_tidy_csv(path, header, rows, self.provenance)
        return path


def write_tidy_csv(path, header, rows, provenance: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# provenance " + json.dumps(provenance, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_tidy_csv(path) -> tuple[dict, list[dict]]:
    """Inverse of :func:`write_tidy_csv`: (provenance, rows as dicts)."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        prov = json.loads(first[len("# provenance "):]) if first.startswith("# provenance ") else {}
        body = fh.read() if prov else first + fh.read()
    return prov, list(csv.DictReader(io.StringIO(body)))


# ------------------------------------------------------------------ stages

def load_data(cfg: RunConfig) -> Dataset:
    path = cfg.data_path()
    if not path.exists():
        raise ConfigError(f"data file '{path}' not found")
    roles = cfg["data"]["roles"]
    if not roles or "x" not in roles:
        raise ConfigError("data.roles must bind at least the x role")
    ds = load_csv(path, roles)
    rep = validate(ds)
    if not rep.ok:
        v = rep.violations[0]
        raise DataError(f"{len(rep.violations)} violation(s); first: {json.dumps(v, sort_keys=True)}")
    return ds


def maybe_jitter(run: Run, ds: Dataset, pipeline):
    """Two-pass jitter: fit once, size the noise from the fitted bounds,
    perturb the discrete regressors, and return the jittered dataset."""
    jc = run.cfg["jitter"]
    if not jc["enabled"]:
        return ds
    cols = jc["columns"] or discrete_columns(ds)
    if not cols:
        run.warnings.append("jitter enabled but no discrete regressors found")
        return ds
    bs = prepare(ds, pipeline).bounds()
    plan = JitterPlan.from_surface(float(jc["delta"]), bs.theta0, bs.theta1, cols,
                                   run.cfg.jitter_seed())
    return jitter_discrete(ds, plan)


def fit(run: Run):
    ds = load_data(run.cfg)
    pipeline = run.cfg.pipeline(ds.d)
    ds = maybe_jitter(run, ds, pipeline)
    prep = prepare(ds, pipeline)
    bs, ss = prep.fit()
    return ds, pipeline, prep, bs, ss


def support_payload(ds, bs, ss) -> dict:
    names = ds.block_names("x")
    proj = []
    for j in range(ds.d):
        lo, hi = project_bounds(ss, j)
        proj.append({"coefficient": j, "name": names[j], "lower": lo, "upper": hi})
    out = {"directions": ss.directions.Q, "descriptor": ss.directions.descriptor,
           "grid": {"kind": ss.grid.kind, "values": ss.grid.values},
           "sigma": ss.sigma, "Sigma_hat": ss.Sigma_hat,
           "condition_number": ss.condition_number, "crossing_count": ss.crossing_count,
           "instrument": ss.instrument, "n": ss.n, "projections": proj,
           "jitter": ds.meta.get("jitter")}
    if ds.d == 2 and ss.instrument == "x":
        lo, hi = beta1_closed_form(ds, bs)
        out["beta1_closed_form"] = {"lower": lo, "upper": hi}
    if ss.directions.descriptor.get("kind") == "circle":
        polys = [reconstruct_polygon_2d(ss, a) for a in range(len(ss.grid))]
        out["polygons"] = [{"vertices": p.vertices, "empty": p.empty,
                            "degenerate": p.degenerate} for p in polys]
    return out


def cmd_validate(run: Run) -> int:
    path = run.cfg.data_path()
    if not path.exists():
        raise ConfigError(f"data file '{path}' not found")
    ds = load_csv(path, run.cfg["data"]["roles"])
    rep = validate(ds)
    run.write_json("validation.json", rep.to_dict())
    if not rep.ok:
        raise DataError(f"{len(rep.violations)} violation(s); see validation.json")
    return 0


def cmd_bounds(run: Run) -> int:
    ds, pipeline, prep, bs, ss = fit(run)
    alphas = bs.grid.values
    run.write_csv("bounds.csv", ["row", "alpha", "theta0", "theta1"],
                  ([i, float(al), float(bs.theta0[i, a]), float(bs.theta1[i, a])]
                   for i in range(bs.n) for a, al in enumerate(alphas)))
    run.write_json("bounds.json", {"method": pipeline.to_dict(),
                                   "crossing": crossing_diagnostic(bs),
                                   "coef0": bs.coef0, "coef1": bs.coef1, "n": bs.n})
    return 0


def cmd_support(run: Run) -> int:
    ds, pipeline, prep, bs, ss = fit(run)
    d = ss.directions.d
    run.write_csv("support.csv", ["q_index"] + [f"q{j + 1}" for j in range(d)] + ["alpha", "sigma"],
                  ([i] + [float(c) for c in q] + [float(al), float(ss.sigma[i, a])]
                   for i, q in enumerate(ss.directions.Q)
                   for a, al in enumerate(ss.grid.values)))
    run.write_json("support.json", support_payload(ds, bs, ss))
    return 0


def _ensemble(run: Run):
    ds, pipeline, prep, bs, ss = fit(run)
    b = run.cfg["bootstrap"]
    ens = bayesian_bootstrap(ds, pipeline, int(b["B"]), run.cfg.seed, threads=run.threads,
                             weight_scheme=b["weight_scheme"], prepared=prep)
    return ds, ens


def cmd_infer(run: Run) -> int:
    ds, ens = _ensemble(run)
    level = float(run.cfg["bootstrap"]["level"])
    pw = pointwise_report(ens, list(range(ds.d)), level)
    band = uniform_band(ens, level=level, weight=run.cfg["bootstrap"]["band_weight"])
    run.write_json("infer.json", {"pointwise": pw.to_dict(), "uniform": band.to_dict(),
                                  "coefficients": ds.block_names("x"),
                                  "failures": ens.failures})
    return 0


def cmd_test(run: Run) -> int:
    ds, ens = _ensemble(run)
    tc = run.cfg["test"]
    results = []
    for j in tc["coefficients"]:
        if not 0 <= int(j) < ds.d:
            raise ConfigError(f"test coefficient {j} out of range for d = {ds.d}")
        results.append(sign_positivity_test(ens, int(j), float(tc["level"])))
    run.write_json("test.json", {"tests": results})
    return 0


def cmd_mc(run: Run) -> int:
    m = run.cfg["mc"]
    try:
        spec = DGPSpec.from_dict(m["dgp"])
    except ParameterError as exc:
        raise ConfigError(f"mc.dgp: {exc}") from None
    pipeline = default_pipeline(spec)
    rep = coverage_experiment(spec, int(m["R"]), int(m["n"]), int(m["B"]), float(m["level"]),
                              run.cfg.seed, pipeline=pipeline, uniform=bool(m["uniform"]),
                              threads=run.threads)
    run.write_json("mc.json", {"report": rep})
    rows = []
    for key in ("pointwise", "uniform"):
        s = rep.get(key) or {}
        if "coverage" in s:
            rows.append([key, s["coverage"], s["se"]])
    rows.append(["mean_width", rep["mean_width"], ""])
    run.write_csv("mc.csv", ["metric", "value", "se"], rows)
    return 0


COMMANDS = {"validate": cmd_validate, "bounds": cmd_bounds, "support": cmd_support,
            "infer": cmd_infer, "test": cmd_test, "mc": cmd_mc}


# -------------------------------------------------------------------- plots

def emit_plot_data(report_path, kind: str, out_path=None, coefficient: int | None = None) -> Path:
    """Tidy CSV behind bound-vs-alpha, band-vs-alpha, or polygon figures."""
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind '{kind}'")
    report_path = Path(report_path)
    if not report_path.exists():
        raise ConfigError(f"report '{report_path}' not found")
    try:
        doc = json.loads(report_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"report '{report_path.name}' is not JSON: {exc.msg}") from None
    prov = doc.get("provenance", {})
    out_path = Path(out_path) if out_path else report_path.with_name(f"{kind}.csv")

    if kind == "bounds_vs_alpha":
        if "projections" not in doc:
            raise ConfigError("bounds_vs_alpha needs a support report")
        alphas = doc["grid"]["values"]
        rows = []
        for p in doc["projections"]:
            if coefficient is not None and p["coefficient"] != coefficient:
                continue
            for series in ("lower", "upper"):
                for al, v in zip(alphas, p[series]):
                    rows.append([al, f"{p['name']}_{series}", v])
        write_tidy_csv(out_path, ["alpha", "series", "value"], rows, prov)
    elif kind == "band_vs_alpha":
        if "uniform" not in doc or "pointwise" not in doc:
            raise ConfigError("band_vs_alpha needs an infer report")
        names = doc["coefficients"]
        rows = []
        for c in doc["uniform"]["cells"]:
            q = np.asarray(c["q"])
            j = int(np.argmax(np.abs(q)))
            if coefficient is not None and j != coefficient:
                continue
            sign = "+" if q[j] > 0 else "-"
            tag = f"{sign}{names[j]}"
            rows += [[c["alpha"], f"{tag}_lo", c["lo"]], [c["alpha"], f"{tag}_estimate", c["estimate"]],
                     [c["alpha"], f"{tag}_hi", c["hi"]]]
        write_tidy_csv(out_path, ["alpha", "series", "value"], rows, prov)
    else:
        if "polygons" not in doc:
            raise ConfigError("polygon_2d needs a support report on circle directions")
        rows = []
        for a, (al, p) in enumerate(zip(doc["grid"]["values"], doc["polygons"])):
            for i, (b1, b2) in enumerate(p["vertices"]):
                rows.append([al, i, b1, b2, int(p["degenerate"]), int(p["empty"])])
        write_tidy_csv(out_path, ["alpha", "vertex", "b1", "b2", "degenerate", "empty"], rows, prov)
    return out_path


# --------------------------------------------------------------------- main

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blpbounds", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--threads", type=int, default=None, help="worker pool size")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config entry (dotted path)")
        p.add_argument("--out", default=None, help="output directory")
    p = sub.add_parser("plot")
    p.add_argument("report")
    p.add_argument("--kind", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--coefficient", type=int, default=None)
    return ap


def _fail(exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split())
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "exit": code, "message": msg},
                                sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "plot":
                emit_plot_data(args.report, args.kind, args.out, args.coefficient)
                return 0
            threads = args.threads or int(os.environ.get(ENV_THREADS, "1"))
            if threads < 1:
                raise ConfigError("--threads must be at least 1")
            cfg = RunConfig.load(args.config, args.overrides)
            out = Path(args.out) if args.out else cfg.output_dir(os.environ.get(ENV_OUT))
            run = Run(cfg, out, threads, caught)
            return COMMANDS[args.command](run)
    except ConfigError as exc:
        return _fail(exc, 2)
    except DataError as exc:
        return _fail(exc, 3)
    except NumericalError as exc:
        return _fail(exc, 4)
    except BlpError as exc:
        return _fail(exc, exc.exit_code)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(exc, 4)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
