"""Command-line pipeline: generate, ingest, rasterize, train, predict,
evaluate, inspect.

Every randomized stage takes a mandatory --seed and writes its outputs
atomically, so reruns with identical flags produce byte-identical files.
Progress goes to stderr; each command prints a one-object JSON summary
on stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as dsm
from . import evaluation, geometry, models, naca
from .errors import (
    AllSamplesFailed,
    FoilforgeError,
    NonFiniteResult,
    NumericalDivergence,
    PoleProximity,
    SingularSystem,
)
from .fileio import atomic_write_bytes, atomic_write_text
from .panelflow import FlowCondition, solve_cp

log = logging.getLogger("foilforge")

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4

_NUMERIC_ERRORS = (SingularSystem, NonFiniteResult, PoleProximity,
                   NumericalDivergence, AllSamplesFailed)


def _parse_float_list(text: str) -> list[float]:
    """Comma-separated values, or logspace:LO:HI:N for a log-uniform grid."""
    if text.startswith("logspace:"):
        _, lo, hi, n = text.split(":")
        return list(np.logspace(np.log10(float(lo)), np.log10(float(hi)), int(n)))
    return [float(tok) for tok in text.split(",") if tok]


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _load_corpus(directory: str) -> list[geometry.RawContour]:
    paths = sorted(p for p in Path(directory).iterdir()
                   if p.suffix.lower() == ".dat")
    corpus = []
    for p in paths:
        try:
            corpus.append(geometry.parse_dat(p.read_text(errors="replace")))
        except FoilforgeError as exc:
            log.warning("skipping %s: %s", p.name, exc)
    log.info("parsed %d/%d .dat files from %s", len(corpus), len(paths), directory)
    return corpus


def _cmd_gen(args) -> dict:
    case = dsm.CaseSpec(args.case)
    corpus = _load_corpus(args.airfoils)
    ds = dsm.sweep_generate(
        corpus, case,
        aoa_grid=_parse_float_list(args.aoa) if args.aoa else None,
        re_grid=_parse_float_list(args.re) if args.re else None,
        mach=args.mach, cp_limit=args.cp_limit, threads=args.threads)
    ds = dsm.split(ds, args.ratio, args.seed)
    dsm.save_dataset(ds, args.out)
    if args.csv:
        atomic_write_text(args.csv, dsm.export_csv(ds))
    return {"command": "gen", "out": args.out, "case": case.case_id,
            "samples": len(ds), "train": int(ds.train_indices.size),
            "test": int(ds.test_indices.size), "airfoils": len(corpus)}


def _cmd_ingest(args) -> dict:
    case = dsm.CaseSpec(args.case)
    samples = []
    lines = Path(args.manifest).read_text().splitlines()
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped.lower().startswith("dat,"):
            continue
        dat_path, cp_path, aoa, re, mach = (tok.strip() for tok in stripped.split(","))
        contour = geometry.parse_dat(Path(dat_path).read_text(errors="replace"))
        foil = geometry.repanel(geometry.normalize(contour))
        cond = FlowCondition(float(aoa), float(re), float(mach)).validate()
        samples.append(dsm.ingest_xfoil_cp(Path(cp_path).read_text(), foil, cond))
        log.info("ingested row %d: %s", lineno, samples[-1].id)
    if not samples:
        raise AllSamplesFailed(f"no usable rows in {args.manifest}")
    ds = dsm.Dataset(samples=samples, split=np.zeros(len(samples), dtype=np.uint8),
                     seed=0, case=case)
    ds = dsm.split(ds, args.ratio, args.seed)
    dsm.save_dataset(ds, args.out)
    return {"command": "ingest", "out": args.out, "case": case.case_id,
            "samples": len(ds), "train": int(ds.train_indices.size),
            "test": int(ds.test_indices.size)}


def _cmd_raster(args) -> dict:
    ds = dsm.load_dataset(args.data)
    sample = ds.samples[args.index]
    img = dsm.rasterize(sample, args.content)
    atomic_write_bytes(args.out, dsm.write_pgm(img))
    return {"command": "raster", "out": args.out, "id": sample.id,
            "content": args.content, "lit_pixels": int((img > 0).sum())}


def _cmd_train(args) -> dict:
    ds = dsm.load_dataset(args.data)
    if args.case != ds.case.case_id:
        raise FoilforgeError(f"--case {args.case} but dataset is {ds.case.case_id}")
    spec = models.build_model(args.model, ds.case)
    config = models.TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                                epochs=args.epochs, seed=args.seed)
    ckpt, history = models.train(spec, ds, config)
    models.save_checkpoint(ckpt, args.out)
    if args.history:
        rows = "".join(f"{i} {tr:.9e} {te:.9e}\n" for i, (tr, te) in enumerate(history))
        atomic_write_text(args.history, "epoch train_mse test_mse\n" + rows)
    return {"command": "train", "out": args.out, "model": args.model,
            "case": ds.case.case_id, "epochs": args.epochs,
            "final_train_mse": ckpt.final_train_loss,
            "final_test_mse": ckpt.final_test_loss}


def _format_prediction(ckpt: models.Checkpoint, pred: np.ndarray) -> str:
    n = geometry.NODE_COUNT
    if ckpt.spec.case.direction == "cp_to_shape":
        header = "# x y\n"
        rows = (f"{pred[i]:.9g} {pred[n + i]:.9g}" for i in range(n))
    else:
        header = "# station_x cp_suction cp_pressure\n"
        xs = geometry.CANONICAL_GRID.stations
        rows = (f"{xs[i]:.9g} {pred[i]:.9g} {pred[n + i]:.9g}" for i in range(n))
    return header + "\n".join(rows) + "\n"


def _cmd_predict(args) -> dict:
    ckpt = models.load_checkpoint(args.ckpt)
    ds = dsm.load_dataset(args.data)
    if ckpt.spec.case != ds.case:
        raise FoilforgeError(
            f"checkpoint case {ckpt.spec.case.case_id} != dataset case {ds.case.case_id}")
    sample = ds.samples[args.index]
    pred = models.predict_sample(ckpt, sample)
    atomic_write_text(args.out, _format_prediction(ckpt, pred))
    summary = {"command": "predict", "out": args.out, "id": sample.id,
               "model": ckpt.spec.kind, "case": ckpt.spec.case.case_id}
    if args.svg:
        kind = "shape" if ckpt.spec.case.direction == "cp_to_shape" else "cp"
        atomic_write_text(args.svg, evaluation.plot_comparison(sample, pred, kind))
        summary["svg"] = args.svg
    return summary


def _cmd_eval(args) -> dict:
    ckpt = models.load_checkpoint(args.ckpt)
    ds = dsm.load_dataset(args.data)
    report = evaluation.evaluate(ckpt, ds)
    atomic_write_text(args.report, report.to_json())
    summary = {"command": "eval", "report": args.report,
               "case": report.case_id, "model": report.model_kind}
    summary.update(report.aggregate)
    if args.plots:
        os.makedirs(args.plots, exist_ok=True)
        kind = "shape" if ds.case.direction == "cp_to_shape" else "cp"
        chosen = sorted(ds.test_indices, key=lambda i: ds.samples[i].id)[:args.plot_count]
        written = []
        for rank, i in enumerate(chosen):
            sample = ds.samples[i]
            pred = models.predict_sample(ckpt, sample)
            path = os.path.join(args.plots, f"compare_{rank:03d}.svg")
            atomic_write_text(path, evaluation.plot_comparison(sample, pred, kind))
            written.append(path)
        summary["plots"] = written
    return summary


def _cmd_solve(args) -> dict:
    contour = geometry.parse_dat(Path(args.dat).read_text(errors="replace"))
    foil = geometry.repanel(geometry.normalize(contour))
    cond = FlowCondition(args.aoa, args.re, args.mach).validate()
    cp = solve_cp(foil, cond)
    xs = geometry.CANONICAL_GRID.stations
    # walk-around dump (trailing edge over suction side, back along pressure),
    # the same two-column layout the ingest path reads
    rows = [f"{x:.9g} {c:.9g}" for x, c in zip(xs[::-1], cp.cp_suction[::-1])]
    rows += [f"{x:.9g} {c:.9g}" for x, c in zip(xs[1:], cp.cp_pressure[1:])]
    atomic_write_text(args.out, f"# x cp  {foil.name} {cond.key()}\n" + "\n".join(rows) + "\n")
    return {"command": "solve", "out": args.out, "name": foil.name,
            "aoa": cond.aoa, "re": cond.re, "mach": cond.mach, "cl": cp.cl}


def _cmd_inspect(args) -> dict:
    with open(args.path, "rb") as fh:
        magic = fh.read(4)
    if magic == dsm.MAGIC:
        ds = dsm.load_dataset(args.path)
        return {"command": "inspect", "kind": "dataset", "case": ds.case.case_id,
                "samples": len(ds), "seed": ds.seed,
                "train": int(ds.train_indices.size), "test": int(ds.test_indices.size),
                "airfoils": len({s.airfoil.name for s in ds.samples}),
                "sources": sorted({s.source for s in ds.samples})}
    if magic == models.MAGIC:
        ckpt = models.load_checkpoint(args.path)
        return {"command": "inspect", "kind": "checkpoint", "model": ckpt.spec.kind,
                "case": ckpt.spec.case.case_id, "seed": ckpt.seed,
                "parameters": models.parameter_count(ckpt.spec),
                "layers": [[ls.kind, list(ls.extents)] for ls in ckpt.spec.layer_specs],
                "final_train_mse": ckpt.final_train_loss,
                "final_test_mse": ckpt.final_test_loss}
    raise FoilforgeError(f"unrecognized magic {magic!r} in {args.path}")


def _cmd_corpus(args) -> dict:
    codes = naca.corpus_codes(
        cambers=[int(c) for c in args.cambers.split(",")],
        positions=[int(p) for p in args.positions.split(",")],
        thicknesses=[int(t) for t in args.thicknesses.split(",")])
    os.makedirs(args.out, exist_ok=True)
    for code in codes:
        contour = naca.naca4(code, args.points)
        atomic_write_text(os.path.join(args.out, f"naca{code}.dat"),
                          geometry.write_dat(contour.name, contour.points))
    return {"command": "corpus", "out": args.out, "airfoils": len(codes)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foilforge",
        description="Airfoil <-> pressure-distribution surrogate pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    cases = list(dsm.CASE_IDS)

    p = sub.add_parser("gen", help="sweep the built-in solver over a .dat corpus")
    p.add_argument("--airfoils", required=True, help="directory of Selig .dat files")
    p.add_argument("--case", required=True, choices=cases)
    p.add_argument("--out", required=True, help="output dataset (.afds)")
    p.add_argument("--seed", required=True, type=int, help="split shuffle seed")
    p.add_argument("--aoa", help="comma-separated AoA degrees (default per case)")
    p.add_argument("--re", help="comma list or logspace:LO:HI:N (default per case)")
    p.add_argument("--mach", type=float, default=dsm.DEFAULT_MACH)
    p.add_argument("--ratio", type=float, default=0.8, help="train fraction")
    p.add_argument("--cp-limit", type=float, default=dsm.DEFAULT_CP_LIMIT,
                   help="drop solves whose |Cp| exceeds this")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="solver fan-out workers (results independent of the count)")
    p.add_argument("--csv", help="also export samples as CSV")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("ingest", help="build a dataset from external Cp files")
    p.add_argument("--manifest", required=True,
                   help="CSV rows: dat_path,cp_path,aoa,re,mach")
    p.add_argument("--case", required=True, choices=cases)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--ratio", type=float, default=0.8)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("raster", help="render one sample to a PGM image")
    p.add_argument("--data", required=True)
    p.add_argument("--index", required=True, type=int)
    p.add_argument("--content", required=True, choices=["cp_curves", "airfoil_outline"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_raster)

    p = sub.add_parser("train", help="train a DNN or CNN on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--case", required=True, choices=cases)
    p.add_argument("--model", required=True, choices=["dnn", "cnn"])
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, help="output checkpoint (.afnc)")
    p.add_argument("--history", help="also write per-epoch losses as text")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="run a checkpoint on one dataset sample")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", required=True, type=int)
    p.add_argument("--out", required=True, help="prediction as two/three-column text")
    p.add_argument("--svg", help="optional true-vs-predicted SVG")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset's test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="output JSON report")
    p.add_argument("--plots", help="directory for comparison SVGs")
    p.add_argument("--plot-count", type=int, default=4)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("solve", help="debug: dump the built-in solver's x/Cp pairs")
    p.add_argument("--dat", required=True, help="Selig .dat file")
    p.add_argument("--aoa", required=True, type=float)
    p.add_argument("--re", type=float, default=dsm.DEFAULT_RE)
    p.add_argument("--mach", type=float, default=0.0)
    p.add_argument("--out", required=True, help="two-column x Cp text")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("inspect", help="dump dataset or checkpoint header")
    p.add_argument("--path", required=True)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("corpus", help="write a synthetic NACA 4-digit .dat corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--cambers", default="0,1,2,3,4")
    p.add_argument("--positions", default="2,3,4,5,6")
    p.add_argument("--thicknesses", default="12,15,18,21,24,30")
    p.add_argument("--points", type=int, default=160, help="points per surface")
    p.set_defaults(func=_cmd_corpus)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        _emit(args.func(args))
        return 0
    except _NUMERIC_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (FoilforgeError, OSError, IndexError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
