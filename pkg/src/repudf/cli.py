"""Command-line entry point: ``repudf {fit,extract,eval,demo2d,gradcheck}``.

Exit codes: 0 success, 1 usage, 2 data or parse error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import (InvalidArgumentError, InvalidInputError, NonFiniteError, PlyParseError,
                     UndefinedGradientError)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("repudf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _on_off(value: str) -> bool:
    v = value.lower()
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return v == "on"


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config {p} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    from .plotting import plot_losses
    from .training import TrainConfig, fit_shape

    cfg = TrainConfig.from_dict(_read_config(args.config))
    if args.shape:
        cfg = replace(cfg, shape=args.shape)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.steps is not None:
        cfg = replace(cfg, steps=args.steps)
    from .shapes import parse_shape
    shape = parse_shape(cfg.shape)
    out = _out_dir(args)

    def progress(step, rep):
        if step % max(1, cfg.steps // 20) == 0 or step == cfg.steps:
            log.info("step %d/%d total=%.5f udf=%.5f rgb=%.4f anchor=%.4f",
                     step, cfg.steps, rep.total, rep.udf, rep.rgb, rep.anchor)

    result = fit_shape(shape, cfg, checkpoint_path=out / "model.ckpt", progress=progress)
    result.write_loss_csv(out / "loss.csv")
    _write_json(out / "train_config.json", cfg.to_dict())
    if not args.no_figures:
        plot_losses(result.history, out / "loss.png")
    print(f"wrote {out / 'model.ckpt'} and {out / 'loss.csv'}")
    return EXIT_OK


def _extraction_config(args):
    from .extraction import ExtractionConfig

    cfg = ExtractionConfig.from_dict(_read_config(args.config))
    over = {"repulsion": args.repulsion, "iterations": args.iterations, "threshold": args.threshold,
            "k": args.k_repulsion, "clamp": args.clamp, "queries": args.queries}
    return replace(cfg, **{k: v for k, v in over.items() if v is not None})


def _load_field(args):
    from .decoder import NeighborhoodDecoder
    from .extraction import AnalyticField, LearnedField
    from .plyio import read_ply
    from .shapes import parse_shape
    from .training import TrainConfig, prepare_shape_data

    spec = args.field
    if spec.startswith("analytic:"):
        return AnalyticField(parse_shape(spec[len("analytic:"):])), None
    path = Path(spec[len("checkpoint:"):] if spec.startswith("checkpoint:") else spec)
    if not path.is_file():
        raise UsageError(f"--field must be analytic:<shape> or an existing checkpoint, got {spec!r}")
    model, meta = NeighborhoodDecoder.load(path)
    if args.input:
        partial = read_ply(args.input)
    else:
        # Same seed derivation as training, so this is the exact (normalized) view the model saw.
        tcfg = TrainConfig.from_dict(meta.get("train_config", {}))
        partial = prepare_shape_data(parse_shape(tcfg.shape), tcfg, tcfg.seed).partial
    ctx = model.context(partial, args.fine_stride)
    return LearnedField(model, ctx, m=args.k_coarse, n=args.k_fine), meta


def cmd_extract(args) -> int:
    from .extraction import extract_surface
    from .plotting import plot_cloud
    from .plyio import write_ply

    cfg = _extraction_config(args)
    field, meta = _load_field(args)
    seed = 0 if args.seed is None else args.seed
    result = extract_surface(field, cfg, seed)
    out = _out_dir(args)
    write_ply(out / "points.ply", result.cloud, ascii=args.ascii_ply)
    summary = result.summary()
    summary.update({"seed": seed, "field": args.field, "config": cfg.to_dict()})
    if meta and "normalization" in meta:
        summary["normalization"] = meta["normalization"]
    _write_json(out / "summary.json", summary)
    if not args.no_figures:
        plot_cloud(result.cloud, out / "points.png", f"{len(result.cloud)} points")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .metrics import evaluate
    from .plyio import read_ply

    for p in (args.pred, args.gt):
        if not Path(p).is_file():
            raise UsageError(f"file not found: {p}")
    report = evaluate(read_ply(args.pred), read_ply(args.gt))
    if args.out:
        out = _out_dir(args)
        (out / "report.json").write_text(report.to_json() + "\n")
        (out / "report.csv").write_text(report.to_csv())
    print(report.to_json())
    return EXIT_OK


def cmd_demo2d(args) -> int:
    from .demo2d import Demo2DConfig, run_demo2d, sample_grid, with_overrides
    from .plotting import plot_demo2d
    from .plyio import write_points_csv

    cfg = Demo2DConfig.from_dict(_read_config(args.config))
    cfg = with_overrides(cfg, queries=args.queries, iterations=args.iterations, threshold=args.threshold,
                         k=args.k_repulsion, clamp=args.clamp, grid_resolution=args.grid_resolution)
    seed = 0 if args.seed is None else args.seed
    res = run_demo2d(cfg, seed)
    out = _out_dir(args)
    for tag, r in (("off", res.off), ("on", res.on)):
        write_points_csv(out / f"initial_{tag}.csv", r.survivors_initial)
        write_points_csv(out / f"final_{tag}.csv", r.cloud.positions)
    grid = sample_grid(res.shape, cfg.grid_resolution, cfg.query_range)
    with open(out / "grid.csv", "w") as fh:
        fh.write("x,y,udf,gx,gy,valid\n")
        for row in grid:
            fh.write(",".join(repr(float(v)) for v in row[:5]) + f",{int(row[5])}\n")
    _write_json(out / "summary.json", res.summary())
    if not args.no_figures:
        plot_demo2d(res, out / "demo2d.png")
    print(json.dumps(res.summary(), sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .checks import check_pipeline, check_primitives

    worst = 0.0
    failures = []
    for seed in range(args.seeds):
        for r in [*check_primitives(seed), check_pipeline(seed)]:
            worst = max(worst, r.error)
            if not r.passed(args.tol):
                failures.append(r)
    for r in failures:
        print(f"FAIL {r.name} seed={r.seed} rel_err={r.error:.3e}")
    print(f"gradcheck: {args.seeds} seeds, worst relative error {worst:.3e}, "
          f"{'PASS' if not failures else 'FAIL'}")
    return EXIT_OK if not failures else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="repudf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    def extraction_flags(sp):
        sp.add_argument("--repulsion", type=_on_off)
        sp.add_argument("--iterations", type=int)
        sp.add_argument("--threshold", type=float)
        sp.add_argument("--k-repulsion", type=int)
        sp.add_argument("--clamp", type=float)
        sp.add_argument("--queries", type=int)

    fit = sub.add_parser("fit", help="fit the decoder to one analytic shape")
    common(fit)
    fit.add_argument("--shape", help="name:params, e.g. torus:1,0.25")
    fit.add_argument("--steps", type=int)
    fit.set_defaults(func=cmd_fit)

    ex = sub.add_parser("extract", help="extract a coloured point cloud")
    common(ex)
    extraction_flags(ex)
    ex.add_argument("--field", required=True, help="analytic:<shape> or a checkpoint path")
    ex.add_argument("--input", help="partial-view PLY (default: regenerate from checkpoint metadata)")
    ex.add_argument("--k-coarse", type=int)
    ex.add_argument("--k-fine", type=int)
    ex.add_argument("--fine-stride", type=int)
    ex.add_argument("--ascii-ply", action="store_true")
    ex.set_defaults(func=cmd_extract)

    ev = sub.add_parser("eval", help="compare a predicted PLY to a ground-truth PLY")
    ev.add_argument("pred")
    ev.add_argument("gt")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    demo = sub.add_parser("demo2d", help="planar L-profile extraction, repulsion off vs on")
    common(demo)
    extraction_flags(demo)
    demo.add_argument("--grid-resolution", type=int)
    demo.set_defaults(func=cmd_demo2d)

    gc = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    gc.add_argument("--seeds", type=int, default=10)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            raise UsageError("a subcommand is required (fit, extract, eval, demo2d, gradcheck)")
        return args.func(args)
    except (UsageError, InvalidArgumentError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlyParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidInputError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, UndefinedGradientError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
