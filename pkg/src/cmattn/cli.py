"""Command line front end.

Subcommands: ``eval`` (dataset metrics and optional threshold curves),
``curves`` (eval with curves forced on), ``train`` (toy trainer and the
ablation lattice), ``gradcheck`` (finite-difference suite).

Exit codes: 0 ok, 1 check failure, 2 input-contract error, 3 I/O error,
4 strict-mode size mismatch.  ``CMA_THREADS`` caps evaluation parallelism.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

from . import gradcheck, imgio, metrics
from .tensor_ops import ContractError, bilinear_resize
from .toymodel import (
    ToyConfig,
    VARIANTS,
    gen_synthetic,
    run_ablation,
    save_checkpoint,
    train,
)

__all__ = ["entry", "main"]

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_CONTRACT = 2
EXIT_IO = 3
EXIT_STRICT = 4

_IMAGE_SUFFIXES = (".pgm", ".png")
_TRAIN_ONLY_KEYS = {"dataset_size"}


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _workers() -> int:
    raw = os.environ.get("CMA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _list_images(directory: Path) -> dict[str, Path]:
    by_stem: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        if path.stem in by_stem:
            raise ContractError(f"{directory}: duplicate stem {path.stem!r}")
        by_stem[path.stem] = path
    return by_stem


def _load_pairs(args) -> list[tuple[str, metrics.EvalPair]] | int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            _err(f"not a directory: {d}")
            return EXIT_IO
    try:
        preds = _list_images(pred_dir)
        gts = _list_images(gt_dir)
    except ContractError as exc:
        _err(str(exc))
        return EXIT_CONTRACT
    unpaired = sorted(set(preds) ^ set(gts))
    if unpaired:
        _err("unpaired stems:")
        for stem in unpaired:
            side = "prediction" if stem in preds else "ground truth"
            _err(f"  {stem} ({side} only)")
        return EXIT_CONTRACT
    if not preds:
        _err("no image pairs found")
        return EXIT_CONTRACT

    pairs = []
    for stem in sorted(preds):
        try:
            pred = imgio.read_gray(preds[stem])
            gt = imgio.read_gray(gts[stem])
        except OSError as exc:
            _err(str(exc))
            return EXIT_IO
        if pred.shape != gt.shape:
            if args.strict:
                _err(f"{stem}: size mismatch {pred.shape} vs {gt.shape} (strict mode)")
                return EXIT_STRICT
            _err(f"warning: {stem}: resampling prediction {pred.shape} -> {gt.shape}")
            pred = bilinear_resize(pred, gt.shape[0], gt.shape[1]).clip(0.0, 1.0)
        pairs.append((stem, metrics.EvalPair(pred=pred, gt=(gt >= imgio.GT_THRESHOLD).astype(float))))
    return pairs


def _print_report(report: metrics.MetricReport, n_pairs: int) -> None:
    print(f"pairs: {n_pairs}")
    print("F_beta  S_alpha  E_phi   MAE")
    print(f"{report.f_beta:.3f}   {report.s_alpha:.3f}    {report.e_phi:.3f}   {report.mae:.3f}")


def _write_eval_csv(path: Path, rows, agg: metrics.MetricReport) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("name,f_beta,s_alpha,e_phi,mae\n")
        for stem, rep in rows:
            fh.write(
                f"{stem},{rep.f_beta:.6f},{rep.s_alpha:.6f},{rep.e_phi:.6f},{rep.mae:.6f}\n"
            )
        fh.write(f"mean,{agg.f_beta:.6f},{agg.s_alpha:.6f},{agg.e_phi:.6f},{agg.mae:.6f}\n")


def _write_curve_csv(path: Path, column: str, curve) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"tau,{column}\n")
        for tau in range(metrics.NUM_THRESHOLDS):
            fh.write(f"{tau},{curve[tau]:.6f}\n")


def cmd_eval(args) -> int:
    loaded = _load_pairs(args)
    if isinstance(loaded, int):
        return loaded
    stems = [s for s, _ in loaded]
    reports = metrics.evaluate_per_image([p for _, p in loaded], workers=_workers())
    agg = metrics.aggregate(reports)
    _print_report(agg, len(stems))
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    _write_eval_csv(out, list(zip(stems, reports)), agg)
    if args.curves:
        base = out.with_suffix("")
        _write_curve_csv(Path(f"{base}.f_curve.csv"), "f_beta", agg.f_curve)
        _write_curve_csv(Path(f"{base}.e_curve.csv"), "e_phi", agg.e_curve)
    return EXIT_OK


_CONFIG_DEFAULTS = {f.name: getattr(ToyConfig(), f.name) for f in fields(ToyConfig)}


def _parse_config(path: str | None) -> tuple[ToyConfig, int] | int:
    """Flat key=value config; unknown keys are rejected by name."""
    values: dict = {}
    dataset_size = 40
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            _err(str(exc))
            return EXIT_IO
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                _err(f"{path}:{lineno}: expected key=value")
                return EXIT_CONTRACT
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key in _TRAIN_ONLY_KEYS:
                dataset_size = int(value)
                continue
            if key not in _CONFIG_DEFAULTS:
                _err(f"{path}:{lineno}: unknown config key {key!r}")
                return EXIT_CONTRACT
            values[key] = _coerce_config_value(key, value)
    try:
        return ToyConfig(**values), dataset_size
    except (ContractError, TypeError, ValueError) as exc:
        _err(f"invalid config: {exc}")
        return EXIT_CONTRACT


def _coerce_config_value(key: str, value: str):
    default = _CONFIG_DEFAULTS[key]
    if isinstance(default, tuple):
        parts = tuple(int(v) for v in value.split(","))
        if key == "input_size" and len(parts) == 1:
            parts = (parts[0], parts[0])
        return parts
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def _train_one(variant: str, config: ToyConfig, dataset, out_dir: Path) -> None:
    result = train(config, variant, dataset)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "model.ckpt", result.params)
    result.trace.write_csv(out_dir / "trace.csv")
    rep = result.final_report
    with open(out_dir / "report.csv", "w", newline="\n") as fh:
        fh.write("f_beta,s_alpha,e_phi,mae\n")
        fh.write(f"{rep.f_beta:.6f},{rep.s_alpha:.6f},{rep.e_phi:.6f},{rep.mae:.6f}\n")
    print(
        f"{variant}: steps={len(result.trace.step_losses)} "
        f"loss={result.trace.step_losses[-1]:.4f} f_beta={rep.f_beta:.3f} "
        f"s_alpha={rep.s_alpha:.3f} e_phi={rep.e_phi:.3f} mae={rep.mae:.3f}"
    )


def cmd_train(args) -> int:
    parsed = _parse_config(args.config)
    if isinstance(parsed, int):
        return parsed
    config, dataset_size = parsed
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    dataset = gen_synthetic(dataset_size, seed=config.seed, size=config.input_size)
    out = Path(args.out)
    try:
        if not args.ablate_all:
            _train_one(args.variant, config, dataset, out)
            return EXIT_OK
        results = run_ablation(config, dataset)
    except ContractError as exc:
        _err(str(exc))
        return EXIT_CONTRACT

    out.mkdir(parents=True, exist_ok=True)
    print("variant  F_beta  S_alpha  E_phi   MAE")
    with open(out / "ablation.csv", "w", newline="\n") as fh:
        fh.write("variant,f_beta,s_alpha,e_phi,mae\n")
        for variant in VARIANTS:
            result = results[variant]
            vdir = out / variant
            vdir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(vdir / "model.ckpt", result.params)
            result.trace.write_csv(vdir / "trace.csv")
            rep = result.final_report
            fh.write(
                f"{variant},{rep.f_beta:.6f},{rep.s_alpha:.6f},{rep.e_phi:.6f},{rep.mae:.6f}\n"
            )
            print(
                f"{variant:8s} {rep.f_beta:.3f}   {rep.s_alpha:.3f}    "
                f"{rep.e_phi:.3f}   {rep.mae:.3f}"
            )
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seeds = [args.seed + i for i in range(args.repeats)]
    start = time.perf_counter()
    if args.corrupt_op:
        with gradcheck.corrupted_backward(args.corrupt_op):
            results = gradcheck.run_suite(seeds=seeds)
    else:
        results = gradcheck.run_suite(seeds=seeds)
    failures = [r for r in results if not r.passed]
    for r in results:
        print(f"{r.name:28s} worst_rel_err={r.worst:.3e}  tol={r.tol:.0e}  "
              f"{'pass' if r.passed else 'FAIL'}")
    print(f"{len(results)} checks, {len(seeds)} seeds, {time.perf_counter() - start:.1f}s")
    if failures:
        _err("failing checks: " + ", ".join(r.name for r in failures))
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmattn",
        description="Cascaded mutual attention: evaluation metrics, toy trainer, gradient checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, forced_curves in (("eval", False), ("curves", True)):
        p = sub.add_parser(name, help="evaluate a prediction directory against ground truth")
        p.add_argument("--pred", required=True, help="directory of saliency maps (PGM/PNG)")
        p.add_argument("--gt", required=True, help="directory of binary masks (PGM/PNG)")
        p.add_argument("--out", default="metrics.csv", help="per-image + aggregate CSV path")
        p.add_argument("--strict", action="store_true",
                       help="fail on size mismatch instead of resampling")
        if forced_curves:
            p.set_defaults(curves=True)
        else:
            p.add_argument("--curves", action="store_true",
                           help="also write 256-row F/E threshold curve CSVs")
        p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="train the toy model on synthetic RGB-D scenes")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--variant", default="cma", choices=VARIANTS)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--ablate-all", action="store_true",
                   help="train all five variants and write a comparison table")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=20, help="number of seeds to run")
    p.add_argument("--corrupt-op", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
