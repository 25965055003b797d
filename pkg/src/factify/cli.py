"""Command-line entry points.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
failure. FACTIFY_CACHE overrides the configured cache root.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataio import (
    DecodeFailure,
    FetchFailure,
    MissingColumn,
    SynthSpec,
    save_split,
    synth_dataset,
)
from .harness import (
    ConfigInvalid,
    evaluate_bundle,
    load_config,
    run_experiment,
    run_grid,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_CONFIG_ERRORS = (ConfigInvalid, ValueError)
_DATA_ERRORS = (MissingColumn, FetchFailure, DecodeFailure, FileNotFoundError, OSError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factify",
        description="Claim/document fact verification pipeline and experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a planted-signal synthetic dataset")
    p_synth.add_argument("--per-category", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=42)
    p_synth.add_argument("--out", type=Path, required=True)
    p_synth.add_argument("--no-text-signal", action="store_true")
    p_synth.add_argument("--no-image-signal", action="store_true")
    p_synth.add_argument("--no-lexical-signal", action="store_true")

    p_train = sub.add_parser("train", help="run one experiment from a TOML config")
    p_train.add_argument("--config", type=Path, required=True)

    p_eval = sub.add_parser("evaluate", help="run a persisted bundle on a split CSV")
    p_eval.add_argument("--bundle", type=Path, required=True)
    p_eval.add_argument("--split", type=Path, required=True)
    p_eval.add_argument("--out", type=Path, default=None)

    p_grid = sub.add_parser("grid", help="run a built-in comparison grid")
    p_grid.add_argument("--config", type=Path, required=True)
    p_grid.add_argument(
        "--grid", choices=("table2", "table3", "table4"), required=True
    )

    p_report = sub.add_parser("report", help="print the reports of a finished run")
    p_report.add_argument("--run", type=Path, required=True)
    return parser


def _cmd_synth(args: argparse.Namespace) -> int:
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    spec = SynthSpec(
        per_category=args.per_category,
        image_dir=str(out / "images"),
        text_signal=not args.no_text_signal,
        image_signal=not args.no_image_signal,
        lexical_signal=not args.no_lexical_signal,
    )
    manifests = synth_dataset(spec, seed=args.seed)
    for manifest in manifests:
        save_split(manifest, out / f"{manifest.split_name}.csv")
    _write_synth_config(out, args.seed)
    total = sum(len(m.rows) for m in manifests)
    print(f"wrote {total} rows to {out} (train/val/test.csv, images/, config.toml)")
    return EXIT_OK


def _write_synth_config(out: Path, seed: int) -> None:
    # a ready-to-train config pointing at the generated files
    text = f"""[dataset]
train = "{out / 'train.csv'}"
val = "{out / 'val.csv'}"
test = "{out / 'test.csv'}"

[encoders]
text = "planted-text"
image = "planted-image"

[features]
flags = ["rouge", "length", "text_cosine", "image_cosine", "head"]

[head]
variant = "TextPair3"

[forest]
n_trees = 100
max_depth = 40

[run]
seed = {seed}
output_dir = "{out / 'runs'}"
cache_root = "{out / 'cache'}"
"""
    (out / "config.toml").write_text(text, encoding="utf-8")


def _cmd_train(args: argparse.Namespace) -> int:
    config, registry_section = load_config(args.config)
    registry = None
    if registry_section:
        from .embedding import default_registry

        registry = default_registry()
        registry.configure(registry_section)
    result = run_experiment(config, registry=registry)
    print(f"run dir: {result.run_dir}")
    if result.val_report is not None:
        print(f"val weighted F1: {result.val_report.weighted_f1:.4f}")
    if result.test_report is not None:
        print(f"test weighted F1: {result.test_report.weighted_f1:.4f}")
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    report, out = evaluate_bundle(args.bundle, args.split, out_dir=args.out)
    print(f"predictions written under {out}")
    if report is not None:
        print(report.to_text())
    else:
        print("split is not fully labeled; skipped scoring")
    return EXIT_OK


def _cmd_grid(args: argparse.Namespace) -> int:
    config, registry_section = load_config(args.config)
    registry = None
    if registry_section:
        from .embedding import default_registry

        registry = default_registry()
        registry.configure(registry_section)
    result = run_grid(config, args.grid, registry=registry)
    print(result.to_text())
    print(f"grid dir: {result.grid_dir}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    run_dir: Path = args.run
    report_path = run_dir / "run_report.json"
    if not report_path.exists():
        raise FileNotFoundError(f"no run_report.json under {run_dir}")
    run_report = json.loads(report_path.read_text(encoding="utf-8"))
    print(f"config hash: {run_report.get('config_hash')}")
    print(f"rows: {run_report.get('n_rows')}")
    for split in ("val", "test", "eval"):
        eval_path = run_dir / f"report_{split}.json"
        if not eval_path.exists():
            continue
        payload = json.loads(eval_path.read_text(encoding="utf-8"))
        print(f"\n[{split}] weighted F1: {payload['weighted_f1']:.4f}")
        for name, score in payload["per_category_f1"].items():
            print(f"  {name}: {score:.4f}")
        print("  confusion rows (gold x pred):")
        for name, row in zip(payload["confusion"]["labels"], payload["confusion"]["counts"]):
            print(f"    {name}: {row}")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "grid": _cmd_grid,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; remap
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
