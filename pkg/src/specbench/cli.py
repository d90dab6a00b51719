"""Command-line entry point wiring generation, training and benchmarking.

Exit codes: 0 success, 1 usage error, 2 data/validation failure (bad
config, malformed file, separability violations), 3 runtime failure.
The SPECBENCH_OUT environment variable supplies the default output
directory; everything else is flag-driven.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import rng as rngmod
from .arch import build_model, find_architecture
from .bench import format_report, run_benchmark, write_manifest
from .datagen import (
    GenerationConfig,
    build_dataset,
    generate_dataset_config,
    load_arrays,
    load_config,
    preset_config,
    save_arrays,
    save_config,
    validate_separability,
)
from .errors import (
    ConfigError,
    DomainError,
    FormatError,
    ParameterError,
    ShapeError,
    SpecBenchError,
)
from .nn.model import save_checkpoint
from .peaks import TestGridConfig, VariationConfig
from .render import render_spectrum, sample_training_variant
from .training import TrainingConfig, evaluate, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _out_dir(value: str | None) -> Path:
    if value:
        return Path(value)
    return Path(os.environ.get("SPECBENCH_OUT", "."))


def _parse_pair(text: str, flag: str, cast) -> tuple:
    parts = text.split(":")
    if len(parts) != 2:
        raise ParameterError(f"{flag} expects LO:HI, got {text!r}")
    return cast(parts[0]), cast(parts[1])


_SPLIT_FILES = {
    "train": ("x_train.npy", "y_train.npy"),
    "validation": ("x_val.npy", "y_val.npy"),
    "test": ("x_test.npy", "y_test.npy"),
}


def _load_splits(data_dir: Path, roles=("train", "validation", "test")):
    splits = {}
    for role in roles:
        x_name, y_name = _SPLIT_FILES[role]
        splits[role] = load_arrays(data_dir / x_name, data_dir / y_name, role)
    return splits


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_config(args) -> int:
    if args.preset:
        base = preset_config(args.preset, master_seed=args.seed)
    else:
        base = preset_config("paper500", master_seed=args.seed)
    variation = base.training_variation
    grid = base.test_grid
    if args.shift is not None or args.intensity_delta is not None or args.widths is not None:
        widths = _parse_pair(args.widths, "--widths", float) if args.widths else variation.width_range
        variation = VariationConfig(
            max_shift=args.shift if args.shift is not None else variation.max_shift,
            max_intensity_delta=args.intensity_delta
            if args.intensity_delta is not None
            else variation.max_intensity_delta,
            width_range=widths,
        )
    if args.grid_shift is not None or args.grid_delta is not None or args.test_width is not None:
        grid = TestGridConfig(
            grid_shift=args.grid_shift if args.grid_shift is not None else grid.grid_shift,
            grid_intensity_delta=args.grid_delta
            if args.grid_delta is not None
            else grid.grid_intensity_delta,
            test_width=args.test_width if args.test_width is not None else grid.test_width,
        )
    peaks = _parse_pair(args.peaks, "--peaks", int) if args.peaks else (base.min_peaks, base.max_peaks)
    cfg = GenerationConfig(
        n_datapoints=args.datapoints if args.datapoints is not None else base.n_datapoints,
        n_classes=args.classes if args.classes is not None else base.n_classes,
        min_peaks=peaks[0],
        max_peaks=peaks[1],
        border_margin=args.margin if args.margin is not None else base.border_margin,
        min_peak_separation=args.min_separation
        if args.min_separation is not None
        else base.min_peak_separation,
        intensity_floor=args.intensity_floor
        if args.intensity_floor is not None
        else base.intensity_floor,
        train_samples_per_class=args.train_samples
        if args.train_samples is not None
        else base.train_samples_per_class,
        val_fraction=args.val_fraction if args.val_fraction is not None else base.val_fraction,
        training_variation=variation,
        test_grid=grid,
        master_seed=args.seed,
    )
    config = generate_dataset_config(cfg)
    out_path = Path(args.out) if args.out else _out_dir(None) / "dataset_config.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_config(config, out_path)
    print(f"wrote {out_path}: {cfg.n_classes} classes, {cfg.n_datapoints} datapoints, seed {cfg.master_seed}")
    return 0


def cmd_gen_data(args) -> int:
    config = load_config(args.config)
    out_dir = _out_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = build_dataset(config, threads=args.threads)
    for role, dataset in splits.items():
        x_name, y_name = _SPLIT_FILES[role]
        save_arrays(dataset, out_dir / x_name, out_dir / y_name)
        print(f"{role}: {dataset.spectra.shape[0]} rows x {dataset.spectra.shape[1]} datapoints")
    return 0


def cmd_validate(args) -> int:
    config = load_config(args.config)
    violations = validate_separability(config)
    if not violations:
        print(f"separable: all {9 * config.generation.n_classes} test variants map to their class")
        return 0
    for v in violations[:20]:
        print(f"class {v.class_id} variant {v.variant_index} -> nearest class {v.nearest_class_id}")
    if len(violations) > 20:
        print(f"... and {len(violations) - 20} more")
    print(f"{len(violations)} separability violations")
    return 2


def cmd_train(args) -> int:
    spec = find_architecture(args.arch)
    data_dir = Path(args.data)
    splits = _load_splits(data_dir)
    n_classes = int(max(splits[r].labels.max() for r in splits)) + 1
    model = build_model(spec, splits["train"].spectra.shape[1], n_classes, seed=args.seed)
    cfg = TrainingConfig(seed=args.seed)
    if args.max_epochs is not None:
        cfg = replace(cfg, max_epochs=args.max_epochs)
    if args.batch_size is not None:
        cfg = replace(cfg, batch_size=args.batch_size)
    if args.learning_rate is not None:
        cfg = replace(cfg, learning_rate=args.learning_rate)
    model, history = train(model, splits["train"], splits["validation"], cfg)
    out_dir = _out_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    history_path = out_dir / f"{spec.name}_history.csv"
    history_path.write_text(history.to_csv(), encoding="utf-8")
    ckpt_path = out_dir / f"{spec.name}.ckpt"
    save_checkpoint(model, ckpt_path)
    outcome = evaluate(model, splits["test"])
    print(
        f"{spec.name}: {len(history.epochs)} epochs ({history.stop_reason}), "
        f"best epoch {history.best_epoch}, test misclassifications "
        f"{outcome['misclassifications']} ({outcome['accuracy']:.2%} accuracy)"
    )
    print(f"wrote {history_path} and {ckpt_path}")
    return 0


def cmd_bench(args) -> int:
    specs = [find_architecture(name.strip()) for name in args.models.split(",") if name.strip()]
    if not specs:
        raise ParameterError("--models must list at least one architecture")
    data_dir = Path(args.data)
    splits = _load_splits(data_dir)
    training = TrainingConfig()
    if args.max_epochs is not None:
        training = replace(training, max_epochs=args.max_epochs)
    report = run_benchmark(
        specs, splits, n_seeds=args.seeds, base_seed=args.base_seed, training=training
    )
    if args.no_timing:
        report.rows = [replace(r, wall_time_s=0.0, cpu_time_s=0.0) for r in report.rows]
    out_dir = _out_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    timestamp = None if args.no_timestamp else time.strftime("%Y-%m-%d %H:%M:%S")
    (out_dir / "report.csv").write_text(format_report(report, "csv"), encoding="utf-8")
    (out_dir / "report.md").write_text(
        format_report(report, "markdown", timestamp=timestamp), encoding="utf-8"
    )
    dataset_paths = {
        f"{role}/{name}": str(data_dir / name)
        for role, names in _SPLIT_FILES.items()
        for name in names
    }
    write_manifest(out_dir / "manifest.json", specs, dataset_paths, args.base_seed, args.seeds)
    print(format_report(report, "markdown", timestamp=timestamp))
    print(f"wrote {out_dir / 'report.csv'}, {out_dir / 'report.md'}, {out_dir / 'manifest.json'}")
    return 0 if report.complete else 3


def cmd_export_plot(args) -> int:
    config = load_config(args.config)
    gen = config.generation
    if not (0 <= args.class_id < gen.n_classes):
        raise DomainError(f"--class-id must be in [0, {gen.n_classes})")
    fingerprint = config.fingerprints[args.class_id]
    out_dir = _out_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = f"class{args.class_id}"

    peaks_path = out_dir / f"{prefix}_peaks.csv"
    with open(peaks_path, "w", encoding="utf-8") as f:
        f.write("position,intensity\n")
        for peak in fingerprint.peaks:
            f.write(f"{peak.position!r},{peak.intensity!r}\n")

    def write_curve(path, values):
        with open(path, "w", encoding="utf-8") as f:
            f.write("index,intensity\n")
            for i, v in enumerate(values):
                f.write(f"{i},{v!r}\n")

    ideal = render_spectrum(fingerprint, gen.test_grid.test_width, gen.n_datapoints)
    write_curve(out_dir / f"{prefix}_ideal.csv", ideal.values)
    written = [peaks_path, out_dir / f"{prefix}_ideal.csv"]
    for i in range(args.variants):
        stream = rngmod.stream(gen.master_seed if args.seed is None else args.seed,
                               rngmod.PLOT_EXPORT, args.class_id, i)
        variant, width = sample_training_variant(
            fingerprint, gen.training_variation, stream, n_datapoints=gen.n_datapoints
        )
        rendered = render_spectrum(variant, width, gen.n_datapoints)
        path = out_dir / f"{prefix}_variant{i}.csv"
        write_curve(path, rendered.values)
        written.append(path)
    print("wrote " + ", ".join(str(p) for p in written))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="specbench",
        description="Generate synthetic spectra datasets and benchmark 1-D CNN classifiers.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser(
        "gen-config",
        help="sample class fingerprints and write a validated dataset config",
        description="Sample class fingerprints, resample until the test grid is "
        "separable, and write the dataset config file. Flags default to the "
        "full-scale parameter set; --preset changes the baseline.",
    )
    p.add_argument("--preset", choices=["desk", "paper500"],
                   help="parameter baseline (default: paper500 values)")
    p.add_argument("--classes", type=int, help="number of classes (default: 500; desk 50)")
    p.add_argument("--datapoints", type=int, help="datapoints per spectrum (default: 5000; desk 1000)")
    p.add_argument("--peaks", metavar="MIN:MAX", help="peak count range (default: 2:10; desk 2:6)")
    p.add_argument("--margin", type=float, help="border margin in datapoints (default: 100; desk 20)")
    p.add_argument("--min-separation", type=float,
                   help="minimum distance between peaks of a class (default: 10)")
    p.add_argument("--intensity-floor", type=float,
                   help="lowest ideal peak intensity (default: 0.05)")
    p.add_argument("--train-samples", type=int,
                   help="random variants per class for train+validation (default: 60)")
    p.add_argument("--val-fraction", type=float,
                   help="fraction of train samples used for validation (default: 1/6)")
    p.add_argument("--shift", type=float,
                   help="training max position shift in datapoints (default: 50; desk 10)")
    p.add_argument("--intensity-delta", type=float,
                   help="training max relative intensity change (default: 0.05)")
    p.add_argument("--widths", metavar="LO:HI", help="training width range (default: 2:5)")
    p.add_argument("--grid-shift", type=float,
                   help="test grid position shift (default: 25; desk 5)")
    p.add_argument("--grid-delta", type=float,
                   help="test grid intensity change (default: 0.02)")
    p.add_argument("--test-width", type=float, help="test rendering width (default: 2)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--out", help="output config path (default: $SPECBENCH_OUT/dataset_config.json)")
    p.set_defaults(func=cmd_gen_config)

    p = sub.add_parser(
        "gen-data",
        help="render the train/validation/test arrays of a config",
        description="Render all splits of a config and write x/y NPY pairs "
        "(x_train/x_val/x_test and matching y files).",
    )
    p.add_argument("--config", required=True, help="dataset config file")
    p.add_argument("--out", help="output directory (default: $SPECBENCH_OUT or .)")
    p.add_argument("--threads", type=int, default=os.cpu_count(),
                   help="render threads; results do not depend on this (default: cores)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser(
        "validate",
        help="run the separability check on a config",
        description="Render every test-grid variant and verify it is cosine-nearest "
        "to its own class's ideal render. Exits 2 when violations exist.",
    )
    p.add_argument("--config", required=True, help="dataset config file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser(
        "train",
        help="train one model on a generated dataset",
        description="Train one architecture with the standard protocol and write "
        "its history CSV and checkpoint.",
    )
    p.add_argument("--arch", required=True, help="architecture name or .arch file")
    p.add_argument("--data", required=True, help="directory holding the NPY splits")
    p.add_argument("--seed", type=int, default=0, help="training seed (default: 0)")
    p.add_argument("--max-epochs", type=int, help="override the 500-epoch cap")
    p.add_argument("--batch-size", type=int, help="override the batch size 128")
    p.add_argument("--learning-rate", type=float, help="override the initial rate 3e-4")
    p.add_argument("--out", help="output directory (default: $SPECBENCH_OUT or .)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "bench",
        help="train a model matrix over multiple seeds and report",
        description="Train every listed model n times with derived seeds, evaluate "
        "on the test split, and write CSV/markdown reports plus a manifest.",
    )
    p.add_argument("--models", required=True,
                   help="comma-separated architecture names or .arch files")
    p.add_argument("--data", required=True, help="directory holding the NPY splits")
    p.add_argument("--seeds", type=int, default=5, help="repetitions per model (default: 5)")
    p.add_argument("--base-seed", type=int, default=0,
                   help="root of the per-repetition seed derivation (default: 0)")
    p.add_argument("--max-epochs", type=int, help="override the 500-epoch cap")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the generation timestamp from the markdown header")
    p.add_argument("--no-timing", action="store_true",
                   help="zero the time columns for byte-reproducible reports")
    p.add_argument("--out", help="output directory (default: $SPECBENCH_OUT or .)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser(
        "export-plot",
        help="export per-sample curves and peak markers as CSV",
        description="Write (index, intensity) CSV curves for one class's ideal "
        "render and sampled training variants, plus a (position, intensity) "
        "peak-marker CSV, for plotting with external tools.",
    )
    p.add_argument("--config", required=True, help="dataset config file")
    p.add_argument("--class-id", type=int, required=True, help="class to export")
    p.add_argument("--variants", type=int, default=2,
                   help="number of random training variants (default: 2)")
    p.add_argument("--seed", type=int,
                   help="variant sampling seed (default: the config's master seed)")
    p.add_argument("--out", help="output directory (default: $SPECBENCH_OUT or .)")
    p.set_defaults(func=cmd_export_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    if not getattr(args, "func", None):
        parser.print_help()
        return 1
    try:
        return args.func(args) or 0
    except (ConfigError, DomainError, FormatError, ParameterError, ShapeError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpecBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        return 3


if __name__ == "__main__":
    sys.exit(main())
