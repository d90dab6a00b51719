"""Multi-seed benchmark orchestration and report formatting.

Every (model, repetition) pair trains from scratch with a seed derived
from the base seed and the repetition index alone, so all models of one
repetition share both their initialization stream root and their
minibatch order. Rows are reported in (model, repetition) order no matter
how runs are scheduled. Aggregates use the sample standard deviation
(n - 1); a single repetition reports std 0 and is flagged.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .arch import ArchitectureSpec, build_model
from .datagen import (
    ORACLE_GROUP_SIZE,
    DatasetConfig,
    LabeledDataset,
    oracle_reference_matrix,
)
from .errors import SpecBenchError
from .similarity import nearest_reference
from .training import TrainingConfig, evaluate, train


@dataclass(frozen=True)
class RunRow:
    model_name: str
    seed: int
    misclassifications: int
    trained_epochs: int
    wall_time_s: float
    cpu_time_s: float
    status: str = "ok"  # ok | error
    error: str = ""


@dataclass(frozen=True)
class ModelAggregate:
    model_name: str
    runs: int
    mean_misclassifications: float
    std_misclassifications: float
    single_run: bool  # std undefined, reported as 0
    epochs_min: int
    epochs_max: int
    mean_wall_time_s: float
    mean_cpu_time_s: float


@dataclass
class RunReport:
    rows: list[RunRow] = field(default_factory=list)
    base_seed: int = 0
    n_seeds: int = 0
    complete: bool = True
    hardware: str = ""

    def aggregates(self) -> list[ModelAggregate]:
        order: list[str] = []
        for row in self.rows:
            if row.model_name not in order:
                order.append(row.model_name)
        out = []
        for name in order:
            ok = [r for r in self.rows if r.model_name == name and r.status == "ok"]
            if not ok:
                continue
            wrong = np.array([r.misclassifications for r in ok], dtype=np.float64)
            single = len(ok) == 1
            out.append(
                ModelAggregate(
                    model_name=name,
                    runs=len(ok),
                    mean_misclassifications=float(wrong.mean()),
                    std_misclassifications=0.0 if single else float(wrong.std(ddof=1)),
                    single_run=single,
                    epochs_min=min(r.trained_epochs for r in ok),
                    epochs_max=max(r.trained_epochs for r in ok),
                    mean_wall_time_s=float(np.mean([r.wall_time_s for r in ok])),
                    mean_cpu_time_s=float(np.mean([r.cpu_time_s for r in ok])),
                )
            )
        return out


def hardware_summary() -> str:
    return f"{platform.machine()} / {platform.processor() or 'unknown cpu'} / {platform.system()}"


def oracle_classify(spectrum: np.ndarray, config: DatasetConfig) -> int:
    """Nearest class by cosine similarity against the oracle references.

    The machine stand-in for an expert eyeballing a clean reference chart:
    each class is represented by its ideal render at the test width plus
    the two grid-shifted renders, and the query goes to the class whose
    best reference points the same way. Cross-class ties break toward the
    lower id and emit a warning.
    """
    nearest, tied = oracle_classify_batch(np.asarray(spectrum)[None, :], config)
    if tied[0] >= 0:
        warnings.warn(
            f"oracle similarity tie between classes {int(nearest[0])} and {int(tied[0])}",
            stacklevel=2,
        )
    return int(nearest[0])


def oracle_classify_batch(
    spectra: np.ndarray, config: DatasetConfig
) -> tuple[np.ndarray, np.ndarray]:
    if spectra.shape[1] != config.generation.n_datapoints:
        raise SpecBenchError(
            f"spectrum length {spectra.shape[1]} does not match config "
            f"({config.generation.n_datapoints} datapoints)"
        )
    references = oracle_reference_matrix(config)
    return nearest_reference(spectra, references, group_size=ORACLE_GROUP_SIZE)


def run_benchmark(
    specs: list[ArchitectureSpec],
    datasets: dict[str, LabeledDataset],
    n_seeds: int = 5,
    base_seed: int = 0,
    training: TrainingConfig | None = None,
) -> RunReport:
    """Train every spec n_seeds times and evaluate on the test split.

    A failed run becomes an error row and clears ``complete``; remaining
    runs still execute.
    """
    train_set, val_set, test_set = (
        datasets["train"], datasets["validation"], datasets["test"]
    )
    n_datapoints = train_set.spectra.shape[1]
    n_classes = int(train_set.labels.max()) + 1
    base_cfg = training or TrainingConfig()
    report = RunReport(
        base_seed=base_seed, n_seeds=n_seeds, hardware=hardware_summary()
    )
    for spec in specs:
        for rep in range(n_seeds):
            seed = rngmod.derive_seed(base_seed, rngmod.BENCH_RUN, rep)
            cfg = replace(base_cfg, seed=seed)
            wall0, cpu0 = time.perf_counter(), time.process_time()
            try:
                model = build_model(spec, n_datapoints, n_classes, seed=seed)
                model, history = train(model, train_set, val_set, cfg)
                outcome = evaluate(model, test_set)
                row = RunRow(
                    model_name=spec.name,
                    seed=seed,
                    misclassifications=outcome["misclassifications"],
                    trained_epochs=len(history.epochs),
                    wall_time_s=time.perf_counter() - wall0,
                    cpu_time_s=time.process_time() - cpu0,
                )
            except SpecBenchError as exc:
                report.complete = False
                row = RunRow(
                    model_name=spec.name,
                    seed=seed,
                    misclassifications=-1,
                    trained_epochs=0,
                    wall_time_s=time.perf_counter() - wall0,
                    cpu_time_s=time.process_time() - cpu0,
                    status="error",
                    error=str(exc),
                )
            report.rows.append(row)
    return report


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

_CSV_COLUMNS = "model,seed,misclassifications,trained_epochs,wall_time_s,cpu_time_s,status,error"


def _trim(value: float) -> str:
    """Render 14.0 as '14' and 13.75 as '13.8' (Table-style numbers)."""
    rounded = round(value, 1)
    if rounded == int(rounded):
        return str(int(rounded))
    return f"{rounded:.1f}"


def format_report(report: RunReport, style: str, timestamp: str | None = None) -> str:
    """Render a report as machine-stable CSV rows or a markdown table."""
    if style == "csv":
        lines = [_CSV_COLUMNS]
        for r in report.rows:
            lines.append(
                f"{r.model_name},{r.seed},{r.misclassifications},{r.trained_epochs},"
                f"{r.wall_time_s!r},{r.cpu_time_s!r},{r.status},{r.error.replace(',', ';')}"
            )
        return "\n".join(lines) + "\n"
    if style == "markdown":
        lines = ["# Benchmark report", ""]
        if timestamp:
            lines.append(f"Generated: {timestamp}")
        lines += [
            f"Hardware: {report.hardware}",
            f"Base seed: {report.base_seed}, repetitions per model: {report.n_seeds}",
        ]
        if not report.complete:
            lines.append("WARNING: some runs failed; aggregates cover completed runs only.")
        lines += [
            "",
            "| Model | Misclassifications | Trained Epochs | Time (min) |",
            "| --- | --- | --- | --- |",
        ]
        flagged = False
        for agg in report.aggregates():
            marker = ""
            if agg.single_run:
                marker, flagged = "*", True
            lines.append(
                f"| {agg.model_name} | {_trim(agg.mean_misclassifications)} +/- "
                f"{_trim(agg.std_misclassifications)}{marker} | "
                f"{agg.epochs_min}-{agg.epochs_max} | "
                f"{_trim(agg.mean_wall_time_s / 60.0)} |"
            )
        if flagged:
            lines += ["", "\\* single run: standard deviation undefined, reported as 0."]
        return "\n".join(lines) + "\n"
    raise SpecBenchError(f"unknown report style {style!r}")


def parse_report_csv(text: str) -> RunReport:
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != _CSV_COLUMNS:
        raise SpecBenchError("unrecognized report CSV header")
    report = RunReport()
    for ln in lines[1:]:
        model, seed, wrong, epochs, wall, cpu, status, error = ln.split(",", 7)
        report.rows.append(
            RunRow(model, int(seed), int(wrong), int(epochs), float(wall),
                   float(cpu), status, error)
        )
    report.complete = all(r.status == "ok" for r in report.rows)
    return report


def write_manifest(path, specs: list[ArchitectureSpec], dataset_paths: dict[str, str],
                   base_seed: int, n_seeds: int) -> None:
    """Record what a benchmark ran on: specs, data digests, seed scheme."""
    digests = {}
    for name, file_path in sorted(dataset_paths.items()):
        digest = hashlib.sha256()
        with open(file_path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                digest.update(chunk)
        digests[name] = digest.hexdigest()
    manifest = {
        "format_version": 1,
        "base_seed": base_seed,
        "n_seeds": n_seeds,
        "seed_derivation": "derive_seed(base_seed, BENCH_RUN, repetition)",
        "models": [
            {"name": s.name, "source": s.source, "grammar": s.grammar} for s in specs
        ],
        "dataset_sha256": digests,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
