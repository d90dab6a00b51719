"""Class sampling, split assembly, separability validation, persistence.

A dataset is defined entirely by its config: global generation parameters
plus one fingerprint per class. Training/validation rows are random
per-peak variants, test rows come from the deterministic 3x3 grid, so the
two sides are structurally different by construction. Every random choice
uses a stream keyed by (master_seed, purpose, class, sample), which makes
generation reproducible independent of ordering and thread count.
"""

from __future__ import annotations

import json
import textwrap
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, DomainError, FormatError
from .npyio import read_npy, write_npy
from .peaks import (
    ClassFingerprint,
    TestGridConfig,
    VariationConfig,
    validate_fingerprint,
)
from .render import (
    build_test_grid,
    pack_fingerprints,
    render_rows,
    render_spectrum,
    sample_variant_arrays,
)
from .similarity import nearest_reference

SCHEMA_VERSION = "1"

_REJECTION_LIMIT = 1000
_SEPARABILITY_RETRIES = 50


@dataclass(frozen=True)
class GenerationConfig:
    """Full recipe for one dataset; every field participates in hashing
    the derived random streams through ``master_seed`` only."""

    n_datapoints: int
    n_classes: int
    min_peaks: int
    max_peaks: int
    border_margin: float
    training_variation: VariationConfig
    test_grid: TestGridConfig
    master_seed: int
    min_peak_separation: float = 10.0
    intensity_floor: float = 0.05
    train_samples_per_class: int = 60
    val_fraction: float = 1.0 / 6.0

    def __post_init__(self):
        if not (self.max_peaks >= self.min_peaks >= 1):
            raise ConfigError(
                f"need max_peaks >= min_peaks >= 1, got {self.min_peaks}..{self.max_peaks}"
            )
        if self.n_classes < 1:
            raise ConfigError(f"n_classes must be >= 1, got {self.n_classes}")
        if self.border_margin < self.training_variation.max_shift:
            raise ConfigError(
                f"border_margin {self.border_margin} must cover max_shift "
                f"{self.training_variation.max_shift}, otherwise varied peaks can leave the grid"
            )
        if self.n_datapoints <= 2 * self.border_margin:
            raise ConfigError(
                f"n_datapoints {self.n_datapoints} leaves no room inside margin {self.border_margin}"
            )
        if self.test_grid.grid_shift >= self.training_variation.max_shift:
            raise ConfigError("test grid_shift must be smaller than the training max_shift")
        if self.test_grid.grid_intensity_delta >= self.training_variation.max_intensity_delta:
            raise ConfigError(
                "test grid_intensity_delta must be smaller than the training max_intensity_delta"
            )
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.train_samples_per_class < 1:
            raise ConfigError("train_samples_per_class must be >= 1")
        if self.min_peak_separation < 0:
            raise ConfigError("min_peak_separation must be >= 0")
        if not (0.0 < self.intensity_floor <= 1.0):
            raise ConfigError(f"intensity_floor must be in (0, 1], got {self.intensity_floor}")

    @property
    def validation_samples_per_class(self) -> int:
        return int(round(self.train_samples_per_class * self.val_fraction))


@dataclass(frozen=True)
class DatasetConfig:
    generation: GenerationConfig
    fingerprints: tuple[ClassFingerprint, ...]

    def __post_init__(self):
        gen = self.generation
        if len(self.fingerprints) != gen.n_classes:
            raise ConfigError(
                f"config lists {len(self.fingerprints)} fingerprints for {gen.n_classes} classes"
            )
        for i, fp in enumerate(self.fingerprints):
            if fp.class_id != i:
                raise ConfigError(f"fingerprint {i} carries class_id {fp.class_id}")
            validate_fingerprint(
                fp,
                n_datapoints=gen.n_datapoints,
                border_margin=gen.border_margin,
                min_peaks=gen.min_peaks,
                max_peaks=gen.max_peaks,
                min_separation=gen.min_peak_separation,
                intensity_floor=gen.intensity_floor,
            )


@dataclass
class LabeledDataset:
    """Aligned (spectra, labels) rows for one split role."""

    spectra: np.ndarray  # (n_samples, n_datapoints) float32, C-order
    labels: np.ndarray  # (n_samples,) int64
    role: str

    def __post_init__(self):
        if self.role not in ("train", "validation", "test"):
            raise DomainError(f"unknown dataset role {self.role!r}")
        if self.spectra.ndim != 2 or self.labels.ndim != 1:
            raise DomainError("spectra must be 2-D and labels 1-D")
        if self.spectra.shape[0] != self.labels.shape[0]:
            raise DomainError(
                f"{self.spectra.shape[0]} spectra rows vs {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.spectra.shape[0]


class Violation(NamedTuple):
    class_id: int
    variant_index: int
    nearest_class_id: int


def generate_class_fingerprint(
    cfg: GenerationConfig, class_id: int, rng: np.random.Generator
) -> ClassFingerprint:
    """Draw one class: peak count, positions, then intensities.

    Positions are uniform inside the border margin and redrawn as a set
    until all pairwise gaps reach ``min_peak_separation``; intensities are
    uniform in [intensity_floor, 1] and rescaled so the tallest peak is
    exactly 1.0.
    """
    count = int(rng.integers(cfg.min_peaks, cfg.max_peaks + 1))
    low = float(cfg.border_margin)
    high = float(cfg.n_datapoints - cfg.border_margin - 1)
    for _ in range(_REJECTION_LIMIT):
        positions = np.sort(rng.uniform(low, high, count))
        if count == 1 or np.min(np.diff(positions)) >= cfg.min_peak_separation:
            break
    else:
        raise ConfigError(
            f"class {class_id}: could not place {count} peaks in [{low}, {high}] with "
            f"min_peak_separation {cfg.min_peak_separation} after {_REJECTION_LIMIT} attempts"
        )
    intensities = rng.uniform(cfg.intensity_floor, 1.0, count)
    intensities /= intensities.max()
    return ClassFingerprint.from_arrays(class_id, positions, intensities)


def _fingerprint_for(cfg: GenerationConfig, class_id: int, retry: int) -> ClassFingerprint:
    stream = rngmod.stream(cfg.master_seed, rngmod.FINGERPRINT, class_id, retry)
    return generate_class_fingerprint(cfg, class_id, stream)


def generate_dataset_config(cfg: GenerationConfig) -> DatasetConfig:
    """Sample all class fingerprints and resample until test-separable.

    Each class draws from its own child stream, so the result does not
    depend on generation order. Classes whose grid variants are closer to
    another class's ideal render are resampled with a retry counter mixed
    into their stream key, leaving every other class untouched.
    """
    fingerprints = [_fingerprint_for(cfg, cid, 0) for cid in range(cfg.n_classes)]
    retries = [0] * cfg.n_classes
    while True:
        config = DatasetConfig(generation=cfg, fingerprints=tuple(fingerprints))
        violations = validate_separability(config)
        if not violations:
            return config
        for cid in sorted({v.class_id for v in violations}):
            retries[cid] += 1
            if retries[cid] > _SEPARABILITY_RETRIES:
                raise ConfigError(
                    f"class {cid} still overlaps another class after "
                    f"{_SEPARABILITY_RETRIES} resamples; use fewer classes or weaker "
                    f"test-grid variations"
                )
            fingerprints[cid] = _fingerprint_for(cfg, cid, retries[cid])


def ideal_render_matrix(config: DatasetConfig) -> np.ndarray:
    """Float64 matrix of every class's ideal render at the test width."""
    gen = config.generation
    out = np.empty((gen.n_classes, gen.n_datapoints), dtype=np.float64)
    for fp in config.fingerprints:
        out[fp.class_id] = render_spectrum(
            fp, gen.test_grid.test_width, gen.n_datapoints
        ).values
    return out


ORACLE_GROUP_SIZE = 3


def oracle_reference_matrix(config: DatasetConfig) -> np.ndarray:
    """Per class: the ideal render plus its two grid-shifted renders.

    A raw cosine against the ideal render alone cannot tolerate the grid
    shift: at test width w a global shift s multiplies the self-similarity
    by roughly exp(-s^2 / (4 w^2)), ~0.2 already for the desk preset and
    effectively zero at full scale, so accidental single-peak alignments
    with other classes would always win. Holding one reference per grid
    shift keeps the match exact (global intensity scaling cancels in the
    cosine) while duplicate or near-duplicate classes still surface as
    ties. Row order: class-major, shift in (-s, 0, +s).
    """
    gen = config.generation
    shifts = (-gen.test_grid.grid_shift, 0.0, gen.test_grid.grid_shift)
    out = np.empty((gen.n_classes * ORACLE_GROUP_SIZE, gen.n_datapoints), dtype=np.float64)
    for fp in config.fingerprints:
        positions = fp.positions()
        intensities = fp.intensities()
        for si, shift in enumerate(shifts):
            shifted = ClassFingerprint.from_arrays(fp.class_id, positions + shift, intensities)
            out[fp.class_id * ORACLE_GROUP_SIZE + si] = render_spectrum(
                shifted, gen.test_grid.test_width, gen.n_datapoints
            ).values
    return out


def validate_separability(config: DatasetConfig) -> list[Violation]:
    """Check that every test-grid variant is cosine-nearest to its own class.

    Nearest is taken over the oracle references (ideal render of each
    class plus its grid-shifted renders). Returns one entry per failing
    (class, variant); an empty list means the dataset is test-separable.
    Exact cross-class similarity ties count as violations and report the
    tied class.
    """
    gen = config.generation
    references = oracle_reference_matrix(config)
    variants = []
    for fp in config.fingerprints:
        variants.extend(build_test_grid(fp, gen.test_grid))
    queries = np.empty((len(variants), gen.n_datapoints), dtype=np.float64)
    for i, (fp, width) in enumerate(variants):
        queries[i] = render_spectrum(fp, width, gen.n_datapoints).values
    nearest, tied_with = nearest_reference(queries, references, group_size=ORACLE_GROUP_SIZE)
    violations = []
    for i in range(len(variants)):
        cid, variant_index = divmod(i, 9)
        if nearest[i] != cid:
            violations.append(Violation(cid, variant_index, int(nearest[i])))
        elif tied_with[i] >= 0:
            violations.append(Violation(cid, variant_index, int(tied_with[i])))
    return violations


def build_dataset(config: DatasetConfig, threads: int = 1) -> dict[str, LabeledDataset]:
    """Render the train/validation/test splits of a validated config.

    Per class: ``train_samples_per_class`` random variants (the last
    ``validation_samples_per_class`` of them form the validation split)
    plus the 9 deterministic grid variants for the test split. Rows are
    ordered class-major with ascending sample index; every spectrum is
    max-normalized float32.
    """
    gen = config.generation
    n_val = gen.validation_samples_per_class
    n_train = gen.train_samples_per_class - n_val

    train_parts, val_parts = [], []
    for fp in config.fingerprints:
        base_pos = fp.positions()
        base_int = fp.intensities()
        for j in range(gen.train_samples_per_class):
            stream = rngmod.stream(
                gen.master_seed, rngmod.TRAIN_VARIANT, fp.class_id, j
            )
            pos, inten, width = sample_variant_arrays(
                base_pos, base_int, gen.training_variation, stream
            )
            variant = (ClassFingerprint.from_arrays(fp.class_id, pos, inten), width)
            (train_parts if j < n_train else val_parts).append(variant)

    test_parts = []
    for fp in config.fingerprints:
        test_parts.extend(build_test_grid(fp, gen.test_grid))

    splits = {}
    for role, variants in (("train", train_parts), ("validation", val_parts), ("test", test_parts)):
        positions, intensities, offsets, widths, labels = pack_fingerprints(variants)
        spectra = render_rows(
            positions, intensities, offsets, widths, gen.n_datapoints,
            normalize=True, threads=threads,
        )
        splits[role] = LabeledDataset(spectra=spectra, labels=labels, role=role)
    return splits


# ---------------------------------------------------------------------------
# persistence: config document
# ---------------------------------------------------------------------------

_GENERATION_KEYS = {
    "n_datapoints", "n_classes", "min_peaks", "max_peaks", "border_margin",
    "min_peak_separation", "intensity_floor", "train_samples_per_class",
    "val_fraction", "training_variation", "test_grid", "master_seed",
}
_VARIATION_KEYS = {"max_shift", "max_intensity_delta", "width_range", "multiplicative_intensity"}
_GRID_KEYS = {"grid_shift", "grid_intensity_delta", "test_width"}
_FINGERPRINT_KEYS = {"id", "positions", "intensities"}


def save_config(config: DatasetConfig, path) -> None:
    """Write the config as indented JSON, one line per fingerprint.

    Floats are emitted as shortest round-trip decimals, so load_config
    restores bit-identical values.
    """
    gen_dict = asdict(config.generation)
    gen_text = textwrap.indent(json.dumps(gen_dict, indent=2), "  ").lstrip()
    fp_lines = ",\n".join(
        "    " + json.dumps(
            {
                "id": fp.class_id,
                "positions": [p.position for p in fp.peaks],
                "intensities": [p.intensity for p in fp.peaks],
            },
            separators=(", ", ": "),
        )
        for fp in config.fingerprints
    )
    text = (
        "{\n"
        f'  "schema_version": "{SCHEMA_VERSION}",\n'
        f'  "generation": {gen_text},\n'
        '  "fingerprints": [\n'
        f"{fp_lines}\n"
        "  ]\n"
        "}\n"
    )
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise FormatError(f"config missing required field {path}.{key}")
    return mapping[key]


def _warn_unknown(mapping: dict, known: set, path: str) -> None:
    extra = sorted(set(mapping) - known)
    if extra:
        warnings.warn(f"config has unknown fields at {path}: {', '.join(extra)}", stacklevel=3)


def load_config(path) -> DatasetConfig:
    """Parse and fully validate a config document.

    Unknown fields are accepted with a warning (forward compatibility);
    missing fields, schema mismatches and invariant violations raise
    FormatError/ConfigError/DomainError naming the offending path or
    class.
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("config root must be an object")
    _warn_unknown(doc, {"schema_version", "generation", "fingerprints"}, "$")
    version = _require(doc, "schema_version", "$")
    if version != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION!r}")

    gen_doc = _require(doc, "generation", "$")
    _warn_unknown(gen_doc, _GENERATION_KEYS, "$.generation")
    var_doc = _require(gen_doc, "training_variation", "$.generation")
    _warn_unknown(var_doc, _VARIATION_KEYS, "$.generation.training_variation")
    grid_doc = _require(gen_doc, "test_grid", "$.generation")
    _warn_unknown(grid_doc, _GRID_KEYS, "$.generation.test_grid")

    variation = VariationConfig(
        max_shift=float(_require(var_doc, "max_shift", "$.generation.training_variation")),
        max_intensity_delta=float(
            _require(var_doc, "max_intensity_delta", "$.generation.training_variation")
        ),
        width_range=tuple(
            float(w) for w in _require(var_doc, "width_range", "$.generation.training_variation")
        ),
        multiplicative_intensity=bool(var_doc.get("multiplicative_intensity", True)),
    )
    grid = TestGridConfig(
        grid_shift=float(_require(grid_doc, "grid_shift", "$.generation.test_grid")),
        grid_intensity_delta=float(
            _require(grid_doc, "grid_intensity_delta", "$.generation.test_grid")
        ),
        test_width=float(_require(grid_doc, "test_width", "$.generation.test_grid")),
    )
    gen = GenerationConfig(
        n_datapoints=int(_require(gen_doc, "n_datapoints", "$.generation")),
        n_classes=int(_require(gen_doc, "n_classes", "$.generation")),
        min_peaks=int(_require(gen_doc, "min_peaks", "$.generation")),
        max_peaks=int(_require(gen_doc, "max_peaks", "$.generation")),
        border_margin=float(_require(gen_doc, "border_margin", "$.generation")),
        min_peak_separation=float(_require(gen_doc, "min_peak_separation", "$.generation")),
        intensity_floor=float(_require(gen_doc, "intensity_floor", "$.generation")),
        train_samples_per_class=int(_require(gen_doc, "train_samples_per_class", "$.generation")),
        val_fraction=float(_require(gen_doc, "val_fraction", "$.generation")),
        training_variation=variation,
        test_grid=grid,
        master_seed=int(_require(gen_doc, "master_seed", "$.generation")),
    )

    fp_docs = _require(doc, "fingerprints", "$")
    fingerprints = []
    for i, fp_doc in enumerate(fp_docs):
        _warn_unknown(fp_doc, _FINGERPRINT_KEYS, f"$.fingerprints[{i}]")
        fingerprints.append(
            ClassFingerprint.from_arrays(
                int(_require(fp_doc, "id", f"$.fingerprints[{i}]")),
                _require(fp_doc, "positions", f"$.fingerprints[{i}]"),
                _require(fp_doc, "intensities", f"$.fingerprints[{i}]"),
            )
        )
    return DatasetConfig(generation=gen, fingerprints=tuple(fingerprints))


# ---------------------------------------------------------------------------
# persistence: arrays
# ---------------------------------------------------------------------------


def save_arrays(dataset: LabeledDataset, x_path, y_path) -> None:
    """Persist spectra as float32 and labels as int64 NPY v1.0 files."""
    write_npy(x_path, np.ascontiguousarray(dataset.spectra, dtype=np.float32))
    write_npy(y_path, np.ascontiguousarray(dataset.labels, dtype=np.int64))


def load_arrays(x_path, y_path, role: str) -> LabeledDataset:
    x = read_npy(x_path)
    y = read_npy(y_path)
    if x.ndim != 2 or x.dtype != np.float32:
        raise FormatError(f"{x_path}: expected 2-D <f4 spectra, got {x.dtype} {x.shape}")
    if y.ndim != 1 or y.dtype != np.int64:
        raise FormatError(f"{y_path}: expected 1-D <i8 labels, got {y.dtype} {y.shape}")
    if x.shape[0] != y.shape[0]:
        raise FormatError(f"{x_path} has {x.shape[0]} rows but {y_path} has {y.shape[0]}")
    return LabeledDataset(spectra=x, labels=y, role=role)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def preset_config(name: str, master_seed: int) -> GenerationConfig:
    """Named parameter sets: full-scale 'paper500' and quick 'desk'."""
    if name == "paper500":
        return GenerationConfig(
            n_datapoints=5000,
            n_classes=500,
            min_peaks=2,
            max_peaks=10,
            border_margin=100.0,
            training_variation=VariationConfig(50.0, 0.05, (2.0, 5.0)),
            test_grid=TestGridConfig(25.0, 0.02, 2.0),
            master_seed=master_seed,
        )
    if name == "desk":
        return GenerationConfig(
            n_datapoints=1000,
            n_classes=50,
            min_peaks=2,
            max_peaks=6,
            border_margin=20.0,
            training_variation=VariationConfig(10.0, 0.05, (2.0, 5.0)),
            test_grid=TestGridConfig(5.0, 0.02, 2.0),
            master_seed=master_seed,
        )
    raise ConfigError(f"unknown preset {name!r}; available: desk, paper500")
