"""Turning discrete peak fingerprints into continuous spectra.

``render_spectrum`` is the float64 reference path used for validation and
analysis. Bulk dataset generation goes through ``render_rows``, which
dispatches to the compiled kernel when it is available (set
``SPECBENCH_KERNEL=numpy|compiled|auto`` to override). Both kernels share
the accumulation order and the exact-underflow window, so switching
backends changes results by at most the last ulp of exp(); byte-level
reproducibility claims always hold within one backend.

All functions are pure given an explicit random generator and safe to call
from many threads at once.
"""

from __future__ import annotations

import os

import numpy as np

from . import _render_numpy
from .errors import ConfigError, DomainError, ParameterError
from .peaks import ClassFingerprint, Spectrum, TestGridConfig, VariationConfig

try:
    from . import _render_cy
except ImportError:
    _render_cy = None


def _pick_backend():
    choice = os.environ.get("SPECBENCH_KERNEL", "auto")
    if choice == "numpy":
        return _render_numpy
    if choice == "compiled":
        if _render_cy is None:
            raise ConfigError(
                "SPECBENCH_KERNEL=compiled but the compiled kernel is not built"
            )
        return _render_cy
    if choice == "auto":
        return _render_cy if _render_cy is not None else _render_numpy
    raise ConfigError(f"SPECBENCH_KERNEL must be auto, numpy or compiled, got {choice!r}")


def active_backend() -> str:
    """Name of the kernel ``render_rows`` will use: 'compiled' or 'numpy'."""
    return _pick_backend().BACKEND_NAME


def _check_peaks_in_range(positions: np.ndarray, n_datapoints: int, who: str) -> None:
    if positions.size and (positions.min() < 0 or positions.max() >= n_datapoints):
        raise DomainError(f"{who}: peak position outside [0, {n_datapoints})")


def render_spectrum(
    fingerprint: ClassFingerprint,
    width: float,
    n_datapoints: int,
    normalize: bool = True,
) -> Spectrum:
    """Sum one Gaussian bell per peak, evaluated on the integer grid.

    value[x] = sum_peaks intensity * exp(-(x - position)^2 / (2 width^2)).
    ``width`` is the Gaussian standard deviation in datapoint units. With
    ``normalize`` the result is divided by its maximum, so the tallest
    point is exactly 1.0; an empty fingerprint renders to zeros and is
    returned unnormalized.
    """
    if width <= 0:
        raise ParameterError(f"width must be > 0, got {width}")
    if n_datapoints <= 0:
        raise ParameterError(f"n_datapoints must be > 0, got {n_datapoints}")
    positions = fingerprint.positions()
    _check_peaks_in_range(positions, n_datapoints, f"class {fingerprint.class_id}")
    intensities = fingerprint.intensities()

    grid = np.arange(n_datapoints, dtype=np.float64)
    values = np.zeros(n_datapoints, dtype=np.float64)
    inv = 1.0 / (2.0 * width * width)
    radius = width * _render_numpy.UNDERFLOW_RADIUS
    for p, inten in zip(positions, intensities):
        lo = max(int(np.ceil(p - radius)), 0)
        hi = min(int(np.floor(p + radius)), n_datapoints - 1)
        if hi < lo:
            continue
        d = grid[lo : hi + 1] - p
        values[lo : hi + 1] += inten * np.exp(-(d * d) * inv)
    if normalize:
        peak = values.max()
        if peak > 0.0:
            values /= peak
    return Spectrum(values=values, label=fingerprint.class_id)


def render_rows(
    positions: np.ndarray,
    intensities: np.ndarray,
    offsets: np.ndarray,
    widths: np.ndarray,
    n_datapoints: int,
    normalize: bool = True,
    threads: int = 1,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Render many spectra into a float32 matrix using the active kernel.

    Row i is built from peaks ``offsets[i]:offsets[i+1]`` of the flattened
    ``positions``/``intensities`` arrays at width ``widths[i]``. Output is
    identical for any ``threads`` value; rows never share state.
    """
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    intensities = np.ascontiguousarray(intensities, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    widths = np.ascontiguousarray(widths, dtype=np.float64)
    n_spectra = widths.shape[0]
    if offsets.shape[0] != n_spectra + 1:
        raise ParameterError("offsets must have one more entry than widths")
    if positions.shape != intensities.shape:
        raise ParameterError("positions and intensities must be aligned")
    if np.any(widths <= 0):
        raise ParameterError("all widths must be > 0")
    _check_peaks_in_range(positions, n_datapoints, "render_rows")
    if out is None:
        out = np.empty((n_spectra, n_datapoints), dtype=np.float32)
    backend = _pick_backend()
    backend.render_batch(
        positions, intensities, offsets, widths, n_datapoints, bool(normalize),
        max(int(threads), 1), out,
    )
    return out


def sample_variant_arrays(
    positions: np.ndarray,
    intensities: np.ndarray,
    var: VariationConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Array core of ``sample_training_variant``; fixed draw order.

    Draws, in order: per-peak position shifts, per-peak intensity changes,
    then one shared width. Identical generators therefore give identical
    variants no matter which wrapper is used.
    """
    k = positions.shape[0]
    shifts = rng.uniform(-var.max_shift, var.max_shift, k)
    deltas = rng.uniform(-var.max_intensity_delta, var.max_intensity_delta, k)
    lo, hi = var.width_range
    width = float(rng.uniform(lo, hi))
    new_positions = positions + shifts
    if var.multiplicative_intensity:
        new_intensities = intensities * (1.0 + deltas)
    else:
        # additive change of the same magnitude, floored to stay positive
        new_intensities = np.maximum(intensities + deltas, 1e-6)
    return new_positions, new_intensities, width


def sample_training_variant(
    fingerprint: ClassFingerprint,
    var: VariationConfig,
    rng: np.random.Generator,
    n_datapoints: int | None = None,
) -> tuple[ClassFingerprint, float]:
    """Randomly perturb every peak and draw one rendering width.

    Each peak independently gets a uniform position shift in
    [-max_shift, +max_shift] and an intensity change of up to
    max_intensity_delta; the whole variant shares one width drawn from
    ``width_range``. Pass ``n_datapoints`` to assert the shifted peaks
    stayed on the grid (guaranteed upstream by the border margin).
    """
    pos, inten, width = sample_variant_arrays(
        fingerprint.positions(), fingerprint.intensities(), var, rng
    )
    if n_datapoints is not None:
        _check_peaks_in_range(pos, n_datapoints, f"class {fingerprint.class_id} variant")
    return ClassFingerprint.from_arrays(fingerprint.class_id, pos, inten), width


def build_test_grid(
    fingerprint: ClassFingerprint, grid: TestGridConfig
) -> list[tuple[ClassFingerprint, float]]:
    """The 9 deterministic test variants of one class.

    Cartesian product of a global position shift in {-s, 0, +s} (outer
    loop) and a global intensity scale in {1-d, 1, 1+d} (inner loop),
    applied to all peaks alike; variant index 4 is the unmodified ideal
    fingerprint. Every variant renders at ``grid.test_width``.
    """
    positions = fingerprint.positions()
    intensities = fingerprint.intensities()
    variants = []
    for shift in (-grid.grid_shift, 0.0, grid.grid_shift):
        for scale in (1.0 - grid.grid_intensity_delta, 1.0, 1.0 + grid.grid_intensity_delta):
            fp = ClassFingerprint.from_arrays(
                fingerprint.class_id, positions + shift, intensities * scale
            )
            variants.append((fp, float(grid.test_width)))
    return variants


IDENTITY_VARIANT_INDEX = 4


def pack_fingerprints(
    variants: list[tuple[ClassFingerprint, float]],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flatten (fingerprint, width) pairs into render_rows inputs + labels."""
    counts = np.array([len(fp) for fp, _ in variants], dtype=np.int64)
    offsets = np.zeros(len(variants) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    positions = np.empty(int(offsets[-1]), dtype=np.float64)
    intensities = np.empty(int(offsets[-1]), dtype=np.float64)
    widths = np.empty(len(variants), dtype=np.float64)
    labels = np.empty(len(variants), dtype=np.int64)
    for i, (fp, width) in enumerate(variants):
        positions[offsets[i] : offsets[i + 1]] = fp.positions()
        intensities[offsets[i] : offsets[i + 1]] = fp.intensities()
        widths[i] = width
        labels[i] = fp.class_id
    return positions, intensities, offsets, widths, labels


__all__ = [
    "active_backend",
    "render_spectrum",
    "render_rows",
    "sample_training_variant",
    "sample_variant_arrays",
    "build_test_grid",
    "pack_fingerprints",
    "IDENTITY_VARIANT_INDEX",
]
