"""Discrete peak descriptions and their variation parameters.

A class is identified by its fingerprint: an ordered set of peaks, each a
(position, intensity) pair on a fixed-length datapoint grid. Positions are
kept as continuous reals; only rendering evaluates them on the integer
grid, which avoids quantization artifacts for small grid shifts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError

# Ideal intensities are normalized to a tallest peak of 1.0; training
# variation may scale any peak up by at most +5%, hence the hard ceiling.
INTENSITY_CEILING = 1.05


@dataclass(frozen=True)
class Peak:
    """One discrete peak: grid position (datapoints) and relative height."""

    position: float
    intensity: float

    def __post_init__(self):
        if not np.isfinite(self.position) or self.position < 0:
            raise DomainError(f"peak position must be finite and >= 0, got {self.position}")
        if not (0.0 < self.intensity <= INTENSITY_CEILING):
            raise DomainError(
                f"peak intensity must be in (0, {INTENSITY_CEILING}], got {self.intensity}"
            )


@dataclass(frozen=True)
class ClassFingerprint:
    """Ordered peak list defining one class, sorted ascending by position."""

    class_id: int
    peaks: tuple[Peak, ...]

    def __post_init__(self):
        positions = [p.position for p in self.peaks]
        if any(b < a for a, b in zip(positions, positions[1:])):
            raise DomainError(f"class {self.class_id}: peaks must be sorted by position")

    @classmethod
    def from_arrays(cls, class_id: int, positions, intensities) -> "ClassFingerprint":
        positions = np.asarray(positions, dtype=np.float64)
        intensities = np.asarray(intensities, dtype=np.float64)
        if positions.shape != intensities.shape or positions.ndim != 1:
            raise DomainError(f"class {class_id}: positions/intensities must be 1-D and aligned")
        order = np.argsort(positions, kind="stable")
        return cls(
            class_id=int(class_id),
            peaks=tuple(
                Peak(float(p), float(i)) for p, i in zip(positions[order], intensities[order])
            ),
        )

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.peaks], dtype=np.float64)

    def intensities(self) -> np.ndarray:
        return np.array([p.intensity for p in self.peaks], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.peaks)


@dataclass(frozen=True)
class VariationConfig:
    """Magnitudes of the random per-peak alterations used for training data.

    ``max_shift`` bounds the uniform position shift (datapoints),
    ``max_intensity_delta`` the relative intensity change, and
    ``width_range`` the per-spectrum Gaussian width draw. Intensity
    changes are multiplicative by default; ``multiplicative_intensity``
    False switches to an additive change of the same magnitude.
    """

    max_shift: float
    max_intensity_delta: float
    width_range: tuple[float, float]
    multiplicative_intensity: bool = True

    def __post_init__(self):
        if self.max_shift < 0:
            raise ParameterError(f"max_shift must be >= 0, got {self.max_shift}")
        if not (0.0 <= self.max_intensity_delta < 1.0):
            raise ParameterError(
                f"max_intensity_delta must be in [0, 1), got {self.max_intensity_delta}"
            )
        lo, hi = self.width_range
        if lo <= 0 or hi < lo:
            raise ParameterError(f"width_range must satisfy 0 < lo <= hi, got {self.width_range}")


@dataclass(frozen=True)
class TestGridConfig:
    """Deterministic 3x3 grid of global alterations used for test data.

    The grid is intentionally weaker than the training variation so the
    test set stays free of class overlap; that relation is enforced where
    both configs meet (GenerationConfig).
    """

    grid_shift: float
    grid_intensity_delta: float
    test_width: float

    def __post_init__(self):
        if self.grid_shift < 0:
            raise ParameterError(f"grid_shift must be >= 0, got {self.grid_shift}")
        if not (0.0 <= self.grid_intensity_delta < 1.0):
            raise ParameterError(
                f"grid_intensity_delta must be in [0, 1), got {self.grid_intensity_delta}"
            )
        if self.test_width <= 0:
            raise ParameterError(f"test_width must be > 0, got {self.test_width}")


@dataclass
class Spectrum:
    """A rendered spectrum: fixed-length non-negative intensities + label."""

    values: np.ndarray
    label: int

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 1:
            raise DomainError("spectrum values must be 1-D")


def validate_fingerprint(
    fingerprint: ClassFingerprint,
    n_datapoints: int,
    border_margin: float = 0.0,
    min_peaks: int = 1,
    max_peaks: int | None = None,
    min_separation: float = 0.0,
    intensity_floor: float | None = None,
    require_unit_peak: bool = True,
) -> None:
    """Check a fingerprint against generation-level invariants.

    Raises DomainError naming the class id on the first violation. Used
    both after generation and when loading persisted configs.
    """
    cid = fingerprint.class_id
    k = len(fingerprint)
    if k < min_peaks or (max_peaks is not None and k > max_peaks):
        raise DomainError(f"class {cid}: peak count {k} outside [{min_peaks}, {max_peaks}]")
    pos = fingerprint.positions()
    lo, hi = border_margin, n_datapoints - border_margin - 1
    if np.any(pos < lo) or np.any(pos > hi):
        raise DomainError(
            f"class {cid}: peak position outside border margin [{lo}, {hi}] "
            f"for {n_datapoints} datapoints"
        )
    if k > 1 and min_separation > 0 and np.min(np.diff(pos)) < min_separation:
        raise DomainError(f"class {cid}: peak separation below {min_separation} datapoints")
    inten = fingerprint.intensities()
    if intensity_floor is not None and np.any(inten < intensity_floor):
        raise DomainError(f"class {cid}: peak intensity below floor {intensity_floor}")
    if np.any(inten > 1.0):
        raise DomainError(f"class {cid}: ideal peak intensity above 1.0")
    if require_unit_peak and not np.any(inten == 1.0):
        raise DomainError(f"class {cid}: no peak with intensity exactly 1.0")
