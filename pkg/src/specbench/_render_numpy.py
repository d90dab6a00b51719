"""Pure-numpy rendering kernel, the fallback for the compiled extension.

Each spectrum row is accumulated in float64, peak by peak in fingerprint
order, then normalized and cast to float32. A peak only touches grid
points inside ``sigma * UNDERFLOW_RADIUS`` of its position; beyond that
radius exp() underflows to exactly 0.0 in float64, so the windowed sum is
bit-identical to evaluating every grid point (enforced by tests).

Rows are fully independent, so the thread pool below cannot change
results: any partition of rows over any number of workers produces the
same bytes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# exp(-a) == 0.0 exactly in float64 for a >= ~745.14; 746 leaves margin for
# the rounding of a itself. radius = sigma * sqrt(2 * 746).
UNDERFLOW_RADIUS = float(np.sqrt(2.0 * 746.0))

BACKEND_NAME = "numpy"


def _render_rows(positions, intensities, offsets, widths, n_datapoints, normalize, out, lo_row, hi_row):
    grid = np.arange(n_datapoints, dtype=np.float64)
    acc = np.empty(n_datapoints, dtype=np.float64)
    for i in range(lo_row, hi_row):
        acc[:] = 0.0
        sigma = widths[i]
        inv = 1.0 / (2.0 * sigma * sigma)
        radius = sigma * UNDERFLOW_RADIUS
        for j in range(offsets[i], offsets[i + 1]):
            p = positions[j]
            lo = max(int(np.ceil(p - radius)), 0)
            hi = min(int(np.floor(p + radius)), n_datapoints - 1)
            if hi < lo:
                continue
            d = grid[lo : hi + 1] - p
            acc[lo : hi + 1] += intensities[j] * np.exp(-(d * d) * inv)
        peak = acc.max()
        if normalize and peak > 0.0:
            out[i] = acc / peak
        else:
            out[i] = acc


def render_batch(positions, intensities, offsets, widths, n_datapoints, normalize, threads, out):
    """Render one float32 row per (offsets[i], offsets[i+1]) peak slice."""
    n_spectra = widths.shape[0]
    if threads <= 1 or n_spectra < 2:
        _render_rows(positions, intensities, offsets, widths, n_datapoints, normalize, out, 0, n_spectra)
        return
    bounds = np.linspace(0, n_spectra, threads + 1, dtype=np.int64)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(
                _render_rows,
                positions, intensities, offsets, widths,
                n_datapoints, normalize, out, int(a), int(b),
            )
            for a, b in zip(bounds[:-1], bounds[1:])
            if b > a
        ]
        for f in futures:
            f.result()
