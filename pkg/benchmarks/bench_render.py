#!/usr/bin/env python3
"""Compare the compiled rendering kernel against the numpy fallback.

Renders batches of randomly sampled training variants at full scale
(5000 datapoints) through both backends and reports spectra/second plus
the projected time for 100,000 spectra.

    python benchmarks/bench_render.py [--spectra 20000] [--threads N]
"""

import argparse
import os
import sys
import time

import numpy as np

from specbench import rng as rngmod
from specbench import _render_numpy
from specbench.datagen import generate_class_fingerprint, preset_config
from specbench.render import pack_fingerprints, sample_variant_arrays
from specbench.peaks import ClassFingerprint

try:
    from specbench import _render_cy
except ImportError:
    _render_cy = None


def sample_workload(n_spectra: int, seed: int = 0):
    cfg = preset_config("paper500", master_seed=seed)
    classes = [
        generate_class_fingerprint(cfg, cid, rngmod.stream(seed, rngmod.FINGERPRINT, cid, 0))
        for cid in range(200)
    ]
    variants = []
    for i in range(n_spectra):
        fp = classes[i % len(classes)]
        stream = rngmod.stream(seed, rngmod.TRAIN_VARIANT, fp.class_id, i)
        pos, inten, width = sample_variant_arrays(
            fp.positions(), fp.intensities(), cfg.training_variation, stream
        )
        variants.append((ClassFingerprint.from_arrays(fp.class_id, pos, inten), width))
    return cfg, pack_fingerprints(variants)


def time_backend(backend, packed, n_datapoints: int, threads: int) -> float:
    positions, intensities, offsets, widths, _ = packed
    out = np.empty((widths.shape[0], n_datapoints), dtype=np.float32)
    start = time.perf_counter()
    backend.render_batch(positions, intensities, offsets, widths,
                         n_datapoints, True, threads, out)
    return time.perf_counter() - start


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--spectra", type=int, default=20000)
    parser.add_argument("--threads", type=int, default=os.cpu_count())
    args = parser.parse_args()

    print(f"sampling {args.spectra} training variants at 5000 datapoints ...")
    cfg, packed = sample_workload(args.spectra)

    backends = [("numpy", _render_numpy)]
    if _render_cy is not None:
        backends.append(("compiled", _render_cy))
    else:
        print("compiled kernel not built; benchmarking the fallback only")

    results = {}
    for name, backend in backends:
        for threads in sorted({1, args.threads}):
            elapsed = time_backend(backend, packed, cfg.n_datapoints, threads)
            rate = args.spectra / elapsed
            results[(name, threads)] = elapsed
            print(
                f"{name:9s} threads={threads}: {elapsed:6.2f} s "
                f"({rate:8.0f} spectra/s, 100k in {1e5 / rate:6.1f} s)"
            )
    if ("compiled", 1) in results and ("numpy", 1) in results:
        speedup = results[("numpy", 1)] / results[("compiled", 1)]
        print(f"compiled kernel speedup over numpy fallback (1 thread): {speedup:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
