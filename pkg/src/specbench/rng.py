"""Counter-based random streams for order-independent reproducibility.

Every random decision in the package draws from a Philox stream keyed by
``(master_seed, mixed_path)``, where the path encodes what the stream is
for (fingerprint of class 7, training variant 31 of class 4, shuffle of
epoch 12, ...). Streams are therefore independent of execution order and
of how work is distributed over threads: a worker can open the stream for
any (class, sample) pair directly instead of consuming a shared sequence.

Path words are folded into a single 64-bit key word with a splitmix64
chain, so arbitrarily deep derivation paths fit Philox's two-word key.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Purpose tags keep unrelated streams apart even when the remaining path
# words collide (e.g. class 3 fingerprint vs. epoch-3 shuffle).
FINGERPRINT = 0x01
TRAIN_VARIANT = 0x02
SHUFFLE = 0x03
PARAM_INIT = 0x04
BENCH_RUN = 0x05
PLOT_EXPORT = 0x06


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def mix(*words: int) -> int:
    """Fold integer path words into one well-scrambled 64-bit word."""
    acc = _splitmix64(len(words) & _MASK64)
    for w in words:
        acc = _splitmix64(acc ^ (int(w) & _MASK64))
    return acc


def stream(seed: int, *path: int) -> np.random.Generator:
    """Open the Philox stream identified by ``seed`` and a derivation path."""
    key = np.array([int(seed) & _MASK64, mix(*path)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *path: int) -> int:
    """Derive a child 64-bit seed, e.g. one per benchmark repetition."""
    return mix(int(seed) & _MASK64, *path)
