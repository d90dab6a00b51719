"""Cosine nearest-reference matching shared by validation and the oracle."""

from __future__ import annotations

import numpy as np

from .errors import DomainError


def l2_normalize_rows(mat: np.ndarray, what: str = "spectrum") -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0.0):
        raise DomainError(f"zero-norm {what}: cosine similarity undefined")
    return mat / norms[:, None]


def nearest_reference(
    queries: np.ndarray, references: np.ndarray, group_size: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Cosine-nearest reference group for every query row.

    ``references`` holds ``group_size`` consecutive rows per group (e.g.
    one class's ideal render and its shifted siblings); a group scores the
    maximum similarity over its rows. Returns ``(nearest, tied_with)``
    where ties on the top group score break toward the lower group index
    and ``tied_with[i]`` is the smallest other group achieving the same
    score, or -1 when the winner is unique.
    """
    q = l2_normalize_rows(queries, "query")
    r = l2_normalize_rows(references, "reference")
    if r.shape[0] % group_size:
        raise DomainError(f"{r.shape[0]} reference rows do not split into groups of {group_size}")
    sims = q @ r.T
    if group_size > 1:
        sims = sims.reshape(q.shape[0], -1, group_size).max(axis=2)
    nearest = np.argmax(sims, axis=1)
    top = sims[np.arange(sims.shape[0]), nearest]
    tied_with = np.full(sims.shape[0], -1, dtype=np.int64)
    for i in np.nonzero(np.sum(sims == top[:, None], axis=1) > 1)[0]:
        tied = np.nonzero(sims[i] == top[i])[0]
        tied_with[i] = tied[tied != nearest[i]][0]
    return nearest.astype(np.int64), tied_with
