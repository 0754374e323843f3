"""Counts to log-ratio responses for compositional data."""
from __future__ import annotations

import numpy as np

PSEUDO_COUNT = 0.5


def select_genera(rel, min_rel_abundance: float = 0.005, min_samples: int = 50) -> np.ndarray:
    """Indices of columns above ``min_rel_abundance`` in more than ``min_samples`` rows."""
    hits = np.sum(np.asarray(rel) > min_rel_abundance, axis=0)
    return np.flatnonzero(hits > min_samples)


def relative_abundance(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2:
        raise ValueError("counts must be a 2-d array")
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise ValueError("counts must be finite and nonnegative")
    totals = counts.sum(axis=1)
    bad = np.flatnonzero(totals <= 0)
    if bad.size:
        raise ValueError(f"sample {bad[0]} has no counts")
    return counts / totals[:, None]


def logit_transform(counts, focal=None, min_rel_abundance: float = 0.005,
                    min_samples: int = 50):
    """Log ratio of each focal genus to the pooled remaining genera.

    ``focal`` lists column indices; when omitted the genera are chosen by
    :func:`select_genera` on the raw relative abundances. If any count is zero,
    ``0.5`` is added to every cell before the ratios are formed.
    Returns ``(Y, focal_indices)``.
    """
    counts = np.asarray(counts, dtype=float)
    rel = relative_abundance(counts)
    if focal is None:
        focal = select_genera(rel, min_rel_abundance, min_samples)
    focal = np.unique(np.asarray(focal, dtype=int))
    G = counts.shape[1]
    if focal.size and (focal.min() < 0 or focal.max() >= G):
        raise IndexError(f"focal indices must lie in [0, {G})")
    ref = np.setdiff1d(np.arange(G), focal)
    if ref.size == 0:
        raise ValueError("reference group is empty in sample 0")
    empty = np.flatnonzero(counts[:, ref].sum(axis=1) <= 0)
    if empty.size:
        raise ValueError(f"reference group is empty in sample {empty[0]}")
    if np.any(counts == 0):
        rel = relative_abundance(counts + PSEUDO_COUNT)
    ref_total = rel[:, ref].sum(axis=1)
    Y = np.log(rel[:, focal]) - np.log(ref_total)[:, None]
    return Y, focal
