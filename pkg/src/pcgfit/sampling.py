"""Error-law sampling shared by the simulation harness and calibrators.

Only the normal law ships; the dataclass hook keeps the door open for
other zero-mean laws without touching callers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NormalErrors:
    """IID normal errors with mean zero."""

    sigma: float = 1.0

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        if self.sigma == 0.0:
            return np.zeros(size)
        return gen.standard_normal(size) * self.sigma


def sample_flat(
    nu_edges: np.ndarray,
    counts: np.ndarray,
    sigma: float,
    gen: np.random.Generator,
) -> np.ndarray:
    """Flat outcome vector: per-edge means repeated by count plus normal noise."""
    base = np.repeat(nu_edges, counts)
    if sigma == 0.0:
        return base
    return base + gen.standard_normal(base.shape[0]) * sigma
