"""Sinc-DVR (Colbert-Miller) operators on uniform grids."""

from __future__ import annotations

import numpy as np


def kinetic_matrix(n: int, spacing: float, mass: float = 1.0) -> np.ndarray:
    """Colbert-Miller kinetic energy matrix -1/(2m) d^2/dx^2 on a uniform grid."""
    idx = np.arange(n)
    diff = idx[:, None] - idx[None, :]
    safe = np.where(diff == 0, 1, diff).astype(float)
    t = np.where(diff == 0, np.pi**2 / 3.0, 2.0 * (-1.0) ** diff / safe**2)
    return t / (2.0 * mass * spacing**2)


def derivative_matrix(n: int, spacing: float) -> np.ndarray:
    """Sinc-DVR first-derivative matrix (real antisymmetric)."""
    idx = np.arange(n)
    diff = idx[:, None] - idx[None, :]
    safe = np.where(diff == 0, 1, diff).astype(float)
    return np.where(diff == 0, 0.0, (-1.0) ** diff / safe) / spacing
