import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.linalg import qr

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class GuidingSubspace:
    """
    Last k surrogate gradients and an orthonormal basis of their span.

    basis has shape (n, k_eff); k_eff drops below the history length when
    surrogates are (numerically) linearly dependent.
    """
    n: int
    k: int
    history: Tuple[np.ndarray, ...] = ()
    basis: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.k < 1 or self.n < 1 or self.k > self.n:
            raise ValueError(f"Need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.basis is None:
            object.__setattr__(self, "basis", np.zeros((self.n, 0)))

    @property
    def k_eff(self) -> int:
        return int(self.basis.shape[1])


def orthonormal_basis(columns: np.ndarray) -> np.ndarray:
    """Basis of span(columns) via pivoted QR, dropping directions below the rank tolerance."""
    if columns.shape[1] == 0:
        return np.zeros((columns.shape[0], 0))
    q, r, _ = qr(columns, mode="economic", pivoting=True)
    scale = float(np.max(np.linalg.norm(columns, axis=0)))
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag >= RANK_TOLERANCE * scale))
    # Fix the sign so the basis is unique (positive diagonal of R).
    signs = np.sign(np.diag(r)[:rank])
    signs[signs == 0] = 1.0
    return q[:, :rank] * signs


def subspace_update(sub: GuidingSubspace, new_grad: np.ndarray) -> GuidingSubspace:
    new_grad = np.asarray(new_grad, dtype=float)
    if new_grad.shape != (sub.n,):
        raise ValueError(f"Surrogate gradient must have length {sub.n}, got shape {new_grad.shape}")
    if not np.all(np.isfinite(new_grad)):
        raise ValueError("Surrogate gradient contains non-finite entries")
    if not np.any(new_grad):
        logger.warning("Zero surrogate gradient, guiding subspace left unchanged")
        return sub

    history = (sub.history + (new_grad.copy(),))[-sub.k:]
    basis = orthonormal_basis(np.column_stack(history))
    return GuidingSubspace(n=sub.n, k=sub.k, history=history, basis=basis)
