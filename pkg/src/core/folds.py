"""
Folds - Deterministic K-fold assignment for cross-fitting
"""

from dataclasses import dataclass

import numpy as np

from src.errors import BadFoldCount


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_of: np.ndarray
    seed: int

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.k)


def assign_folds(n: int, k: int, seed: int) -> FoldAssignment:
    """
    Permutation-based fold assignment: row perm[i] goes to fold i mod k.

    Args:
        n: Number of rows
        k: Number of folds (2 <= k <= n)
        seed: RNG seed

    Returns:
        FoldAssignment whose fold sizes differ by at most one

    Raises:
        BadFoldCount: If k < 2 or k > n
    """
    if k < 2 or k > n:
        raise BadFoldCount(f"Fold count must satisfy 2 <= k <= n, got k={k}, n={n}")

    rng = np.random.Generator(np.random.Philox(seed))
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % k
    return FoldAssignment(k=k, fold_of=fold_of, seed=seed)
