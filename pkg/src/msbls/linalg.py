"""Seeded randomness and the ridge-limit pseudoinverse used for readout training.

All matrices are dense 2-D float64 numpy arrays. Every function is a pure
function of its inputs plus the explicit random stream, so identical seeds
reproduce identical results run to run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

RNG_ALGORITHM = "pcg64"


class SolverError(RuntimeError):
    """A positive-definite solve failed numerically."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a finite 2-D float64 array."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


@dataclass
class RngStream:
    """Single-owner deterministic random stream.

    Identical ``seed`` yields an identical draw sequence across runs and
    across transport backends. The algorithm name is recorded in experiment
    metadata.
    """

    seed: int
    algorithm: str = RNG_ALGORITHM
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.algorithm != RNG_ALGORITHM:
            raise ValueError(f"unsupported rng algorithm {self.algorithm!r}")
        self.seed = int(self.seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def standard_normal(self, rows: int, cols: int) -> np.ndarray:
        return self._gen.standard_normal((rows, cols))

    def uniform(self, lo: float, hi: float, rows: int, cols: int) -> np.ndarray:
        return self._gen.uniform(lo, hi, size=(rows, cols))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def derive_streams(master_seed: int, names: list[str]) -> dict[str, RngStream]:
    """Derive one independent stream per name from a single master seed.

    Children are taken positionally from the master seed sequence, so the
    `names` list is part of the reproducibility contract.
    """
    children = np.random.SeedSequence(master_seed).spawn(len(names))
    return {
        name: RngStream(int(child.generate_state(1, np.uint64)[0]))
        for name, child in zip(names, children)
    }


def random_matrix(rows: int, cols: int, dist, rng: RngStream) -> np.ndarray:
    """Draw a rows x cols matrix with i.i.d. entries from ``dist``.

    ``dist`` is either the string ``"standard_normal"`` or a tuple
    ``("uniform", lo, hi)`` with lo < hi (lo == hi gives the degenerate
    constant matrix and is allowed for debugging).
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dimensions must be positive, got {rows}x{cols}")
    if dist == "standard_normal":
        return rng.standard_normal(rows, cols)
    if isinstance(dist, tuple) and len(dist) == 3 and dist[0] == "uniform":
        _, lo, hi = dist
        if lo > hi:
            raise ValueError(f"uniform bounds must satisfy lo <= hi, got ({lo}, {hi})")
        return rng.uniform(lo, hi, rows, cols)
    raise ValueError(f"unknown distribution {dist!r}")


def _spd_solve(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # gram is (lambda I + G) with lambda > 0, hence SPD for finite input;
    # a Cholesky failure means the problem is numerically out of reach.
    try:
        factor = cho_factor(gram, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"positive-definite factorization failed: {exc}") from exc
    return cho_solve(factor, rhs, check_finite=False)


def pseudoinverse(a, ridge: float) -> np.ndarray:
    """Ridge surrogate of the Moore-Penrose pseudoinverse.

    Returns ``(A^T A + ridge*I)^-1 A^T``, which equals
    ``A^T (A A^T + ridge*I)^-1`` for any ridge > 0. Output shape is
    cols(A) x rows(A). The factorization runs on the smaller Gram matrix.
    """
    a = as_matrix(a, "A")
    if ridge <= 0:
        raise ValueError(f"ridge must be positive, got {ridge}")
    n, f = a.shape
    if n <= f:
        gram = a @ a.T
        gram[np.diag_indices_from(gram)] += ridge
        return a.T @ _spd_solve(gram, np.eye(n))
    gram = a.T @ a
    gram[np.diag_indices_from(gram)] += ridge
    return _spd_solve(gram, a.T)


def ridge_solve(a, y, ridge: float) -> np.ndarray:
    """Least-squares weights W minimizing ||AW - Y||^2 + ridge*||W||^2.

    Equivalent to ``pseudoinverse(A, ridge) @ Y`` but never materializes the
    pseudoinverse.
    """
    a = as_matrix(a, "A")
    y = as_matrix(y, "Y")
    if ridge <= 0:
        raise ValueError(f"ridge must be positive, got {ridge}")
    if a.shape[0] != y.shape[0]:
        raise ValueError(
            f"row mismatch: A has {a.shape[0]} rows, Y has {y.shape[0]}"
        )
    n, f = a.shape
    if n >= f:
        gram = a.T @ a
        gram[np.diag_indices_from(gram)] += ridge
        return _spd_solve(gram, a.T @ y)
    gram = a @ a.T
    gram[np.diag_indices_from(gram)] += ridge
    return a.T @ _spd_solve(gram, y)
