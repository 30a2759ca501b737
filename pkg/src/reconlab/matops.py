"""Dense vectorisation and Kronecker kernels.

Everything in this package reduces to products of small dense matrices.
This module pins down the single layout convention the rest of the code
inherits (column-major ``vec``) and provides the symmetric-positive-definite
solve used wherever a matrix inverse appears in a formula.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "NotPositiveDefiniteError",
    "vec",
    "unvec",
    "kron",
    "solve_spd",
    "spd_cholesky",
    "symmetrize",
    "is_symmetric",
]

#: Relative diagonal jitter added on the single factorization retry.
SPD_JITTER = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix fails to factor even after the jitter retry."""


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-d array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def vec(m) -> np.ndarray:
    """Stack the columns of ``m`` into a single vector.

    ``vec([[1, 3], [2, 4]])`` is ``[1, 2, 3, 4]``: the first column comes
    first.  Every cross-module layout (parameter covariances, weight
    covariances) inherits this order.
    """
    return _as_matrix(m, "vec input").reshape(-1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`: reshape ``v`` into ``rows`` x ``cols``, column-major."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != rows * cols:
        raise ValueError(f"cannot unvec length {v.size} into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def kron(a, b) -> np.ndarray:
    """Kronecker product with block structure ``a[i, j] * b``."""
    return np.kron(_as_matrix(a, "kron lhs"), _as_matrix(b, "kron rhs"))


def symmetrize(a) -> np.ndarray:
    a = _as_matrix(a, "symmetrize input")
    return 0.5 * (a + a.T)


def is_symmetric(a, rtol: float = 1e-10) -> bool:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, float(np.abs(a).max()))
    return float(np.abs(a - a.T).max()) <= rtol * scale


def spd_cholesky(a, *, jitter: float = SPD_JITTER) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    If the factorization fails, one retry is made with ``jitter * mean(diag)``
    added to the diagonal; a second failure raises
    :class:`NotPositiveDefiniteError`.  Sample covariances from short panels
    are routinely on the edge of singularity, which is what the single
    jittered retry is for.
    """
    a = symmetrize(a)
    try:
        return scipy.linalg.cholesky(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    bump = jitter * float(np.mean(np.diag(a)))
    if not np.isfinite(bump) or bump <= 0.0:
        raise NotPositiveDefiniteError(
            "matrix is not positive definite and has a non-positive diagonal"
        )
    try:
        return scipy.linalg.cholesky(
            a + bump * np.eye(a.shape[0]), lower=True, check_finite=False
        )
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (jitter {bump:.3e} did not help)"
        ) from exc


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive definite ``a``.

    ``b`` may be a vector or a matrix; the result has the same trailing shape.
    """
    b_arr = np.asarray(b, dtype=float)
    squeeze = b_arr.ndim == 1
    if squeeze:
        b_arr = b_arr[:, None]
    chol = spd_cholesky(a)
    x = scipy.linalg.cho_solve((chol, True), b_arr, check_finite=False)
    return x[:, 0] if squeeze else x


def inv_spd(a) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via its factorization."""
    a = np.asarray(a, dtype=float)
    return solve_spd(a, np.eye(a.shape[0]))
