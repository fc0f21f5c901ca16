"""Dense complex Hermitian linear algebra kernel.

All covariance matrices in the package are carried as :class:`HermitianMatrix`
values; the operations here (spectral decomposition, PD inverse, PSD square
root, PSD tests) are the primitives everything else builds on.  Matrices are
small (a few dozen rows at most), so the implementation favours robustness and
reproducibility over speed: every eigendecomposition is post-processed into a
deterministic sign/phase convention so repeated calls agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite, NotPSD, NumericalFailure

__all__ = [
    "HermitianMatrix",
    "EigenDecomposition",
    "eigh_desc",
    "inv_pd",
    "sqrt_psd",
    "is_psd",
]


def _as_matrix(m) -> np.ndarray:
    """Accept a HermitianMatrix or any square array-like, return complex ndarray."""
    a = np.asarray(getattr(m, "mat", m), dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


class HermitianMatrix:
    """Immutable complex square matrix with enforced Hermitian symmetry.

    Construction symmetrizes the input as (M + M^H)/2 and zeroes the imaginary
    part of the diagonal, so the stored entries satisfy ``m[i, j] == conj(m[j, i])``
    exactly.  Grossly non-Hermitian input (relative asymmetry above ``check_tol``)
    raises ``ValueError`` since it almost always indicates a caller bug.
    """

    __slots__ = ("_mat",)

    def __init__(self, mat, check_tol: float = 1e-6):
        a = _as_matrix(mat)
        asym = np.linalg.norm(a - a.conj().T)
        scale = max(np.linalg.norm(a), 1.0)
        if asym > check_tol * scale:
            raise ValueError(
                f"matrix is not Hermitian (relative asymmetry {asym / scale:.3e})"
            )
        h = 0.5 * (a + a.conj().T)
        np.fill_diagonal(h, h.diagonal().real)
        h.flags.writeable = False
        self._mat = h

    @property
    def mat(self) -> np.ndarray:
        return self._mat

    @property
    def dim(self) -> int:
        return self._mat.shape[0]

    def trace(self) -> float:
        return float(self._mat.trace().real)

    def __repr__(self):
        return f"HermitianMatrix(dim={self.dim})"


@dataclass(frozen=True)
class EigenDecomposition:
    """Spectral decomposition with eigenvalues sorted in descending order.

    ``eigenvectors[:, i]`` is the unit eigenvector paired with ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def _fix_phases(u: np.ndarray) -> np.ndarray:
    """Rotate each column so its first nonzero component is real positive."""
    u = u.copy()
    n = u.shape[0]
    absu = np.abs(u)
    col_max = absu.max(axis=0)
    for j in range(u.shape[1]):
        thresh = 1e-12 * max(col_max[j], 1e-300)
        idx = 0
        for i in range(n):
            if absu[i, j] > thresh:
                idx = i
                break
        pivot = u[idx, j]
        mag = abs(pivot)
        if mag > 0.0:
            u[:, j] *= pivot.conjugate() / mag
    return u


def _tie_break(w: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order columns inside groups of (numerically) equal eigenvalues.

    Within a degenerate group the phase-fixed eigenvectors are sorted
    lexicographically by (real, imag) entries so the output is reproducible.
    """
    scale = max(np.abs(w).max(), 1.0) if w.size else 1.0
    tol = 1e-12 * scale
    i = 0
    n = len(w)
    while i < n:
        j = i + 1
        while j < n and abs(w[j] - w[i]) <= tol:
            j += 1
        if j - i > 1:
            block = u[:, i:j]
            keys = np.vstack([block.real, block.imag])
            order = np.lexsort(keys[::-1])
            u[:, i:j] = block[:, order]
            w[i:j] = w[i:j][order]
        i = j
    return w, u


def eigh_desc(m) -> EigenDecomposition:
    """Full spectral decomposition of a Hermitian matrix, eigenvalues descending.

    Deterministic: each eigenvector's first nonzero component is made real
    positive, and ties between equal eigenvalues are broken lexicographically,
    so two calls on identical input produce identical bits.

    Raises NumericalFailure if the underlying eigen-iteration does not converge.
    """
    a = _as_matrix(m)
    a = 0.5 * (a + a.conj().T)
    try:
        w, u = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # non-convergence of the QR iteration
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    w = w[::-1].copy()
    u = u[:, ::-1].copy()
    u = _fix_phases(u)
    w, u = _tie_break(w, u)
    return EigenDecomposition(eigenvalues=w, eigenvectors=u)


def _pd_tolerance(a: np.ndarray, tol: float | None) -> float:
    if tol is not None:
        return tol
    # relative to trace/dim: power levels span many orders of magnitude
    return 1e-12 * abs(a.trace().real) / a.shape[0]


def inv_pd(m, pd_tolerance: float | None = None) -> HermitianMatrix:
    """Inverse of a Hermitian positive definite matrix.

    Raises NotPositiveDefinite when the smallest eigenvalue is at or below
    ``pd_tolerance`` (default ``1e-12 * trace/dim``).
    """
    a = _as_matrix(m)
    ed = eigh_desc(a)
    tol = _pd_tolerance(a, pd_tolerance)
    w_min = ed.eigenvalues[-1]
    if w_min <= tol:
        raise NotPositiveDefinite(
            f"matrix is not positive definite: min eigenvalue {w_min:.3e} <= tol {tol:.3e}"
        )
    u = ed.eigenvectors
    inv = (u / ed.eigenvalues) @ u.conj().T
    return HermitianMatrix(inv)


def sqrt_psd(m) -> HermitianMatrix:
    """Unique PSD square root S of a PSD matrix, with S @ S == m.

    Eigenvalues slightly negative from rounding (above ``-1e-10 * trace/dim``)
    are clipped to zero; anything below that raises NotPSD.
    """
    a = _as_matrix(m)
    ed = eigh_desc(a)
    clip = 1e-10 * max(abs(a.trace().real) / a.shape[0], 0.0)
    w_min = ed.eigenvalues[-1]
    if w_min < -clip:
        raise NotPSD(
            f"matrix is not PSD: min eigenvalue {w_min:.3e} below -{clip:.3e}"
        )
    w = np.clip(ed.eigenvalues, 0.0, None)
    u = ed.eigenvectors
    root = (u * np.sqrt(w)) @ u.conj().T
    return HermitianMatrix(root)


def is_psd(m, tol: float = 1e-10) -> bool:
    """True iff the minimum eigenvalue is >= -tol * max(1, trace/dim)."""
    a = _as_matrix(m)
    w = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    floor = -tol * max(1.0, abs(a.trace().real) / a.shape[0])
    return bool(w[0] >= floor)
