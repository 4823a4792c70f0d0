"""Dense complex small-matrix kernel.

Everything in this package works with explicit dense complex matrices of
size r <= 8 (ranks of interest are r <= 4).  This module collects the few
primitives that need care beyond plain numpy calls: deterministic small
eigendecompositions, the principal matrix logarithm with branch-cut
checking, and Hermitian positive-definite validation.

Tolerances are relative to the Frobenius norm throughout; the master
default is ``DEFAULT_TOL = 1e-10``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

DEFAULT_TOL = 1e-10
MAX_DIM = 8


class NumericalError(RuntimeError):
    """Raised when a kernel routine cannot meet its accuracy contract."""


class DefectiveMatrixError(NumericalError):
    """Eigenvector basis too ill-conditioned to trust."""


class BranchCutError(NumericalError):
    """Eigenvalue on (or too close to) the closed negative real axis."""


class NotPositiveDefiniteError(NumericalError):
    """Hermitian matrix failed a positive-definiteness check."""


def as_cmatrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite complex 2d array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(float))):
        raise NumericalError(f"{name} contains non-finite entries")
    return a


def fro(m) -> float:
    return float(np.linalg.norm(m, "fro"))


def is_hermitian(m, tol: float = 1e-12) -> bool:
    m = np.asarray(m, dtype=complex)
    scale = max(fro(m), 1.0)
    return fro(m - m.conj().T) <= tol * scale


def check_hermitian_pd(h, tol: float = 1e-12) -> np.ndarray:
    """Validate that h is Hermitian positive-definite; return hermitized copy."""
    h = as_cmatrix(h, "h")
    if h.shape[0] != h.shape[1]:
        raise ValueError("h must be square")
    if not is_hermitian(h, tol=tol):
        raise NotPositiveDefiniteError("matrix is not Hermitian to tolerance")
    h = 0.5 * (h + h.conj().T)
    w = np.linalg.eigvalsh(h)
    if w.min() <= 0.0:
        raise NotPositiveDefiniteError(f"minimal eigenvalue {w.min():.3e} <= 0")
    return h


def eig_small(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a small square matrix with deterministic order.

    Returns ``(lam, V)`` with ``m @ V ~= V @ diag(lam)``.  Eigenvalues are
    sorted lexicographically by (real, imag) and each eigenvector column is
    scaled so its largest-modulus entry is real positive, which makes the
    output reproducible across runs.
    """
    m = as_cmatrix(m)
    r = m.shape[0]
    if m.shape[0] != m.shape[1]:
        raise ValueError("m must be square")
    if r > MAX_DIM:
        raise ValueError(f"dimension {r} exceeds supported maximum {MAX_DIM}")
    lam, V = np.linalg.eig(m)
    order = np.lexsort((lam.imag, lam.real))
    lam, V = lam[order], V[:, order]
    # deterministic column phases
    for j in range(r):
        k = int(np.argmax(np.abs(V[:, j])))
        piv = V[k, j]
        V[:, j] = V[:, j] / (piv / abs(piv))
        V[:, j] /= np.linalg.norm(V[:, j])
    scale = max(fro(m), 1.0)
    cond = np.linalg.cond(V)
    if cond > 1e12:
        raise DefectiveMatrixError(
            f"eigenvector condition number {cond:.2e}; matrix is numerically defective"
        )
    resid = fro(m @ V - V @ np.diag(lam))
    if resid > 1e-10 * scale * max(cond, 1.0):
        raise NumericalError(f"eigendecomposition residual {resid:.2e} too large")
    return lam, V


def sorted_eigvals(m) -> np.ndarray:
    """Eigenvalues only, in the deterministic (real, imag) lexicographic order."""
    lam = np.linalg.eigvals(as_cmatrix(m))
    return lam[np.lexsort((lam.imag, lam.real))]


def mat_log_principal(m, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Principal matrix logarithm.

    Requires all eigenvalues off the closed negative real axis; the result
    has spectrum with imaginary parts in (-pi, pi) and satisfies
    ``expm(result) ~= m`` to ``tol`` relative.
    """
    m = as_cmatrix(m)
    lam = np.linalg.eigvals(m)
    if np.any(np.abs(lam) < 1e-14):
        raise BranchCutError("matrix is singular; logarithm undefined")
    # distance of arg from pi, relative margin against the cut
    margin = np.min(np.abs(np.pi - np.abs(np.angle(lam))))
    if margin < 1e-9:
        raise BranchCutError(
            f"eigenvalue within {margin:.2e} of the negative real axis"
        )
    out = scipy.linalg.logm(m)
    back = scipy.linalg.expm(out)
    err = fro(back - m) / max(fro(m), 1e-300)
    if err > tol:
        raise NumericalError(f"exp(log m) residual {err:.2e} exceeds {tol:.2e}")
    return out


def mat_exp(m) -> np.ndarray:
    return scipy.linalg.expm(as_cmatrix(m))


def solve_upper_triangular(u, b) -> np.ndarray:
    return scipy.linalg.solve_triangular(u, b, lower=False)


def random_unitary(rng: np.random.Generator, r: int) -> np.ndarray:
    """Haar-ish unitary from the QR of a complex Ginibre sample."""
    z = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    q, rr = np.linalg.qr(z)
    return q * (np.diagonal(rr) / np.abs(np.diagonal(rr)))


def random_hpd(rng: np.random.Generator, r: int, spread: float = 1.0) -> np.ndarray:
    """Random Hermitian positive-definite matrix with moderate conditioning."""
    m = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    h = m @ m.conj().T + (0.5 + spread) * np.eye(r)
    return 0.5 * (h + h.conj().T)
