"""Dense float64 linear algebra used throughout the package.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 in C
(row-major) order; rows are data points and columns are features/neurons.
:func:`as_matrix` is the single validation gate.  Products and norms are
thin wrappers over numpy.  The SVD is a one-sided Jacobi (Hestenes)
iteration and the top eigenvalue comes from power iteration, so neither
depends on LAPACK.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAT1_MAGIC = b"MAT1"
_MAT1_HEADER = struct.Struct("<4sII")


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class Mat1FormatError(ValueError):
    """A MAT1 file is malformed."""


def as_matrix(a, *, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite, C-contiguous float64 2-D array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def column(m: np.ndarray, j: int) -> np.ndarray:
    if not 0 <= j < m.shape[1]:
        raise IndexError(f"column {j} out of range for {m.shape[1]} columns")
    return m[:, j].copy()


def dot(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ShapeError(f"length mismatch: {u.shape} vs {v.shape}")
    return float(np.dot(u, v))


def norm2(v: np.ndarray) -> float:
    return float(np.sqrt(np.dot(v, v)))


def norm_inf(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(np.max(np.abs(v))) if v.size else 0.0


def frobenius(m: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(m))))


def column_norms(m: np.ndarray) -> np.ndarray:
    """Euclidean norm of every column."""
    return np.sqrt(np.sum(np.square(m), axis=0))


def relu(m: np.ndarray) -> np.ndarray:
    return np.maximum(m, 0.0)


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``M = U @ diag(singular_values) @ Vt`` truncated at numerical rank."""

    U: np.ndarray
    singular_values: np.ndarray
    Vt: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.singular_values.size)

    def sigma_vt(self) -> np.ndarray:
        """``diag(s) @ Vt``, the r x n surrogate for the data matrix."""
        return self.singular_values[:, None] * self.Vt

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.Vt


def _jacobi_columns(a: np.ndarray, tol: float, max_sweeps: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonalise the columns of ``a`` by plane rotations.

    Returns the rotated matrix (mutually orthogonal columns) and the
    accumulated orthogonal matrix ``V`` with ``a_in @ V == a_out``.
    """
    a = a.copy()
    n = a.shape[1]
    v = np.eye(n)
    off = 0.0
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                ai = a[:, i]
                aj = a[:, j]
                alpha = float(np.dot(ai, ai))
                beta = float(np.dot(aj, aj))
                gamma = float(np.dot(ai, aj))
                if alpha == 0.0 or beta == 0.0:
                    continue
                rel = abs(gamma) / np.sqrt(alpha * beta)
                off = max(off, rel)
                if rel < tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_i = c * ai - s * aj
                new_j = s * ai + c * aj
                a[:, i] = new_i
                a[:, j] = new_j
                vi = v[:, i].copy()
                v[:, i] = c * vi - s * v[:, j]
                v[:, j] = s * vi + c * v[:, j]
        if off < tol:
            return a, v
    raise ConvergenceError(f"one-sided Jacobi did not converge in {max_sweeps} sweeps", off)


def svd(m: np.ndarray, rank_tol: float = 1e-10, *, tol: float = 1e-12, max_sweeps: int = 60) -> SvdFactors:
    """Thin SVD by one-sided Jacobi.

    Singular values at or below ``rank_tol * s_max`` are dropped, so the
    returned factors have numerical rank ``r``.  Convergence means every
    pair of working columns has relative inner product below ``tol``.
    """
    m = as_matrix(m, name="svd input")
    rows, cols = m.shape
    transposed = rows < cols
    a = m.T if transposed else m
    rotated, v = _jacobi_columns(a, tol, max_sweeps)
    s = np.sqrt(np.sum(np.square(rotated), axis=0))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    rotated = rotated[:, order]
    v = v[:, order]
    smax = s[0] if s.size else 0.0
    keep = s > rank_tol * smax if smax > 0 else np.zeros_like(s, dtype=bool)
    s = s[keep]
    u = rotated[:, keep] / s
    v = v[:, keep]
    # a = u diag(s) v^T; for the transposed case m = v diag(s) u^T
    if transposed:
        u, v = v, u
    return SvdFactors(U=np.ascontiguousarray(u), singular_values=s, Vt=np.ascontiguousarray(v.T))


def max_eigenvalue(s: np.ndarray, *, sym_tol: float = 1e-10, rtol: float = 1e-10, max_squarings: int = 64) -> float:
    """Largest (algebraic) eigenvalue of a symmetric matrix.

    Power iteration accelerated by repeated squaring: after ``k`` squarings
    the working matrix is proportional to ``T**(2**k)`` with ``T = S + mu I``
    shifted to be positive semidefinite, so its columns collapse onto the
    dominant eigenvector.  The eigenvalue is read off as a Rayleigh quotient
    on the unshifted ``S``.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeError(f"expected a square matrix, got {s.shape}")
    scale = max(float(np.max(np.abs(s))), np.finfo(float).tiny)
    if np.max(np.abs(s - s.T)) > sym_tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    s = 0.5 * (s + s.T)
    if not np.any(s):
        return 0.0
    n = s.shape[0]
    # Gershgorin: every eigenvalue is >= -mu
    mu = max(0.0, float(np.max(np.sum(np.abs(s), axis=1) - 2.0 * np.diag(s))))
    b = s + mu * np.eye(n)
    b /= np.linalg.norm(b)
    prev = None
    rho = 0.0
    for _ in range(max_squarings):
        j = int(np.argmax(np.sum(b * b, axis=0)))
        x = b[:, j]
        rho = float(x @ s @ x) / float(x @ x)
        if prev is not None and abs(rho - prev) <= rtol * max(abs(rho), np.finfo(float).tiny):
            break
        prev = rho
        b = b @ b
        nb = np.linalg.norm(b)
        if nb == 0.0 or not np.isfinite(nb):
            break
        b /= nb
    return rho


def write_mat1(path: str | Path, m: np.ndarray) -> None:
    m = as_matrix(m)
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(_MAT1_HEADER.pack(MAT1_MAGIC, rows, cols))
        fh.write(m.astype("<f8", copy=False).tobytes(order="C"))


def read_mat1(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    return decode_mat1(raw, source=str(path))


def decode_mat1(raw: bytes, *, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < _MAT1_HEADER.size:
        raise Mat1FormatError(f"{source}: header truncated ({len(raw)} of {_MAT1_HEADER.size} bytes)")
    magic, rows, cols = _MAT1_HEADER.unpack_from(raw)
    if magic != MAT1_MAGIC:
        raise Mat1FormatError(f"{source}: bad magic {magic!r}, expected {MAT1_MAGIC!r}")
    if rows < 1 or cols < 1:
        raise Mat1FormatError(f"{source}: empty shape {rows}x{cols}")
    expected = _MAT1_HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        kind = "truncated" if len(raw) < expected else "oversized"
        raise Mat1FormatError(f"{source}: payload {kind}, got {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f8", offset=_MAT1_HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise Mat1FormatError(f"{source}: non-finite entries")
    return data.reshape(rows, cols)
