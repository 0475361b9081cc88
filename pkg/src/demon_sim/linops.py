"""Dense complex linear algebra on small operators and their superoperators.

Conventions
-----------
Operators are plain 2-D ``numpy`` arrays. Vectorization stacks columns, so
that entry ``i + n*j`` of ``vectorize(m)`` is ``m[i, j]`` and

    vec(A X B) = (B^T kron A) vec(X).

With this ordering the superoperator of ``rho -> U rho U^dagger`` is
``conj(U) kron U``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceError

EXACT_TOL = 1e-12
PHYSICAL_TOL = 1e-10


def _as_square(m, name="matrix"):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    return m


def _side(dim):
    n = math.isqrt(dim)
    if n * n != dim or n == 0:
        raise ValueError(f"vector length {dim} is not a perfect square")
    return n


def vectorize(m) -> np.ndarray:
    """Column-stack a square matrix into a vector."""
    m = _as_square(m)
    return np.asarray(m, dtype=complex).reshape(-1, order="F")


def devectorize(v) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError("expected a 1-D vector")
    n = _side(v.shape[0])
    return v.reshape((n, n), order="F")


def kron(a, b) -> np.ndarray:
    """Kronecker product with blocks ``a[i, j] * b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("kron expects 2-D arrays")
    return np.kron(a, b)


def is_hermitian(m, tol=EXACT_TOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(m, m.conj().T, rtol=0.0, atol=tol)


def conjugation_super(a) -> np.ndarray:
    """Superoperator of ``rho -> a rho a^dagger``."""
    a = _as_square(a)
    return np.kron(a.conj(), a)


def left_super(a) -> np.ndarray:
    """Superoperator of ``rho -> a rho``."""
    a = _as_square(a)
    return np.kron(np.eye(a.shape[0]), a)


def right_super(b) -> np.ndarray:
    """Superoperator of ``rho -> rho b``."""
    b = _as_square(b)
    return np.kron(b.T, np.eye(b.shape[0]))


def _expm_series(a, max_terms=60):
    # scaling and squaring around a Taylor series, truncated once terms stop contributing
    norm = np.linalg.norm(a, 1)
    squarings = 0
    if norm > 0.5:
        squarings = int(math.ceil(math.log2(norm / 0.5)))
    a = a / (2.0**squarings)
    n = a.shape[0]
    result = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, max_terms + 1):
        term = term @ a / k
        result = result + term
        if np.linalg.norm(term, 1) <= np.finfo(float).eps * np.linalg.norm(result, 1):
            break
    else:
        raise ConvergenceError(f"matrix exponential series did not converge within {max_terms} terms")
    for _ in range(squarings):
        result = result @ result
    return result


def expm(a, max_terms=60) -> np.ndarray:
    """Matrix exponential of an arbitrary square matrix."""
    a = _as_square(a)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix exponential of a non-finite matrix")
    return _expm_series(np.asarray(a, dtype=complex), max_terms=max_terms)


def expm_hermitian_generator(h, scale: complex = 1.0) -> np.ndarray:
    """Return ``exp(scale * h)``.

    Hermitian ``h`` goes through its eigendecomposition,
    ``V diag(exp(scale * lambda)) V^dagger``; anything else falls back to the
    scaled Taylor series of :func:`expm`.
    """
    h = _as_square(h)
    if is_hermitian(h):
        evals, evecs = np.linalg.eigh(0.5 * (h + h.conj().T))
        return (evecs * np.exp(scale * evals)) @ evecs.conj().T
    return expm(scale * np.asarray(h, dtype=complex))


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt inner product ``Tr[a^dagger b]``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def trace_of_vectorized(v) -> complex:
    """Trace of the matrix whose column-stacked form is ``v``."""
    v = np.asarray(v)
    n = _side(v.shape[0])
    return complex(v[:: n + 1].sum())


def trace_row(n: int) -> np.ndarray:
    """Row vector ``t`` with ``t @ vectorize(m) == trace(m)``."""
    return vectorize(np.eye(n)).real


def choi_matrix(superop) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| kron Phi(|i><j|)`` of a column-stacked superoperator."""
    superop = _as_square(superop)
    n = _side(superop.shape[0])
    choi = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            unit = np.zeros((n, n))
            unit[i, j] = 1.0
            image = devectorize(superop @ vectorize(unit))
            choi[i * n:(i + 1) * n, j * n:(j + 1) * n] = image
    return choi
