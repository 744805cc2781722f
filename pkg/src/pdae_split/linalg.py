"""Dense linear-algebra kernel: LU solves, matrix exponentials, phi-functions.

Vectors and matrices are plain float64 numpy arrays.  The exponential
integral of an affine-in-time inhomogeneity,

    integral_0^tau exp((tau-s) M) (b0 + s b1) ds
        = tau phi1(tau M) b0 + tau^2 phi2(tau M) b1,

is evaluated through one augmented matrix exponential, so it inherits the
accuracy of expm and is exact (in the method) for affine integrands.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class SingularMatrixError(ValueError):
    """Raised when a pivot is singular to working precision."""


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got array of ndim {a.ndim}")
    return a


def _as_vector(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim != 1:
        raise ValueError(f"expected a vector, got array of ndim {b.ndim}")
    return b


def lu_solve(a, b) -> np.ndarray:
    """Solve a x = b by LU factorization with partial pivoting.

    Raises SingularMatrixError if a pivot is zero to working precision.
    """
    a = _as_matrix(a)
    b = _as_vector(b)
    n, m = a.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {a.shape}")
    if b.shape[0] != n:
        raise ValueError(f"dimension mismatch: matrix {a.shape}, vector {b.shape}")
    lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    diag = np.abs(np.diag(lu))
    tol = n * np.finfo(float).eps * max(np.abs(a).max(), 1e-300)
    if diag.min() <= tol:
        raise SingularMatrixError("singular matrix: pivot below working precision")
    return scipy.linalg.lu_solve((lu, piv), b)


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with Pade approximants."""
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    return scipy.linalg.expm(a)


def phi1(z):
    """phi1(z) = (exp(z) - 1)/z, elementwise; phi1(0) = 1."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.ones_like(z)
    nz = z != 0.0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def phi2(z):
    """phi2(z) = (exp(z) - 1 - z)/z^2, elementwise; phi2(0) = 1/2.

    A truncated series is used for |z| < 1/2 where the direct formula
    cancels catastrophically.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zb = z[~small]
    out[~small] = (np.expm1(zb) - zb) / zb**2
    # sum_{k>=0} z^k / (k+2)!, 17 terms reach machine precision at |z| = 1/2
    zs = z[small]
    acc = np.zeros_like(zs)
    term = np.ones_like(zs)
    fact = 2.0
    for k in range(18):
        acc += term / fact
        term = term * zs
        fact *= k + 3
    out[small] = acc
    return out


def affine_exp_integral(m, tau, b0, b1) -> np.ndarray:
    """Evaluate tau*phi1(tau m) b0 + tau^2*phi2(tau m) b1.

    Implemented as one exponential of an (n+2)-dimensional augmented matrix
    whose top-left block is tau*m and whose last two columns encode b1, b0.
    This equals the integral of exp((tau-s) m) (b0 + s b1) over [0, tau].
    """
    m = _as_matrix(m)
    b0 = _as_vector(b0)
    b1 = _as_vector(b1)
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError(f"matrix must be square, got {m.shape}")
    if b0.shape[0] != n or b1.shape[0] != n:
        raise ValueError("vector length does not match matrix dimension")
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    if tau == 0.0:
        return np.zeros(n)
    aug = np.zeros((n + 2, n + 2))
    aug[:n, :n] = tau * m
    aug[:n, n] = tau * b1
    aug[:n, n + 1] = tau * b0
    aug[n, n + 1] = tau
    return scipy.linalg.expm(aug)[:n, n + 1]


def phi_triple(m, tau) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (exp(tau m), tau*phi1(tau m), tau^2*phi2(tau m)) as matrices.

    Symmetric m goes through its eigendecomposition; the general case uses a
    3n-dimensional block-augmented exponential with identity coupling blocks.
    """
    m = _as_matrix(m)
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError(f"matrix must be square, got {m.shape}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    scale = np.abs(m).max()
    if np.abs(m - m.T).max() <= 1e-12 * (1.0 + scale):
        lam, v = np.linalg.eigh(m)
        e = (v * np.exp(tau * lam)) @ v.T
        p1 = (v * (tau * phi1(tau * lam))) @ v.T
        p2 = (v * (tau**2 * phi2(tau * lam))) @ v.T
        return e, p1, p2
    eye = np.eye(n)
    aug = np.zeros((3 * n, 3 * n))
    aug[:n, :n] = tau * m
    aug[:n, n : 2 * n] = tau * eye
    aug[n : 2 * n, 2 * n :] = tau * eye
    x = scipy.linalg.expm(aug)
    return x[:n, :n], x[:n, n : 2 * n], x[:n, 2 * n :]
