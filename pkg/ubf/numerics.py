"""ubf.numerics -- dense complex linear algebra for small matrices

All matrices are ``numpy`` arrays of dtype ``complex128``.  Every function
accepts either a single matrix (2 dimensions) or a stack of matrices with
leading batch axes, so a whole dataset of channels is processed in one call::

    >>> a = cmat([[1j]])
    >>> matmul(a, a)
    array([[-1.+0.j]])

Only the Cholesky factorization is used; all systems solved in the toolkit
(ZF Gram matrices, WMMSE transmit updates) are Hermitian positive definite.
"""

import logging

import numpy as np
import scipy.linalg

from .errors import ContractViolation, NumericFailure, SingularMatrixError, require

log = logging.getLogger('ubf.numerics')

#: relative diagonal loading applied by callers to near-singular systems
DIAGONAL_LOADING = 1e-12


def cmat(values):
    """convert values to a complex128 matrix (or stack of matrices)"""
    a = np.array(values, dtype=np.complex128)
    require(a.ndim >= 2, "expected a matrix, got an array with %d dimension(s)", a.ndim)
    return a


def identity(n, dtype=np.complex128):
    return np.eye(n, dtype=dtype)


def matmul(a, b):
    """complex matrix product ``a @ b``

    :raises ContractViolation: if ``a.cols != b.rows``
    """
    if a.shape[-1] != b.shape[-2]:
        raise ContractViolation("dimension mismatch in matmul: %s @ %s" % (a.shape, b.shape))
    return np.matmul(a, b)


def hermitian(a):
    """conjugate transpose of the last two axes"""
    return np.conj(np.swapaxes(a, -1, -2))


def frobenius_norm(a):
    """Frobenius norm, a float for a matrix or an array for a stack"""
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))


def inner(a, b):
    '''real part of the Frobenius inner product, Re tr(a^H b), per matrix'''
    return np.sum(np.real(np.conj(a) * b), axis=(-2, -1))


def diagonal_load(a, factor=DIAGONAL_LOADING):
    """return ``a + factor * trace(a)/n * I``"""
    n = a.shape[-1]
    level = factor * np.real(np.trace(a, axis1=-2, axis2=-1)) / n
    return a + level[..., None, None] * np.eye(n)


def solve_hermitian_psd(a, b):
    """solve ``a x = b`` for Hermitian positive definite ``a``

    The factorization is ``a = L L^H``.  For a single matrix the LAPACK
    Cholesky solver is used; stacks are factored in one batched call and the
    two triangular systems are solved per stack entry.

    :raises ContractViolation: if ``a`` is not square or rows do not match
    :raises SingularMatrixError: on a non-positive pivot
    """
    require(a.shape[-1] == a.shape[-2], "matrix must be square, got %s", a.shape)
    require(a.shape[-1] == b.shape[-2], "row mismatch in solve: %s vs %s", a.shape, b.shape)

    if a.ndim == 2:
        try:
            factor = scipy.linalg.cho_factor(a, lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise SingularMatrixError("cholesky factorization failed: %s", e)
        x = scipy.linalg.cho_solve(factor, b)
    else:
        try:
            lower = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as e:
            raise SingularMatrixError("cholesky factorization failed: %s", e)
        y = np.linalg.solve(lower, b)
        x = np.linalg.solve(hermitian(lower), y)

    if not np.all(np.isfinite(x)):
        raise NumericFailure("non-finite solution of hermitian system")
    return x
