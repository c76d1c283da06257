"""Dense Hermitian linear algebra kernels used by the solvers.

Everything here operates on plain complex128 ndarrays. Problem sizes are
small (matrices up to a few hundred on a side), so dense LAPACK routines
are used throughout; the value added by this module is the contract
checking (Hermitian-ness, conditioning) and the Toeplitz pair
(`toeplitz_from_column`, `toeplitz_adjoint`) that the SDP solver needs.
"""

import warnings

import numpy as np
import scipy.linalg

from .exceptions import (
    ConvergenceFailure,
    NonHermitianInput,
    RankDeficient,
    SingularSystem,
)

#: refuse eigendecompositions beyond this size; nothing in the package
#: should ever get near it
MAX_EIG_SIZE = 4096

#: condition-estimate ceiling for solve_linear
CONDITION_LIMIT = 1e12


def _as_complex_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def hermitian_deviation(a: np.ndarray) -> float:
    """max |A - A^H| entrywise; 0 for exactly Hermitian input."""
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def require_hermitian(a: np.ndarray, rtol: float = 1e-12) -> None:
    """Raise NonHermitianInput unless max|A - A^H| <= rtol * max|A|."""
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    dev = hermitian_deviation(a)
    if dev > rtol * max(scale, 1e-300):
        raise NonHermitianInput(
            f"matrix deviates from Hermitian by {dev:.3e} (scale {scale:.3e})"
        )


def hermitian_eig(a) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues real and
    ascending and eigenvectors in the columns, so that
    A = V @ diag(w) @ V^H.
    """
    a = _as_complex_matrix(a)
    if a.shape[0] > MAX_EIG_SIZE:
        raise ValueError(f"matrix size {a.shape[0]} exceeds {MAX_EIG_SIZE}")
    require_hermitian(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"eigensolver did not converge: {exc}") from exc
    return w, v


def psd_project(a) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix to Hermitian A.

    Clips negative eigenvalues to zero and recomposes. Idempotent up to
    floating-point roundoff.
    """
    w, v = hermitian_eig(a)
    if w.size and w[0] >= 0.0:
        return np.asarray(a, dtype=np.complex128)
    wc = np.maximum(w, 0.0)
    proj = (v * wc) @ v.conj().T
    # recomposition leaves ~eps asymmetry; keep the output exactly Hermitian
    return 0.5 * (proj + proj.conj().T)


def toeplitz_from_column(u) -> np.ndarray:
    """Hermitian Toeplitz matrix with first column u.

    T[i, j] = u[i - j] on and below the diagonal, conjugate-symmetric
    above. u[0] must be real (it sits on the diagonal).
    """
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("u must be a non-empty vector")
    if abs(u[0].imag) > 1e-12 * (1.0 + abs(u[0])):
        raise ValueError(f"u[0] must be real, got imaginary part {u[0].imag:.3e}")
    return scipy.linalg.toeplitz(u, u.conj())


def _diagonal_sums(a: np.ndarray) -> np.ndarray:
    """Sums over all 2n-1 diagonals of A, indexed by offset i-j in [-(n-1), n-1].

    Returned array d has d[k] = sum over entries with i - j = k - (n-1).
    """
    n = a.shape[0]
    i = np.arange(n)
    keys = (i[:, None] - i[None, :] + n - 1).ravel()
    flat = a.ravel()
    re = np.bincount(keys, weights=flat.real, minlength=2 * n - 1)
    im = np.bincount(keys, weights=flat.imag, minlength=2 * n - 1)
    return re + 1j * im


def toeplitz_adjoint(a) -> np.ndarray:
    """Adjoint of toeplitz_from_column under Re trace(B^H A).

    Satisfies <toeplitz_from_column(u), A>_R = <u, toeplitz_adjoint(A)>_R
    for every u. Entry d is the d-th lower-diagonal sum plus the
    conjugated d-th upper-diagonal sum; entry 0 is the trace.
    """
    a = _as_complex_matrix(a)
    n = a.shape[0]
    d = _diagonal_sums(a)
    out = np.empty(n, dtype=np.complex128)
    out[0] = d[n - 1]
    lower = d[n:]            # offsets +1 .. +(n-1)
    upper = d[n - 2:: -1]    # offsets -1 .. -(n-1)
    out[1:] = lower + upper.conj()
    return out


def solve_linear(a, b) -> np.ndarray:
    """Solve the square system A x = b with conditioning checks.

    The condition number is estimated from the ratio of extreme LU
    pivots; systems at or beyond 1e12 raise SingularSystem. A couple of
    iterative-refinement sweeps keep the residual near roundoff.
    """
    a = _as_complex_matrix(a)
    b = np.asarray(b, dtype=np.complex128)
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"shape mismatch: A is {a.shape}, b has {b.shape}")
    with warnings.catch_warnings():
        # singularity is reported through SingularSystem below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    pmin = float(pivots.min()) if pivots.size else 0.0
    pmax = float(pivots.max()) if pivots.size else 0.0
    cond_est = np.inf if pmin == 0.0 else pmax / pmin
    if cond_est >= CONDITION_LIMIT:
        raise SingularSystem(
            f"pivot-ratio condition estimate {cond_est:.3e} exceeds "
            f"{CONDITION_LIMIT:.1e}",
            condition_estimate=cond_est,
        )
    x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    bnorm = float(np.linalg.norm(b))
    for _ in range(2):
        r = b - a @ x
        if float(np.linalg.norm(r)) <= 1e-10 * max(bnorm, 1e-300):
            break
        x = x + scipy.linalg.lu_solve((lu, piv), r, check_finite=False)
    return x


def pivot_condition_estimate(a) -> float:
    """LU pivot-ratio condition estimate (cheap, order-of-magnitude)."""
    a = _as_complex_matrix(a)
    lu, _ = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    pmin = float(pivots.min()) if pivots.size else 0.0
    return np.inf if pmin == 0.0 else float(pivots.max()) / pmin


def lstsq(a, b) -> np.ndarray:
    """Least-squares solution of overdetermined A x = b.

    A must be tall (rows >= cols) with full column rank; rank deficiency
    raises RankDeficient rather than returning a minimum-norm solution.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError("A must be a matrix")
    rows, cols = a.shape
    if rows < cols:
        raise ValueError(f"A must have rows >= cols, got {a.shape}")
    x, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < cols:
        raise RankDeficient(f"column rank {rank} < {cols}")
    return x
