"""Sparse and composite linear operators plus small dense solvers.

CSR is the single storage format. Adjoint products traverse the stored
matrix (scipy handles the transposed product without materializing A^T).
Operators are immutable after construction apart from a matvec counter
used for cost accounting; all products are deterministic.
"""

import warnings

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp


class DimensionMismatchError(ValueError):
    """Operator applied to a vector of the wrong length."""


class SpectralNormWarning(UserWarning):
    """Power iteration did not reach the requested tolerance."""


def _sigfig_key(value, digits=12):
    # cache key stable under round-off noise in repeated parameter values
    return float(np.format_float_scientific(value, precision=digits - 1))


class SparseOperator:
    """CSR matrix with counted forward/adjoint products.

    Parameters
    ----------
    matrix : array_like or scipy sparse matrix, shape (m, n)
        Stored as CSR with explicit zeros pruned.

    Notes
    -----
    `matvec_count` counts operator applications charged to the algorithms'
    cost model (one unit per A or A^T product). Diagnostic quantities
    (termination residuals, logged metrics, inexactness certificates) go
    through the uncounted private products so that the logged cost matches
    the per-step closed forms.
    """

    def __init__(self, matrix):
        csr = sp.csr_matrix(matrix, dtype=np.float64)
        csr.eliminate_zeros()
        csr.sort_indices()
        self._csr = csr
        self.matvec_count = 0
        self._factor_cache = {}

    @property
    def n_rows(self):
        return self._csr.shape[0]

    @property
    def n_cols(self):
        return self._csr.shape[1]

    @property
    def shape(self):
        return self._csr.shape

    @property
    def row_offsets(self):
        return self._csr.indptr

    @property
    def col_indices(self):
        return self._csr.indices

    @property
    def values(self):
        return self._csr.data

    @property
    def nnz(self):
        return self._csr.nnz

    def tocsr(self):
        return self._csr

    def toarray(self):
        return self._csr.toarray()

    def reset_matvec_count(self):
        self.matvec_count = 0

    # -- counted products ---------------------------------------------------

    def matvec(self, x):
        """Return A @ x."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise DimensionMismatchError(
                f"matvec: expected length {self.n_cols}, got {x.shape}")
        self.matvec_count += 1
        return self._csr @ x

    def rmatvec(self, y):
        """Return A.T @ y."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.n_rows,):
            raise DimensionMismatchError(
                f"rmatvec: expected length {self.n_rows}, got {y.shape}")
        self.matvec_count += 1
        return self._csr.T @ y

    # -- uncounted products (diagnostics, termination checks) ---------------

    def apply_nocount(self, x):
        return self._csr @ np.asarray(x, dtype=np.float64)

    def applyT_nocount(self, y):
        return self._csr.T @ np.asarray(y, dtype=np.float64)


class ShiftedGram:
    """B = A^T A + shift * I, symmetric positive definite for shift > 0."""

    def __init__(self, base, shift):
        if shift <= 0:
            raise ValueError("shift must be positive")
        self.base = base
        self.shift = float(shift)

    @property
    def n(self):
        return self.base.n_cols

    def apply(self, x):
        return self.base.rmatvec(self.base.matvec(x)) + self.shift * x

    def apply_nocount(self, x):
        return self.base.applyT_nocount(self.base.apply_nocount(x)) + self.shift * x


def matvec(A, x):
    """Exact CSR product A @ x."""
    return A.matvec(x)


def rmatvec(A, y):
    """Exact adjoint product A.T @ y."""
    return A.rmatvec(y)


def spectral_norm_sq(A, tol=1e-8, max_iter=500, seed=0):
    """Estimate ||A||_2^2 by power iteration on A^T A.

    The seed fixes the start vector, so repeated calls are reproducible.
    Emits `SpectralNormWarning` and returns the best estimate if the
    relative change between the last two iterates exceeds `tol`.
    """
    if A.nnz == 0:
        raise ValueError("spectral_norm_sq requires a nonzero operator")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.n_cols)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A.applyT_nocount(A.apply_nocount(v))
        lam_new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0):
            return lam_new
        lam = lam_new
    warnings.warn("power iteration did not converge; returning best estimate",
                  SpectralNormWarning)
    return lam


def _woodbury_factor(A, ratio):
    """Cholesky factor of M = I_m + ratio * A A^T (dense m x m)."""
    gram = (A.tocsr() @ A.tocsr().T).toarray()
    M = ratio * gram
    M[np.diag_indices_from(M)] += 1.0
    return scipy.linalg.cho_factor(M, lower=True)


def shifted_gram_solve(A, c_id, c_gram, rhs, counted=True):
    """Solve (c_id * I + c_gram * A^T A) z = rhs via the m x m reduced system.

    Uses (cI + gA^TA)^{-1} = (1/c) (I - (g/c) A^T (I_m + (g/c) A A^T)^{-1} A)
    with a dense Cholesky factorization of the inner m x m matrix, cached
    per (c_id, c_gram) on the operator. `counted=False` routes the two
    operator products around the cost counter (for diagnostic solves).
    """
    if c_id <= 0 or c_gram < 0:
        raise ValueError("need c_id > 0 and c_gram >= 0")
    rhs = np.asarray(rhs, dtype=np.float64)
    if c_gram == 0 or A.nnz == 0:
        return rhs / c_id
    ratio = c_gram / c_id
    key = (_sigfig_key(c_id), _sigfig_key(c_gram))
    factor = A._factor_cache.get(key)
    if factor is None:
        factor = _woodbury_factor(A, ratio)
        A._factor_cache[key] = factor
    t = A.matvec(rhs) if counted else A.apply_nocount(rhs)
    s = scipy.linalg.cho_solve(factor, t)
    ATs = A.rmatvec(s) if counted else A.applyT_nocount(s)
    return (rhs - ratio * ATs) / c_id


def smw_solve(A, alpha, tau_l, rhs, counted=True):
    """Solve (I + tau_l * B_alpha) z = rhs with B_alpha = A^T A + (1/alpha) I.

    The system is rewritten as (1 + tau_l/alpha) I + tau_l A^T A and solved
    through the dense m x m reduced system (Cholesky, cached per
    (alpha, tau_l) to 12 significant digits).
    """
    if alpha <= 0 or tau_l <= 0:
        raise ValueError("alpha and tau_l must be positive")
    return shifted_gram_solve(A, 1.0 + tau_l / alpha, tau_l, rhs, counted)


def dense_prox_ls_oracle(A, b, alpha, x, max_n=4096):
    """Exact unconstrained least-squares prox via a dense direct solve.

    Returns argmin_z 0.5*||Az - b||^2 + ||z - x||^2 / (2*alpha), i.e.
    (I + alpha A^T A)^{-1} (x + alpha A^T b). Test oracle only.
    """
    if A.n_cols > max_n:
        raise ValueError(f"dense oracle limited to n <= {max_n}")
    Ad = A.toarray()
    lhs = np.eye(A.n_cols) + alpha * (Ad.T @ Ad)
    rhs = np.asarray(x, dtype=np.float64) + alpha * (Ad.T @ np.asarray(b))
    return np.linalg.solve(lhs, rhs)


def save_matrix_market(path, A):
    """Write the operator in MatrixMarket coordinate text format."""
    scipy.io.mmwrite(str(path), A.tocsr())


def load_matrix_market(path):
    """Read a MatrixMarket file into a SparseOperator."""
    return SparseOperator(scipy.io.mmread(str(path)))
