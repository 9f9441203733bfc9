"""Sparse row assembly and a preconditioned BiCGSTAB solver.

Systems produced by the stencil discretizations are assembled row by row
(each row lists the column indices and coefficients of one equation) into
a CSR matrix.  They are nonsymmetric, so the iterative solver of choice
is BiCGSTAB.  A Jacobi (diagonal) preconditioner usually suffices because
rows are dominated by the 1/dt mass term or the stencil center weight;
systems with stiff boundary rows (free-surface stress conditions at low
viscosity) fall back to an incomplete-LU preconditioner.
"""

import numpy as np
import scipy.sparse as sp

from .errors import Breakdown, EmptyRow, NoConvergence


class SparseSystem:
    """Incremental row-wise builder for a square sparse system A x = b."""

    def __init__(self, n: int):
        self.n = n
        self._rows = []
        self._cols = []
        self._vals = []
        self._filled = np.zeros(n, dtype=bool)
        self.b = np.zeros(n)

    def set_row(self, i: int, cols, vals, rhs: float):
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        keep = vals != 0.0
        cols, vals = cols[keep], vals[keep]
        if cols.size == 0:
            raise EmptyRow(f"row {i} has no nonzero coefficients")
        self._rows.append(np.full(cols.size, i, dtype=np.int64))
        self._cols.append(cols)
        self._vals.append(vals)
        self._filled[i] = True
        self.b[i] = rhs

    def add_entries(self, rows, cols, vals):
        """Bulk coefficient insertion; zero values are dropped."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        keep = vals != 0.0
        self._rows.append(rows[keep])
        self._cols.append(cols[keep])
        self._vals.append(vals[keep])
        self._filled[rows] = True

    def add_to_row(self, i: int, cols, vals):
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        self._rows.append(np.full(cols.size, i, dtype=np.int64))
        self._cols.append(cols)
        self._vals.append(vals)
        self._filled[i] = True

    def matrix(self) -> sp.csr_matrix:
        missing = np.flatnonzero(~self._filled)
        if missing.size:
            raise EmptyRow(f"rows never assembled: {missing[:10].tolist()}")
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        vals = np.concatenate(self._vals)
        A = sp.coo_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        return A.tocsr()


def _bicgstab_loop(A, b, x, minv, target, budget):
    """Inner BiCGSTAB iteration with a preconditioner application `minv`.

    Returns (x, iterations, converged).  Raises Breakdown when an inner
    product degenerates.
    """
    r = b - A @ x
    if np.linalg.norm(r) <= target:
        return x, 0, True
    r_hat = r.copy()
    rho_old = alpha = omega = 1.0
    v = np.zeros_like(b)
    pvec = np.zeros_like(b)

    for it in range(1, budget + 1):
        rho = r_hat @ r
        if abs(rho) < 1e-300:
            raise Breakdown(f"rho underflow in BiCGSTAB (iteration {it})")
        beta = (rho / rho_old) * (alpha / omega)
        pvec = r + beta * (pvec - omega * v)
        phat = minv(pvec)
        v = A @ phat
        denom = r_hat @ v
        if abs(denom) < 1e-300:
            raise Breakdown(f"r_hat . v underflow in BiCGSTAB (iteration {it})")
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= target:
            return x + alpha * phat, it, True
        shat = minv(s)
        t = A @ shat
        tt = t @ t
        if tt < 1e-300:
            raise Breakdown(f"t . t underflow in BiCGSTAB (iteration {it})")
        omega = (t @ s) / tt
        x = x + alpha * phat + omega * shat
        r = s - omega * t
        if np.linalg.norm(r) <= target:
            return x, it, True
        if abs(omega) < 1e-300:
            raise Breakdown(f"omega underflow in BiCGSTAB (iteration {it})")
        rho_old = rho
    return x, budget, False


def solve_bicgstab(A, b, x0=None, tol: float = 1e-9, max_iter=None,
                   precondition: bool = True):
    """BiCGSTAB with Jacobi preconditioning and an ILU fallback.

    Returns (x, iterations).  Convergence is declared when the true
    residual norm falls below tol * ||b|| (or tol when b = 0).  Cheap
    diagonal preconditioning is tried first; if the iteration stalls
    (badly scaled boundary rows can make the system far from diagonally
    dominant) an incomplete-LU preconditioner is built and the iteration
    restarts from the best iterate.  Raises NoConvergence if both phases
    exhaust the budget and Breakdown if an inner product degenerates in
    the ILU phase.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = max(10 * n, 100)

    if precondition:
        d = A.diagonal().copy()
        d[np.abs(d) < 1e-30] = 1.0
        inv_d = 1.0 / d
        jacobi = lambda r: inv_d * r
    else:
        jacobi = lambda r: r

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    target = tol * max(np.linalg.norm(b), 1e-300)

    budget = min(max_iter, max(300, n // 10)) if precondition else max_iter
    try:
        x, it, done = _bicgstab_loop(A, b, x, jacobi, target, budget)
    except Breakdown:
        if not precondition:
            raise
        it, done = budget, False
    if done:
        return x, it
    if not precondition:
        raise NoConvergence(residual=float(np.linalg.norm(b - A @ x) /
                                           max(np.linalg.norm(b), 1e-300)),
                            iterations=it)

    from scipy.sparse.linalg import spilu
    ilu = spilu(A.tocsc(), drop_tol=1e-5, fill_factor=10)
    x, it2, done = _bicgstab_loop(A, b, x, ilu.solve, target, max_iter - it)
    if done:
        return x, it + it2
    raise NoConvergence(residual=float(np.linalg.norm(b - A @ x) /
                                       max(np.linalg.norm(b), 1e-300)),
                        iterations=it + it2)
