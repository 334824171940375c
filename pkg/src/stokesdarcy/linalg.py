"""Sparse direct factorization and a BiCGStab Krylov driver.

Subdomain solves reuse one LU factorization across many right-hand
sides, so the direct path wraps SuperLU.  The interface system of the
coupled solver is nonsymmetric and only available through
matrix-vector applications, which is what the BiCGStab implementation
here targets: it keeps a residual history, distinguishes breakdown from
slow convergence, and restarts once from the current iterate before
giving up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass(frozen=True)
class KrylovConfig:
    """Settings for the iterative interface solver.

    Parameters
    ----------
    tol : float
        Relative residual target, measured against the right-hand side.
    maxiter : int
        Iteration cap; one iteration applies the operator twice.
    seed : int
        Seed for the deterministic shadow-residual perturbation used
        when restarting after a breakdown.
    """

    tol: float = 1e-8
    maxiter: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.maxiter < 1:
            raise ValueError(f"maxiter must be at least 1, got {self.maxiter}")


class Factorization:
    """LU factorization of a sparse matrix with cached triangular solves.

    Parameters
    ----------
    matrix : sparse matrix
        Square system matrix; converted to CSC for the factorization.
    """

    def __init__(self, matrix):
        matrix = sp.csc_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"matrix must be square, got {matrix.shape}")
        self.shape = matrix.shape
        self.nnz = matrix.nnz
        self._lu = spla.splu(matrix)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``A x = b`` for one right-hand side."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"rhs length {b.shape[0]} != {self.shape[0]}")
        return self._lu.solve(b)


def factorize(matrix) -> Factorization:
    """Factorize a sparse square matrix for repeated solves.

    Parameters
    ----------
    matrix : sparse matrix
        Square, nonsingular system matrix.

    Returns
    -------
    Factorization
        Object exposing ``solve(b)``.

    Raises
    ------
    RuntimeError
        If the matrix is numerically singular.
    """
    try:
        return Factorization(matrix)
    except RuntimeError as exc:
        raise RuntimeError(f"sparse factorization failed: {exc}") from exc


def export_matrix_market(matrix, path) -> None:
    """Write a sparse matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix))


def read_matrix_market(path):
    """Read a MatrixMarket file back as CSR."""
    return sp.csr_matrix(scipy.io.mmread(str(path)))


#: Magnitude below which an inner product counts as a breakdown.
_BREAKDOWN_EPS = 1e-30


def bicgstab(
    apply_op,
    b: np.ndarray,
    config: KrylovConfig = KrylovConfig(),
    x0: np.ndarray | None = None,
    callback=None,
) -> tuple[np.ndarray, dict]:
    """Solve ``A x = b`` with BiCGStab for a matrix-free operator.

    Parameters
    ----------
    apply_op : callable
        Function computing ``A @ v`` for a vector ``v``.
    b : ndarray
        Right-hand side.
    config : KrylovConfig
        Tolerance, iteration cap and restart seed.
    x0 : ndarray, optional
        Initial guess, defaults to zero.
    callback : callable, optional
        Called with the current relative residual after every iteration.

    Returns
    -------
    x : ndarray
        Final iterate.
    info : dict
        Keys ``converged`` (bool), ``iterations`` (int), ``residuals``
        (list of relative residual norms, starting with the initial
        one), ``reason`` (str), ``breakdowns`` (int) and
        ``true_residual`` (float, recomputed from a final operator
        application).

    Notes
    -----
    Breakdown (a vanishing ``rho`` or shadow inner product) is reported
    separately from slow convergence.  On the first breakdown the
    iteration restarts from the current iterate with a deterministic
    perturbed shadow residual; a second breakdown aborts.  Convergence
    is only declared if the recomputed true residual satisfies ten times
    the requested tolerance, which guards against drift in the recursion.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        info = {
            "converged": True,
            "iterations": 0,
            "residuals": [0.0],
            "reason": "zero rhs",
            "breakdowns": 0,
            "true_residual": 0.0,
        }
        return x, info

    rng = np.random.default_rng(config.seed)
    r = b - apply_op(x) if x0 is not None else b.copy()
    r_hat = r.copy()
    residuals = [float(np.linalg.norm(r) / bnorm)]
    breakdowns = 0
    reason = "maxiter"
    converged = False

    rho_old = 1.0
    alpha = 1.0
    omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    fresh = True  # no Krylov history yet (start or just restarted)

    it = 0
    while it < config.maxiter:
        rho = float(r_hat @ r)
        if abs(rho) < _BREAKDOWN_EPS * bnorm * bnorm or (
            not fresh and abs(omega) < _BREAKDOWN_EPS
        ):
            breakdowns += 1
            if breakdowns > 1:
                reason = "breakdown"
                break
            # Restart from the current iterate with a perturbed shadow
            # residual so the new Krylov space is not orthogonal to r.
            r = b - apply_op(x)
            r_hat = r + np.linalg.norm(r) * 1e-2 * rng.standard_normal(n)
            rho_old, alpha, omega = 1.0, 1.0, 1.0
            v[:] = 0.0
            p[:] = 0.0
            fresh = True
            continue
        if fresh:
            p = r.copy()
            fresh = False
        else:
            beta = (rho / rho_old) * (alpha / omega)
            p = r + beta * (p - omega * v)
        v = apply_op(p)
        denom = float(r_hat @ v)
        if abs(denom) < _BREAKDOWN_EPS * bnorm * bnorm:
            breakdowns += 1
            if breakdowns > 1:
                reason = "breakdown"
                break
            r = b - apply_op(x)
            r_hat = r + np.linalg.norm(r) * 1e-2 * rng.standard_normal(n)
            rho_old, alpha, omega = 1.0, 1.0, 1.0
            v[:] = 0.0
            p[:] = 0.0
            fresh = True
            continue
        alpha = rho / denom
        s = r - alpha * v
        it += 1
        snorm = float(np.linalg.norm(s) / bnorm)
        if snorm < config.tol:
            x = x + alpha * p
            residuals.append(snorm)
            if callback is not None:
                callback(snorm)
            converged = True
            reason = "converged"
            break
        t = apply_op(s)
        tt = float(t @ t)
        if tt < _BREAKDOWN_EPS:
            omega = 0.0
        else:
            omega = float(t @ s) / tt
        x = x + alpha * p + omega * s
        r = s - omega * t
        rho_old = rho
        relres = float(np.linalg.norm(r) / bnorm)
        residuals.append(relres)
        if callback is not None:
            callback(relres)
        if relres < config.tol:
            converged = True
            reason = "converged"
            break

    true_res = float(np.linalg.norm(b - apply_op(x)) / bnorm)
    if converged and true_res > 10.0 * config.tol:
        converged = False
        reason = "true residual check failed"
    info = {
        "converged": converged,
        "iterations": it,
        "residuals": residuals,
        "reason": reason,
        "breakdowns": breakdowns,
        "true_residual": true_res,
    }
    return x, info
