"""Flattened-space superoperator algebra.

D x D operators are vectorized by column stacking with the row index fast,
vec(X)[n*D + m] = X[m, n], so the map X -> A X B becomes kron(B.T, A) and the
Liouvillian of the (real) model reads

    L = G (x) G + L (x) L - (1/2) (I (x) L0 + L0 (x) I),   L0 = G^T G + L^T L.

Everything downstream (coherence, correlators, discrete transfer matrices)
runs on sparse matrices of this space, through two primitives: the action of
exp(t*L) on a vector (matrix-free Krylov) and projected singular solves.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError, ValidationError
from .model import gain_matrix, loss_matrix

__all__ = [
    "FlatSuperoperator",
    "ObliqueProjector",
    "KrylovPropagator",
    "vec",
    "unvec",
    "vec_identity",
    "vec_steady",
    "build_liouvillian",
    "jump_superoperators",
    "projector_Q",
    "expm_action",
    "expm_action_dense",
    "solve_projected",
    "projected_solve",
    "u1_invariance_residual",
    "export_matrix_market",
]


def vec(mat):
    """Column-stacking vectorization (row index fast)."""
    return np.asarray(mat).ravel(order="F")


def unvec(v, dim):
    return np.asarray(v).reshape((dim, dim), order="F")


def vec_identity(dim):
    return vec(np.eye(dim))


def vec_steady(model):
    return vec(np.diag(model.steady))


@dataclass
class FlatSuperoperator:
    """A sparse D^2 x D^2 matrix on the flattened space, with a role tag."""

    dim: int
    matrix: sp.csr_matrix
    kind: str  # "liouvillian" | "transfer" | "projected"

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self):
        return self.matrix.nnz

    def __matmul__(self, v):
        return self.matrix @ v


def _as_matvec(op):
    if isinstance(op, FlatSuperoperator):
        m = op.matrix
        return lambda x: m @ x
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return lambda x: op @ x
    if isinstance(op, spla.LinearOperator):
        return op.matvec
    if callable(op):
        return op
    raise ValidationError(f"cannot take matvecs of {type(op)!r}")


def _as_matrix(op):
    if isinstance(op, FlatSuperoperator):
        return op.matrix
    return op


def build_liouvillian(model):
    """Assemble L = D[G] + D[L] as a sparse matrix (nnz <= 5 D^2)."""
    D = model.dim
    G = sp.csr_matrix(gain_matrix(model))
    L = sp.csr_matrix(loss_matrix(model))
    # L0 diagonal: (G^T G)_mm = G_{m+1}^2 for m < D-1, (L^T L)_mm = L_m^2.
    gTg = np.concatenate((model.gain**2, [0.0]))
    lTl = np.concatenate(([0.0], model.loss**2))
    l0 = gTg + lTl
    eye = sp.identity(D, format="csr")
    L0 = sp.diags(l0, format="csr")
    mat = (sp.kron(G, G) + sp.kron(L, L)
           - 0.5 * (sp.kron(eye, L0) + sp.kron(L0, eye))).tocsr()
    return FlatSuperoperator(dim=D, matrix=mat, kind="liouvillian")


def jump_superoperators(model):
    """(S_plus, S_minus): creation rho -> rho L^dag and annihilation rho -> L rho.

    In flattened form S_plus = L (x) I and S_minus = I (x) L.
    """
    L = sp.csr_matrix(loss_matrix(model))
    eye = sp.identity(model.dim, format="csr")
    return sp.kron(L, eye).tocsr(), sp.kron(eye, L).tocsr()


class ObliqueProjector:
    """Q = I - |1)(1| with |1) = vec(rho_ss), (1| = vec(I)^T; never densified."""

    def __init__(self, one_left, one_right):
        self.one_left = np.asarray(one_left, dtype=float)
        self.one_right = np.asarray(one_right, dtype=float)

    def __call__(self, v):
        return v - self.one_right * (self.one_left @ v)

    def __matmul__(self, v):
        return self(v)


def projector_Q(model):
    return ObliqueProjector(vec_identity(model.dim), vec_steady(model))


# ---------------------------------------------------------------------------
# Krylov matrix exponential action
# ---------------------------------------------------------------------------

class KrylovPropagator:
    """Arnoldi propagator for w = exp(t*A) v, reusable across many t.

    The basis is grown lazily until a per-t error estimate passes; an exact
    invariant subspace (happy breakdown) short-circuits everything, which is
    the common case here because jump-dressed vectors live in a single
    diagonal-offset block of dimension <= D.

    Bookkeeping: `steps` counts completed Arnoldi columns, so H[:m, :m] and
    V[:, :m] are valid for any m <= steps.
    """

    def __init__(self, op, v, tol=1e-9, m_min=30, m_max=None, max_substeps=4096):
        self._matvec = _as_matvec(op)
        self._op = op
        self.v = np.asarray(v, dtype=float).copy()
        self.n = self.v.size
        self.tol = float(tol)
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        self.m_min = max(2, int(m_min))
        self.m_max = min(self.n, 420 if m_max is None else int(m_max))
        self.max_substeps = max_substeps
        self.beta = float(np.linalg.norm(self.v))
        self.steps = 0
        self.breakdown = False
        self._last_est = np.inf
        if self.beta > 0:
            alloc = min(self.m_min, self.m_max)
            self._V = np.zeros((self.n, alloc + 1))
            self._H = np.zeros((alloc + 1, alloc))
            self._V[:, 0] = self.v / self.beta

    def _grow_storage(self, k_target):
        alloc = self._H.shape[1]
        if k_target > alloc:
            new = min(self.m_max, max(k_target, 2 * alloc))
            V = np.zeros((self.n, new + 1))
            V[:, : alloc + 1] = self._V
            H = np.zeros((new + 1, new))
            H[: alloc + 1, :alloc] = self._H
            self._V, self._H = V, H

    def _extend(self, k_target):
        """Complete Arnoldi columns up to k_target (or happy breakdown)."""
        k_target = min(k_target, self.m_max)
        self._grow_storage(k_target)
        V, H = self._V, self._H
        while self.steps < k_target and not self.breakdown:
            j = self.steps
            w = self._matvec(V[:, j])
            # modified Gram-Schmidt with one reorthogonalization pass
            for _ in range(2):
                coeffs = V[:, : j + 1].T @ w
                w = w - V[:, : j + 1] @ coeffs
                H[: j + 1, j] += coeffs
            h = np.linalg.norm(w)
            H[j + 1, j] = h
            self.steps = j + 1
            scale = max(float(np.max(np.abs(H[: j + 2, : j + 1]))), 1.0)
            if h <= 1e-13 * scale:
                self.breakdown = True
            else:
                V[:, j + 1] = w / h

    def _small_exp(self, t, m):
        return scipy.linalg.expm(t * self._H[:m, :m])[:, 0]

    def _error_estimate(self, t, m, y):
        if self.breakdown and m >= self.steps:
            return 0.0
        # residual proxy plus stability under basis truncation
        est = self.beta * abs(self._H[m, m - 1]) * abs(y[m - 1])
        k = max(2, m // 6)
        if m - k >= 2:
            y_small = self._small_exp(t, m - k)
            diff = y.copy()
            diff[: m - k] -= y_small
            est = max(est, self.beta * float(np.linalg.norm(diff)))
        return est

    def _attempt(self, t):
        """Grow the basis until the estimate passes; None on stagnation."""
        m = max(self.steps, min(self.m_min, self.m_max))
        while True:
            self._extend(m)
            m = self.steps
            y = self._small_exp(t, m)
            est = self._error_estimate(t, m, y)
            self._last_est = est
            ynorm = self.beta * float(np.linalg.norm(y))
            if est <= self.tol * max(ynorm, 1e-6 * self.beta):
                return self.beta * (self._V[:, :m] @ y)
            if m >= self.m_max and not self.breakdown:
                return None
            m = min(2 * m, self.m_max)

    def at(self, t):
        """Return exp(t*A) v to the propagator's tolerance."""
        t = float(t)
        if t < 0:
            raise ValidationError("propagation time must be >= 0")
        if t == 0.0 or self.beta == 0.0:
            return self.v.copy()
        w = self._attempt(t)
        if w is not None:
            return w
        return self._substep(t)

    def _substep(self, t):
        """Adaptive step halving when a single Krylov step stagnates."""
        ns = 2
        while ns <= self.max_substeps:
            w = self.v.copy()
            ok = True
            for _ in range(ns):
                prop = KrylovPropagator(self._op, w, tol=self.tol / ns,
                                        m_min=self.m_min, m_max=self.m_max,
                                        max_substeps=0)
                w = prop._attempt(t / ns)
                if w is None:
                    ok = False
                    break
            if ok:
                return w
            ns *= 2
        raise NumericalError("Krylov expm did not converge after step halving",
                             residual=self._last_est)


def expm_action(sup, v, t, tol=1e-9):
    """w ~ exp(t*sup) v with relative error <= tol (matrix-free Krylov)."""
    return KrylovPropagator(sup, v, tol=tol).at(t)


def expm_action_dense(sup, v, t):
    """Dense scaling-and-squaring route; oracle for D <= 64."""
    A = _as_matrix(sup)
    if sp.issparse(A):
        A = A.toarray()
    return scipy.linalg.expm(t * A) @ v


# ---------------------------------------------------------------------------
# Projected linear solves
# ---------------------------------------------------------------------------

def projected_solve(A, one_left, one_right, rhs, rtol=1e-11, method="auto",
                    max_refine=10):
    """Solve (Q A Q) x = Q rhs with (1| x = 0, Q = I - |1)(1|.

    Primary path is full-recycle GMRES on the projected operator (Q applied
    after every matvec); fallback is sparse LU on A + eps*I with
    eps = 1e-12 * max|A|, followed by projection and iterative refinement.
    """
    if method not in ("auto", "gmres", "bicgstab", "lu"):
        raise ValidationError(f"unknown solver method {method!r}")
    A = _as_matrix(A)
    n = rhs.size
    Q = ObliqueProjector(one_left, one_right)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return np.zeros(n)
    leak = abs(one_left @ rhs) / (np.linalg.norm(one_left) * rhs_norm)
    if leak > rtol:
        warnings.warn(f"rhs has a component along (1| (relative size {leak:.2e}); "
                      "projecting it out", stacklevel=2)
    b = Q(rhs)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)

    def residual(x):
        return np.linalg.norm(b - Q(A @ Q(x)))

    tried = {}
    iterative = method in ("gmres", "bicgstab") or (method == "auto" and n <= 160**2)
    if iterative:
        opname = "bicgstab" if method == "bicgstab" else "gmres"
        lin = spla.LinearOperator((n, n), matvec=lambda x: Q(A @ Q(x)))
        if opname == "gmres":
            restart = min(n, max(80, 2 * int(np.sqrt(n)) + 40), 500)
            x, info = spla.gmres(lin, b, rtol=0.2 * rtol, atol=0.0,
                                 restart=restart, maxiter=6)
        else:
            x, info = spla.bicgstab(lin, b, rtol=0.2 * rtol, atol=0.0,
                                    maxiter=8 * int(np.sqrt(n)) + 400)
        x = Q(x)
        res = residual(x)
        if info == 0 and res <= rtol * bnorm:
            return x
        tried[opname] = res
        if method in ("gmres", "bicgstab"):
            raise NumericalError(f"{opname} failed to reach rtol={rtol:g}",
                                 residual=res / bnorm)

    # sparse LU fallback on the epsilon-regularized operator, with iterative
    # refinement.  Near the double-precision floor (residual ~ eps*|A|/gap at
    # large D) convergence is detected through the solution increment instead.
    A_csc = sp.csc_matrix(A)
    eps = 1e-12 * float(np.max(np.abs(A_csc.data))) if A_csc.nnz else 1e-12
    lu = spla.splu(A_csc + eps * sp.identity(n, format="csc"))
    x = Q(lu.solve(b))
    for _ in range(max_refine):
        r = b - Q(A @ Q(x))
        if np.linalg.norm(r) <= rtol * bnorm:
            return x
        dx = Q(lu.solve(r))
        x = Q(x + dx)
        xnorm = np.linalg.norm(x)
        if xnorm > 0 and np.linalg.norm(dx) <= rtol * xnorm:
            return x
    res = residual(x)
    if res <= rtol * bnorm:
        return x
    tried["lu"] = res
    raise NumericalError("projected solve failed on all paths "
                         f"({', '.join(f'{k}: {v/bnorm:.2e}' for k, v in tried.items())})",
                         residual=res / bnorm)


def solve_projected(model, rhs, tol=1e-11, method="auto", liouvillian=None):
    """Solve (Q L Q) x = rhs for the model's Liouvillian."""
    sup = liouvillian if liouvillian is not None else build_liouvillian(model)
    return projected_solve(sup, vec_identity(model.dim), vec_steady(model),
                           rhs, rtol=tol, method=method)


# ---------------------------------------------------------------------------
# Diagnostics and export
# ---------------------------------------------------------------------------

def u1_invariance_residual(sup, zeta):
    """Max-abs change of the superoperator under the U(1) phase conjugation.

    The phase superoperator is diagonal on the flattened space with entries
    e^{i zeta (n-m)} at the pair index (m, n); L couples only fixed m-n
    offsets, so the residual is structurally zero.
    """
    A = sp.coo_matrix(_as_matrix(sup))
    if A.nnz == 0:
        return 0.0
    D = sup.dim if isinstance(sup, FlatSuperoperator) else int(round(np.sqrt(A.shape[0])))
    offset = np.arange(D**2) // D - np.arange(D**2) % D  # n - m per flat index
    # conjugation multiplies entry (I, J) by e^{i zeta (off_I - off_J)}; the
    # offset difference is a small integer, so evaluate it directly.
    conj_data = A.data * np.exp(1j * zeta * (offset[A.row] - offset[A.col]))
    return float(np.max(np.abs(conj_data - A.data)))


def export_matrix_market(sup, path):
    scipy.io.mmwrite(str(path), _as_matrix(sup))
