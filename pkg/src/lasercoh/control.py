"""Control synthesis on the cavity (x) qubit space.

The gain/loss generators expand over the dynamical-Lie-algebra basis elements
(n^m a^dag) sigma^- - (a n^m) sigma^+; the coefficients solve F v = rhs with
the generalized Vandermonde matrix F_{nm} = n^{m+1/2}.  F factors as
diag(n^{3/2}) V with V the standard Vandermonde in nodes 1..D-1, so the system
reduces to polynomial interpolation and the Bjorck-Pereyra recurrences apply;
naive inversion dies around D = 8 in double precision.
"""

from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import NumericalError, ValidationError
from .model import gain_matrix, loss_matrix

__all__ = [
    "VandermondeSystem",
    "solve_vandermonde",
    "det_positive",
    "reconstruct_generator",
    "lie_basis_element",
    "generator_target",
]

DOUBLE_DIM_LIMIT = 12       # switch to extended precision above this
DET_DOUBLE_DIM_LIMIT = 14
EXTENDED_DPS = 40
RESIDUAL_LIMIT = 1e-6


@dataclass
class VandermondeSystem:
    dim: int
    rhs: np.ndarray
    solution: np.ndarray
    residual: float          # ||F v - rhs||_inf in the working precision
    precision: str           # "double" | "extended"
    solution_norm_inf: float # coefficient growth, reported (never bounded)
    mp_solution: list = None # unrounded coefficients (extended path only)


def _bp_interpolation(nodes, values):
    """Monomial coefficients of the polynomial interpolating (nodes, values).

    Bjorck-Pereyra primal recurrences (divided differences, then synthetic
    division); runs on floats or mpmath.mpf alike.
    """
    a = list(values)
    n = len(a)
    for k in range(n - 1):
        for i in range(n - 1, k, -1):
            a[i] = (a[i] - a[i - 1]) / (nodes[i] - nodes[i - k - 1])
    for k in range(n - 2, -1, -1):
        for i in range(k, n - 1):
            a[i] = a[i] - nodes[k] * a[i + 1]
    return a


def _resolve_precision(dim, precision, double_limit):
    if precision is None:
        return "double" if dim <= double_limit else "extended"
    if precision not in ("double", "extended"):
        raise ValidationError(f"precision must be 'double' or 'extended', got {precision!r}")
    return precision


def solve_vandermonde(dim, rhs, precision=None):
    """Solve F v = rhs, F_{nm} = n^{m+1/2} (n, m = 1..dim-1).

    Scales out diag(n^{3/2}) and runs Bjorck-Pereyra on the plain Vandermonde;
    double precision up to dim = 12, extended (mpmath, 40 digits) above, as
    the conditioning grows super-exponentially.  Raises NumericalError if the
    attached residual exceeds 1e-6 * ||rhs||_inf.
    """
    if dim < 2:
        raise ValidationError("dim must be >= 2")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (dim - 1,):
        raise ValidationError(f"rhs must have length {dim - 1}")
    precision = _resolve_precision(dim, precision, DOUBLE_DIM_LIMIT)

    mp_solution = None
    if precision == "double":
        nodes = [float(k) for k in range(1, dim)]
        scaled = [rhs[k - 1] / k**1.5 for k in range(1, dim)]
        sol = _bp_interpolation(nodes, scaled)
        v = np.array(sol, dtype=float)
        residual = _residual_double(dim, v, rhs)
    else:
        with mpmath.workdps(EXTENDED_DPS):
            nodes = [mpmath.mpf(k) for k in range(1, dim)]
            scaled = [mpmath.mpf(rhs[k - 1]) / mpmath.power(k, mpmath.mpf(3) / 2)
                      for k in range(1, dim)]
            sol = _bp_interpolation(nodes, scaled)
            residual = float(_mp_row_residual(dim, sol, rhs))
            v = np.array([float(x) for x in sol])
            mp_solution = sol

    scale = float(np.max(np.abs(rhs))) or 1.0
    if residual > RESIDUAL_LIMIT * scale:
        raise NumericalError(
            f"Vandermonde solve residual too large at dim={dim} ({precision}); "
            "retry with precision='extended'", residual=residual / scale)
    return VandermondeSystem(dim=dim, rhs=rhs, solution=v, residual=residual,
                             precision=precision,
                             solution_norm_inf=float(np.max(np.abs(v))),
                             mp_solution=mp_solution)


def _mp_row_residual(dim, sol, rhs):
    """max_n |sum_m n^{m+1/2} v_m - rhs_n| in the active mpmath precision."""
    res = mpmath.mpf(0)
    for row in range(1, dim):
        acc = mpmath.mpf(0)
        for m in range(1, dim):
            acc += mpmath.power(row, m + mpmath.mpf(1) / 2) * sol[m - 1]
        res = max(res, abs(acc - mpmath.mpf(rhs[row - 1])))
    return res


def _vandermonde_matrix(dim):
    n = np.arange(1, dim, dtype=float)
    m = np.arange(1, dim, dtype=float)
    return n[:, None] ** (m[None, :] + 0.5)


def _residual_double(dim, v, rhs):
    return float(np.max(np.abs(_vandermonde_matrix(dim) @ v - rhs)))


def det_positive(dim, precision=None):
    """Sign of det F via pivoted factorization; asserts +1.

    Guarded to dim <= 14 in double (determinant overflow/precision), any dim
    in extended precision.
    """
    if dim < 2:
        raise ValidationError("dim must be >= 2")
    precision = _resolve_precision(dim, precision, DET_DOUBLE_DIM_LIMIT)
    if precision == "double":
        if dim > DET_DOUBLE_DIM_LIMIT:
            raise ValidationError(f"double-precision determinant limited to "
                                  f"dim <= {DET_DOUBLE_DIM_LIMIT}")
        sign, logdet = np.linalg.slogdet(_vandermonde_matrix(dim))
        sign = int(sign)
        if not np.isfinite(logdet):
            sign = 0
    else:
        with mpmath.workdps(EXTENDED_DPS):
            mat = mpmath.matrix(dim - 1)
            for i in range(1, dim):
                for j in range(1, dim):
                    mat[i - 1, j - 1] = mpmath.power(i, j + mpmath.mpf(1) / 2)
            d = mpmath.det(mat)
            sign = 1 if d > 0 else (-1 if d < 0 else 0)
    if sign != 1:
        raise NumericalError(f"det F sign {sign} at dim={dim}: precision loss "
                             "(the determinant is provably positive)")
    return 1


_SM = np.array([[0.0, 1.0], [0.0, 0.0]])
_SP = _SM.T


def lie_basis_element(dim, m, which):
    """Basis generator on the 2*dim space, truncated ladder operators.

    gain: (n^m a^dag) sigma^- - (a n^m) sigma^+,
    loss: (a n^m) sigma^+ - (n^m a^dag) sigma^-  (the negative of gain).
    """
    n_op = np.diag(np.arange(dim, dtype=float))
    adag = np.diag(np.sqrt(np.arange(1, dim)), k=-1)
    raise_part = np.linalg.matrix_power(n_op, m) @ adag
    base = np.kron(raise_part, _SM) - np.kron(raise_part.T, _SP)
    return base if which == "gain" else -base


def generator_target(model, which):
    """G sigma^- - G^dag sigma^+ (gain) or L sigma^+ - L^dag sigma^- (loss)."""
    if which == "gain":
        G = gain_matrix(model)
        return np.kron(G, _SM) - np.kron(G.T, _SP)
    if which == "loss":
        L = loss_matrix(model)
        return np.kron(L, _SP) - np.kron(L.T, _SM)
    raise ValidationError(f"which must be 'gain' or 'loss', got {which!r}")


def reconstruct_generator(model, which, precision=None):
    """Rebuild the gain/loss generator from the solved coefficients.

    Returns the max-abs residual against the target generator on the
    cavity (x) qubit space, evaluated in the working precision.  The loss
    expansion carries the opposite sign of the gain basis elements (same
    span).  On the extended path the expansion and the target share their
    sparsity pattern exactly, so the matrix residual reduces to the row
    residuals of F v - rhs, evaluated on the unrounded coefficients;
    converting v to double first would destroy the cancellation (the terms
    n^{m+1/2} v_m reach ~1e11 at dim = 20).
    """
    dim = model.dim
    precision = _resolve_precision(dim, precision, DOUBLE_DIM_LIMIT)
    rhs = model.gain if which == "gain" else model.loss
    system = solve_vandermonde(dim, np.asarray(rhs, dtype=float),
                               precision=precision)
    if precision == "extended":
        with mpmath.workdps(EXTENDED_DPS):
            return float(_mp_row_residual(dim, system.mp_solution, system.rhs))
    acc = np.zeros((2 * dim, 2 * dim))
    for m in range(1, dim):
        acc += system.solution[m - 1] * lie_basis_element(dim, m, which)
    return float(np.max(np.abs(acc - generator_target(model, which))))
