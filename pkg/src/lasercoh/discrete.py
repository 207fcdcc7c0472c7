"""Finite-time-step picture: A-matrices, transfer matrix, discrete coherence.

One time step emits at most one photon; the step is encoded by four Kraus-like
matrices with fixed sparsity (A0 subdiagonal gain, A1 diagonal, A2 = 0,
A3 superdiagonal loss) obeying the isometry sum_j A_j^T A_j = I.  The transfer
matrix T = sum_j A_j (x) A_j equals I + gamma^2 * L_gamma with
L_gamma -> Liouvillian as gamma -> 0.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import logsumexp

from .errors import ValidationError
from .model import gain_matrix, loss_matrix
from .superop import FlatSuperoperator, projected_solve, vec, vec_identity

__all__ = [
    "DiscreteModel",
    "build_discrete",
    "transfer_matrix",
    "isometry_residual",
    "fixed_point_residual",
    "liouvillian_residual",
    "steady_state",
    "discrete_coherence",
    "one_site_term",
    "channel_equivalence",
    "gain_loss_unitaries",
]

GAMMA_GUARD_MARGIN = 1e-9


@dataclass
class DiscreteModel:
    """The four step matrices at time-step parameter gamma = sqrt(N dt)."""

    dim: int
    gamma: float
    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray

    def b_matrices(self):
        """Continuum gain/loss (B0, B3) = (A0, A3)/gamma."""
        return self.a0 / self.gamma, self.a3 / self.gamma


def build_discrete(model, gamma):
    """A0 = gamma G, A3 = gamma L, A1 = sqrt(I - gamma^2 L0), A2 = 0."""
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    gTg = np.concatenate((model.gain**2, [0.0]))
    lTl = np.concatenate(([0.0], model.loss**2))
    l0 = gTg + lTl
    worst = int(np.argmax(l0))
    if gamma**2 * l0[worst] > 1.0 - GAMMA_GUARD_MARGIN:
        raise ValidationError(
            f"gamma too large: gamma^2 * L0[{worst}] = {gamma**2 * l0[worst]:.6g} "
            f"exceeds the guard 1 - {GAMMA_GUARD_MARGIN}")
    return DiscreteModel(
        dim=model.dim, gamma=float(gamma),
        a0=gamma * gain_matrix(model),
        a1=np.diag(np.sqrt(1.0 - gamma**2 * l0)),
        a2=np.zeros((model.dim, model.dim)),
        a3=gamma * loss_matrix(model))


def transfer_matrix(dm):
    """T = sum_j A_j (x) A_j (real A's), sparse."""
    mats = [sp.csr_matrix(a) for a in (dm.a0, dm.a1, dm.a2, dm.a3)]
    T = sum(sp.kron(a, a) for a in mats).tocsr()
    return FlatSuperoperator(dim=dm.dim, matrix=T, kind="transfer")


def isometry_residual(dm):
    """max-abs of sum_j A_j^T A_j - I."""
    acc = sum(a.T @ a for a in (dm.a0, dm.a1, dm.a2, dm.a3))
    return float(np.max(np.abs(acc - np.eye(dm.dim))))


def steady_state(dm):
    """Steady populations from the gain/loss recurrence, in log space."""
    g = np.diag(dm.a0, k=-1)
    l = np.diag(dm.a3, k=1)
    if np.any(l <= 0) or np.any(g <= 0):
        raise ValidationError("steady state needs strictly positive gain/loss diagonals")
    log_rho = np.concatenate(([0.0], 2.0 * np.cumsum(np.log(g) - np.log(l))))
    rho = np.exp(log_rho - logsumexp(log_rho))
    return rho / rho.sum()


def fixed_point_residual(dm, steady=None):
    """inf-norm of T vec(rho_ss) - vec(rho_ss); exact algebraically."""
    rho = steady_state(dm) if steady is None else np.asarray(steady)
    v = vec(np.diag(rho))
    return float(np.max(np.abs(transfer_matrix(dm) @ v - v)))


def rescaled_generator(dm):
    """L_gamma = (T - I)/gamma^2 as a sparse matrix (exact kernel pair)."""
    T = transfer_matrix(dm).matrix
    n = T.shape[0]
    return ((T - sp.identity(n, format="csr")) / dm.gamma**2).tocsr()


def liouvillian_residual(dm):
    """r(gamma) = || (T - I)/gamma^2 - L ||_max, L built from B0, B3."""
    b0, b3 = dm.b_matrices()
    b0s, b3s = sp.csr_matrix(b0), sp.csr_matrix(b3)
    l0 = sp.diags(np.diag(b0.T @ b0 + b3.T @ b3))
    eye = sp.identity(dm.dim, format="csr")
    L = sp.kron(b0s, b0s) + sp.kron(b3s, b3s) - 0.5 * (sp.kron(eye, l0) + sp.kron(l0, eye))
    diff = rescaled_generator(dm) - L.tocsr()
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


def _sigma_vectors(dm, rho):
    """((sigma+| row, |sigma-) column) of the transfer-operator picture.

    (sigma+| = (1|(A3 (x) A1) = vec(A1 A3)^T and
    |sigma-) = (A1 (x) A3)|1) = vec(A3 rho A1).
    """
    u = vec(dm.a1 @ dm.a3)
    w = vec(dm.a3 @ np.diag(rho) @ dm.a1)
    return u, w


def discrete_coherence(dm, tol=1e-10, method="auto"):
    """2 (sigma+| inv(I - Q T Q) |sigma-), excluding the one-site flux term.

    Evaluated as -2/gamma^2 (sigma+| x with (Q L_gamma Q) x = |sigma-), which
    is the same quantity expressed through the rescaled generator and is
    manifestly gamma-independent in the continuum limit.
    """
    rho = steady_state(dm)
    u, w = _sigma_vectors(dm, rho)
    x = projected_solve(rescaled_generator(dm), vec_identity(dm.dim),
                        vec(np.diag(rho)), w, rtol=tol, method=method)
    return -2.0 * float(u @ x) / dm.gamma**2


def one_site_term(dm):
    """(1| A3 (x) A3 |1) = gamma^2 * flux: the dropped single-site piece."""
    rho = steady_state(dm)
    return float(np.sum((dm.a3 @ np.diag(rho)) * dm.a3))


# ---------------------------------------------------------------------------
# Channel equivalence with the gain/loss unitary construction
# ---------------------------------------------------------------------------

_SM = np.array([[0.0, 1.0], [0.0, 0.0]])  # |0><1|
_SP = _SM.T


def gain_loss_unitaries(model, dt):
    """U_cl = exp(sqrt(dt)(G sigma_l^- - G^T sigma_l^+)) and the loss analog.

    Both act on the cavity (x) qubit space (2D x 2D, qubit the fast factor).
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    root = np.sqrt(dt)
    G = gain_matrix(model)
    L = loss_matrix(model)
    gen_cl = np.kron(G, _SM) - np.kron(G.T, _SP)
    gen_cr = np.kron(L, _SP) - np.kron(L.T, _SM)
    return scipy.linalg.expm(root * gen_cl), scipy.linalg.expm(root * gen_cr)


def _unitary_channel(model, dt):
    """Cavity -> cavity (x) beam-qubit map from the composed unitaries."""
    D = model.dim
    root = np.sqrt(dt)
    G = gain_matrix(model)
    L = loss_matrix(model)
    eye2 = np.eye(2)
    # cavity (x) left-qubit (x) right-qubit ordering
    gen_cl = np.kron(np.kron(G, _SM) - np.kron(G.T, _SP), eye2)
    gen_cr = np.kron(np.kron(L, eye2), _SP) - np.kron(np.kron(L.T, eye2), _SM)
    U = scipy.linalg.expm(root * gen_cr) @ scipy.linalg.expm(root * gen_cl)

    e_l = np.array([0.0, 1.0])  # left qubit starts excited (pump)
    e_r = np.array([1.0, 0.0])  # right qubit starts in vacuum

    def channel(rho_c):
        rho_in = np.kron(np.kron(rho_c, np.outer(e_l, e_l)), np.outer(e_r, e_r))
        out = U @ rho_in @ U.T
        out = out.reshape(D, 2, 2, D, 2, 2)  # (c, l, r, c', l', r')
        return np.einsum("iajkas->ijks", out).reshape(2 * D, 2 * D)

    return channel


def _kraus_channel(model, dt):
    """Cavity -> cavity (x) beam-qubit map of the A-matrix step (sink traced)."""
    dm = build_discrete(model, np.sqrt(dt))
    D = model.dim
    p00 = np.outer([1.0, 0.0], [1.0, 0.0])
    p01 = np.outer([1.0, 0.0], [0.0, 1.0])
    p11 = np.outer([0.0, 1.0], [0.0, 1.0])

    def channel(rho_c):
        out = (np.kron(dm.a0 @ rho_c @ dm.a0.T + dm.a1 @ rho_c @ dm.a1, p00)
               + np.kron(dm.a1 @ rho_c @ dm.a3.T, p01)
               + np.kron(dm.a3 @ rho_c @ dm.a1, p01.T)
               + np.kron(dm.a3 @ rho_c @ dm.a3.T, p11))
        return out

    return channel


def channel_equivalence(model, dt, keep_beam=False):
    """Max-abs Choi-matrix distance between the two step constructions.

    Compares the channel generated by the composed gain/loss unitaries (left
    qubit traced out) against the A-matrix map with the sink traced out.

    The default compares at the cavity level (beam qubit traced as well),
    which matches to O(dt^2).  With keep_beam=True the beam qubit is kept and
    the distance is O(dt^{3/2}): the unitary composition populates the
    gain-then-emit path (amplitude dt*L G) that the A2 = 0 step excludes, and
    its cross term with the sqrt(dt) loss amplitude lands in the
    beam-coherence Choi blocks.
    """
    D = model.dim
    ch_u = _unitary_channel(model, dt)
    ch_a = _kraus_channel(model, dt)

    def reduce(block):
        if keep_beam:
            return block
        return np.einsum("iaja->ij", block.reshape(D, 2, D, 2))

    worst = 0.0
    for i in range(D):
        for j in range(D):
            e = np.zeros((D, D))
            e[i, j] = 1.0
            worst = max(worst, float(np.max(np.abs(reduce(ch_u(e)) - reduce(ch_a(e))))))
    return worst
