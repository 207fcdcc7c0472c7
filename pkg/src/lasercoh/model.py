"""Continuum-limit laser model family.

The family is a D-level cavity with one-photon gain and loss diagonals
(G_n, L_n), unit gain, and the sin^4 population profile that maximizes the
beam coherence.  The steady state obeys the detailed-balance recurrence
rho_n = (G_n/L_n)^2 rho_{n-1}; the flux telescopes to exactly 1 - rho_{D-1}
and the mean photon number is (D-1)/2 by symmetry.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError

__all__ = [
    "LaserModel",
    "build_model",
    "custom_model",
    "phase_covariance_check",
    "steady_state_residual",
    "gain_matrix",
    "loss_matrix",
    "model_to_json",
]


@dataclass
class LaserModel:
    """A gain/loss laser model with its steady state and derived scalars.

    Arrays are 1-indexed physically: gain[k] and loss[k] hold G_{k+1} and
    L_{k+1} (k = 0..D-2), steady[n] holds rho_n (n = 0..D-1).  All data are
    read-only after construction; `linewidth` is the one field written later
    (by the coherence computation, as ell = 4*flux/coherence).
    """

    dim: int
    gain: np.ndarray
    loss: np.ndarray
    steady: np.ndarray
    flux: float
    mu: float
    linewidth: float | None = None

    def __post_init__(self):
        for arr in (self.gain, self.loss, self.steady):
            arr.setflags(write=False)

    def to_json(self, indent=None):
        return model_to_json(self, indent=indent)


def _finalize(dim, gain, loss, steady):
    flux = float(np.sum(loss**2 * steady[1:]))
    mu = float(np.sum(np.arange(dim) * steady))
    return LaserModel(dim=dim, gain=gain, loss=loss, steady=steady,
                      flux=flux, mu=mu)


def build_model(dim):
    """Construct the sin^4 model family at cavity dimension `dim`.

    rho_n is proportional to sin^4(pi (n+1)/(D+1)), G_n = 1, and
    L_n = sin^2(pi n/(D+1)) / sin^2(pi (n+1)/(D+1)) so that the
    detailed-balance recurrence reproduces rho.
    """
    if int(dim) != dim or dim < 2:
        raise ValidationError(f"dim must be an integer >= 2, got {dim!r}")
    dim = int(dim)

    n = np.arange(dim)
    s = np.sin(np.pi * (n + 1) / (dim + 1))
    steady = s**4
    steady /= steady.sum()

    gain = np.ones(dim - 1)
    k = np.arange(1, dim)
    loss = np.sin(np.pi * k / (dim + 1)) ** 2 / np.sin(np.pi * (k + 1) / (dim + 1)) ** 2
    return _finalize(dim, gain, loss, steady)


def custom_model(loss):
    """Build a model with G_n = 1 and the given loss diagonal.

    The steady state follows from the recurrence rho_n = (1/L_n)^2 rho_{n-1},
    accumulated in log space to survive strongly peaked profiles.
    """
    loss = np.asarray(loss, dtype=float)
    if loss.ndim != 1 or loss.size < 1:
        raise ValidationError("loss must be a 1-D vector of length D-1 >= 1")
    if np.any(loss <= 0) or not np.all(np.isfinite(loss)):
        bad = int(np.argmin(loss))
        raise ValidationError(
            f"loss entries must be strictly positive and finite; "
            f"entry L_{bad + 1} = {loss[bad]!r} (steady state would not exist or not be unique)")

    dim = loss.size + 1
    log_rho = np.concatenate(([0.0], -2.0 * np.cumsum(np.log(loss))))
    steady = np.exp(log_rho - logsumexp(log_rho))
    steady /= steady.sum()
    return _finalize(dim, np.ones(dim - 1), loss, steady)


def gain_matrix(model):
    """Dense D x D gain operator: entries G_n at (n, n-1)."""
    G = np.zeros((model.dim, model.dim))
    idx = np.arange(1, model.dim)
    G[idx, idx - 1] = model.gain
    return G


def loss_matrix(model):
    """Dense D x D loss operator: entries L_n at (n-1, n)."""
    L = np.zeros((model.dim, model.dim))
    idx = np.arange(1, model.dim)
    L[idx - 1, idx] = model.loss
    return L


def phase_covariance_check(model, zeta):
    """Residual of U(1) covariance of the jump operators.

    Returns max over the two operators of
    || U^{-zeta} L U^{zeta} - e^{i zeta} L ||_max and
    || U^{-zeta} G U^{zeta} - e^{-i zeta} G ||_max,
    with U^{zeta} = diag(e^{i zeta n}).  Structurally ~0: each operator has a
    single off-diagonal.
    """
    # Diagonal conjugation is elementwise exact:
    # (U^{-zeta} X U^{zeta})_{mn} = e^{i zeta (n-m)} X_{mn}.
    n = np.arange(model.dim)
    phase = np.exp(1j * zeta * (n[None, :] - n[:, None]))
    L = loss_matrix(model).astype(complex)
    G = gain_matrix(model).astype(complex)
    res_L = np.max(np.abs(phase * L - np.exp(1j * zeta) * L))
    res_G = np.max(np.abs(phase * G - np.exp(-1j * zeta) * G))
    return float(max(res_L, res_G))


def steady_state_residual(model):
    """Entrywise residual of the diagonal fixed-point map L(rho_ss) = 0.

    Evaluates G_n^2 rho_{n-1} + L_{n+1}^2 rho_{n+1} - (G_{n+1}^2 + L_n^2) rho_n
    with out-of-range boundary terms dropped; returns the max abs entry.
    """
    rho = model.steady
    g2 = np.concatenate((model.gain**2, [0.0]))   # g2[n] = G_{n+1}^2, zero at n=D-1
    l2 = np.concatenate(([0.0], model.loss**2))   # l2[n] = L_n^2, zero at n=0
    rho_lo = np.concatenate(([0.0], rho[:-1]))
    rho_hi = np.concatenate((rho[1:], [0.0]))
    g2_lo = np.concatenate(([0.0], g2[:-1]))      # G_n^2 aligned with rho_{n-1}
    l2_hi = np.concatenate((l2[1:], [0.0]))       # L_{n+1}^2 aligned with rho_{n+1}
    res = g2_lo * rho_lo + l2_hi * rho_hi - (g2 + l2) * rho
    return float(np.max(np.abs(res)))


def model_to_json(model, indent=None):
    """Serialize with deterministic field order; linewidth is null until set."""
    payload = {
        "dim": model.dim,
        "gain": [float(x) for x in model.gain],
        "loss": [float(x) for x in model.loss],
        "steady": [float(x) for x in model.steady],
        "flux": model.flux,
        "mu": model.mu,
        "linewidth": model.linewidth,
    }
    return json.dumps(payload, indent=indent)
