"""Closed-form analytics: Heisenberg/SQL bounds, heterodyne MSE, G-asymmetry.

The Heisenberg constant is derived, not hard-coded: the first Airy zero is
found by bisection on a Maclaurin-series evaluation of Ai, and the constants
(2/3)|3/z_A|^6 = 2.9748... and 4|z_A/3|^3 = 1.8936... follow from it.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import NumericalError, ValidationError

__all__ = [
    "airy_series",
    "airy_zero",
    "phase_mse_constant",
    "heisenberg_coefficient",
    "heisenberg_bound",
    "sql_bound",
    "HeterodyneSetup",
    "msse_exact",
    "msse_quadrature",
    "bound_chain",
    "g_asymmetry",
]


# ---------------------------------------------------------------------------
# Airy zero and the derived constants
# ---------------------------------------------------------------------------

def airy_series(z, terms=60):
    """Ai(z) from its Maclaurin series; valid for |z| <= 4 (radius guard)."""
    if abs(z) > 4.0:
        raise ValidationError("airy_series is guarded to |z| <= 4")
    c1 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
    c2 = 3.0 ** (-1.0 / 3.0) / math.gamma(1.0 / 3.0)
    z3 = z**3
    f = tf = 1.0
    g = tg = z
    for k in range(terms):
        tf *= z3 / ((3 * k + 2) * (3 * k + 3))
        tg *= z3 / ((3 * k + 3) * (3 * k + 4))
        f += tf
        g += tg
        if abs(tf) < 1e-18 and abs(tg) < 1e-18:
            break
    return c1 * f - c2 * g


@lru_cache(maxsize=1)
def airy_zero():
    """First (largest) zero of Ai, by bisection; about -2.33811."""
    lo, hi = -3.0, -2.0  # Ai(-3) < 0 < Ai(-2)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if airy_series(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def phase_mse_constant():
    """k = 4 |z_A/3|^3, the optimal-phase-measurement MSE constant (~1.8936)."""
    return 4.0 * abs(airy_zero() / 3.0) ** 3


def heisenberg_coefficient():
    """(2/3) |3/z_A|^6, the mu^4 coefficient of the coherence bound (~2.9748)."""
    return (2.0 / 3.0) * abs(3.0 / airy_zero()) ** 6


def heisenberg_bound(mu):
    if mu <= 0:
        raise ValidationError("mu must be positive")
    return heisenberg_coefficient() * mu**4


def sql_bound(mu):
    if mu <= 0:
        raise ValidationError("mu must be positive")
    return 16.0 * mu**2


def bound_chain(mu, coherence):
    """Both sides of the MSE inequality chain at ell = 4 N / coherence.

    lhs = 2 sqrt(2 ell / 3 N) = 4 sqrt(2/(3 c)) is the retrofiltering MSE,
    rhs = 4 |z_A/3|^3 / mu^2 the direct-measurement floor; their squared ratio
    is exactly heisenberg_bound(mu)/c, reported as the slack factor.
    """
    if mu <= 0 or coherence <= 0:
        raise ValidationError("mu and coherence must be positive")
    lhs = 4.0 * math.sqrt(2.0 / (3.0 * coherence))
    rhs = phase_mse_constant() / mu**2
    slack = heisenberg_bound(mu) / coherence
    return {
        "mu": float(mu),
        "coherence": float(coherence),
        "lhs": lhs,
        "rhs": rhs,
        "slack": slack,
        "satisfied": bool(lhs >= rhs * (1.0 - 1e-12)),
    }


# ---------------------------------------------------------------------------
# Heterodyne filtering/retrofiltering MSE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HeterodyneSetup:
    """Window parameters: sigma = tau * sqrt(flux * linewidth)."""

    flux: float
    linewidth: float
    tau: float
    sigma: float

    def __post_init__(self):
        if min(self.flux, self.linewidth, self.tau, self.sigma) <= 0:
            raise ValidationError("all heterodyne parameters must be positive")
        if abs(self.sigma - self.tau * math.sqrt(self.flux * self.linewidth)) \
                > 1e-9 * self.sigma:
            raise ValidationError("sigma and tau are mutually inconsistent")

    @classmethod
    def from_sigma(cls, flux, linewidth, sigma):
        if min(flux, linewidth, sigma) <= 0:
            raise ValidationError("flux, linewidth, and sigma must be positive")
        tau = sigma / math.sqrt(flux * linewidth)
        return cls(flux=flux, linewidth=linewidth, tau=tau, sigma=sigma)

    @classmethod
    def from_tau(cls, flux, linewidth, tau):
        if min(flux, linewidth, tau) <= 0:
            raise ValidationError("flux, linewidth, and tau must be positive")
        sigma = tau * math.sqrt(flux * linewidth)
        return cls(flux=flux, linewidth=linewidth, tau=tau, sigma=sigma)


# Series branches (|x| < SERIES_SWITCH) for the cancellation-prone pieces:
# 4*f1/x^2 with f1 = x + 2 e^{-x/2} - 2, and
# h/x^4 with h = 8 e^{-x} f2^2 - (2/9) e^{-4x} f3^4 g^2,
# f2 = e^{x/2}(x-2)+2, f3 = e^{x/2}-1, g = 2 e^{x/2} + 3 e^x + 1.
SERIES_SWITCH = 1e-2
_S1_COEFFS = (1.0, -1.0 / 6, 1.0 / 48, -1.0 / 480, 1.0 / 5760, -1.0 / 80640,
              1.0 / 1290240, -1.0 / 23224320, 1.0 / 464486400,
              -1.0 / 10218700800, 1.0 / 245248819200, -1.0 / 6376469299200)
_H_COEFFS = (0.0, 2.0 / 3, -3.0 / 4, 193.0 / 360, -869.0 / 2880, 181.0 / 1260,
             -289867.0 / 4838400, 649007.0 / 29030400, -31409.0 / 4147200,
             18041927.0 / 7664025600)


def _poly(coeffs, x):
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _shot_term(x):
    """4 f1(x) / x^2 (multiplies 1/(N tau) in the MSE)."""
    if x < SERIES_SWITCH:
        return _poly(_S1_COEFFS, x)
    return 4.0 * (x + 2.0 * math.expm1(-0.5 * x)) / x**2


def _diffusion_term(x):
    """h(x)/x^4: the g2-driven part of the MSE (leading order 2x/3)."""
    if x < SERIES_SWITCH:
        return _poly(_H_COEFFS, x)
    f2 = x + math.expm1(0.5 * x) * (x - 2.0)
    f3 = math.expm1(0.5 * x)
    g = 2.0 * math.exp(0.5 * x) + 3.0 * math.exp(x) + 1.0
    h = 8.0 * math.exp(-x) * f2**2 - (2.0 / 9.0) * math.exp(-4.0 * x) * f3**4 * g**2
    return h / x**4


def msse_exact(setup):
    """Closed-form heterodyne MSE (<S^dag S> - <S^2>)/(2 N^2 tau^2).

    Evaluated in the rearranged, cancellation-safe form
    1/(2 N^2 tau^2) + [4 f1/x^2]/(N tau) + h(x)/x^4 with x = ell*tau, with
    explicit series branches below x = 1e-2.
    """
    x = setup.linewidth * setup.tau
    ntau = setup.flux * setup.tau
    return 1.0 / (2.0 * ntau**2) + _shot_term(x) / ntau + _diffusion_term(x)


def _gauss01(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _ideal_combo(s, sp_, tp, t):
    return (np.abs(s - t) + np.abs(sp_ - tp) + np.abs(s - tp) + np.abs(t - sp_)
            - np.abs(s - sp_) - np.abs(t - tp))


def _square_integral(f, tau, order):
    """Integral of f(x, y) over [0, tau]^2, split at the x = y diagonal.

    Each triangle is mapped onto a box (x = u*y, Jacobian y) so the kink of
    the |x - y| terms never crosses a quadrature panel.
    """
    u, wu = _gauss01(order)
    y, wy = _gauss01(order)
    y = y * tau
    wy = wy * tau
    lo = np.outer(u, y)                       # the smaller coordinate
    hi = np.broadcast_to(y[None, :], lo.shape)
    w2 = np.outer(wu, wy * y)                 # includes the Jacobian
    return float(np.sum((f(lo, hi) + f(hi, lo)) * w2))


def _quad_pieces(ell, tau, order):
    """(I_g1, I_A, I_B): quadrature values of the ideal-g integrals.

    On the filtering/retrofiltering domains the six-absolute-value exponent
    separates region-wise into a (s, t') part and a (t, s') part (resp.
    (s, s') and (t, t') for I_B), so each 4-D integral is an exact product of
    two 2-D square integrals; each square is split at its diagonal where the
    integrand kinks.  Validated against brute-force 4-D quadrature in tests.
    """
    # I_g1 = int_0^tau int_0^tau e^{-ell |s-t|/2} ds dt
    i_g1 = _square_integral(lambda x, y: np.exp(-0.5 * ell * np.abs(x - y)),
                            tau, order)
    # I_A: with s' = -a, t = -b the combo collapses to |s - t'| + |a - b|.
    i_a = i_g1 * _square_integral(
        lambda a, b: np.exp(-0.5 * ell * np.abs(a - b)), tau, order)
    # I_B: with t' = -p, t = -q the combo is
    # [2(s + s') - |s - s'|] + [2(p + q) - |p - q|].
    j = _square_integral(
        lambda x, y: np.exp(-0.5 * ell * (2.0 * (x + y) - np.abs(x - y))),
        tau, order)
    i_b = j * j
    return i_g1, i_a, i_b


def _quad_pieces_bruteforce(ell, tau, order):
    """Direct 4-D tensor-product quadrature (region-split); test oracle.

    Slow (order^4 per region); used to validate the factorized fast path.
    """
    u, wu = _gauss01(order)
    y, wy = _gauss01(order)
    y = y * tau
    wy = wy * tau
    lo = np.outer(u, y)
    hi = np.broadcast_to(y[None, :], lo.shape)
    w2 = np.outer(wu, wy * y)
    i_g1 = float(np.sum((np.exp(-0.5 * ell * (hi - lo))
                         + np.exp(-0.5 * ell * (hi - lo))) * w2))

    def regions():
        yield lo, hi
        yield hi, lo

    i_a = 0.0
    for s, tp in regions():
        for a, bb in regions():
            combo = _ideal_combo(s[:, :, None, None], -a[None, None, :, :],
                                 tp[:, :, None, None], -bb[None, None, :, :])
            i_a += float(np.einsum("ij,kl,ijkl->", w2, w2,
                                   np.exp(-0.5 * ell * combo)))
    i_b = 0.0
    for s, sp_ in regions():
        for p, q in regions():
            combo = _ideal_combo(s[:, :, None, None], sp_[:, :, None, None],
                                 -p[None, None, :, :], -q[None, None, :, :])
            i_b += float(np.einsum("ij,kl,ijkl->", w2, w2,
                                   np.exp(-0.5 * ell * combo)))
    return i_g1, i_a, i_b


def _msse_from_pieces(setup, pieces):
    i_g1, i_a, i_b = pieces
    n, tau = setup.flux, setup.tau
    s_dag_s = 1.0 + (2.0 * n / tau) * i_g1 + (n / tau) ** 2 * i_a
    s_sq = (n / tau) ** 2 * i_b
    return (s_dag_s - s_sq) / (2.0 * n**2 * tau**2)


def msse_quadrature(setup, order=24):
    """Independent MSE oracle: tensor-product Gauss-Legendre on the ideal g's.

    Self-checks by order doubling; raises NumericalError when the two orders
    disagree beyond 1e-6 relative.
    """
    if order < 8:
        raise ValidationError("quadrature order must be >= 8 per axis")
    val = _msse_from_pieces(setup, _quad_pieces(setup.linewidth, setup.tau, order))
    check = _msse_from_pieces(setup, _quad_pieces(setup.linewidth, setup.tau, 2 * order))
    if abs(val - check) > 1e-6 * abs(check):
        raise NumericalError("quadrature order insufficient for the MSE",
                             residual=abs(val - check) / abs(check))
    return check


# ---------------------------------------------------------------------------
# G-asymmetry of the beam-splitter output
# ---------------------------------------------------------------------------

_J_EXACT = 4096


@lru_cache(maxsize=1)
def _binom_entropy_table():
    """Exact H(Binomial(j, 1/2)) for j = 0.._J_EXACT, in log space."""
    lg = gammaln(np.arange(_J_EXACT + 2, dtype=float))
    out = np.empty(_J_EXACT + 1)
    ln2 = math.log(2.0)
    for j in range(_J_EXACT + 1):
        k = np.arange(j + 1)
        ln_w = lg[j + 1] - lg[k + 1] - lg[j - k + 1] - j * ln2
        out[j] = -float(np.exp(ln_w) @ ln_w)
    return out


@lru_cache(maxsize=1)
def _entropy_asym_corrections():
    """(c1, c2) of H ~ (1/2) ln(pi e j / 2) + c1/j + c2/j^2, fitted on exact values."""
    table = _binom_entropy_table()
    j = np.arange(2048, _J_EXACT + 1, dtype=float)
    base = 0.5 * np.log(0.5 * math.pi * math.e * j)
    design = np.column_stack([1.0 / j, 1.0 / j**2])
    cs, *_ = np.linalg.lstsq(design, table[2048:] - base, rcond=None)
    return float(cs[0]), float(cs[1])


def _binom_entropy(j):
    """H(Binomial(j, 1/2)) for an integer array j."""
    j = np.asarray(j)
    out = np.empty(j.shape, dtype=float)
    small = j <= _J_EXACT
    out[small] = _binom_entropy_table()[j[small]]
    if np.any(~small):
        c1, c2 = _entropy_asym_corrections()
        jl = j[~small].astype(float)
        out[~small] = 0.5 * np.log(0.5 * math.pi * math.e * jl) + c1 / jl + c2 / jl**2
    return out


def g_asymmetry(nbar, cutoff=None, return_tail_bound=False):
    """Entropic asymmetry sum_j p_j H(Binomial(j, 1/2)) for a thermal mode.

    p_j is geometric with mean nbar; the sum is truncated at `cutoff`
    (default and minimum 50*nbar) with a rigorous tail bound, which must stay
    below 1e-6 or a ValidationError is raised.
    """
    if nbar < 0:
        raise ValidationError("nbar must be >= 0")
    if nbar == 0:
        return (0.0, 0.0) if return_tail_bound else 0.0
    if cutoff is None:
        cutoff = int(math.ceil(50 * nbar)) + 100
    cutoff = int(cutoff)
    if cutoff < 50 * nbar:
        raise ValidationError("cutoff must be at least 50*nbar")

    ln_r = math.log(nbar) - math.log1p(nbar)
    j = np.arange(cutoff + 1)
    weights = np.exp(j * ln_r - math.log1p(nbar))
    total = float(weights @ _binom_entropy(j))

    # tail: sum_{j>C} p_j H_j <= mass * (H_bound(C+1) + (1/2) nbar/(C+1)),
    # using H_j <= (1/2) ln(pi e (j+1)/2) and ln(j) concavity.
    mass = math.exp((cutoff + 1) * ln_r)
    h_edge = 0.5 * math.log(0.5 * math.pi * math.e * (cutoff + 2)) + 1.0
    tail = mass * (h_edge + 0.5 * nbar / (cutoff + 1))
    if tail > 1e-6:
        raise ValidationError(f"cutoff too small: tail bound {tail:.2e} > 1e-6")
    if return_tail_bound:
        return total, tail
    return total
