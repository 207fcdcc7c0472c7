"""First- and second-order Glauber functions, model vs ideal beam.

The model correlators follow the quantum-regression recipe on the flattened
space: sort the time arguments, start from vec(rho_ss), and at each time apply
the creation insertion rho -> rho L^dag (for s, s') or the annihilation
insertion rho -> L rho (for t', t), propagating with exp(L * gap) between
consecutive times; the latest operator closes the chain against the trace
functional.  Coincident times commute on the flattened space, so normal order
(creations on the conjugate side) is applied with zero propagation between.
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .coherence import coherence
from .errors import ValidationError
from .superop import (KrylovPropagator, build_liouvillian, jump_superoperators,
                      vec_identity, vec_steady)

__all__ = [
    "IdealBeam",
    "FourTimes",
    "ideal_g1",
    "ideal_g2",
    "model_g1",
    "model_g2",
    "G1Evaluator",
    "G2Evaluator",
    "max_delta_g2",
    "delta_g1_profile",
    "ideality_tau",
]


@dataclass(frozen=True)
class IdealBeam:
    """Phase-diffusing coherent beam parameters."""

    linewidth: float
    flux: float

    def __post_init__(self):
        if self.linewidth <= 0 or self.flux <= 0:
            raise ValidationError("IdealBeam needs positive linewidth and flux")


@dataclass(frozen=True)
class FourTimes:
    """Arguments (s, s', t', t) of the second-order correlator."""

    s: float
    sp: float
    tp: float
    t: float

    def as_tuple(self):
        return (self.s, self.sp, self.tp, self.t)


def ideal_g1(beam, s, t=0.0):
    return float(np.exp(-0.5 * beam.linewidth * abs(s - t)))


def ideal_g2(beam, times):
    s, sp, tp, t = times.as_tuple() if isinstance(times, FourTimes) else times
    # canonicalize the commuting pairs so the swap symmetries hold bit-exactly
    s, sp = min(s, sp), max(s, sp)
    tp, t = min(tp, t), max(tp, t)
    combo = (abs(s - t) + abs(sp - tp) + abs(s - tp) + abs(t - sp)
             - abs(s - sp) - abs(t - tp))
    return float(np.exp(-0.5 * beam.linewidth * combo))


def ideality_tau(model):
    """Search half-window tau = sqrt(3/(2*N*ell)) from the model's linewidth."""
    if model.linewidth is None:
        raise ValidationError("compute the coherence first (linewidth unknown)")
    return float(np.sqrt(1.5 / (model.flux * model.linewidth)))


class G1Evaluator:
    """g1(s) = Tr[L^dag e^{Ls}(L rho_ss)] / N with a reused Krylov basis."""

    def __init__(self, model, tol=1e-10):
        sup = build_liouvillian(model)
        D = model.dim
        n = np.arange(1, D)
        idx = n * D + (n - 1)
        self._u = np.zeros(D * D)
        self._u[idx] = model.loss
        w0 = np.zeros(D * D)
        w0[idx] = model.loss * model.steady[n]
        self._norm = float(self._u @ w0)
        self._prop = KrylovPropagator(sup, w0, tol=tol)

    def __call__(self, s):
        return float(self._u @ self._prop.at(abs(float(s)))) / self._norm


def model_g1(model, s, tol=1e-10):
    """Normalized first-order correlator at separation s (symmetric in s)."""
    return G1Evaluator(model, tol=tol)(s)


def _op_sequence(times):
    """Sorted (time, kind) with kind 'c' for s, s' and 'a' for t', t.

    Ties are broken creation-first (normal order); the insertions commute on
    the flattened space so this only fixes the evaluation order.
    """
    s, sp, tp, t = times.as_tuple() if isinstance(times, FourTimes) else times
    tagged = [(float(s), "c"), (float(sp), "c"), (float(tp), "a"), (float(t), "a")]
    return sorted(tagged, key=lambda x: (x[0], 0 if x[1] == "c" else 1))


def model_g2(model, times, tol=1e-9):
    """Normalized second-order correlator by quantum regression.

    Real by construction for this real model; validated against a dense
    complex oracle in the tests.
    """
    sup = build_liouvillian(model)
    s_plus, s_minus = jump_superoperators(model)
    ops = {"c": s_plus, "a": s_minus}
    seq = _op_sequence(times)
    w = ops[seq[0][1]] @ vec_steady(model)
    for (t_prev, _), (t_next, kind) in zip(seq[:-1], seq[1:]):
        gap = t_next - t_prev
        if gap > 0:
            w = KrylovPropagator(sup, w, tol=tol).at(gap)
        w = ops[kind] @ w
    val = float(vec_identity(model.dim) @ w)
    return val / model.flux**2


class G2Evaluator:
    """Lattice-friendly g2 evaluation with shared Krylov propagators.

    The chain value depends only on the gaps (stationarity), so legs are
    cached: one propagator per first insertion, one per distinct second
    state, and the closing leg is folded into adjoint propagators of the
    trace functional (two, one per closing insertion kind).
    """

    def __init__(self, model, tol=1e-9):
        self.model = model
        self.tol = tol
        self._sup = build_liouvillian(model)
        self._supT = self._sup.matrix.T.tocsr()
        s_plus, s_minus = jump_superoperators(model)
        self._ops = {"c": s_plus, "a": s_minus}
        self._opsT = {"c": s_plus.T.tocsr(), "a": s_minus.T.tocsr()}
        rho = vec_steady(model)
        one = vec_identity(model.dim)
        self._w1 = {k: op @ rho for k, op in self._ops.items()}
        self._p1 = {}
        self._close = {k: opT @ one for k, opT in self._opsT.items()}
        self._adj = {k: KrylovPropagator(self._supT, u, tol=tol)
                     for k, u in self._close.items()}
        self._w2 = {}
        self._p2 = {}
        self._w3 = {}
        self._u4 = {}

    def _leg1(self, kind):
        if kind not in self._p1:
            self._p1[kind] = KrylovPropagator(self._sup, self._w1[kind], tol=self.tol)
        return self._p1[kind]

    def g2(self, times):
        seq = _op_sequence(times)
        (t1, k1), (t2, k2), (t3, k3), (t4, k4) = seq
        g1_, g2_, g3_ = t2 - t1, t3 - t2, t4 - t3
        key2 = (k1, g1_, k2)
        if key2 not in self._w2:
            self._w2[key2] = self._ops[k2] @ self._leg1(k1).at(g1_)
        key3 = key2 + (g2_, k3)
        if key3 not in self._w3:
            if key2 not in self._p2:
                self._p2[key2] = KrylovPropagator(self._sup, self._w2[key2],
                                                  tol=self.tol)
            self._w3[key3] = self._ops[k3] @ self._p2[key2].at(g2_)
        key4 = (k4, g3_)
        if key4 not in self._u4:
            self._u4[key4] = self._adj[k4].at(g3_)
        val = float(self._u4[key4] @ self._w3[key3])
        return val / self.model.flux**2


def max_delta_g2(model, grid=9, refine=False, corner_eps=1e-3, tol=1e-9):
    """Largest |g2_model - g2_ideal| over [-tau, tau]^4, s pinned at -tau.

    Scans a grid^3 lattice over (s', t', t), optionally polishes with
    Nelder-Mead, and always also evaluates the corner candidate
    (-tau, -(1-eps) tau, (1-eps) tau, tau), returning whichever is larger.
    Returns (FourTimes argmax, delta, corner_delta).
    """
    if grid < 5 or grid % 2 == 0:
        raise ValidationError("grid must be an odd integer >= 5")
    if model.linewidth is None:
        coherence(model)
    tau = ideality_tau(model)
    beam = IdealBeam(linewidth=model.linewidth, flux=model.flux)
    ev = G2Evaluator(model, tol=tol)

    def delta(times):
        return ev.g2(times) - ideal_g2(beam, times)

    lattice = np.linspace(-tau, tau, grid)
    best_val, best_times = -1.0, None
    for sp in lattice:
        for tp in lattice:
            for t in lattice:
                ft = FourTimes(-tau, sp, tp, t)
                d = abs(delta(ft))
                if d > best_val:
                    best_val, best_times = d, ft

    if refine:
        def neg_abs_delta(x):
            x = np.clip(x, -tau, tau)
            return -abs(delta(FourTimes(-tau, x[0], x[1], x[2])))

        res = scipy.optimize.minimize(
            neg_abs_delta, [best_times.sp, best_times.tp, best_times.t],
            method="Nelder-Mead",
            options={"maxfev": 400, "xatol": 1e-10 * tau, "fatol": 1e-14})
        if -res.fun > best_val:
            x = np.clip(res.x, -tau, tau)
            best_val, best_times = -res.fun, FourTimes(-tau, x[0], x[1], x[2])

    corner = FourTimes(-tau, -(1 - corner_eps) * tau, (1 - corner_eps) * tau, tau)
    corner_delta = abs(delta(corner))
    if corner_delta > best_val:
        best_val, best_times = corner_delta, corner
    return best_times, best_val, corner_delta


def delta_g1_profile(model, s_max=None, points=201, tol=1e-10):
    """|g1_model(s) - exp(-ell s / 2)| sampled on [0, s_max].

    Returns (s, g1_model, g1_ideal, delta, max_delta); s_max defaults to ten
    coherence times.
    """
    if model.linewidth is None:
        coherence(model)
    ell = model.linewidth
    if s_max is None:
        s_max = 10.0 / ell
    s = np.linspace(0.0, s_max, points)
    g1 = G1Evaluator(model, tol=tol)
    g_model = np.array([g1(x) for x in s])
    g_ideal = np.exp(-0.5 * ell * s)
    delta = np.abs(g_model - g_ideal)
    return s, g_model, g_ideal, delta, float(delta.max())
