import numpy as np
import pytest
import scipy.linalg

from lasercoh.coherence import coherence
from lasercoh.errors import ValidationError
from lasercoh import glauber as gl
from lasercoh.model import build_model, loss_matrix
from lasercoh import superop as so


def dense_g2_oracle(model, times):
    """Brute force: densified superoperators, complex dense exponentials."""
    D = model.dim
    L = so.build_liouvillian(model).matrix.toarray().astype(complex)
    Lm = loss_matrix(model).astype(complex)
    creation = np.kron(Lm, np.eye(D)).astype(complex)      # rho -> rho L^dag
    annihilation = np.kron(np.eye(D), Lm).astype(complex)  # rho -> L rho
    ops = {"c": creation, "a": annihilation}
    s, sp_, tp, t = times
    tagged = sorted([(s, "c"), (sp_, "c"), (tp, "a"), (t, "a")],
                    key=lambda x: (x[0], 0 if x[1] == "c" else 1))
    w = ops[tagged[0][1]] @ so.vec(np.diag(model.steady)).astype(complex)
    for (t0, _), (t1, kind) in zip(tagged[:-1], tagged[1:]):
        if t1 > t0:
            w = scipy.linalg.expm(L * (t1 - t0)) @ w
        w = ops[kind] @ w
    val = complex(so.vec(np.eye(D)).astype(complex) @ w)
    return val / model.flux**2


@pytest.fixture(scope="module")
def model10():
    m = build_model(10)
    coherence(m)
    return m


def test_ideal_g1_values():
    beam = gl.IdealBeam(linewidth=2.0, flux=1.0)
    assert gl.ideal_g1(beam, 1.3, 1.3) == 1.0
    assert gl.ideal_g1(beam, 1.0, 0.0) == pytest.approx(np.exp(-1.0), rel=1e-14)
    assert gl.ideal_g1(beam, 0.2, 0.9) == gl.ideal_g1(beam, 0.9, 0.2)


def test_ideal_beam_validation():
    with pytest.raises(ValidationError):
        gl.IdealBeam(linewidth=0.0, flux=1.0)


def test_ideal_g2_values():
    beam = gl.IdealBeam(linewidth=0.8, flux=1.0)
    assert gl.ideal_g2(beam, gl.FourTimes(0.3, 0.3, 0.3, 0.3)) == 1.0
    s, t = 0.7, -0.2
    assert gl.ideal_g2(beam, gl.FourTimes(s, s, t, t)) == pytest.approx(
        np.exp(-2 * 0.8 * abs(s - t)), rel=1e-14)
    rng = np.random.default_rng(2)
    for _ in range(20):
        s, sp_, tp, t = rng.uniform(-3, 3, size=4)
        base = gl.ideal_g2(beam, gl.FourTimes(s, sp_, tp, t))
        assert gl.ideal_g2(beam, gl.FourTimes(sp_, s, tp, t)) == base
        assert gl.ideal_g2(beam, gl.FourTimes(s, sp_, t, tp)) == base


def test_model_g1_normalization_and_monotonicity():
    m = build_model(20)
    coherence(m)
    assert gl.model_g1(m, 0.0) == 1.0
    ev = gl.G1Evaluator(m)
    s = np.linspace(0.0, 10.0 / m.linewidth, 60)
    vals = np.array([ev(x) for x in s])
    assert np.all(np.diff(vals) <= 1e-12)


def test_model_g1_symmetric_in_sign():
    m = build_model(8)
    assert gl.model_g1(m, -0.7) == gl.model_g1(m, 0.7)


def test_model_g1_dense_oracle_dim3():
    m = build_model(3)
    val = gl.model_g1(m, 0.5)
    L = so.build_liouvillian(m).matrix.toarray()
    Lm = loss_matrix(m)
    w = scipy.linalg.expm(0.5 * L) @ so.vec(Lm @ np.diag(m.steady))
    oracle = float(so.vec(Lm) @ w) / m.flux
    assert abs(val - oracle) <= 1e-10


def test_model_g2_coincident_times_dim3():
    m = build_model(3)
    val = gl.model_g2(m, gl.FourTimes(0.0, 0.0, 0.0, 0.0))
    assert val == pytest.approx(0.24, abs=1e-12)
    # direct dense value Tr[L^dag^2 L^2 rho]/N^2
    Lm = loss_matrix(m)
    oracle = np.trace(Lm.T @ Lm.T @ Lm @ Lm @ np.diag(m.steady)) / m.flux**2
    assert val == pytest.approx(oracle, abs=1e-13)


def test_model_g2_swap_and_conjugation_symmetries(model10):
    tau = gl.ideality_tau(model10)
    rng = np.random.default_rng(8)
    for _ in range(6):
        s, sp_, tp, t = rng.uniform(-tau, tau, size=4)
        base = gl.model_g2(model10, gl.FourTimes(s, sp_, tp, t))
        swap = gl.model_g2(model10, gl.FourTimes(sp_, s, t, tp))
        conj = gl.model_g2(model10, gl.FourTimes(t, tp, sp_, s))
        assert abs(base - swap) <= 1e-12 * max(1.0, abs(base))
        assert abs(base - conj) <= 1e-12 * max(1.0, abs(base))


@pytest.mark.parametrize("dim", [8, 12])
def test_model_g2_brute_force_equivalence(dim):
    m = build_model(dim)
    coherence(m)
    tau = gl.ideality_tau(m)
    rng = np.random.default_rng(dim)
    worst_val = worst_imag = 0.0
    for _ in range(50):
        ts = tuple(rng.uniform(-tau, tau, size=4))
        mine = gl.model_g2(m, gl.FourTimes(*ts))
        oracle = dense_g2_oracle(m, ts)
        worst_val = max(worst_val, abs(mine - oracle.real))
        worst_imag = max(worst_imag, abs(oracle.imag))
    assert worst_val <= 1e-9
    assert worst_imag <= 1e-10  # realness is structural


def test_batch_evaluator_matches_per_point(model10):
    tau = gl.ideality_tau(model10)
    ev = gl.G2Evaluator(model10)
    rng = np.random.default_rng(17)
    for _ in range(10):
        ft = gl.FourTimes(*rng.uniform(-tau, tau, size=4))
        assert abs(ev.g2(ft) - gl.model_g2(model10, ft)) <= 1e-11


def test_max_delta_g2_validation(model10):
    with pytest.raises(ValidationError):
        gl.max_delta_g2(model10, grid=4)
    with pytest.raises(ValidationError):
        gl.max_delta_g2(model10, grid=3)


def test_max_delta_g2_deterministic_and_dominates_corner(model10):
    t1, d1, c1 = gl.max_delta_g2(model10, grid=5)
    t2, d2, c2 = gl.max_delta_g2(model10, grid=5)
    assert d1 == d2 and c1 == c2 and t1 == t2  # bit-for-bit
    assert d1 >= c1


def test_max_delta_g2_refine_does_not_decrease(model10):
    _, d_grid, _ = gl.max_delta_g2(model10, grid=5, refine=False)
    _, d_ref, _ = gl.max_delta_g2(model10, grid=5, refine=True)
    assert d_ref >= d_grid - 1e-15


def test_ideality_tau_requires_linewidth():
    with pytest.raises(ValidationError):
        gl.ideality_tau(build_model(6))


def test_delta_g1_profile_zero_at_origin_and_scaling():
    m20 = build_model(20)
    m40 = build_model(40)
    *_, delta20, max20 = gl.delta_g1_profile(m20, points=101)
    *_, delta40, max40 = gl.delta_g1_profile(m40, points=101)
    assert delta20[0] == 0.0
    assert max20 / max40 >= 4.0  # deviation falls ~1/coherence (16x here)
