import math

import numpy as np
import pytest
import scipy.optimize
import scipy.special

from lasercoh import bounds as bd
from lasercoh.errors import NumericalError, ValidationError


def test_airy_zero_value():
    za = bd.airy_zero()
    assert abs(za - (-2.33811)) <= 1e-5
    assert abs(bd.airy_series(za)) <= 1e-10
    # independent special-function oracle
    assert abs(za - scipy.special.ai_zeros(1)[0][0]) <= 1e-9


def test_airy_series_against_scipy():
    for z in np.linspace(-3.5, 3.5, 29):
        assert abs(bd.airy_series(z) - scipy.special.airy(z)[0]) <= 1e-12


def test_airy_series_radius_guard():
    with pytest.raises(ValidationError):
        bd.airy_series(4.5)


def test_derived_constants():
    assert abs(bd.phase_mse_constant() - 1.8936) <= 1e-3
    assert abs(bd.heisenberg_coefficient() - 2.9748) <= 1e-3


def test_heisenberg_and_sql_bounds():
    assert abs(bd.heisenberg_bound(10.0) - 29748.0) <= 10.0
    assert bd.heisenberg_bound(1.0) == pytest.approx(2.9748, abs=1e-3)
    assert bd.sql_bound(10.0) == 1600.0
    assert bd.sql_bound(1.0) == 16.0
    # ratio law: heisenberg/sql grows as mu^2
    r = [bd.heisenberg_bound(mu) / bd.sql_bound(mu) for mu in (3.0, 6.0, 12.0)]
    assert r[1] / r[0] == pytest.approx(4.0, rel=1e-12)
    assert r[2] / r[1] == pytest.approx(4.0, rel=1e-12)
    with pytest.raises(ValidationError):
        bd.heisenberg_bound(0.0)


def test_bound_chain_saturation_and_violation():
    sat = bd.bound_chain(10.0, bd.heisenberg_bound(10.0))
    assert sat["satisfied"]
    assert abs(sat["slack"] - 1.0) <= 1e-10
    assert abs(sat["lhs"] - sat["rhs"]) <= 1e-10 * sat["rhs"]
    bad = bd.bound_chain(10.0, 10.0 * bd.heisenberg_bound(10.0))
    assert not bad["satisfied"]
    assert bad["slack"] == pytest.approx(0.1, rel=1e-12)
    assert set(sat) == {"mu", "coherence", "lhs", "rhs", "slack", "satisfied"}


# ---------------------------------------------------------------------------
# heterodyne MSE
# ---------------------------------------------------------------------------

def test_setup_validation():
    with pytest.raises(ValidationError):
        bd.HeterodyneSetup(flux=1.0, linewidth=1.0, tau=1.0, sigma=2.0)
    with pytest.raises(ValidationError):
        bd.HeterodyneSetup.from_sigma(1.0, -1.0, 1.0)


def test_msse_exact_asymptotic_value():
    setup = bd.HeterodyneSetup.from_sigma(1.0, 4e-4, math.sqrt(1.5))
    target = 2.0 * math.sqrt(2.0 * 4e-4 / 3.0)
    assert abs(bd.msse_exact(setup) - target) <= 0.02 * target


@pytest.mark.parametrize("ratio", [1e-4, 1e-6])
def test_msse_leading_form(ratio):
    sigma = 1.0
    setup = bd.HeterodyneSetup.from_sigma(1.0, ratio, sigma)
    lead = (1.0 / sigma + 2.0 * sigma / 3.0) * math.sqrt(ratio)
    assert abs(bd.msse_exact(setup) - lead) <= 2.0 * ratio  # O(l/N) remainder


def test_msse_leading_residual_scales_linearly():
    sigma = math.sqrt(1.5)
    def residual(ratio):
        setup = bd.HeterodyneSetup.from_sigma(1.0, ratio, sigma)
        lead = (1.0 / sigma + 2.0 * sigma / 3.0) * math.sqrt(ratio)
        return bd.msse_exact(setup) - lead
    r = residual(1e-4) / residual(1e-6)
    assert 80.0 <= r <= 120.0  # Richardson: first-order remainder


def test_series_branch_matches_direct_form_at_switch():
    for x in (bd.SERIES_SWITCH, 0.5 * bd.SERIES_SWITCH):
        shot_series = bd._poly(bd._S1_COEFFS, x)
        shot_direct = 4.0 * (x + 2.0 * math.expm1(-0.5 * x)) / x**2
        assert abs(shot_series - shot_direct) <= 1e-10 * abs(shot_direct)
        f2 = x + math.expm1(0.5 * x) * (x - 2.0)
        f3 = math.expm1(0.5 * x)
        g = 2.0 * math.exp(0.5 * x) + 3.0 * math.exp(x) + 1.0
        h_direct = (8.0 * math.exp(-x) * f2**2
                    - (2.0 / 9.0) * math.exp(-4.0 * x) * f3**4 * g**2) / x**4
        assert abs(bd._poly(bd._H_COEFFS, x) - h_direct) <= 1e-7 * abs(h_direct)


def test_msse_quadrature_matches_exact():
    setup = bd.HeterodyneSetup.from_tau(1.0, 0.1, 1.0)  # ell*tau = 0.1
    assert abs(bd.msse_quadrature(setup) - bd.msse_exact(setup)) \
        <= 1e-4 * bd.msse_exact(setup)


def test_msse_quadrature_grid():
    worst = 0.0
    for x in np.geomspace(1e-2, 1.0, 5):
        for flux in np.linspace(0.5, 2.0, 5):
            setup = bd.HeterodyneSetup.from_tau(flux, 4e-4, x / 4e-4)
            e = bd.msse_exact(setup)
            worst = max(worst, abs(bd.msse_quadrature(setup) - e) / e)
    assert worst <= 1e-4


def test_quadrature_factorization_against_bruteforce():
    for ltau in (0.1, 1.0):
        fast = bd._quad_pieces(ltau, 1.0, 12)
        slow = bd._quad_pieces_bruteforce(ltau, 1.0, 12)
        for a, b in zip(fast, slow):
            assert abs(a - b) <= 1e-12 * abs(b)


def test_msse_quadrature_order_guard():
    with pytest.raises(ValidationError):
        bd.msse_quadrature(bd.HeterodyneSetup.from_tau(1.0, 0.1, 1.0), order=4)


def test_msse_shot_noise_dominates_at_small_tau():
    # within the N*tau >> 1 regime the 1/(N tau) term dominates as tau falls
    setup = bd.HeterodyneSetup.from_tau(1.0, 1e-8, 1e3)
    v = bd.msse_exact(setup)
    shot = 1.0 / (1.0 * 1e3)
    assert abs(v - shot) <= 0.02 * shot


def test_msse_sigma_argmin():
    def objective(sigma):
        return bd.msse_quadrature(
            bd.HeterodyneSetup.from_sigma(1.0, 1e-8, sigma))
    res = scipy.optimize.minimize_scalar(objective, bounds=(0.5, 3.0),
                                         method="bounded",
                                         options={"xatol": 1e-7})
    assert abs(res.x - math.sqrt(1.5)) <= 1e-3


# ---------------------------------------------------------------------------
# G-asymmetry
# ---------------------------------------------------------------------------

def test_g_asymmetry_half_log_slope():
    nbars = [1e2, 1e3, 1e4]
    vals = [bd.g_asymmetry(n) for n in nbars]
    design = np.column_stack([np.ones(3), np.log(nbars)])
    beta, *_ = np.linalg.lstsq(design, np.array(vals), rcond=None)
    assert abs(beta[1] - 0.5) <= 0.01


def test_g_asymmetry_doubling_consequence():
    delta = bd.g_asymmetry(400) - bd.g_asymmetry(100)
    assert abs(delta - 0.5 * math.log(4.0)) <= 0.02 * 0.5 * math.log(4.0)


def test_g_asymmetry_monotone_and_limits():
    vals = [bd.g_asymmetry(n) for n in (0, 1e-6, 1.0, 10.0, 100.0)]
    assert vals[0] == 0.0
    assert vals[1] <= 1e-5
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_g_asymmetry_cutoff_guards():
    with pytest.raises(ValidationError):
        bd.g_asymmetry(100.0, cutoff=1000)   # < 50*nbar
    with pytest.raises(ValidationError):
        bd.g_asymmetry(-1.0)
    total, tail = bd.g_asymmetry(50.0, return_tail_bound=True)
    assert 0.0 < tail <= 1e-6


def test_binomial_entropy_asymptotic_holdout():
    # the fitted tail corrections reproduce exact values outside the fit range
    table = bd._binom_entropy_table()
    c1, c2 = bd._entropy_asym_corrections()
    for j in (1200, 1500, 1900):
        asym = 0.5 * math.log(0.5 * math.pi * math.e * j) + c1 / j + c2 / j**2
        assert abs(table[j] - asym) <= 1e-8
    # and the crude upper bound used by the tail estimate really is an upper bound
    j = np.arange(1, bd._J_EXACT + 1)
    bound = 0.5 * np.log(0.5 * math.pi * math.e * (j + 1)) + 1.0
    assert np.all(table[1:] <= bound)
