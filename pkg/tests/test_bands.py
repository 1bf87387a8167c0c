"""Dispersion curves, the crossing, gap intervals."""

import numpy as np
import pytest

from diracwg.bands import (
    GapInterval,
    band_slope_at_crossing,
    dirac_point,
    find_band_lambda,
    gap_interval,
    trace_band,
    trace_folded_bands,
)
from diracwg.errors import NoBandError, StructureViolationError
from diracwg.fdoracle import FDGrid, fd_band_chart_richardson, fd_bloch_eigs
from diracwg.geometry import make_disk
from diracwg.qpgreens import KernelParams


def test_dirac_point_location(shape, params, fd_reference):
    lam_fd = fd_reference["crossing"][0]
    p_star, lam_star = dirac_point((lam_fd - 1.0, lam_fd + 1.0), shape, params)
    assert p_star == np.pi
    # FD reference at nx=96 carries its own h^2 error; 5e-3 relative bound
    assert abs(lam_star - lam_fd) < 5e-3 * lam_star


def test_band_symmetry_under_momentum_reversal(shape, params, fd_reference):
    p = np.pi / 3
    seed = np.interp(p, fd_reference["chart0"][:, 0], fd_reference["chart0"][:, 1])
    lam1, _ = find_band_lambda(p, (seed - 0.4, seed + 0.4), 0.0, shape, params, branch=+1)
    lam2, _ = find_band_lambda(2 * np.pi - p, (seed - 0.4, seed + 0.4), 0.0,
                               shape, params, branch=-1)
    assert abs(lam1 - lam2) < 1e-7


def test_small_obstacle_band_against_oracle():
    # The vanishing-obstacle limit is logarithmic in 2D (point scatterers
    # carry log capacity): at r = 0.01 the first curve sits an order of
    # magnitude above the empty parabola p^2, so the small-obstacle check
    # is against the finite-difference oracle, not the empty-strip value.
    shape = make_disk(0.01, 32)
    prm = KernelParams(p=1.0, lam=10.0, m_trunc=32)
    lam, _ = find_band_lambda(1.0, (10.0, 10.8), 0.0, shape, prm, branch=+1)
    lam_fd = 10.39781  # Richardson-extrapolated oracle, nx = 640/960
    assert abs(lam - lam_fd) < 5e-3 * lam


def test_fd_cross_check_at_half_pi(shape, params):
    chart = fd_band_chart_richardson(np.array([np.pi / 2]), 0.0, 2, FDGrid(64), shape)
    lam_fd = chart[0, 1]
    lam, _ = find_band_lambda(np.pi / 2, (lam_fd - 0.3, lam_fd + 0.3), 0.0, shape, params)
    assert abs(lam - lam_fd) < 5e-3 * lam


def test_folded_bands_cross_at_pi(shape, params, dirac_data):
    p_grid = np.array([np.pi - 0.1, np.pi, np.pi + 0.1])
    c1, c2 = trace_folded_bands(p_grid, shape, params, dirac_data.lambda_star)
    i = 1
    assert abs(c1.lambdas[i] - c2.lambdas[i]) < 1e-6 * dirac_data.lambda_star
    # away from the crossing the curves separate linearly
    assert c2.lambdas[0] - c1.lambdas[0] > 0.5


def test_dimerized_gap_opens(shape, params, dirac_data):
    delta = 0.01
    p_grid = np.pi + np.linspace(-0.3, 0.3, 7)
    half = abs(delta * dirac_data.beta_star)
    c1 = trace_band(1, p_grid, delta, shape, params,
                    seed_lambda=dirac_data.lambda_star - half)
    c2 = trace_band(2, p_grid, delta, shape, params,
                    seed_lambda=dirac_data.lambda_star + half)
    assert np.min(c2.lambdas) - np.max(c1.lambdas) > 0
    # the two dimerization signs share the band functions
    c1m = trace_band(1, p_grid, -delta, shape, params,
                     seed_lambda=dirac_data.lambda_star - half)
    assert np.max(np.abs(c1.lambdas - c1m.lambdas)) < 1e-6


def test_band_slopes_match_alpha(shape, params, dirac_data):
    slope = band_slope_at_crossing(shape, params, dirac_data.lambda_star)
    assert abs(slope - dirac_data.alpha_star) < 0.02 * dirac_data.alpha_star


def test_gap_interval_width(dirac_data):
    gap = gap_interval(dirac_data, 0.01, c=0.9)
    expected = 2 * 0.9 * 0.01 * abs(dirac_data.beta_star)
    assert abs(gap.width - expected) < 1e-12 * expected
    assert gap.e1 < dirac_data.lambda_star < gap.e2


def test_gap_interval_degenerate_cases(dirac_data):
    with pytest.raises(StructureViolationError):
        gap_interval(dirac_data, 0.0, c=0.9)
    with pytest.raises(StructureViolationError):
        gap_interval(dirac_data, 0.01, c=1.5)

    class Fake:
        lambda_star = dirac_data.lambda_star
        beta_star = 0.0

    with pytest.raises(StructureViolationError):
        gap_interval(Fake(), 0.01, c=0.9)


def test_no_band_in_empty_bracket(shape, params):
    with pytest.raises(NoBandError):
        find_band_lambda(1.0, (44.0, 45.0), 0.0, shape, params)


def test_interval_free_of_bands_fd_screen(shape, dirac_data):
    # 200-point screening that no +-delta dispersion point enters the
    # certified interval; the FD chart (h^2-extrapolated) is accurate to a
    # few 1e-3, far below the interval clearance (1-c) * half-gap ~ 0.4
    delta = 0.01
    gap = gap_interval(dirac_data, delta, c=0.9)
    p_screen = np.linspace(0.0, np.pi, 100)  # mirror symmetry covers the rest
    chart = fd_band_chart_richardson(p_screen, delta, 2, FDGrid(64), shape)
    lams = chart[:, 1:3].ravel()
    assert not np.any((lams > gap.e1) & (lams < gap.e2))


def test_nystrom_band_convergence(params):
    # quadrature-limited agreement between N and 2N with a long kernel head
    prm = KernelParams(p=np.pi, lam=52.0, m_trunc=1024)
    vals = {}
    for n in (64, 128):
        sh = make_disk(0.1, n)
        vals[n], _ = find_band_lambda(1.0, (46.8, 47.3), 0.0, sh, prm)
    assert abs(vals[64] - vals[128]) < 1e-7
