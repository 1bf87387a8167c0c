"""Finite-difference reference solver."""

import numpy as np
import pytest

from diracwg.errors import OracleError
from diracwg.fdoracle import (
    FDGrid,
    fd_bloch_eigs,
    fd_band_chart_richardson,
    fd_supercell_interface,
    mode_decay_rate,
)
from diracwg.geometry import make_disk


def test_empty_strip_first_eigenvalue():
    vals = fd_bloch_eigs(1.0, 0.0, 3, FDGrid(64), None)
    assert abs(vals[0] - 1.0) < 5e-4  # p^2 with O(h^2) error


def test_momentum_reversal_symmetry(shape):
    a = fd_bloch_eigs(np.pi / 3, 0.0, 2, FDGrid(64), shape)
    b = fd_bloch_eigs(2 * np.pi - np.pi / 3, 0.0, 2, FDGrid(64), shape)
    assert np.max(np.abs(a - b)) < 1e-8


def test_h2_convergence_order(shape):
    # edge-corrected stencils: eigenvalue error ~ C h^2
    lams = {}
    for nx in (48, 96, 192):
        lams[nx] = fd_bloch_eigs(np.pi, 0.0, 1, FDGrid(nx), shape)[0]
    rate = np.log2(abs(lams[48] - lams[96]) / abs(lams[96] - lams[192]))
    assert 1.7 < rate < 2.3


def test_grid_must_resolve_obstacle(shape):
    with pytest.raises(OracleError):
        fd_bloch_eigs(1.0, 0.0, 1, FDGrid(32), shape)


def test_supercell_unique_in_gap(shape, interface_result, fd_supercell):
    e1, e2 = interface_result.gap
    in_gap = fd_supercell[96]["in_gap"]
    assert len(in_gap) == 1


def test_supercell_truncation_insensitive(shape, interface_result):
    center = 0.5 * sum(interface_result.gap)
    lam8, _, _, _ = fd_supercell_interface(0.01, 8, FDGrid(64), shape, center)
    lam16, _, _, _ = fd_supercell_interface(0.01, 16, FDGrid(64), shape, center)
    assert abs(lam16 - lam8) < 1e-4 * lam8


def test_supercell_mode_profile_symmetry(shape, interface_result):
    center = 0.5 * sum(interface_result.gap)
    _, _, mode, meta = fd_supercell_interface(0.01, 8, FDGrid(96), shape, center)
    X = meta["X"]
    col = np.max(np.abs(mode), axis=1)
    # per-cell envelope, compared between the two halves; the joint differs
    # from its mirror by the O(delta) lattice offset
    left, right = [], []
    for k in range(1, 4):
        sel_r = (X[:, 0] >= k) & (X[:, 0] < k + 1)
        sel_l = (X[:, 0] <= -k) & (X[:, 0] > -(k + 1))
        right.append(np.max(col[sel_r]))
        left.append(np.max(col[sel_l]))
    dev = np.max(np.abs(np.array(left) - np.array(right)) / np.array(right))
    assert dev < 0.05


def test_band_chart_richardson_consistency(shape):
    chart = fd_band_chart_richardson(np.array([np.pi]), 0.0, 2, FDGrid(64), shape)
    # the two folded curves are exactly degenerate at the fold momentum
    assert abs(chart[0, 1] - chart[0, 2]) < 1e-6 * chart[0, 1]
