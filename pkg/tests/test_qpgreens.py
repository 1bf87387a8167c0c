"""Quasi-periodic kernel: oracle comparisons and structural identities.

The independent oracle is the raw modal double series

    G = sum_m sum_n e^{i p_m (x1-y1)} (e^{i 2n pi (x2-y2)} + e^{i 2n pi (x2+y2)})
        / (lam - p_m^2 - (2n pi)^2),

summed by brute force with very large cutoffs.  It converges only
algebraically, so oracle tolerances are looser than the identities the
fast routes must satisfy among themselves.
"""

import numpy as np
import pytest

from diracwg.errors import DomainError, KernelError
from diracwg.qpgreens import (
    LOG_COEFF,
    KernelParams,
    eval_Ge,
    eval_Ge_many,
    eval_Ge_split,
    ge_msum,
    ge_nsum,
    kernel_derivative,
)

P0, LAM0 = 1.3, 11.0


def brute_double_sum(x, y, p, lam, m_max=400, n_max=400):
    m = np.arange(-m_max, m_max + 1)
    n = np.arange(-n_max, n_max + 1)
    pm = p + 2 * np.pi * m
    u = x[0] - y[0]
    t1 = x[1] - y[1]
    t2 = x[1] + y[1]
    denom = lam - pm[:, None] ** 2 - (2 * np.pi * n[None, :]) ** 2
    trans = np.exp(2j * np.pi * n * t1) + np.exp(2j * np.pi * n * t2)
    return complex(np.sum(np.exp(1j * pm * u)[:, None] * trans[None, :] / denom))


def params(p=P0, lam=LAM0, **kw):
    return KernelParams(p=p, lam=lam, **kw)


# ---------------------------------------------------------------- oracles

def test_msum_matches_double_sum():
    x = np.array([0.13, 0.31])
    y = np.array([0.10, 0.12])
    oracle = brute_double_sum(x, y, P0, LAM0, m_max=600, n_max=600)
    fast = complex(ge_msum(x[0] - y[0], abs(x[1] - y[1]), x[1] + y[1], P0, LAM0, 60))
    assert abs(fast - oracle) < 5e-4 * abs(oracle)


def test_nsum_matches_msum_closely():
    # two exact resummations of the same series agree to near machine precision
    x = np.array([0.42, 0.31])
    y = np.array([0.10, 0.12])
    a = complex(ge_msum(x[0] - y[0], abs(x[1] - y[1]), x[1] + y[1], P0, LAM0, 220))
    b = complex(ge_nsum(x[0] - y[0], x[1] - y[1], x[1] + y[1], P0, LAM0))
    assert abs(a - b) < 1e-12 * abs(a)


def test_split_matches_nsum_in_overlap_zone():
    # |x-y| = 0.09 with enough axial offset that both routes apply
    x = np.array([0.064, 0.3135])
    y = np.array([0.0, 0.25])
    direct = complex(ge_nsum(x[0] - y[0], x[1] - y[1], x[1] + y[1], P0, LAM0))
    coeff, smooth = eval_Ge_split(x, y, params())
    recombined = smooth + coeff * np.log(np.linalg.norm(x - y))
    assert abs(recombined - direct) < 1e-9 * max(1.0, abs(direct))


def test_log_coeff_value():
    coeff, _ = eval_Ge_split([0.01, 0.26], [0.0, 0.25], params())
    assert coeff == LOG_COEFF
    assert abs(coeff - 1 / (2 * np.pi)) < 1e-15


def test_split_smooth_finite_at_tiny_separation():
    x = np.array([7e-9, 0.25 + 7e-9])
    y = np.array([0.0, 0.25])
    _, smooth = eval_Ge_split(x, y, params())
    assert np.isfinite(smooth.real) and np.isfinite(smooth.imag)
    # against a nearby separation, the smooth part moves only slightly
    _, smooth2 = eval_Ge_split([1e-4, 0.25 + 1e-4], y, params())
    assert abs(smooth - smooth2) < 1e-2 * max(1.0, abs(smooth2))


def test_split_rejects_far_points():
    with pytest.raises(DomainError):
        eval_Ge_split([0.3, 0.3], [0.0, 0.25], params())


# ----------------------------------------------------- structural identities

def test_quasi_periodicity():
    rng = np.random.default_rng(3)
    pts_x = np.column_stack([rng.uniform(-0.4, 0.4, 20), rng.uniform(0.05, 0.45, 20)])
    pts_y = np.column_stack([rng.uniform(-0.4, 0.4, 20), rng.uniform(0.05, 0.45, 20)])
    prm = params()
    base = eval_Ge_many(pts_x, pts_y, prm)
    shifted = eval_Ge_many(pts_x + np.array([1.0, 0.0]), pts_y, prm)
    assert np.max(np.abs(shifted - np.exp(1j * P0) * base)) < 1e-12 * np.max(np.abs(base))


def test_conjugation_about_pi():
    h = 0.37
    lam = 12.3
    x = np.array([0.21, 0.30])
    y = np.array([0.55, 0.17])
    a = eval_Ge(x, y, params(p=np.pi + h, lam=lam))
    b = eval_Ge(x, y, params(p=np.pi - h, lam=lam))
    assert abs(a - np.conj(b)) < 1e-12 * abs(a)


def test_reciprocity_with_momentum_reversal():
    x = np.array([0.21, 0.30])
    y = np.array([0.55, 0.17])
    a = eval_Ge(x, y, params(p=0.9))
    b = eval_Ge(y, x, params(p=2 * np.pi - 0.9))
    assert abs(a - b) < 1e-12 * abs(a)


def test_conjugate_transpose_identity():
    x = np.array([0.21, 0.30])
    y = np.array([0.55, 0.17])
    a = eval_Ge(x, y, params(p=np.pi + 0.2, lam=13.0))
    b = eval_Ge(y, x, params(p=np.pi + 0.2, lam=13.0))
    assert abs(a - np.conj(b)) < 1e-12 * abs(a)


def test_wall_neumann_condition():
    # d/dx2 at the bottom wall vanishes
    prm = params()
    y = np.array([0.4, 0.2])
    h = 1e-5
    up = eval_Ge([0.1, h], y, prm)
    dn = eval_Ge([0.1, 0.0], y, prm)
    d2 = eval_Ge([0.1, 2 * h], y, prm)
    deriv = (-3 * dn + 4 * up - d2) / (2 * h)
    assert abs(deriv) < 1e-8


def test_helmholtz_residual_interior():
    prm = params()
    y = np.array([0.43, 0.21])
    x0 = np.array([0.12, 0.3])
    h = 1e-4
    c = eval_Ge(x0, y, prm)
    xp = eval_Ge(x0 + [h, 0], y, prm)
    xm = eval_Ge(x0 - [h, 0], y, prm)
    yp = eval_Ge(x0 + [0, h], y, prm)
    ym = eval_Ge(x0 - [0, h], y, prm)
    resid = (xp + xm + yp + ym - 4 * c) / h**2 + LAM0 * c
    assert abs(resid) < 1e-4 * max(1.0, abs(c))


def test_msum_truncation_convergence_exponential():
    u, t1, t2 = 0.01, 0.12, 0.52
    ref = complex(ge_msum(u, t1, t2, P0, LAM0, 400))
    errs = [abs(complex(ge_msum(u, t1, t2, P0, LAM0, m)) - ref) for m in (16, 20, 24, 28)]
    for e0, e1 in zip(errs, errs[1:]):
        assert e1 / e0 < 0.5


def test_router_insensitive_to_m_trunc_for_separated_points():
    x = np.array([0.30, 0.25])
    y = np.array([0.25, 0.25])  # |x1-y1| = 0.05, same height
    a = eval_Ge(x, y, params(m_trunc=16))
    b = eval_Ge(x, y, params(m_trunc=32))
    assert abs(a - b) < 1e-10


def test_derivative_richardson_consistency():
    x = np.array([0.21, 0.30])
    y = np.array([0.55, 0.17])
    prm = params()
    d1 = kernel_derivative("dLambda", x, y, prm, 1e-4)
    d2 = kernel_derivative("dLambda", x, y, prm, 5e-5)
    assert abs(d1 - d2) / abs(d2) < 1e-4


def test_dp_derivative_real_part_even_at_pi():
    # Re G is even in p about pi, so its p-derivative vanishes there
    x = np.array([0.21, 0.30])
    y = np.array([0.55, 0.17])
    d = kernel_derivative("dP", x, y, params(p=np.pi, lam=12.3), 1e-4)
    assert abs(d.real) < 1e-6 * max(1.0, abs(d))


def test_dlambda_of_lambda_independent_combination_is_zero():
    # sanity of the differencing path itself: difference two kernels at the
    # same lambda and differentiate; exact zero
    x = np.array([0.21, 0.30])
    y = np.array([0.55, 0.17])
    prm = params()
    d = kernel_derivative("dLambda", x, y, prm, 1e-4) - kernel_derivative(
        "dLambda", x, y, prm, 1e-4
    )
    assert d == 0


def test_guard_rejects_singular_lambda():
    with pytest.raises(KernelError):
        eval_Ge([0.1, 0.3], [0.4, 0.2], params(p=1.0, lam=1.0 + 1e-9))


def test_coincident_points_rejected():
    with pytest.raises(DomainError):
        eval_Ge([0.1, 0.3], [0.1, 0.3], params())


def test_kernel_real_at_pi():
    val = eval_Ge([0.21, 0.30], [0.55, 0.17], params(p=np.pi, lam=12.3))
    assert abs(val.imag) < 1e-12 * abs(val.real)
