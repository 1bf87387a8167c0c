"""Dispersion curves, the degenerate crossing, and gap intervals.

Characteristic values of the block operator are located by minimizing
the smallest weighted singular value over the spectral parameter:
determinants of the dense complex systems under/overflow, while
sigma_min is scale-stable and dips linearly through every band point.
The minimizer is a coarse bracket scan followed by successive parabolic
interpolation on sigma^2 (the square is smooth through the dip).

For the undimerized structure the half-cell translation symmetry splits
the problem into two branches (see layerops.assemble_half); each branch
carries one smooth band through the crossing at p = pi, and the folded
bands are their pointwise min/max.  The dimerized curves are traced on
the full operator with continuation in p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousBracketError,
    AssemblyError,
    NoBandError,
    StructureViolationError,
)
from .geometry import ObstacleShape
from .layerops import assemble_T, assemble_half, weighted_svd
from .qpgreens import KernelParams

# Certified band point: sigma_min below this factor x sigma_max.  Measured
# dip floors sit at 1e-9..2e-9 absolute against sigma_max ~ 0.1-0.23 (ratios
# 1e-8..2e-8, insensitive to the kernel head length and node count), so the
# factor carries margin above the floor while still pinning the dispersion
# point to ~1e-6 through the local sigma slope.
SIGMA_CERT_FACTOR = 3e-8
DIRAC_PAIR_FACTOR = 1e-5      # double kernel: two smallest below this x sigma_max
# Kernel-dimension guard: the third singular value must stay well above the
# pair.  For the radius-0.1 disk the measured ratio sigma_3/sigma_max is
# 6.8e-3 (the operator norm is inflated by the empty-guide dispersion sheet
# 3.3 below the crossing energy), so the guard sits at 2e-3; the acceptance
# suite reports the ratio itself.
DIRAC_THIRD_FACTOR = 2e-3


@dataclass
class DispersionCurve:
    band_index: int
    p_grid: np.ndarray
    lambdas: np.ndarray
    sigma_mins: np.ndarray
    delta: float

    def __post_init__(self):
        if np.any(self.lambdas <= 0):
            raise AssemblyError("dispersion values must be positive")


@dataclass(frozen=True)
class GapInterval:
    e1: float
    e2: float
    delta: float
    c: float

    @property
    def width(self) -> float:
        return self.e2 - self.e1

    @property
    def center(self) -> float:
        return 0.5 * (self.e1 + self.e2)

    def contains(self, lam: float, margin: float = 0.0) -> bool:
        pad = margin * self.width
        return self.e1 + pad < lam < self.e2 - pad


def _sigma_profile(p, lam, delta, shape, params, branch, want_vector=False):
    """Ascending singular values, sigma_max, and optionally the null density."""
    if branch is None:
        T = assemble_T(p, lam, delta, shape, params)
        _, s, vh = weighted_svd(T.entries, T.weights)
        weights = T.weights
    else:
        A, weights = assemble_half(p, lam, branch, shape, params)
        _, s, vh = weighted_svd(A, weights)
    vec = None
    if want_vector:
        vec = np.conj(vh[-1]) / np.sqrt(weights)
        vec /= np.sqrt(np.sum(weights * np.abs(vec) ** 2))
    return s[::-1], s[0], vec


def _parabola_vertex(xs, ys):
    x1, x2, x3 = xs
    y1, y2, y3 = ys
    denom = (x1 - x2) * (x1 - x3) * (x2 - x3)
    a = (x3 * (y2 - y1) + x2 * (y1 - y3) + x1 * (y3 - y2)) / denom
    b = (x3**2 * (y1 - y2) + x2**2 * (y3 - y1) + x1**2 * (y2 - y3)) / denom
    if a <= 0:
        return None
    return -b / (2 * a)


def find_band_lambda(
    p: float,
    bracket: tuple[float, float],
    delta: float,
    shape: ObstacleShape,
    params: KernelParams,
    branch: int | None = None,
    order: int = 1,
    n_scan: int = 13,
    certify: float = SIGMA_CERT_FACTOR,
    max_refine: int = 12,
    return_vector: bool = False,
    pick_nearest: float | None = None,
):
    """Locate the unique dispersion point inside ``bracket`` at fixed p.

    ``order`` selects which ascending singular value is minimized (2 for
    a doubly degenerate point).  Returns (lambda, sigma_profile) where
    sigma_profile holds the three smallest singular values and sigma_max
    at the root.  Raises NoBandError / AmbiguousBracketError when the
    bracket holds no dip or more than one.
    """
    lo, hi = bracket
    if not lo < hi:
        raise NoBandError(f"empty bracket {bracket}")
    lams = np.linspace(lo, hi, n_scan)
    sig = np.empty(n_scan)
    smax = 0.0
    for i, lam in enumerate(lams):
        s, sm, _ = _sigma_profile(p, lam, delta, shape, params, branch)
        sig[i] = s[order - 1]
        smax = max(smax, sm)

    dip_level = 0.5 * np.median(sig)
    dips = [
        i
        for i in range(1, n_scan - 1)
        if sig[i] <= sig[i - 1] and sig[i] <= sig[i + 1] and sig[i] < dip_level
    ]
    if not dips:
        raise NoBandError(
            f"no sigma dip in bracket {bracket} at p={p:.4f} (min sigma {sig.min():.2e})"
        )
    if len(dips) > 1:
        if pick_nearest is None:
            raise AmbiguousBracketError(
                f"{len(dips)} sigma dips in bracket {bracket} at p={p:.4f}"
            )
        dips = [min(dips, key=lambda i: abs(lams[i] - pick_nearest))]

    i = dips[0]
    xs = [lams[i - 1], lams[i], lams[i + 1]]
    ys = [sig[i - 1] ** 2, sig[i] ** 2, sig[i + 1] ** 2]
    best_lam, best_prof, best_vec = lams[i], None, None
    for _ in range(max_refine):
        v = _parabola_vertex(xs, ys)
        if v is None or not (min(xs) - (xs[2] - xs[0]) <= v <= max(xs) + (xs[2] - xs[0])):
            # safeguard: bisect the widest flank
            v = 0.5 * (xs[0] + xs[1]) if ys[0] > ys[2] else 0.5 * (xs[1] + xs[2])
        s, sm, vec = _sigma_profile(p, v, delta, shape, params, branch,
                                    want_vector=return_vector)
        pts = sorted(zip(xs + [v], ys + [s[order - 1] ** 2]), key=lambda t: t[1])[:3]
        pts = sorted(pts, key=lambda t: t[0])
        moved = abs(v - best_lam)
        if s[order - 1] ** 2 <= min(ys):
            best_lam, best_prof, best_vec = v, (s[:3], sm), vec
        xs = [t[0] for t in pts]
        ys = [t[1] for t in pts]
        if moved < 1e-10 * max(1.0, abs(v)):
            break
    if best_prof is None:
        s, sm, best_vec = _sigma_profile(p, best_lam, delta, shape, params, branch,
                                         want_vector=return_vector)
        best_prof = (s[:3], sm)

    sigs, sm = best_prof
    if sigs[order - 1] > certify * sm:
        raise NoBandError(
            f"dip at p={p:.4f}, lambda={best_lam:.6f} not certified: "
            f"sigma={sigs[order - 1]:.3e} vs {certify:.1e} x sigma_max={certify * sm:.3e}"
        )
    if return_vector:
        return best_lam, best_prof, best_vec
    return best_lam, best_prof


def trace_branch(
    p_grid: np.ndarray,
    branch: int,
    shape: ObstacleShape,
    params: KernelParams,
    seed: tuple[float, float],
    seed_halfwidth: float = 0.6,
):
    """Continuation trace of one undimerized half-cell band branch.

    ``seed`` = (p0, lambda0) must lie on the branch near the first grid
    point; later points use quadratic prediction with shrinking brackets.
    Returns (lambdas, sigma_mins).
    """
    order = np.argsort(np.abs(p_grid - seed[0]))
    lams = np.full(len(p_grid), np.nan)
    sigs = np.full(len(p_grid), np.nan)
    known: list[tuple[float, float]] = []
    for idx in order:
        p = p_grid[idx]
        center, width = _predict_bracket(known, p, seed[1], seed_halfwidth)
        lam, (prof, smax) = _find_with_shrink(
            p, center, width, 0.0, shape, params, branch=branch
        )
        lams[idx] = lam
        sigs[idx] = prof[0]
        known.append((p, lam))
    return lams, sigs


def _predict_bracket(known, p, seed_lambda, seed_halfwidth):
    """Continuation predictor: center and half-width from nearby points."""
    if not known:
        return seed_lambda, seed_halfwidth
    near = sorted(known, key=lambda t: abs(t[0] - p))[:3]
    ps = np.array([t[0] for t in near])
    ls = np.array([t[1] for t in near])
    if len(near) == 1:
        return float(ls[0]), max(0.5, seed_halfwidth / 2)
    deg = min(len(near) - 1, 2)
    center = float(np.polyval(np.polyfit(ps, ls, deg), p))
    slope = abs((ls[1] - ls[0]) / (ps[1] - ps[0]))
    width = float(np.clip(4 * slope * abs(p - ps[0]) + 0.06, 0.12, 1.2))
    return center, width


def _find_with_shrink(p, center, width, delta, shape, params, branch=None):
    """find_band_lambda with continuation-aware retries.

    A wide bracket may capture a neighboring curve (resolved toward the
    predicted center); an off-center prediction may miss the dip
    entirely (resolved by widening).
    """
    last = None
    for w in (width, 2.5 * width, 6 * width):
        try:
            return find_band_lambda(
                p, (center - w, center + w), delta, shape, params,
                branch=branch, pick_nearest=center,
            )
        except NoBandError as exc:
            last = exc
    raise last


def trace_folded_bands(
    p_grid: np.ndarray,
    shape: ObstacleShape,
    params: KernelParams,
    dirac_lambda: float,
):
    """Both folded bands of the undimerized structure on ``p_grid``.

    Branch traces are seeded at p = pi where they meet the crossing;
    folding takes the pointwise min/max.  Returns (curve1, curve2).
    """
    mu = {}
    sg = {}
    for branch in (+1, -1):
        mu[branch], sg[branch] = trace_branch(
            p_grid, branch, shape, params, seed=(np.pi, dirac_lambda), seed_halfwidth=0.4
        )
    lam1 = np.minimum(mu[+1], mu[-1])
    lam2 = np.maximum(mu[+1], mu[-1])
    pick1 = np.where(mu[+1] <= mu[-1], sg[+1], sg[-1])
    pick2 = np.where(mu[+1] <= mu[-1], sg[-1], sg[+1])
    c1 = DispersionCurve(1, p_grid.copy(), lam1, pick1, 0.0)
    c2 = DispersionCurve(2, p_grid.copy(), lam2, pick2, 0.0)
    return c1, c2


def trace_band(
    band_index: int,
    p_grid: np.ndarray,
    delta: float,
    shape: ObstacleShape,
    params: KernelParams,
    seed_lambda: float,
    seed_halfwidth: float = 0.8,
) -> DispersionCurve:
    """Continuation trace of one dimerized band (gap open, no crossing).

    ``seed_lambda`` brackets the band at the grid point nearest pi (the
    band extremum); prediction brackets the rest.
    """
    p_grid = np.asarray(p_grid, dtype=float)
    order = np.argsort(np.abs(p_grid - np.pi))
    lams = np.full(len(p_grid), np.nan)
    sigs = np.full(len(p_grid), np.nan)
    known: list[tuple[float, float]] = []
    for idx in order:
        p = p_grid[idx]
        center, width = _predict_bracket(known, p, seed_lambda, seed_halfwidth)
        lam, (prof, smax) = _find_with_shrink(p, center, width, delta, shape, params)
        lams[idx] = lam
        sigs[idx] = prof[0]
        known.append((p, lam))
    return DispersionCurve(band_index, p_grid, lams, sigs, delta)


def dirac_point(
    search_window: tuple[float, float],
    shape: ObstacleShape,
    params: KernelParams,
    n_scan: int = 25,
):
    """The degenerate crossing of the first two folded bands.

    The axial fold pins the crossing momentum at p = pi exactly; the
    energy is located as the unique lambda in the window where the two
    smallest singular values dip together.  Certifies the two-dimensional
    kernel (two values below DIRAC_PAIR_FACTOR x sigma_max, third above
    DIRAC_THIRD_FACTOR x sigma_max).  Returns (p_star, lambda_star).
    """
    p_star = np.pi
    lam, (sigs, smax) = find_band_lambda(
        p_star, search_window, 0.0, shape, params,
        order=2, n_scan=n_scan, certify=DIRAC_PAIR_FACTOR,
    )
    if sigs[0] > DIRAC_PAIR_FACTOR * smax or sigs[1] > DIRAC_PAIR_FACTOR * smax:
        raise StructureViolationError(
            f"crossing at lambda={lam:.6f} lacks a double kernel: sigmas {sigs}"
        )
    if sigs[2] < DIRAC_THIRD_FACTOR * smax:
        raise StructureViolationError(
            f"third singular value {sigs[2]:.3e} too small at the crossing; "
            "kernel dimension exceeds two"
        )
    return p_star, lam


def band_slope_at_crossing(
    shape: ObstacleShape,
    params: KernelParams,
    dirac_lambda: float,
    dp: float = 0.04,
) -> float:
    """|d mu / d p| of the smooth half-cell branch at p = pi.

    The branch passes smoothly through the crossing, so a central
    difference across pi is second order.
    """
    lam_hi, _ = find_band_lambda(
        np.pi + dp, (dirac_lambda - 1.0, dirac_lambda + 1.0), 0.0, shape, params, branch=+1
    )
    lam_lo, _ = find_band_lambda(
        np.pi - dp, (dirac_lambda - 1.0, dirac_lambda + 1.0), 0.0, shape, params, branch=+1
    )
    return abs(lam_hi - lam_lo) / (2 * dp)


def gap_interval(dirac_data, delta: float, c: float = 0.9) -> GapInterval:
    """Certified-width gap interval around the crossing energy.

    Width 2 c delta |t*/gamma*|; degenerate when the dimerization
    coupling vanishes.
    """
    if not 0 < c < 1:
        raise StructureViolationError(f"c must lie in (0,1), got {c}")
    if delta <= 0:
        raise StructureViolationError("gap interval needs delta > 0")
    beta = dirac_data.beta_star
    if abs(beta) < 1e-10 * max(1.0, abs(dirac_data.lambda_star)):
        raise StructureViolationError(
            "dimerization coupling t* vanishes; no first-order gap opens"
        )
    half = c * delta * abs(beta)
    return GapInterval(
        e1=dirac_data.lambda_star - half,
        e2=dirac_data.lambda_star + half,
        delta=delta,
        c=c,
    )
