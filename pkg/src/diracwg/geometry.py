"""Waveguide geometry: obstacle shapes and dimerized cell layouts.

The guide is the strip R x (0, 1/2) with sound-hard walls.  Identical
obstacles sit on the centerline x2 = 1/4 with unperturbed centers
z_n = ((2|n|-1)/4 sgn(n), 1/4), i.e. period 1/2 along the axis.  Viewed
with period 1, each cell holds the pair (1/4, 3/4).  Dimerization moves
odd-indexed obstacles by -delta and even-indexed ones by +delta along x1,
so the intra-pair distance becomes 1/2 + 2*delta (PlusDelta) or
1/2 - 2*delta (MinusDelta).  The Joint variant applies the same parity
rule on both halves of the axis, which glues a MinusDelta half-guide
(x1 < 0) to a PlusDelta half-guide (x1 > 0) with an interface bond of
length exactly 1/2 across x1 = 0.

Boundary curves are polar graphs r(theta) built from even cosine
harmonics, which enforces the reflection symmetry r(theta) = r(pi - theta)
by construction.  Nodes, outward normals and arc-length weights come from
the periodic trapezoid rule in theta (spectrally accurate on analytic
curves).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

STRIP_HEIGHT = 0.5
CENTER_HEIGHT = 0.25
DELTA_MAX = 0.05


class LayoutVariant(enum.Enum):
    UNPERTURBED = "unperturbed"
    PLUS_DELTA = "plus_delta"
    MINUS_DELTA = "minus_delta"
    JOINT = "joint"


@dataclass(frozen=True)
class ObstacleShape:
    """Closed boundary curve r(theta), discretized at equi-angular nodes.

    Nodes are in local coordinates (obstacle centered at the origin);
    layouts add the cell centers.  Immutable after construction.
    """

    fourier_cos_coeffs: tuple[float, ...]
    n_nodes: int
    nodes: np.ndarray        # (N, 2)
    normals: np.ndarray      # (N, 2), unit outward
    weights: np.ndarray      # (N,), arc-length trapezoid weights
    thetas: np.ndarray = field(repr=False, default=None)
    speeds: np.ndarray = field(repr=False, default=None)  # |x'(theta)|

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.weights))

    @property
    def diameter(self) -> float:
        r = np.hypot(self.nodes[:, 0], self.nodes[:, 1])
        return 2.0 * float(np.max(r))


def _radius(coeffs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """r(theta) = c0 + sum_j c_j cos(2 j theta); even harmonics only."""
    r = np.full_like(theta, coeffs[0])
    for j, c in enumerate(coeffs[1:], start=1):
        r = r + c * np.cos(2 * j * theta)
    return r


def _radius_prime(coeffs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    rp = np.zeros_like(theta)
    for j, c in enumerate(coeffs[1:], start=1):
        rp = rp - 2 * j * c * np.sin(2 * j * theta)
    return rp


def make_shape(fourier_cos_coeffs, n_nodes: int) -> ObstacleShape:
    """Build an ObstacleShape from even cosine harmonics of r(theta).

    ``fourier_cos_coeffs[j]`` multiplies cos(2*j*theta); the constant term
    is the mean radius.  Raises GeometryError if the curve is not strictly
    positive or does not fit inside the half-strip cell with margin.
    """
    coeffs = np.atleast_1d(np.asarray(fourier_cos_coeffs, dtype=float))
    if n_nodes < 16 or n_nodes % 2 != 0:
        raise GeometryError(f"n_nodes must be even and >= 16, got {n_nodes}")

    theta = 2 * np.pi * np.arange(n_nodes) / n_nodes
    r = _radius(coeffs, theta)
    # positivity checked on a finer grid than the node set
    theta_fine = 2 * np.pi * np.arange(16 * n_nodes) / (16 * n_nodes)
    r_fine = _radius(coeffs, theta_fine)
    if np.min(r_fine) <= 0:
        raise GeometryError("boundary radius r(theta) must be positive")

    rp = _radius_prime(coeffs, theta)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    nodes = np.column_stack([r * cos_t, r * sin_t])
    # tangent x'(theta); outward normal is the clockwise rotation of it
    tx = rp * cos_t - r * sin_t
    ty = rp * sin_t + r * cos_t
    speed = np.hypot(tx, ty)
    normals = np.column_stack([ty / speed, -tx / speed])
    weights = (2 * np.pi / n_nodes) * speed

    shape = ObstacleShape(
        fourier_cos_coeffs=tuple(coeffs.tolist()),
        n_nodes=n_nodes,
        nodes=nodes,
        normals=normals,
        weights=weights,
        thetas=theta,
        speeds=speed,
    )
    _check_cell_fit(shape)
    return shape


def make_disk(radius: float, n_nodes: int) -> ObstacleShape:
    """Disk of given radius; the canonical test obstacle."""
    if not 0 < radius < 0.25:
        raise GeometryError(f"disk radius must lie in (0, 1/4), got {radius}")
    return make_shape([radius], n_nodes)


def _check_cell_fit(shape: ObstacleShape) -> None:
    x2 = shape.nodes[:, 1]
    if np.max(np.abs(x2)) >= STRIP_HEIGHT / 2:
        raise GeometryError("obstacle touches a waveguide wall")
    if shape.diameter >= 0.5 - 2 * DELTA_MAX:
        raise GeometryError(
            f"obstacle diameter {shape.diameter:.3f} too large for the dimerized cell"
        )


def reflect_indices(n_nodes: int) -> np.ndarray:
    """Node permutation realizing theta -> pi - theta. Needs n_nodes % 4 == 0."""
    if n_nodes % 4 != 0:
        raise GeometryError("reflection index map requires n_nodes divisible by 4")
    k = np.arange(n_nodes)
    return (n_nodes // 2 - k) % n_nodes


@dataclass(frozen=True)
class CellLayout:
    """Obstacle centers for one of the four structure variants."""

    variant: LayoutVariant
    delta: float
    centers: np.ndarray  # (M, 2)


def _unperturbed_center(n: int) -> float:
    return (2 * abs(n) - 1) / 4 * np.sign(n)


def _parity_shift(n: int, delta: float) -> float:
    # odd index -> -delta, even index -> +delta
    return delta if n % 2 == 0 else -delta


def layout_centers(variant: LayoutVariant, delta: float, n_cells: int) -> CellLayout:
    """Obstacle centers for the requested variant.

    ``n_cells`` counts period-1/2 cells (one obstacle each) for the
    unperturbed structure, period-1 cells (one obstacle pair each) for
    PlusDelta/MinusDelta, and obstacle pairs per side for Joint.
    """
    if abs(delta) >= DELTA_MAX:
        raise GeometryError(f"|delta| must be < {DELTA_MAX}, got {delta}")
    if n_cells < 1:
        raise GeometryError("n_cells must be >= 1")
    if variant is LayoutVariant.UNPERTURBED and delta != 0:
        raise GeometryError("unperturbed layout requires delta = 0")

    if variant is LayoutVariant.UNPERTURBED:
        xs = [_unperturbed_center(n) for n in range(1, n_cells + 1)]
    elif variant is LayoutVariant.PLUS_DELTA:
        xs = [
            _unperturbed_center(n) + _parity_shift(n, delta)
            for n in range(1, 2 * n_cells + 1)
        ]
    elif variant is LayoutVariant.MINUS_DELTA:
        xs = [
            _unperturbed_center(n) + _parity_shift(n, -delta)
            for n in range(1, 2 * n_cells + 1)
        ]
    elif variant is LayoutVariant.JOINT:
        ns = [n for n in range(-2 * n_cells, 2 * n_cells + 1) if n != 0]
        xs = [_unperturbed_center(n) + _parity_shift(n, delta) for n in ns]
    else:  # pragma: no cover
        raise GeometryError(f"unknown variant {variant}")

    centers = np.array([[x, CENTER_HEIGHT] for x in xs])
    return CellLayout(variant=variant, delta=float(delta), centers=centers)


def pair_centers(delta: float) -> np.ndarray:
    """The two obstacle centers of the period-1 cell at dimerization delta.

    delta > 0 gives the PlusDelta pair (1/4 - delta, 3/4 + delta), i.e.
    intra-pair spacing 1/2 + 2*delta; delta < 0 the MinusDelta pair.
    """
    if abs(delta) >= DELTA_MAX:
        raise GeometryError(f"|delta| must be < {DELTA_MAX}, got {delta}")
    return np.array(
        [[0.25 - delta, CENTER_HEIGHT], [0.75 + delta, CENTER_HEIGHT]]
    )
