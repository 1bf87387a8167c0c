"""Quasi-periodic Green's function of the empty waveguide strip.

The kernel solves (Delta_x + lambda) G = delta(x - y) on the strip
R x (0, 1/2) with sound-hard walls and the Floquet condition
G(x + e1, y) = e^{ip} G(x, y).  Its modal double series is

    G(x, y; p, lam) = sum_m sum_n  e^{i p_m (x1-y1)}
                      (e^{i 2 n pi (x2-y2)} + e^{i 2 n pi (x2+y2)})
                      / (lam - p_m^2 - (2 n pi)^2),      p_m = p + 2 m pi.

Three evaluation routes are used, all exact resummations of that series:

* axial-image form ("msum"): the n-series is summed in closed form,

    G = -sum_m e^{i p_m u} [F_m(|x2-y2|) + F_m(x2+y2)],
    F_m(a) = (e^{-s_m a} + e^{-s_m (1-a)}) / (2 s_m (1 - e^{-s_m})),
    s_m = sqrt(p_m^2 - lam),

  which converges exponentially at rate 2 pi min(|x2-y2|, x2+y2, 1-x2-y2)
  per mode (F_m is even in s_m, so the square-root branch is immaterial);

* transverse-modal form ("nsum"): the m-series is summed in closed form
  through the 1D quasi-periodic Green's function

    h_k(u) = (1/2ik) [e^{iku}/(1-e^{i(k-p)}) + e^{ik(1-u)} e^{ip}/(1-e^{i(k+p)})],
    u in [0, 1),  k_n = sqrt(lam - (2 n pi)^2),  Im k_n >= 0,

  which converges exponentially at rate 2 pi dist(x1-y1, Z) per mode;

* near-diagonal split: the msum with the large-|m| asymptotics
  e^{i p_m u - |p_m| a}/(2 |p_m|) subtracted term by term and restored in
  closed form via sum_{m>=1} z^m / m = -log(1 - z).  This isolates the
  local singularity (1/2pi) log|x - y| analytically and leaves a smooth
  remainder that stays accurate down to coincident points.

Poles of the kernel sit at lam = p_m^2 + (2 n pi)^2 (the empty-guide
dispersion); evaluations are refused when lam comes closer than
``sing_guard`` to that set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, KernelError

LOG_COEFF = 1.0 / (2.0 * np.pi)
SPLIT_RADIUS = 0.1
_AXIAL_SWITCH = 0.05      # |x1-y1| threshold between nsum and split routes
_SPLIT_HEAD_MIN = 256     # minimum msum head retained by the split route


@dataclass(frozen=True)
class KernelParams:
    """Spectral and truncation parameters of one kernel evaluation."""

    p: float
    lam: float | complex
    m_trunc: int = 64
    sing_guard: float = 1e-6

    def __post_init__(self):
        if self.m_trunc < 8:
            raise KernelError(f"m_trunc must be >= 8, got {self.m_trunc}")
        if self.sing_guard <= 0:
            raise KernelError("sing_guard must be positive")

    def guard_margin(self) -> float:
        """min |lam - p_m^2 - (2 n pi)^2| over the truncation window."""
        m = np.arange(-self.m_trunc, self.m_trunc + 1)
        pm2 = (self.p + 2 * np.pi * m) ** 2
        n_max = int(np.sqrt(max(float(np.real(self.lam)), 0.0)) / (2 * np.pi)) + 2
        tn2 = (2 * np.pi * np.arange(n_max + 1)) ** 2
        dist = np.abs(self.lam - (pm2[:, None] + tn2[None, :]))
        return float(np.min(dist))

    def check_guard(self) -> None:
        margin = self.guard_margin()
        if margin < self.sing_guard:
            raise KernelError(
                f"lambda={self.lam} within {margin:.3e} of an empty-guide "
                f"dispersion sheet (guard {self.sing_guard:.1e})"
            )


def _as_points(x) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[-1] != 2:
        raise DomainError("points must be 2D")
    return pts


def _transverse_factor(s: np.ndarray, a: np.ndarray) -> np.ndarray:
    """F(a) = (e^{-s a} + e^{-s(1-a)}) / (2 s (1 - e^{-s})); even in s."""
    es = np.exp(-s)
    return (np.exp(-s * a) + np.exp(-s * (1.0 - a))) / (2.0 * s * (1.0 - es))


def ge_msum(u, t1, t2, p: float, lam, m_max: int) -> np.ndarray:
    """Axial-image sum truncated at |m| <= m_max.

    ``u`` is x1-y1, ``t1`` is |x2-y2|, ``t2`` is x2+y2 (arrays broadcast
    together).  Accurate when the transverse gaps are bounded away from 0.
    """
    u = np.asarray(u, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    out = np.zeros(np.broadcast(u, t1, t2).shape, dtype=complex)
    m = np.arange(-m_max, m_max + 1)
    for block in np.array_split(m, max(1, len(m) // 128)):
        pm = p + 2 * np.pi * block
        s = np.sqrt(pm**2 - lam + 0j)
        ph = np.exp(1j * np.multiply.outer(u, pm))
        fa = _transverse_factor(s, t1[..., None])
        fb = _transverse_factor(s, t2[..., None])
        out -= np.sum(ph * (fa + fb), axis=-1)
    return out


def _qp_line_green(k: np.ndarray, p: float, u) -> np.ndarray:
    """1D quasi-periodic Green's function h_k(u) for u in [0, 1)."""
    u = np.asarray(u, dtype=float)
    k = np.asarray(k, dtype=complex)
    e_min = np.exp(1j * (k - p))
    e_pls = np.exp(1j * (k + p))
    term1 = np.exp(1j * np.multiply.outer(u, k)) / (1.0 - e_min)
    term2 = np.exp(1j * np.multiply.outer(1.0 - u, k)) * np.exp(1j * p) / (1.0 - e_pls)
    return (term1 + term2) / (2j * k)


def ge_nsum(u, dx2, t2, p: float, lam, n_max: int | None = None) -> np.ndarray:
    """Transverse-modal sum; exponentially accurate for x1-y1 off the integers.

    ``dx2`` is x2-y2 (signed; only cosines of it appear), ``t2`` is x2+y2.
    The axial offset is reduced to [0, 1) with the Floquet phase.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    dx2 = np.atleast_1d(np.asarray(dx2, dtype=float))
    t2 = np.atleast_1d(np.asarray(t2, dtype=float))
    shift = np.floor(u)
    ur = u - shift
    phase = np.exp(1j * p * shift)

    d1 = np.maximum(np.minimum(ur, 1.0 - ur), 1e-3)

    def modal(sel, count):
        # modal index n runs over Z; pairing +-n turns exponentials into
        # cosines, leaving both image families with weight 2 cos(...) for
        # n >= 1 and the plain (1 + 1) h_0 at n = 0.
        n = np.arange(count + 1)
        k = np.sqrt(lam - (2 * np.pi * n) ** 2 + 0j)
        k = np.where(k.imag < 0, -k, k)
        h = _qp_line_green(k, p, ur[sel])
        c1 = np.cos(2 * np.pi * np.multiply.outer(dx2[sel], n))
        c2 = np.cos(2 * np.pi * np.multiply.outer(t2[sel], n))
        scale = np.where(n == 0, 1.0, 2.0)
        return np.sum(h * (c1 + c2) * scale, axis=-1)

    out = np.empty(ur.shape, dtype=complex)
    if n_max is not None:
        out = modal(np.ones_like(ur, dtype=bool), n_max)
        return phase * out
    # mode count scales with the inverse axial separation: bucket the batch
    # so nearby pairs do not inflate the cost of well-separated ones
    edges = [0.05, 0.12, 0.3, 1.0]
    lo = 0.0
    for hi in edges:
        sel = (d1 > lo) & (d1 <= hi)
        if np.any(sel):
            dmin = max(float(np.min(d1[sel])), 1e-3)
            count = int(np.clip(np.ceil(36.0 / (2 * np.pi * dmin)), 48, 800))
            out[sel] = modal(sel, count)
        lo = hi
    return phase * out


def _asym_tail_sum(pz: np.ndarray, q: np.ndarray) -> np.ndarray:
    """e^{pz} * (-log q) / (4 pi) with q = 1 - e^{2 pi z}."""
    return -np.exp(pz) * np.log(q) / (4 * np.pi)


def _wall_head_count(t2, m_head: int) -> int:
    return min(m_head, max(24, int(np.ceil(16.0 / max(float(np.min(t2)), 0.05)))))


def _family_msum(u, a, p: float, lam, m_head: int) -> np.ndarray:
    """sum over the mode window m in [-m_head-1, m_head] of e^{i p_m u} F_m(a).

    The window is chosen asymmetric because the reflections p -> 2pi - p
    and p -> 2pi - p about pi act on the mode index as m -> -m - 1; with
    this window the truncated sum satisfies the kernel's conjugation
    identities exactly.  Phases are built by recurrence.
    """
    total = np.zeros(np.broadcast(u, a).shape, dtype=complex)
    g = np.exp(2j * np.pi * u)
    ph = np.exp(1j * p * u) * g ** (-m_head - 1)
    for m in range(-m_head - 1, m_head + 1):
        s = np.sqrt((p + 2 * np.pi * m) ** 2 - lam + 0j)
        total += ph * _transverse_factor(s, a)
        ph = ph * g
    return total


def ge_split(u, t1, t2, p: float, lam, m_head: int, static=None):
    """Near-diagonal evaluation: returns (value, smooth) arrays with

        value  = smooth + LOG_COEFF * log r,   r = sqrt(u^2 + t1^2).

    Valid for |u| < 1/2 and transverse coordinates inside the strip; the
    smooth part stays finite and accurate down to r -> 0.  Truncation of
    the corrected head at m_head leaves an O(lam / m_head^2) remainder;
    the wall-image family decays like e^{-2 pi m (x2+y2)} and keeps a
    short head.  ``static`` may carry the lam-independent part from
    split_static() for repeated evaluations at one geometry.

    Momenta beyond pi are folded through the exact conjugation identity
    G(2 pi - p) = conj(G(p)) (real lam): the 1/m-weighted image tails are
    not exactly mirror-equivariant on their own, and the fold keeps every
    kernel symmetry identity exact at the evaluator level.
    """
    u = np.asarray(u, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    shape = np.broadcast(u, t1, t2).shape
    u, t1, t2 = np.broadcast_to(u, shape), np.broadcast_to(t1, shape), np.broadcast_to(t2, shape)

    fold = float(p) > np.pi and (np.isrealobj(lam) or np.imag(lam) == 0)
    p_eff = 2 * np.pi - p if fold else p

    if static is None:
        static = split_static(u, t1, t2, p_eff, m_head)
    c_asym, logr = static
    m_wall = _wall_head_count(t2, m_head)
    msum = _family_msum(u, t1, p_eff, lam, m_head) + _family_msum(u, t2, p_eff, lam, m_wall)
    smooth = -msum + c_asym
    if fold:
        smooth = np.conj(smooth)
    value = smooth + LOG_COEFF * logr
    return value, smooth


def split_static(u, t1, t2, p: float, m_head: int):
    """lam-independent part of ge_split: asymptotic heads minus closed tails.

    Returns (c_asym, logr) such that

        smooth(lam) = -[msum_t1(lam) + msum_t2(lam)] + c_asym .
    """
    u = np.asarray(u, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)

    def head_asym(a, m_count):
        # heads matching the msum window: m = 1..m_count and m = -1..-(m_count+1)
        total = np.zeros(np.broadcast(u, a).shape, dtype=complex)
        zp = 1j * u - a
        zm = -1j * u - a
        ep = np.exp(2 * np.pi * zp)
        em = np.exp(2 * np.pi * zm)
        php = np.exp(p * zp) * ep
        phm = np.exp(p * (1j * u + a)) * em
        for m in range(1, m_count + 1):
            total += php / (4 * np.pi * m) + phm / (4 * np.pi * m)
            php = php * ep
            phm = phm * em
        total += phm / (4 * np.pi * (m_count + 1))
        return total

    # full closed-form image sums
    z1p, z1m = 1j * u - t1, -1j * u - t1
    z2p, z2m = 1j * u - t2, -1j * u - t2
    q2p = -np.expm1(2 * np.pi * z2p)
    q2m = -np.expm1(2 * np.pi * z2m)
    full_wall = -(np.exp(p * z2p) * np.log(q2p)
                  + np.exp(p * (1j * u + t2)) * np.log(q2m)) / (4 * np.pi)

    r = np.hypot(u, t1)
    q1p = -np.expm1(2 * np.pi * z1p)
    q1m = -np.expm1(2 * np.pi * z1m)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_p = np.where(r > 0, q1p / np.where(r > 0, r, 1.0), 2 * np.pi)
        ratio_m = np.where(r > 0, q1m / np.where(r > 0, r, 1.0), 2 * np.pi)
        logr = np.where(r > 0, np.log(r), 0.0)
    # full axis-image sum plus LOG_COEFF log r, evaluated stably
    full_axis_reg = -(np.exp(p * z1p) * np.log(ratio_p)
                      + np.exp(p * (1j * u + t1)) * np.log(ratio_m)
                      + (np.expm1(p * z1p) + np.expm1(p * (1j * u + t1))) * logr) / (4 * np.pi)

    m_wall = _wall_head_count(t2, m_head)
    # smooth = -msum + c_asym  reproduces
    # smooth = -(msum - asym heads) - full image tails - LOG_COEFF*logr
    c_asym = (head_asym(t1, m_head) + head_asym(t2, m_wall)
              - full_wall - full_axis_reg)
    return c_asym, logr


def eval_Ge_uvt(
    u, dx2, t2, params: KernelParams, check: bool = True,
    m_floor: int = _SPLIT_HEAD_MIN,
) -> np.ndarray:
    """Router on reduced coordinates u = x1-y1, dx2 = x2-y2, t2 = x2+y2.

    ``m_floor`` bounds the corrected-head length of the near-axial split
    route from below; the default targets operator assembly accuracy,
    smaller floors suit plain field sampling.
    """
    if check:
        params.check_guard()
    u = np.atleast_1d(np.asarray(u, dtype=float))
    dx2 = np.atleast_1d(np.asarray(dx2, dtype=float))
    t2 = np.atleast_1d(np.asarray(t2, dtype=float))
    shift = np.round(u)
    ur = u - shift
    phase = np.exp(1j * params.p * shift)

    r_img = np.hypot(ur, dx2)
    if np.any(r_img < 1e-13):
        raise DomainError("coincident source and target (or periodic image)")

    out = np.empty(len(ur), dtype=complex)
    far = np.abs(ur) >= _AXIAL_SWITCH
    if np.any(far):
        out[far] = ge_nsum(ur[far], dx2[far], t2[far], params.p, params.lam)
    near = ~far
    if np.any(near):
        m_head = max(params.m_trunc, m_floor)
        val, _ = ge_split(ur[near], np.abs(dx2[near]), t2[near],
                          params.p, params.lam, m_head)
        out[near] = val
    return phase * out


def eval_Ge_many(x: np.ndarray, y: np.ndarray, params: KernelParams) -> np.ndarray:
    """Vectorized kernel evaluation for arrays of point pairs (K, 2)."""
    x = _as_points(x)
    y = _as_points(y)
    if x.shape != y.shape:
        raise DomainError("point arrays must have matching shapes")
    return eval_Ge_uvt(
        x[:, 0] - y[:, 0], x[:, 1] - y[:, 1], x[:, 1] + y[:, 1], params
    )


def eval_Ge(x, y, params: KernelParams) -> complex:
    """Quasi-periodic Green's function at a single point pair."""
    return complex(eval_Ge_many(_as_points(x), _as_points(y), params)[0])


def eval_Ge_split(x, y, params: KernelParams):
    """Near-diagonal split G = log_coeff * log|x-y| + smooth.

    Only admits |x - y| < SPLIT_RADIUS; farther pairs must use eval_Ge.
    Returns (log_coeff, smooth_part).
    """
    params.check_guard()
    xp = _as_points(x)[0]
    yp = _as_points(y)[0]
    r = np.hypot(xp[0] - yp[0], xp[1] - yp[1])
    if r >= SPLIT_RADIUS:
        raise DomainError(
            f"|x-y|={r:.3f} outside the split radius {SPLIT_RADIUS}; use eval_Ge"
        )
    m_head = max(params.m_trunc, _SPLIT_HEAD_MIN)
    _, smooth = ge_split(
        np.array([xp[0] - yp[0]]),
        np.array([abs(xp[1] - yp[1])]),
        np.array([xp[1] + yp[1]]),
        params.p, params.lam, m_head,
    )
    return LOG_COEFF, complex(smooth[0])


def kernel_derivative(which: str, x, y, params: KernelParams, step: float) -> complex:
    """Central-difference derivative of the kernel in p or lambda."""
    if not 1e-6 <= step <= 1e-3:
        raise KernelError(f"step must lie in [1e-6, 1e-3], got {step}")
    if which == "dP":
        hi = KernelParams(params.p + step, params.lam, params.m_trunc, params.sing_guard)
        lo = KernelParams(params.p - step, params.lam, params.m_trunc, params.sing_guard)
    elif which == "dLambda":
        hi = KernelParams(params.p, params.lam + step, params.m_trunc, params.sing_guard)
        lo = KernelParams(params.p, params.lam - step, params.m_trunc, params.sing_guard)
    else:
        raise KernelError(f"unknown derivative direction {which!r}")
    return (eval_Ge(x, y, hi) - eval_Ge(x, y, lo)) / (2 * step)
