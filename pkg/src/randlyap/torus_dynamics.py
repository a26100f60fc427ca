"""The torus map ``F(x, y) = (f(x) - y, x)``, its noisy version and the projective chain.

Everything here is a pure function of a ``CircleMap`` and plain floats or
numpy arrays.  The array helpers (``fhat_step`` and friends) broadcast, which
is what the Monte Carlo code uses; the ``TorusPoint``/``ProjPoint`` wrappers
are for single states.
"""
from __future__ import annotations

from typing import NamedTuple

import mpmath
import numpy as np
from scipy import optimize

from .errors import SingularInput
from .scalar_maps import CircleMap

PREIMAGE_SUBINTERVALS = 2**10
_TAN_LIMIT = 1e15


class TorusPoint(NamedTuple):
    x: float
    y: float


class ProjPoint(NamedTuple):
    x: float
    y: float
    theta: float

    @property
    def pos(self) -> TorusPoint:
        return TorusPoint(self.x, self.y)


class NoiseTriple(NamedTuple):
    w1: float
    w2: float
    w3: float


def mod1(z):
    """Reduce to [0, 1); the clamp keeps ``-tiny % 1 == 1.0`` out."""
    r = np.mod(z, 1.0)
    if np.ndim(r):
        r[r >= 1.0] = 0.0
        return r
    return 0.0 if r >= 1.0 else float(r)


def wrap(z):
    """Representative of ``z mod 1`` in [-1/2, 1/2)."""
    return mod1(np.asarray(z) + 0.5) - 0.5


def fold_angle(vx, vy):
    """Angle of the line through (vx, vy), in [0, pi)."""
    t = np.arctan2(vy, vx)
    t = np.where(t < 0.0, t + np.pi, t)
    t = np.where(t >= np.pi, 0.0, t)
    return t if np.ndim(t) else float(t)


def unit(theta):
    return np.cos(theta), np.sin(theta)


# ---------------------------------------------------------------------------
# array-level steps
# ---------------------------------------------------------------------------

def f_step(fmap: CircleMap, x, y, w=0.0):
    """One step of ``F_w``; returns the new ``(x, y)``."""
    xs = mod1(np.asarray(x) + w)
    return mod1(fmap(xs) - y), xs


def f_inverse_step(fmap: CircleMap, X, Y, w=0.0):
    """Inverse of ``F_w``: ``(X, Y) -> (Y - w, f(Y) - X)``."""
    return mod1(np.asarray(Y) - w), mod1(fmap(Y) - X)


def fhat_step(fmap: CircleMap, x, y, theta, w=0.0):
    """One step of the projective chain; returns ``(x', y', theta')``.

    The new direction is read off the matrix action on ``(cos t, sin t)``
    so the vertical direction needs no special case.
    """
    xs = mod1(np.asarray(x) + w)
    d = fmap.d1(xs)
    c, s = unit(theta)
    th = fold_angle(d * c - s, c)
    return mod1(fmap(xs) - y), xs, th


# ---------------------------------------------------------------------------
# point-level API
# ---------------------------------------------------------------------------

def apply_F(fmap: CircleMap, p: TorusPoint) -> TorusPoint:
    return TorusPoint(*map(float, f_step(fmap, p[0], p[1])))


def apply_F_inverse(fmap: CircleMap, p: TorusPoint, w: float = 0.0) -> TorusPoint:
    return TorusPoint(*map(float, f_inverse_step(fmap, p[0], p[1], w)))


def apply_F_omega(fmap: CircleMap, p: TorusPoint, w: float) -> TorusPoint:
    return TorusPoint(*map(float, f_step(fmap, p[0], p[1], w)))


def jacobian_F_omega(fmap: CircleMap, p: TorusPoint, w: float) -> np.ndarray:
    d = fmap.d1(mod1(p[0] + w))
    return np.array([[d, -1.0], [1.0, 0.0]])


def apply_Fhat(fmap: CircleMap, q: ProjPoint, w: float) -> ProjPoint:
    return ProjPoint(*map(float, fhat_step(fmap, q[0], q[1], q[2], w)))


def log_growth(fmap: CircleMap, q, w=0.0):
    """``log |dF_w u_theta|`` at ``q = (x, y, theta)``; broadcasts over arrays."""
    d = fmap.d1(mod1(np.asarray(q[0]) + w))
    c, s = unit(q[2])
    return 0.5 * np.log((d * c - s) ** 2 + c * c)


# ---------------------------------------------------------------------------
# three-step map and its density
# ---------------------------------------------------------------------------

def three_step_H(fmap: CircleMap, q0: ProjPoint, w) -> tuple[ProjPoint, list[ProjPoint]]:
    """``H(w) = Fhat_w3 o Fhat_w2 o Fhat_w1 (q0)`` with the two intermediate states."""
    q1 = apply_Fhat(fmap, q0, w[0])
    q2 = apply_Fhat(fmap, q1, w[1])
    q3 = apply_Fhat(fmap, q2, w[2])
    return q3, [q1, q2]


def _tan(theta: float) -> float:
    c = np.cos(theta)
    t = np.sin(theta) / c if c != 0.0 else np.inf
    if not abs(t) < _TAN_LIMIT:
        raise SingularInput(f"tan is undefined at theta = {theta!r}")
    return float(t)


def det_dH_formula(fmap: CircleMap, q0: ProjPoint, w) -> float:
    """Closed-form Jacobian determinant of ``w -> H(w)``.

    ``sin^2(t3) tan^2(t2) tan^2(t1) f''(x0 + w1)``; the initial direction
    must not be vertical.
    """
    _tan(q0[2])
    q3, (q1, q2) = three_step_H(fmap, q0, w)
    t1, t2 = _tan(q1.theta), _tan(q2.theta)
    return float(np.sin(q3.theta) ** 2 * t2 * t2 * t1 * t1 * fmap.d2(mod1(q0[0] + w[0])))


def _rho_bracket(fmap: CircleMap, x, y, theta):
    s = np.sin(theta)
    cot = np.cos(theta) / s
    return fmap.d1(mod1(fmap(y) - x)) * (fmap.d1(y) - cot) - 1.0


def rho(fmap: CircleMap, q, dps: int | None = None) -> float:
    """``sin^2(t) [f'(f(y) - x)(f'(y) - cot t) - 1]^2``.

    The bracket is a difference of products of size ``L^2``; with ``dps``
    it is evaluated in ``dps``-digit arithmetic (``q`` may hold mpmath numbers).
    """
    if dps is not None:
        with mpmath.workdps(dps):
            x, y, th = (mpmath.mpf(v) for v in q)
            s = mpmath.sin(th)
            if s == 0:
                raise SingularInput("rho is undefined at theta = 0")
            b = (mp_deriv(fmap, _mp_mod1(mp_deriv(fmap, y) - x), 1)
                 * (mp_deriv(fmap, y, 1) - mpmath.cos(th) / s) - 1)
            return float(s * s * b * b)
    if np.sin(q[2]) == 0.0:
        raise SingularInput("rho is undefined at theta = 0")
    b = _rho_bracket(fmap, q[0], q[1], q[2])
    return float(np.sin(q[2]) ** 2 * b * b)


def _cover_diff(a, b) -> np.ndarray:
    """``a - b`` for projective states, lifted to the universal cover."""
    d = np.array(a) - np.array(b)
    d[:2] = wrap(d[:2])
    d[2] = np.pi * wrap(d[2] / np.pi)
    return d


def numerical_jacobian_H(fmap: CircleMap, q0: ProjPoint, w, h: float = 1e-6) -> np.ndarray:
    """Five-point central-difference Jacobian of ``w -> H(w)`` (3x3)."""
    base = three_step_H(fmap, q0, w)[0]
    J = np.empty((3, 3))
    for k in range(3):
        vals = []
        for m in (-2, -1, 1, 2):
            wk = np.array(w, dtype=float)
            wk[k] += m * h
            vals.append(_cover_diff(three_step_H(fmap, q0, wk)[0], base))
        J[:, k] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)
    return J


def numerical_det_dH(fmap: CircleMap, q0: ProjPoint, w, h: float | None = None,
                     dps: int | None = None) -> float:
    """Finite-difference determinant of ``w -> H(w)``.

    The entries of ``dH`` grow like ``L^3`` while the determinant is only of
    order ``L``, so in double precision the determinant drowns in
    cancellation.  With ``dps`` the differences are taken in ``dps``-digit
    arithmetic (default step ``10^(-dps/4)``) and the result is exact to
    far below double rounding.
    """
    if dps is None:
        return float(np.linalg.det(numerical_jacobian_H(fmap, q0, w, 1e-6 if h is None else h)))
    with mpmath.workdps(dps):
        hh = mpmath.mpf(10) ** (-(dps // 4)) if h is None else mpmath.mpf(h)
        q0m = [mpmath.mpf(v) for v in q0]
        wm = [mpmath.mpf(v) for v in w]
        base = mp_three_step_H(fmap, q0m, wm)
        J = mpmath.matrix(3, 3)
        for k in range(3):
            vals = []
            for m in (-2, -1, 1, 2):
                wk = list(wm)
                wk[k] += m * hh
                vals.append(_mp_cover_diff(mp_three_step_H(fmap, q0m, wk), base))
            for r in range(3):
                J[r, k] = (vals[0][r] - 8 * vals[1][r] + 8 * vals[2][r] - vals[3][r]) / (12 * hh)
        return float(mpmath.det(J))


# ---------------------------------------------------------------------------
# extended precision
# ---------------------------------------------------------------------------

def mp_deriv(fmap: CircleMap, x, order: int = 0):
    """``f^(order)(x)`` in the current mpmath precision."""
    tp = 2 * mpmath.pi
    s = mpmath.mpf(0)
    for k, (A, B) in enumerate(zip(fmap._A, fmap._B), start=1):
        w = tp * k
        c, sn = mpmath.cos(w * x), mpmath.sin(w * x)
        # d^n/dx^n of A cos + B sin cycles through (A, B) -> (B, -A) scaled by w
        a, b = mpmath.mpf(float(A)), mpmath.mpf(float(B))
        for _ in range(order):
            a, b = w * b, -w * a
        s += a * c + b * sn
    if order == 0:
        s += mpmath.mpf(fmap.a) + mpmath.mpf(fmap.drift) * x
    elif order == 1:
        s += mpmath.mpf(fmap.drift)
    return s


def _mp_mod1(z):
    return z - mpmath.floor(z)


def _mp_wrap(z):
    return _mp_mod1(z + mpmath.mpf(0.5)) - mpmath.mpf(0.5)


def mp_fhat_step(fmap: CircleMap, q, w):
    x, y, th = q
    xs = _mp_mod1(x + w)
    d = mp_deriv(fmap, xs, 1)
    c = mpmath.cos(th)
    t = mpmath.atan2(c, d * c - mpmath.sin(th))
    if t < 0:
        t += mpmath.pi
    return [_mp_mod1(mp_deriv(fmap, xs) - y), xs, t]


def mp_three_step_H(fmap: CircleMap, q0, w):
    q = list(q0)
    for wk in w:
        q = mp_fhat_step(fmap, q, wk)
    return q


def _mp_cover_diff(a, b):
    return [_mp_wrap(a[0] - b[0]), _mp_wrap(a[1] - b[1]),
            mpmath.pi * _mp_wrap((a[2] - b[2]) / mpmath.pi)]


def _sign_change_roots(g, lo: float, hi: float, n: int) -> list[float]:
    grid = np.linspace(lo, hi, n + 1)
    vals = g(grid)
    roots = [float(grid[i]) for i in np.flatnonzero(vals == 0.0)]
    for i in np.flatnonzero(vals[:-1] * vals[1:] < 0.0):
        roots.append(optimize.brentq(g, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15, maxiter=200))
    return sorted(roots)


def enumerate_preimages(fmap: CircleMap, q3, q0, eps: float,
                        n_sub: int = PREIMAGE_SUBINTERVALS, tol: float = 1e-12,
                        dps: int | None = None) -> list[NoiseTriple]:
    """All noise triples in ``[-eps, eps]^3`` with ``H(w) = q3`` starting from ``q0``.

    Runs the chain backwards: ``y2`` and ``theta2`` are forced by ``q3``,
    ``theta1`` by ``theta2``, and ``w1`` must solve
    ``f'(x0 + w1) = tan(theta0) + 1/tan(theta1)``.  Each ``w1`` then fixes
    ``w2`` and ``w3``.  Roots are bracketed on ``n_sub`` equal subintervals,
    so two roots closer than ``2 eps / n_sub`` can be missed.

    ``H`` contracts some noise directions by up to ``~L^-3``, so in double
    precision ``w`` is only determined to about ``cond(dH) * 1e-16``.  With
    ``dps`` the backward chain and a Newton polish of each root run in
    ``dps``-digit arithmetic; ``q3`` may then be given as mpmath numbers.
    """
    if dps is not None:
        with mpmath.workdps(dps):
            return _enumerate_preimages_mp(fmap, q3, q0, eps, n_sub, tol)
    x0, y0, th0 = q0
    x3, y3, th3 = q3
    s3 = np.sin(th3)
    if s3 == 0.0 or np.cos(th0) == 0.0:
        return []
    y2 = mod1(fmap(y3) - x3)
    tan2 = fmap.d1(y3) - np.cos(th3) / s3
    if tan2 == 0.0:
        return []
    tan1 = fmap.d1(y2) - 1.0 / tan2
    if tan1 == 0.0:
        return []
    target = np.tan(th0) + 1.0 / tan1

    def g(w):
        return fmap.d1(mod1(x0 + np.asarray(w))) - target

    out = []
    for w1 in _sign_change_roots(g, -eps, eps, n_sub):
        y1 = mod1(x0 + w1)
        x1 = mod1(fmap(y1) - y0)
        w2 = float(wrap(y2 - x1))
        x2 = mod1(fmap(y2) - y1)
        w3 = float(wrap(y3 - x2))
        if abs(w2) <= eps + tol and abs(w3) <= eps + tol:
            if not out or abs(w1 - out[-1].w1) > 1e-13:
                out.append(NoiseTriple(float(w1), w2, w3))
    return out


def _enumerate_preimages_mp(fmap, q3, q0, eps, n_sub, tol):
    x0, y0, th0 = (mpmath.mpf(v) for v in q0)
    x3, y3, th3 = (mpmath.mpf(v) for v in q3)
    s3 = mpmath.sin(th3)
    if s3 == 0 or mpmath.cos(th0) == 0:
        return []
    y2 = _mp_mod1(mp_deriv(fmap, y3) - x3)
    tan2 = mp_deriv(fmap, y3, 1) - mpmath.cos(th3) / s3
    if tan2 == 0:
        return []
    tan1 = mp_deriv(fmap, y2, 1) - 1 / tan2
    if tan1 == 0:
        return []
    target = mpmath.tan(th0) + 1 / tan1
    tf, x0f = float(target), float(x0)

    def g(w):
        return fmap.d1(mod1(x0f + np.asarray(w))) - tf

    out = []
    for guess in _sign_change_roots(g, -eps, eps, n_sub):
        w1 = mpmath.mpf(guess)
        for _ in range(60):
            step = (mp_deriv(fmap, x0 + w1, 1) - target) / mp_deriv(fmap, x0 + w1, 2)
            w1 -= step
            if abs(step) < mpmath.mpf(10) ** (-mpmath.mp.dps + 5):
                break
        y1 = _mp_mod1(x0 + w1)
        x1 = _mp_mod1(mp_deriv(fmap, y1) - y0)
        w2 = _mp_wrap(y2 - x1)
        x2 = _mp_mod1(mp_deriv(fmap, y2) - y1)
        w3 = _mp_wrap(y3 - x2)
        if abs(w1) <= eps + tol and abs(w2) <= eps + tol and abs(w3) <= eps + tol:
            t = NoiseTriple(float(w1), float(w2), float(w3))
            if not out or abs(t.w1 - out[-1].w1) > 1e-13:
                out.append(t)
    return out


def transition_density_3step(fmap: CircleMap, q0: ProjPoint, q3: ProjPoint, eps: float) -> float:
    """Density of ``H(w)`` at ``q3`` for ``w`` uniform on ``[-eps, eps]^3``.

    Sum over preimages of ``1 / (|f''(x0 + w1)| rho(q3))``, divided by ``(2 eps)^3``.
    """
    pre = enumerate_preimages(fmap, q3, q0, eps)
    if not pre:
        return 0.0
    r = rho(fmap, q3)
    tot = sum(1.0 / abs(fmap.d2(mod1(q0[0] + t.w1))) for t in pre)
    return tot / (r * (2.0 * eps) ** 3)


def jacobian_H(fmap: CircleMap, q0: ProjPoint, w) -> np.ndarray:
    """Chain-rule Jacobian of ``w -> H(w)``, rows (x3, y3, theta3).

    Uses ``cot t' = f'(x + w) - tan t``, i.e.
    ``dt' = sin^2(t') (sec^2(t) dt - f''(x + w) d(x + w))``.
    """
    x, y, th = q0
    D = np.zeros((3, 3))  # derivatives of (x, y, theta) w.r.t. (w1, w2, w3)
    for k in range(3):
        xs = mod1(x + w[k])
        dxs = D[0].copy()
        dxs[k] += 1.0
        d1, d2 = fmap.d1(xs), fmap.d2(xs)
        c = np.cos(th)
        th_new = fold_angle(d1 * c - np.sin(th), c)
        dth = np.sin(th_new) ** 2 * (D[2] / (c * c) - d2 * dxs)
        D = np.array([d1 * dxs - D[1], dxs, dth])
        x, y, th = mod1(fmap(xs) - y), xs, th_new
    return D


def is_nondegenerate(fmap: CircleMap, q0: ProjPoint, w, tol: float = 1e-3,
                     hadamard: float | None = None) -> bool:
    """Whether ``w -> H(w)`` stays away from its singular set.

    Requires every ``|tan theta_i|`` (i = 0, 1, 2) inside ``[tol, 1/tol]``,
    ``sin theta_3 >= tol`` and ``|f''(x0 + w1)| >= tol * L``.  With
    ``hadamard`` the ratio ``|det J| / prod(column norms of J)`` must also
    reach that value; this selects samples that are well conditioned even
    in double precision, which is a small fraction once L is large.
    """
    q3, (q1, q2) = three_step_H(fmap, q0, w)
    for th in (q0[2], q1.theta, q2.theta):
        t = abs(np.tan(th))
        if not tol <= t <= 1.0 / tol:
            return False
    if np.sin(q3.theta) < tol or abs(fmap.d2(mod1(q0[0] + w[0]))) < tol * fmap.L:
        return False
    if hadamard is None:
        return True
    J = jacobian_H(fmap, q0, w)
    ratio = abs(np.linalg.det(J)) / np.prod(np.linalg.norm(J, axis=0))
    return bool(ratio >= hadamard)
