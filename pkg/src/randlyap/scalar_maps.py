"""Circle maps ``f = L*psi + a`` (plus an optional bounded perturbation).

``psi`` is a trigonometric polynomial given by its Fourier coefficients,

    psi(x) = sum_k  cos_k * cos(2 pi k x) + sin_k * sin(2 pi k x),   k = 1..K

and the map is

    f(x) = L * psi(x) + a + drift * x + h(x)

where ``drift * x + h(x)`` is the perturbation away from ``f0 = L psi + a``
(``h`` is another trigonometric polynomial).  The shifted standard map
``L sin(2 pi x) + 2x`` is the case ``drift = 2``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .errors import GridTooCoarse, InvalidC, NoCriticalPoints

TWO_PI = 2.0 * np.pi
DEFAULT_GRID = 2**16
H2_REL_THRESHOLD = 1e-8


def circle_distance(x, pts):
    """Distance on R/Z from each entry of ``x`` to the finite set ``pts``."""
    x = np.asarray(x, dtype=float)
    pts = np.asarray(pts, dtype=float)
    if pts.size == 0:
        return np.full(x.shape, np.inf)
    diff = np.abs((x[..., None] - pts + 0.5) % 1.0 - 0.5)
    out = diff.min(axis=-1)
    return out if out.ndim else float(out)


def _trig_deriv(x, cos_c: np.ndarray, sin_c: np.ndarray, order: int):
    if cos_c.size == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    k = np.arange(1, cos_c.size + 1)
    w = TWO_PI * k
    ph = np.asarray(x, dtype=float)[..., None] * w
    # d^n/dx^n of (A cos + B sin) cycles through a quarter turn per order
    amp = w**order
    c, s = np.cos(ph), np.sin(ph)
    r = order % 4
    if r == 0:
        terms = cos_c * c + sin_c * s
    elif r == 1:
        terms = -cos_c * s + sin_c * c
    elif r == 2:
        terms = -cos_c * c - sin_c * s
    else:
        terms = cos_c * s - sin_c * c
    return (amp * terms).sum(axis=-1)


def _pad(a: Sequence[float], n: int) -> np.ndarray:
    out = np.zeros(n)
    out[: len(a)] = a
    return out


@dataclass(frozen=True)
class CircleMap:
    cos_coefs: tuple[float, ...]
    sin_coefs: tuple[float, ...]
    L: float
    a: float = 0.0
    kind: str = "pure-psi"
    drift: float = 0.0
    pert_cos: tuple[float, ...] = ()
    pert_sin: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.kind not in ("pure-psi", "shifted"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "pure-psi" and (self.drift or any(self.pert_cos) or any(self.pert_sin)):
            raise ValueError("a pure-psi map carries no perturbation")
        n = max(len(self.cos_coefs), len(self.sin_coefs), len(self.pert_cos), len(self.pert_sin))
        A = self.L * _pad(self.cos_coefs, n) + _pad(self.pert_cos, n)
        B = self.L * _pad(self.sin_coefs, n) + _pad(self.pert_sin, n)
        object.__setattr__(self, "_A", A)
        object.__setattr__(self, "_B", B)
        object.__setattr__(self, "_psi_c", _pad(self.cos_coefs, n))
        object.__setattr__(self, "_psi_s", _pad(self.sin_coefs, n))

    def __call__(self, x):
        return self.deriv(x, 0)

    def deriv(self, x, order: int = 0):
        val = _trig_deriv(x, self._A, self._B, order)
        if order == 0:
            val = val + self.a + self.drift * np.asarray(x, dtype=float)
        elif order == 1:
            val = val + self.drift
        return val if np.ndim(val) else float(val)

    def eval(self, x):
        return self.deriv(x, 0)

    def d1(self, x):
        return self.deriv(x, 1)

    def d2(self, x):
        return self.deriv(x, 2)

    def d3(self, x):
        return self.deriv(x, 3)

    def psi(self, x, order: int = 0):
        """The unscaled profile psi and its derivatives."""
        val = _trig_deriv(x, self._psi_c, self._psi_s, order)
        return val if np.ndim(val) else float(val)

    def base(self) -> "CircleMap":
        """The unperturbed ``f0 = L psi + a``."""
        return replace(self, kind="pure-psi", drift=0.0, pert_cos=(), pert_sin=())

    def with_offset(self, a: float) -> "CircleMap":
        return replace(self, a=float(a))

    def with_L(self, L: float) -> "CircleMap":
        return replace(self, L=float(L))

    def perturbation_c3_norm(self, grid_n: int = 4096) -> float:
        """``max_k sup |(f - f0)^(k)|`` over k = 0..3 on [0, 1]."""
        xs = np.linspace(0.0, 1.0, grid_n + 1)
        pc = np.asarray(_pad(self.pert_cos, len(self._A)))
        ps = np.asarray(_pad(self.pert_sin, len(self._A)))
        norms = []
        for k in range(4):
            h = _trig_deriv(xs, pc, ps, k)
            if k == 0:
                h = h + self.drift * xs
            elif k == 1:
                h = h + self.drift
            norms.append(np.max(np.abs(h)))
        return float(max(norms))

    def in_neighborhood(self, eps_tilde: float) -> bool:
        """Membership in ``{f : ||f - f0||_C3 < L * eps_tilde}``."""
        return self.perturbation_c3_norm() < self.L * eps_tilde

    def kernel_args(self):
        """Flat arguments for the compiled orbit kernels."""
        return (np.ascontiguousarray(self._A), np.ascontiguousarray(self._B),
                float(self.a), float(self.drift))

    def sup_norm(self, order: int, grid_n: int = DEFAULT_GRID) -> float:
        xs = np.arange(grid_n) / grid_n
        return float(np.max(np.abs(self.deriv(xs, order))))

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def sine_map(L: float, a: float = 0.0) -> CircleMap:
    return CircleMap(cos_coefs=(0.0,), sin_coefs=(1.0,), L=float(L), a=float(a))


def fourier_map(cos_coefs, sin_coefs, L: float, a: float = 0.0) -> CircleMap:
    return CircleMap(tuple(map(float, cos_coefs)), tuple(map(float, sin_coefs)), float(L), float(a))


def standard_map_f(L: float) -> CircleMap:
    """``f(x) = L sin(2 pi x) + 2x``: the standard map in (x, y) coordinates."""
    if not L > 0:
        raise ValueError("L must be positive")
    return CircleMap(cos_coefs=(0.0,), sin_coefs=(1.0,), L=float(L), a=0.0,
                     kind="shifted", drift=2.0)


def map_from_spec(spec: dict) -> CircleMap:
    """Build a map from a config block ``{psi, L, a, kind/standard_map}``."""
    L = float(spec["L"])
    a = float(spec.get("a", 0.0))
    if spec.get("standard_map") or spec.get("kind") == "standard":
        return standard_map_f(L)
    psi = spec.get("psi", "sin")
    if psi == "sin":
        fmap = sine_map(L, a)
    elif isinstance(psi, dict):
        fmap = fourier_map(psi.get("cos", ()), psi.get("sin", ()), L, a)
    else:
        raise ValueError(f"psi must be 'sin' or a mapping of Fourier coefficients, got {psi!r}")
    return fmap


# ---------------------------------------------------------------------------
# critical sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalData:
    cprime: tuple[float, ...]
    cdoubleprime: tuple[float, ...]
    m1: int
    m2: int
    k1: float
    k2: float
    k0: float
    chat: float
    k1_raw: float = float("nan")
    k2_raw: float = float("nan")
    grid_n: int = DEFAULT_GRID

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CriticalData":
        d = json.loads(text)
        d["cprime"] = tuple(d["cprime"])
        d["cdoubleprime"] = tuple(d["cdoubleprime"])
        return cls(**d)

    def dist_cprime(self, x):
        return circle_distance(x, self.cprime)

    def dist_cdoubleprime(self, x):
        return circle_distance(x, self.cdoubleprime)


def _bisect(g: Callable[[float], float], lo: float, hi: float) -> float:
    return optimize.bisect(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def periodic_roots(g: Callable, grid_n: int, scale: float = 1.0) -> list[float]:
    """All zeros of a 1-periodic function on [0, 1).

    Sign changes on a uniform grid are refined by bisection.  Grid points
    where ``|g|`` has a local minimum without a sign change are also refined
    (by bounded minimisation of ``|g|``) and kept when the minimum vanishes
    to ``1e-10 * scale``; this catches even-multiplicity roots.
    """
    xs = np.arange(grid_n) / grid_n
    v = np.asarray(g(xs), dtype=float)
    nxt = np.roll(v, -1)
    prv = np.roll(v, 1)
    h = 1.0 / grid_n
    gs = lambda t: float(g(t % 1.0))
    roots = [float(xs[i]) for i in np.flatnonzero(v == 0.0)]
    for i in np.flatnonzero(v * nxt < 0.0):
        roots.append(_bisect(gs, xs[i], xs[i] + h) % 1.0)
    av = np.abs(v)
    touch = (av <= np.abs(prv)) & (av < np.abs(nxt)) & (v * nxt > 0) & (v * prv > 0)
    tol = 1e-10 * max(scale, 1.0)
    for i in np.flatnonzero(touch & (av < 1e-3 * max(scale, 1.0))):
        res = optimize.minimize_scalar(lambda t: abs(gs(t)), bounds=(xs[i] - h, xs[i] + h),
                                       method="bounded", options={"xatol": 1e-14})
        if abs(gs(res.x)) < tol:
            roots.append(float(res.x) % 1.0)
    roots = sorted(r if r < 1.0 else 0.0 for r in roots)
    merged: list[float] = []
    for r in roots:
        if merged and abs(r - merged[-1]) < 1e-12:
            continue
        merged.append(r)
    if len(merged) > 1 and (merged[0] + 1.0 - merged[-1]) < 1e-12:
        merged.pop()
    if len(merged) > 1:
        gaps = np.diff(np.append(merged, merged[0] + 1.0))
        if gaps.min() < 2.0 / grid_n:
            raise GridTooCoarse(f"roots {gaps.min():.3g} apart on a grid of {grid_n} points")
    return merged


def _min_pair_distance(pts: Sequence[float]) -> float:
    if len(pts) < 2:
        return 1.0
    p = np.asarray(pts)
    return float(np.diff(np.append(p, p[0] + 1.0)).min())


def _distance_ratio_sup(num_dist: np.ndarray, denom: np.ndarray, min_dist: float) -> float:
    # at a root both sides are rounding noise; neighbours resolve the limit
    ok = (denom > 0) & (num_dist >= min_dist)
    return float(np.max(num_dist[ok] / denom[ok]))


def find_critical_sets(fmap: CircleMap, grid_n: int = DEFAULT_GRID) -> CriticalData:
    """Locate C' and C'' and grid-fit the structure constants K1, K2, K0, c-hat.

    K1 and K2 are measured on ``f'/L`` and ``f''/L`` so that for a pure
    ``L psi + a`` map they are exactly the psi constants.  ``k1``/``k2`` are
    clamped to at least 1; the unclamped grid suprema are kept as
    ``k1_raw``/``k2_raw``.
    """
    if grid_n < 1000:
        raise ValueError("grid_n must be at least 1000")
    L = fmap.L
    if fmap.sup_norm(1, 4096) == 0.0:
        raise NoCriticalPoints("f' vanishes identically")
    cp = periodic_roots(fmap.d1, grid_n, scale=fmap.sup_norm(1, 4096))
    if not cp:
        raise NoCriticalPoints("f' has no zeros")
    cpp = periodic_roots(fmap.d2, grid_n, scale=fmap.sup_norm(2, 4096))

    xs = np.arange(grid_n) / grid_n
    d1 = np.abs(fmap.d1(xs)) / L
    d2 = np.abs(fmap.d2(xs)) / L
    h = 0.5 / grid_n
    k1_raw = _distance_ratio_sup(circle_distance(xs, cp), d1, h)
    k2_raw = _distance_ratio_sup(circle_distance(xs, cpp), d2, h) if cpp else float("inf")

    sup = max(fmap.sup_norm(k, grid_n) for k in (1, 2, 3)) / L
    min_f2 = float(np.min(np.abs(fmap.d2(np.array(cp))))) if cp else 0.0
    min_f3 = float(np.min(np.abs(fmap.d3(np.array(cpp))))) if cpp else 0.0
    cands = [1.0, sup, _inv(min_f2 / L), _inv(min_f3 / L),
             _inv(_min_pair_distance(cp)), _inv(_min_pair_distance(cpp) if cpp else 1.0)]
    chat = 0.5 * _min_pair_distance(cp) if len(cp) > 1 else 0.5
    return CriticalData(
        cprime=tuple(cp), cdoubleprime=tuple(cpp), m1=len(cp), m2=len(cpp),
        k1=max(1.0, k1_raw), k2=max(1.0, k2_raw), k0=float(max(cands)), chat=chat,
        k1_raw=k1_raw, k2_raw=k2_raw, grid_n=grid_n,
    )


def _inv(v: float) -> float:
    return float("inf") if v == 0 else 1.0 / v


@dataclass(frozen=True)
class H12Report:
    h1: bool
    h2: bool
    min_abs_f2_on_cprime: float
    min_abs_f3_on_cdoubleprime: float


def check_h1_h2(fmap: CircleMap, crit: CriticalData) -> H12Report:
    m2 = float(np.min(np.abs(fmap.d2(np.array(crit.cprime))))) if crit.m1 else 0.0
    m3 = float(np.min(np.abs(fmap.d3(np.array(crit.cdoubleprime))))) if crit.m2 else 0.0
    thr = H2_REL_THRESHOLD * fmap.L
    return H12Report(h1=crit.m1 > 0 and crit.m2 > 0, h2=m2 > thr and m3 > thr,
                     min_abs_f2_on_cprime=m2, min_abs_f3_on_cdoubleprime=m3)


@dataclass(frozen=True)
class H3Report:
    holds: bool
    worst_pair: tuple[float, float]
    worst_distance: float
    c: float


def h3_distances(fmap: CircleMap, crit: CriticalData) -> np.ndarray:
    """``d(f(xh) - xh' mod 1, C')`` for every ordered pair, shape (M1, M1)."""
    cp = np.asarray(crit.cprime)
    z = (fmap(cp)[:, None] - cp[None, :]) % 1.0
    return circle_distance(z, cp)


def check_h3(fmap: CircleMap, crit: CriticalData, c: float) -> H3Report:
    if not (0.0 < c < crit.chat):
        raise InvalidC(f"need 0 < c < c-hat = {crit.chat:.6g}, got c = {c}")
    d = h3_distances(fmap, crit)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    worst = float(d[i, j])
    return H3Report(holds=worst >= c, worst_pair=(crit.cprime[i], crit.cprime[j]),
                    worst_distance=worst, c=c)


def h3_sweep(fmap: CircleMap, crit: CriticalData, c_values, n_a: int = 1024):
    """Scan the offset ``a`` over a uniform grid of [0, 1) for each ``c``.

    Returns ``(a_grid, holds)`` with ``holds`` of shape (len(c_values), n_a).
    C' does not depend on ``a``, so ``crit`` is reused across the scan.
    """
    a_grid = np.arange(n_a) / n_a
    cp = np.asarray(crit.cprime)
    base = fmap(cp) - fmap.a
    worst = np.empty(n_a)
    for j, a in enumerate(a_grid):
        z = (base[:, None] + a - cp[None, :]) % 1.0
        worst[j] = circle_distance(z, cp).min()
    c_values = np.atleast_1d(np.asarray(c_values, dtype=float))
    for c in c_values:
        if not (0.0 < c < crit.chat):
            raise InvalidC(f"need 0 < c < c-hat = {crit.chat:.6g}, got c = {c}")
    return a_grid, worst[None, :] >= c_values[:, None]
