"""Critical strips B / I / G, symbolic words, G_N membership and cone estimates.

Regions are vertical strips around the critical set C' of f:

* ``B``: ``d(x, C') < sqrt(c/L)``
* ``I``: ``sqrt(c/L) <= d(x, C') < c``
* ``G``: everything else.

Words are stored in written order: the letter of the
initial point is the *rightmost* one, ``W = W_{N-1} ... W_1 W_0``.
``SymbolWord.time_order`` gives the letters in the order they are visited.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import CaseUnrealizable, ConeNotMapped, H3Failed, InvalidC, NotInGN, PreconditionError
from .lyapunov import block_svd, block_svd_batch
from .random_chain import NoiseModel
from .scalar_maps import CircleMap, CriticalData, check_h3, circle_distance
from .torus_dynamics import mod1

LETTERS = "GIB"  # code 0, 1, 2
G, I, B = 0, 1, 2
N_INTERIOR_RAYS = 32


@dataclass(frozen=True)
class RegionParams:
    c: float
    p: float
    beta: float
    version: str = "thm2"
    c0: float | None = None

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.version not in ("thm1", "thm2"):
            raise ValueError(f"version must be 'thm1' or 'thm2', got {self.version!r}")
        if not self.c > 0:
            raise InvalidC(f"c must be positive, got {self.c}")
        if not self.p > 0:
            raise ValueError("p must be positive")

    def validate(self, crit: CriticalData, L: float, margin: bool = False) -> None:
        """Raise ``InvalidC`` unless the strips are well defined for this map.

        ``margin=True`` also enforces ``c <= p/(16 M1)``, which ties the strips
        to the endpoint margins of G_N.
        """
        if self.c >= crit.chat:
            raise InvalidC(f"c = {self.c} must be below c-hat = {crit.chat:.6g}")
        if np.sqrt(self.c / L) >= self.c:
            raise InvalidC(f"sqrt(c/L) >= c leaves the I strip empty; need L > 1/c = {1 / self.c:.6g}")
        if margin and self.c > self.p / (16 * crit.m1) * (1 + 1e-12):
            raise InvalidC(f"c = {self.c} exceeds p/(16 M1) = {self.p / (16 * crit.m1):.6g}")
        if self.c0 is not None and self.c >= self.c0:
            raise InvalidC(f"c = {self.c} must be smaller than c0 = {self.c0}")

    def radius_b(self, L: float) -> float:
        return float(np.sqrt(self.c / L))


# ---------------------------------------------------------------------------
# letters and words
# ---------------------------------------------------------------------------

def classify_distance(d, params: RegionParams, L: float):
    """Letter codes (0 = G, 1 = I, 2 = B) from distances to C'."""
    d = np.asarray(d)
    return np.where(d < params.radius_b(L), B, np.where(d < params.c, I, G)).astype(np.uint8)


def classify(fmap: CircleMap, crit: CriticalData, params: RegionParams, x_shifted: float) -> str:
    params.validate(crit, fmap.L)
    return LETTERS[int(classify_distance(crit.dist_cprime(x_shifted), params, fmap.L))]


@dataclass(frozen=True)
class SymbolWord:
    letters: str  # written order: W_{N-1} ... W_0
    decomposition: tuple | None = None

    def __post_init__(self):
        if set(self.letters) - set(LETTERS):
            raise ValueError(f"letters must be drawn from {LETTERS!r}")
        if self.decomposition is not None and "".join(self.decomposition) != self.letters:
            raise ValueError("decomposition does not reproduce the word")

    @classmethod
    def from_time_order(cls, letters: str) -> "SymbolWord":
        return cls(letters[::-1])

    @property
    def time_order(self) -> str:
        return self.letters[::-1]

    def letter(self, i: int) -> str:
        """``W_i``, the letter of the i-th shifted position."""
        return self.letters[len(self.letters) - 1 - i]

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return self.letters


def shifted_positions(fmap: CircleMap, omegas, x0, y0):
    """``x_i + w_{i+1}`` (mod 1) for i = 0 .. M-1 along the random orbit.

    ``omegas`` has shape (M,) or (n, M); the result has the same shape.
    """
    w = np.asarray(omegas, dtype=float)
    single = w.ndim == 1
    w = np.atleast_2d(w)
    x = np.array(x0, dtype=float).reshape(-1)
    y = np.array(y0, dtype=float).reshape(-1)
    out = np.empty(w.shape)
    for i in range(w.shape[1]):
        xs = mod1(x + w[:, i])
        out[:, i] = xs
        x, y = mod1(fmap(xs) - y), xs
    return out[0] if single else out


def extract_word(fmap: CircleMap, crit: CriticalData, params: RegionParams, omegas, q0,
                 N: int | None = None) -> SymbolWord:
    """Symbolic itinerary ``W_{N-1} ... W_0`` of the first N shifted positions."""
    params.validate(crit, fmap.L)
    w = np.asarray(omegas, dtype=float)
    N = w.size if N is None else N
    if N < 1:
        raise ValueError("N must be at least 1")
    xt = shifted_positions(fmap, w[:N], q0[0], q0[1])
    codes = classify_distance(crit.dist_cprime(xt), params, fmap.L)
    return SymbolWord.from_time_order("".join(LETTERS[c] for c in np.atleast_1d(codes)))


# Maximal {B, I}-runs allowed between G's.  The set is closed under reversal,
# so it reads the same in time order and in written order.
_RUN = re.compile(r"B?I*B?")


def _run_allowed(run: str) -> bool:
    return len(run) > 0 and _RUN.fullmatch(run) is not None


@dataclass(frozen=True)
class GrammarReport:
    valid: bool
    decomposition: tuple | None = None
    violation_index: int | None = None
    reason: str = ""


def validate_grammar(w: SymbolWord) -> GrammarReport:
    """Check ``W = G^{k_M} V_M ... V_1 G^{k_0}`` with every excursion ``V_i`` allowed.

    Allowed excursions: ``B``, ``BB``, ``B I^k B``, ``I^k B``, ``I^k``, ``B I^k``
    (k >= 1).  ``violation_index`` is the time index ``i`` of the first
    offending letter ``W_i``.
    """
    t = w.time_order
    n = len(t)
    if n == 0:
        return GrammarReport(False, None, 0, "empty word")
    if t[0] != "G":
        return GrammarReport(False, None, 0, "W_0 must be G")
    i = 0
    while i < n:
        if t[i] == "G":
            i += 1
            continue
        j = i
        while j < n and t[j] != "G":
            j += 1
        run = t[i:j]
        if not _run_allowed(run):
            bad = next(k for k in range(i + 1, j - 1) if t[k] == "B")
            return GrammarReport(False, None, bad, f"excursion {run[::-1]} is not allowed")
        i = j
    if t[-1] != "G":
        return GrammarReport(False, None, n - 1, f"W_{n - 1} must be G")
    # decomposition in written order: alternating G-blocks and excursions
    pieces = []
    cur = w.letters[0]
    for ch in w.letters[1:]:
        if (ch == "G") == (cur[-1] == "G"):
            cur += ch
        else:
            pieces.append(cur)
            cur = ch
    pieces.append(cur)
    return GrammarReport(True, tuple(pieces))


def grammar_violations(codes: np.ndarray) -> np.ndarray:
    """Vectorised grammar check on letter codes in time order, shape (n, N).

    Returns a boolean array marking invalid words.  A word is valid iff it
    starts and ends with G and has no pattern ``X B Y`` with X, Y in {B, I};
    this is equivalent to every excursion lying in the allowed set.
    """
    c = np.asarray(codes)
    bad = (c[:, 0] != G) | (c[:, -1] != G)
    if c.shape[1] >= 3:
        nb = c != G
        bad |= np.any(nb[:, :-2] & (c[:, 1:-1] == B) & nb[:, 2:], axis=1)
    return bad


# ---------------------------------------------------------------------------
# G_N
# ---------------------------------------------------------------------------

FAIL_TAGS = ("", "(a)", "(a)(i)", "(a)(ii)", "(b)")


@dataclass(frozen=True)
class GNReport:
    member: bool
    failed_condition: str


def gn_membership(fmap: CircleMap, crit: CriticalData, params: RegionParams,
                  xt: np.ndarray, N: int):
    """Vectorised G_N test on shifted positions ``xt`` of shape (n, >= N [+1]).

    Returns ``(member, fail_code)`` with ``fail_code`` indexing ``FAIL_TAGS``.
    """
    xt = np.atleast_2d(xt)
    L = fmap.L
    d = circle_distance(xt, np.asarray(crit.cprime))
    fail = np.zeros(xt.shape[0], dtype=np.uint8)
    if params.version == "thm1":
        ok = np.all(d[:, :N] >= crit.k1 * L ** (-1.0 + params.beta), axis=1)
        fail[~ok] = 1
        return ok, fail
    if xt.shape[1] < N + 1:
        raise ValueError("the second-version G_N needs N + 1 noise values")
    a1 = np.all(d[:, :N] >= crit.k1 * L ** (-2.0 + params.beta), axis=1)
    a2 = np.all(d[:, :N] * d[:, 1:N + 1] >= crit.k1 ** 2 * L ** (-2.0 + params.beta / 2), axis=1)
    margin = params.p / (16 * crit.m1)
    b = (d[:, 0] >= margin) & (d[:, N - 1] >= margin)
    fail[~b] = 4
    fail[~a2] = 3
    fail[~a1] = 2
    return a1 & a2 & b, fail


def in_G_N(fmap: CircleMap, crit: CriticalData, params: RegionParams, omegas, q0,
           N: int) -> GNReport:
    w = np.asarray(omegas, dtype=float)
    need = N + 1 if params.version == "thm2" else N
    if w.size < need:
        raise ValueError(f"need at least {need} noise values, got {w.size}")
    xt = shifted_positions(fmap, w[:need], q0[0], q0[1])
    member, fail = gn_membership(fmap, crit, params, xt[None, :], N)
    return GNReport(bool(member[0]), FAIL_TAGS[int(fail[0])])


def sample_gn_blocks(fmap: CircleMap, crit: CriticalData, params: RegionParams,
                     noise: NoiseModel, n_blocks: int, N: int, replica: int = 0,
                     batch: int = 2**16, max_batches: int = 1000):
    """Draw uniform starts and noise blocks until ``n_blocks`` lie in G_N.

    Returns ``(x0, y0, omegas, acceptance)``; ``omegas`` has N + 1 columns and
    ``acceptance`` is the member fraction over all draws.
    """
    rng = noise.generator(replica)
    xs, ys, ws = [], [], []
    got = tried = 0
    for _ in range(max_batches):
        x0 = rng.random(batch)
        y0 = rng.random(batch)
        w = rng.uniform(-noise.epsilon, noise.epsilon, size=(batch, N + 1))
        member, _ = gn_membership(fmap, crit, params, shifted_positions(fmap, w, x0, y0), N)
        tried += batch
        xs.append(x0[member])
        ys.append(y0[member])
        ws.append(w[member])
        got += int(member.sum())
        if got >= n_blocks:
            break
    x0, y0, w = np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)
    return x0[:n_blocks], y0[:n_blocks], w[:n_blocks], got / tried


@dataclass(frozen=True)
class ScalingFit:
    Ns: tuple
    fractions: tuple
    slope: float
    intercept: float
    r_squared: float
    n_samples: int


def gn_complement_scaling(fmap: CircleMap, crit: CriticalData, params: RegionParams,
                          noise: NoiseModel, Ns=(2, 4, 8, 16), n_samples: int = 10**6,
                          replica: int = 0, batch: int = 2**17) -> ScalingFit:
    """Monte Carlo ``Leb(G_N^c)`` for each N with a least-squares line in N.

    One set of starts and noise blocks (of the largest length) is shared by
    all N, so the fractions are coupled and the fit is not noise dominated.
    """
    Nmax = max(Ns)
    rng = noise.generator(replica)
    outside = np.zeros(len(Ns))
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        x0, y0 = rng.random(m), rng.random(m)
        w = rng.uniform(-noise.epsilon, noise.epsilon, size=(m, Nmax + 1))
        xt = shifted_positions(fmap, w, x0, y0)
        for k, N in enumerate(Ns):
            member, _ = gn_membership(fmap, crit, params, xt[:, :N + 1], N)
            outside[k] += m - member.sum()
        done += m
    frac = outside / n_samples
    fit = stats.linregress(np.asarray(Ns, dtype=float), frac)
    return ScalingFit(tuple(Ns), tuple(map(float, frac)), float(fit.slope), float(fit.intercept),
                      float(fit.rvalue ** 2), n_samples)


# ---------------------------------------------------------------------------
# the bad-to-good lemma and grammar soundness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ViolationReport:
    violations: int
    tested: int
    detail: dict = field(default_factory=dict)


def check_bad_then_good(fmap: CircleMap, crit: CriticalData, params: RegionParams, n_samples: int,
                    eps: float, noise: NoiseModel | None = None, replica: int = 0) -> ViolationReport:
    """After a visit to ``B or I`` followed by ``B``, the next shifted point lies in G.

    Sampling is exact, not by rejection: given ``u0 = x0 + w1`` and
    ``v1 = x1 + w2``, the next point is ``x2 + w3 = f(v1) - u0 + w3``, and
    every ``(u0, v1)`` pair is reached by some ``y0``.  Uniform ``(x0, y0)``
    conditioned on the two visits makes ``u0`` uniform on the c-strips and
    ``v1`` uniform on the B-strips.
    """
    L = fmap.L
    if not eps < 1.0 / L:
        raise PreconditionError(f"need eps < 1/L = {1 / L:.6g}, got eps = {eps}")
    params.validate(crit, L, margin=True)
    if params.c0 is None:
        raise PreconditionError("c0 must be set to check the lemma")
    h3 = check_h3(fmap, crit, params.c0)
    if not h3.holds:
        raise H3Failed(f"(H3) fails at c0 = {params.c0}: worst pair {h3.worst_pair} "
                       f"lands at distance {h3.worst_distance:.6g}")
    noise = noise or NoiseModel(eps)
    rng = noise.generator(replica)
    cp = np.asarray(crit.cprime)
    rb = params.radius_b(L)
    viol = 0
    done = 0
    worst = np.inf
    while done < n_samples:
        m = min(2**18, n_samples - done)
        u0 = cp[rng.integers(crit.m1, size=m)] + rng.uniform(-params.c, params.c, size=m)
        v1 = cp[rng.integers(crit.m1, size=m)] + rng.uniform(-rb, rb, size=m)
        w3 = rng.uniform(-eps, eps, size=m)
        x2s = mod1(fmap(mod1(v1)) - mod1(u0) + w3)
        codes = classify_distance(circle_distance(x2s, cp), params, L)
        viol += int(np.sum(codes != G))
        worst = min(worst, float(circle_distance(x2s, cp).min()))
        done += m
    return ViolationReport(viol, n_samples, {"min_distance_third_point": worst, "c": params.c})


def check_grammar_soundness(fmap: CircleMap, crit: CriticalData, params: RegionParams,
                            noise: NoiseModel, n_orbits: int, N: int,
                            replica: int = 0) -> ViolationReport:
    """Extract words of G_N-conditioned orbits and count grammar violations."""
    L = fmap.L
    params.validate(crit, L, margin=True)
    if not noise.epsilon < 1.0 / L:
        raise PreconditionError(f"need eps < 1/L = {1 / L:.6g}")
    rng = noise.generator(replica)
    viol = tested = tried = 0
    excursions = 0
    first_bad = None
    while tested < n_orbits:
        m = 2**17
        x0, y0 = rng.random(m), rng.random(m)
        w = rng.uniform(-noise.epsilon, noise.epsilon, size=(m, N + 1))
        xt = shifted_positions(fmap, w, x0, y0)
        member, _ = gn_membership(fmap, crit, params, xt, N)
        tried += m
        codes = classify_distance(circle_distance(xt[member, :N], np.asarray(crit.cprime)), params, L)
        codes = codes[: n_orbits - tested]
        bad = grammar_violations(codes)
        if bad.any() and first_bad is None:
            first_bad = SymbolWord.from_time_order("".join(LETTERS[c] for c in codes[np.argmax(bad)])).letters
        viol += int(bad.sum())
        excursions += int(np.sum(np.any(codes != G, axis=1)))
        tested += codes.shape[0]
    return ViolationReport(viol, tested, {"orbits_tried": tried, "with_excursion": excursions,
                                          "first_violation": first_bad})


# ---------------------------------------------------------------------------
# cones
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cone:
    """Vectors ``(u, v)`` with ``|v| <= s |u|``."""
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("cone slope must be positive")

    @classmethod
    def narrow(cls, L: float, beta: float) -> "Cone":
        return cls(L ** (-1.0 + beta / 4))

    @classmethod
    def unit(cls) -> "Cone":
        return cls(1.0)

    @classmethod
    def wide(cls, L: float, beta: float) -> "Cone":
        return cls(L ** (1.0 - beta / 4))

    def contains(self, other: "Cone") -> bool:
        return other.s <= self.s


def cone_step(d: float, cone_in: Cone, target: Cone | None = None) -> tuple[Cone, float]:
    """Image of ``C(s)`` under ``[[d, -1], [1, 0]]`` and a lower bound on growth.

    ``(1, k)`` goes to ``(d - k, 1)``: slope ``1/(d - k)``.  The image is a
    proper cone iff ``|d| > s``; then it is ``C(1/(|d| - s))`` and unit
    vectors grow by at least ``sqrt((|d| - s)^2 + 1) / sqrt(1 + s^2)``.
    """
    s = cone_in.s
    gap = abs(d) - s
    if gap <= 0:
        raise ConeNotMapped(f"|f'| = {abs(d):.6g} <= s = {s:.6g}: the image contains the vertical")
    out = Cone(1.0 / gap)
    if target is not None and not target.contains(out):
        raise ConeNotMapped(f"image slope {out.s:.6g} exceeds target {target.s:.6g}")
    return out, float(np.sqrt(gap * gap + 1.0) / np.sqrt(1.0 + s * s))


def cone_map(fmap: CircleMap, x_shifted: float, cone_in: Cone, target: Cone | None = None) -> Cone:
    return cone_step(float(fmap.d1(x_shifted)), cone_in, target)[0]


def chain_cones(derivs, cone_in: Cone) -> tuple[Cone, float]:
    """Compose ``cone_step`` along a sequence of derivatives (time order)."""
    cone, growth = cone_in, 1.0
    for d in derivs:
        cone, g = cone_step(d, cone)
        growth *= g
    return cone, growth


def word_matrices(derivs: np.ndarray) -> np.ndarray:
    """Products ``J_l ... J_1`` for rows of derivatives (time order); shape (n, 2, 2)."""
    D = np.atleast_2d(derivs)
    n = D.shape[0]
    m00, m01, m10, m11 = np.ones(n), np.zeros(n), np.zeros(n), np.ones(n)
    for i in range(D.shape[1]):
        d = D[:, i]
        m00, m01, m10, m11 = d * m00 - m10, d * m01 - m11, m00, m01
    return np.stack([np.stack([m00, m01], -1), np.stack([m10, m11], -1)], -2)


def maps_into(M: np.ndarray, s_in: float, s_out: float, rtol: float = 1e-12) -> np.ndarray:
    """Exact test ``M C(s_in) within C(s_out)`` for a stack of 2x2 matrices.

    The slope of ``M (1, k)`` is a Moebius function of ``k``, so the image
    of ``[-s_in, s_in]`` is the interval between the endpoint images unless
    the pole ``m00 + m01 k = 0`` falls inside.  Interior rays are checked
    as well.
    """
    M = np.asarray(M).reshape(-1, 2, 2)
    ks = np.concatenate([[-s_in, s_in], np.linspace(-s_in, s_in, N_INTERIOR_RAYS + 2)[1:-1]])
    den = M[:, 0, 0, None] + M[:, 0, 1, None] * ks[None, :]
    num = M[:, 1, 0, None] + M[:, 1, 1, None] * ks[None, :]
    pole_free = den[:, 0] * den[:, 1] > 0
    inside = np.all(np.abs(num) <= s_out * np.abs(den) * (1 + rtol), axis=1)
    return pole_free & inside


def min_growth(M: np.ndarray, s_in: float) -> np.ndarray:
    """``min ||M u||`` over unit ``u`` in ``C(s_in)`` for a stack of matrices.

    ``||M u_t||^2`` is a quadratic form in ``(cos t, sin t)``; its minimum on
    the arc ``|t| <= atan(s_in)`` is at an endpoint or at an eigen-direction
    of ``M^T M`` inside the arc.
    """
    M = np.asarray(M).reshape(-1, 2, 2)
    q00 = M[:, 0, 0] ** 2 + M[:, 1, 0] ** 2
    q11 = M[:, 0, 1] ** 2 + M[:, 1, 1] ** 2
    q01 = M[:, 0, 0] * M[:, 0, 1] + M[:, 1, 0] * M[:, 1, 1]
    tmax = np.arctan(s_in)

    def form(t):
        c, s = np.cos(t), np.sin(t)
        return q00 * c * c + 2 * q01 * c * s + q11 * s * s

    vals = [form(-tmax), form(tmax)]
    for t in np.linspace(-tmax, tmax, N_INTERIOR_RAYS + 2)[1:-1]:
        vals.append(form(t))
    t_star = 0.5 * np.arctan2(2 * q01, q00 - q11)
    for shift in (0.0, np.pi / 2, -np.pi / 2):
        t = t_star + shift
        vals.append(np.where(np.abs(t) <= tmax, form(np.clip(t, -tmax, tmax)), np.inf))
    return np.sqrt(np.maximum(np.min(np.stack(vals), axis=0), 0.0))


# word cases: time-order letters, input cone, output cone, growth bound
def _case_table(L: float, beta: float, c: float, k1: float) -> dict:
    narrow, unit, wide = Cone.narrow(L, beta), Cone.unit(), Cone.wide(L, beta)
    gI = 0.5 * np.sqrt(c * L) / k1
    return {
        "a": ("I", unit, unit, gI),
        "b": ("B", narrow, wide, 0.5),
        "c": ("BB", narrow, wide, L ** (beta / 3)),
        "d": ("IB", unit, wide, min(gI, L ** (beta / 3))),
        "e": ("BI", narrow, unit, L ** (beta / 3)),
        "f": ("BIB", narrow, wide, L ** (beta / 5)),
    }


def allowed_words(max_k: int = 4) -> list[str]:
    """Allowed excursions in time order, with I-runs up to ``max_k``."""
    out = ["B", "BB"]
    for k in range(1, max_k + 1):
        ik = "I" * k
        out += [ik, "B" + ik, ik + "B", "B" + ik + "B"]
    return out


@dataclass(frozen=True)
class WordCaseReport:
    case: str
    word_time_order: str
    samples: int
    containment_violations: int
    growth_violations: int
    adjoint_violations: int
    min_growth_observed: float
    growth_bound: float
    subcase_counts: dict = field(default_factory=dict)


def sample_word_positions(crit: CriticalData, params: RegionParams, L: float, word: str,
                          n: int, rng: np.random.Generator, max_rounds: int = 1000) -> np.ndarray:
    """Shifted positions realising ``word`` (time order) under the G_N side conditions.

    Each letter's distance to C' is drawn half the time uniformly and half
    the time log-uniformly over its strip (the log part reaches the thin
    end of B), on a random side of a random critical point.  Draws breaking
    ``(a)(i)`` or ``(a)(ii)`` between consecutive letters are rejected.
    """
    cp = np.asarray(crit.cprime)
    rb = params.radius_b(L)
    dmin_b = crit.k1 * L ** (-2.0 + params.beta)
    prod_min = crit.k1 ** 2 * L ** (-2.0 + params.beta / 2)
    ranges = {"B": (dmin_b, rb), "I": (rb, params.c)}
    out = []
    got = 0
    for _ in range(max_rounds):
        m = max(2 * (n - got), 1024)
        ds = []
        for ch in word:
            lo, hi = ranges[ch]
            uni = rng.uniform(lo, hi, size=m)
            log = np.exp(rng.uniform(np.log(lo), np.log(hi), size=m))
            ds.append(np.where(rng.random(m) < 0.5, uni, log))
        D = np.stack(ds, axis=1)
        ok = np.all(D * 1.0 < np.array([ranges[ch][1] for ch in word]), axis=1)
        if D.shape[1] > 1:
            ok &= np.all(D[:, :-1] * D[:, 1:] >= prod_min, axis=1)
        D = D[ok]
        side = rng.choice([-1.0, 1.0], size=D.shape)
        centre = cp[rng.integers(crit.m1, size=D.shape)]
        out.append(mod1(centre + side * D))
        got += D.shape[0]
        if got >= n:
            break
    pos = np.concatenate(out)[:n]
    if pos.shape[0] < n:
        raise CaseUnrealizable(f"could only realise {pos.shape[0]} of {n} configurations for {word}")
    return pos


def verify_word(fmap: CircleMap, crit: CriticalData, params: RegionParams, word: str,
                cone_in: Cone, cone_out: Cone, bound: float, n_samples: int,
                rng: np.random.Generator, adjoint: bool = True, case: str = "") -> WordCaseReport:
    pos = sample_word_positions(crit, params, fmap.L, word, n_samples, rng)
    D = fmap.d1(pos)
    M = word_matrices(D)
    contain = maps_into(M, cone_in.s, cone_out.s)
    growth = min_growth(M, cone_in.s)
    adj_viol = 0
    if adjoint:
        adj_viol = int(np.sum(~maps_into(np.transpose(M, (0, 2, 1)), cone_in.s, cone_out.s)))
    sub = {}
    if word == "BIB":
        sub = {"I": int(np.sum(np.abs(D[:, 2]) >= np.abs(D[:, 0]))),
               "II": int(np.sum(np.abs(D[:, 2]) < np.abs(D[:, 0])))}
    return WordCaseReport(case or word, word, int(M.shape[0]), int(np.sum(~contain)),
                          int(np.sum(growth < bound)), adj_viol, float(growth.min()), float(bound), sub)


def verify_word_lemmas(fmap: CircleMap, crit: CriticalData, params: RegionParams, word_case: str,
                       n_samples: int, rng: np.random.Generator | None = None) -> WordCaseReport:
    """Cone containment and minimal growth for one excursion case.

    Cases ``a`` .. ``f`` are the one-, two- and three-letter excursions
    ``I, B, BB, (I then B), (B then I), (B, I, B)`` with their own cones and
    bounds.  The adjoint (transpose) check ``C_n -> C_w`` is applied where
    the case itself maps ``C_n`` into ``C_w``.
    """
    params.validate(crit, fmap.L)
    rng = rng or np.random.default_rng(0)
    table = _case_table(fmap.L, params.beta, params.c, crit.k1)
    if word_case not in table:
        raise ValueError(f"unknown case {word_case!r}; expected one of {sorted(table)}")
    word, cin, cout, bound = table[word_case]
    narrow, wide = Cone.narrow(fmap.L, params.beta), Cone.wide(fmap.L, params.beta)
    adjoint = cin == narrow and cout == wide
    return verify_word(fmap, crit, params, word, cin, cout, bound, n_samples, rng, adjoint, word_case)


def verify_allowed_words(fmap: CircleMap, crit: CriticalData, params: RegionParams,
                         n_samples: int, max_k: int = 4,
                         rng: np.random.Generator | None = None) -> list[WordCaseReport]:
    """Every allowed excursion maps ``C_n`` into ``C_w`` (and so does its transpose)
    with growth at least ``L^{(beta/5) n_I} / 2``."""
    params.validate(crit, fmap.L)
    rng = rng or np.random.default_rng(1)
    narrow, wide = Cone.narrow(fmap.L, params.beta), Cone.wide(fmap.L, params.beta)
    out = []
    for word in allowed_words(max_k):
        bound = 0.5 * fmap.L ** (params.beta / 5 * word.count("I"))
        out.append(verify_word(fmap, crit, params, word, narrow, wide, bound, n_samples, rng,
                               True, "word:" + word))
    return out


# ---------------------------------------------------------------------------
# block hyperbolicity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PropertyBReport:
    sigma1_ok: bool
    angle_ok: bool
    log_sigma1: float
    angle_errors: tuple


def verify_property_B(fmap: CircleMap, crit: CriticalData, params: RegionParams, omegas, q0,
                      N: int) -> PropertyBReport:
    """``sigma1 >= L^{beta N / 15}`` and both contracted angles within ``L^-beta`` of vertical."""
    rep = in_G_N(fmap, crit, params, omegas, q0, N)
    if not rep.member:
        raise NotInGN(f"start is not in G_N: condition {rep.failed_condition} fails")
    svd = block_svd(fmap, np.asarray(omegas)[:N], q0, N)
    L, beta = fmap.L, params.beta
    e0 = abs(svd.theta_minus_0 - np.pi / 2)
    eN = abs(svd.theta_minus_N - np.pi / 2)
    return PropertyBReport(svd.log_sigma1 >= beta * N / 15 * np.log(L),
                           max(e0, eN) <= L ** (-beta), svd.log_sigma1, (e0, eN))


@dataclass(frozen=True)
class BlockCheckReport:
    n_blocks: int
    sigma_violations: int
    angle_violations: int
    growth_exponent_min: float
    growth_exponent_median: float
    max_angle_error: float
    acceptance: float


def property_B_batch(fmap: CircleMap, crit: CriticalData, params: RegionParams,
                     noise: NoiseModel, n_blocks: int, N: int, replica: int = 0) -> BlockCheckReport:
    """Property (B) on ``n_blocks`` sampled G_N blocks (second version)."""
    x0, y0, w, acc = sample_gn_blocks(fmap, crit, params, noise, n_blocks, N, replica)
    ls1, th0, thN = block_svd_batch(fmap, w[:, :N], x0, y0)
    L, beta = fmap.L, params.beta
    err = np.maximum(np.abs(th0 - np.pi / 2), np.abs(thN - np.pi / 2))
    expo = ls1 / (N * np.log(L))
    return BlockCheckReport(int(x0.size), int(np.sum(ls1 < beta * N / 15 * np.log(L))),
                            int(np.sum(err > L ** (-beta))), float(expo.min()),
                            float(np.median(expo)), float(err.max()), acc)


def first_version_block_batch(fmap: CircleMap, crit: CriticalData, beta: float, noise: NoiseModel,
                    n_blocks: int, N: int, replica: int = 0) -> BlockCheckReport:
    """On first-version G_N: ``|tan theta^-| >= L^beta / 2`` at both ends and ``sigma >= (L^beta/3)^N``."""
    params = RegionParams(c=min(0.01, crit.chat / 2), p=1.0, beta=beta, version="thm1")
    x0, y0, w, acc = sample_gn_blocks(fmap, crit, params, noise, n_blocks, N, replica)
    ls1, th0, thN = block_svd_batch(fmap, w[:, :N], x0, y0)
    L = fmap.L
    tmin = np.minimum(np.abs(np.tan(th0)), np.abs(np.tan(thN)))
    expo = ls1 / (N * np.log(L))
    return BlockCheckReport(int(x0.size), int(np.sum(ls1 < N * np.log(L ** beta / 3))),
                            int(np.sum(tmin < 0.5 * L ** beta)), float(expo.min()),
                            float(np.median(expo)), float(np.max(np.abs(np.arctan(1 / tmin)))),
                            acc)
