"""Top Lyapunov exponent of the random maps and finite-block singular values."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import NumericalOverflow
from .random_chain import DEFAULT_BURN_IN, NoiseModel
from .scalar_maps import CircleMap, CriticalData
from .torus_dynamics import fold_angle, log_growth, mod1

DEFAULT_RENORM = 25
DEFAULT_REPLICAS = 16


@dataclass
class TangentFrame:
    """Running product of 2x2 matrices, rescaled to keep its entries O(1).

    ``log_norm_sum + log ||matrix||`` equals ``log ||product||`` of
    everything pushed so far (spectral norm).
    """
    matrix: np.ndarray = field(default_factory=lambda: np.eye(2))
    log_norm_sum: float = 0.0
    steps: int = 0
    renorm_every: int = 1

    def push(self, J: np.ndarray) -> None:
        self.matrix = np.asarray(J, dtype=float) @ self.matrix
        self.steps += 1
        if self.steps % self.renorm_every == 0:
            self.renormalize()

    def renormalize(self) -> None:
        s = float(np.max(np.abs(self.matrix)))
        if not 0.0 < s < np.inf:
            raise NumericalOverflow("tangent product left the double range")
        self.matrix = self.matrix / s
        self.log_norm_sum += np.log(s)

    def log_norm(self) -> float:
        return self.log_norm_sum + float(np.log(np.linalg.norm(self.matrix, 2)))

    def exponent(self) -> float:
        return self.log_norm() / self.steps


@dataclass(frozen=True)
class LEEstimate:
    lambda_hat: float
    std_error: float
    n_steps: int
    n_replicas: int
    per_replica: tuple[float, ...]
    method: str = "norm"

    @classmethod
    def from_replicas(cls, values, n_steps: int, method: str) -> "LEEstimate":
        v = np.asarray(values, dtype=float)
        se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
        return cls(float(v.mean()), se, n_steps, v.size, tuple(map(float, v)), method)

    def agrees_with(self, other: "LEEstimate", n_sigma: float = 3.0) -> bool:
        joint = np.hypot(self.std_error, other.std_error)
        return abs(self.lambda_hat - other.lambda_hat) <= n_sigma * joint


def _norm_replica(fmap, noise, p0, n_steps, renorm_every, inverse, replica):
    args = fmap.kernel_args()
    state = np.array([p0[0], p0[1], 1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    for w in noise.chunks(n_steps, replica):
        if not K.le_norm_chunk(*args, state, w, renorm_every, inverse):
            raise NumericalOverflow(
                f"tangent product overflowed between renormalizations (renorm_every={renorm_every}, "
                f"L={fmap.L}); use a smaller renorm_every")
    M = state[2:6].reshape(2, 2)
    if not np.all(np.isfinite(M)):
        raise NumericalOverflow("tangent product is not finite at the end of the run")
    return (state[6] + np.log(np.linalg.norm(M, 2))) / n_steps


def estimate_le_norm(fmap: CircleMap, noise: NoiseModel, q0=(0.1234, 0.5678), n_steps: int = 10**6,
                     renorm_every: int = DEFAULT_RENORM, n_replicas: int = DEFAULT_REPLICAS,
                     inverse: bool = False) -> LEEstimate:
    """``(1/n) log ||dF^n||`` along random orbits, one noise stream per replica.

    ``inverse=True`` runs the cocycle of the inverse maps instead, whose top
    exponent equals the forward one by area preservation.
    """
    if n_steps < 10**4:
        raise ValueError("n_steps must be at least 10^4")
    vals = [_norm_replica(fmap, noise, q0, n_steps, renorm_every, inverse, r)
            for r in range(n_replicas)]
    return LEEstimate.from_replicas(vals, n_steps, "norm-inverse" if inverse else "norm")


def estimate_le_furstenberg(fmap: CircleMap, noise: NoiseModel, burn_in: int = DEFAULT_BURN_IN,
                            n_steps: int = 10**6, q0=(0.1234, 0.5678, 0.0),
                            n_replicas: int = DEFAULT_REPLICAS) -> LEEstimate:
    """Time average of ``log |dF_w u_theta|`` along the projective chain.

    Replicas use the same stream indices as ``estimate_le_norm``.
    """
    args = fmap.kernel_args()
    vals = []
    for r in range(n_replicas):
        state = np.array([q0[0], q0[1], q0[2], 0.0, 0.0, 0.0])
        for w in noise.chunks(burn_in + n_steps, r):
            K.furstenberg_chunk(*args, state, w, burn_in)
        vals.append(state[3] / state[5])
    return LEEstimate.from_replicas(vals, n_steps, "furstenberg")


def constant_product_exponent(J, n_steps: int = 1000, renorm_every: int = DEFAULT_RENORM) -> float:
    """Exponent of ``J^n`` through the renormalized accumulator; tends to log of the spectral radius."""
    frame = TangentFrame(renorm_every=renorm_every)
    for _ in range(n_steps):
        frame.push(J)
    return frame.exponent()


# ---------------------------------------------------------------------------
# finite blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSVD:
    sigma1: float
    sigma2: float
    theta_minus_0: float
    theta_minus_N: float
    N: int
    log_sigma1: float


def block_product(fmap: CircleMap, omegas, q0, N: int | None = None):
    """Rescaled product of the N Jacobians along the orbit, with its log scale.

    Returns ``(M, log_scale)`` with ``dF^N = exp(log_scale) * M``.
    """
    w = np.asarray(omegas, dtype=float)
    N = w.size if N is None else N
    x, y = q0[0], q0[1]
    M = np.eye(2)
    log_scale = 0.0
    for i in range(N):
        xs = mod1(x + w[i])
        d = fmap.d1(xs)
        M = np.array([[d * M[0, 0] - M[1, 0], d * M[0, 1] - M[1, 1]], [M[0, 0], M[0, 1]]])
        x, y = mod1(fmap(xs) - y), xs
        if N > 30:
            s = np.max(np.abs(M))
            M /= s
            log_scale += np.log(s)
    return M, log_scale


def block_svd(fmap: CircleMap, omegas, q0, N: int | None = None) -> BlockSVD:
    """Singular values and most-contracted directions of ``dF^N`` along one orbit.

    The product has determinant 1, so ``sigma2 = 1/sigma1``; the contracted
    directions are taken orthogonal to the expanded ones, which stay
    accurate even when ``sigma2`` is far below double precision of ``sigma1``.
    Blocks longer than 30 steps are accumulated with rescaling.
    """
    M, log_scale = block_product(fmap, omegas, q0, N)
    U, s, Vt = np.linalg.svd(M)
    log_s1 = float(np.log(s[0]) + log_scale)
    v_plus, u_plus = Vt[0], U[:, 0]
    th0 = fold_angle(-v_plus[1], v_plus[0])
    thN = fold_angle(-u_plus[1], u_plus[0])
    s1 = float(np.exp(log_s1)) if log_s1 < 700 else float("inf")
    s2 = float(np.exp(-log_s1))
    n_eff = np.asarray(omegas).size if N is None else N
    return BlockSVD(s1, s2, th0, thN, int(n_eff), log_s1)


def block_svd_batch(fmap: CircleMap, omegas: np.ndarray, x0: np.ndarray, y0: np.ndarray):
    """Vectorised ``block_svd`` over many blocks (no rescaling; keep N moderate).

    ``omegas`` has shape (n, N).  Returns ``(log_sigma1, theta_minus_0, theta_minus_N)``.
    """
    n, N = omegas.shape
    x, y = np.array(x0, dtype=float), np.array(y0, dtype=float)
    m00, m01, m10, m11 = np.ones(n), np.zeros(n), np.zeros(n), np.ones(n)
    for i in range(N):
        xs = mod1(x + omegas[:, i])
        d = fmap.d1(xs)
        m00, m01, m10, m11 = d * m00 - m10, d * m01 - m11, m00, m01
        x, y = mod1(fmap(xs) - y), xs
    M = np.stack([np.stack([m00, m01], -1), np.stack([m10, m11], -1)], -2)
    U, s, Vt = np.linalg.svd(M)
    th0 = fold_angle(-Vt[:, 0, 1], Vt[:, 0, 0])
    thN = fold_angle(-U[:, 1, 0], U[:, 0, 0])
    return np.log(s[:, 0]), th0, thN


# ---------------------------------------------------------------------------
# good / bad split of the lambda integral
# ---------------------------------------------------------------------------

def proof_block_length(crit: CriticalData, alpha: float, beta: float, L: float) -> dict:
    """The block length and margins the lower-bound argument prescribes.

    ``p = (1 - alpha)/4``, ``m = p/(4 K1 M1)``, ``N = floor(C' L^(1-beta))``
    with ``C' = p/(4 K1 M1)``.
    """
    p = 0.25 * (1.0 - alpha)
    m = p / (4.0 * crit.k1 * crit.m1)
    return {"p": p, "m": m, "N": int(np.floor(m * L ** (1.0 - beta)))}


@dataclass(frozen=True)
class DecompositionReport:
    I: float
    good_mass: float
    bad_mass: float
    lower_bound: float
    good_floor: float
    global_floor: float
    good_violations: int
    global_violations: int
    n_samples: int
    N: int
    N_prescribed: int


def integral_decomposition(fmap: CircleMap, crit: CriticalData, noise: NoiseModel,
                           samples: np.ndarray, N: int, beta: float, alpha: float,
                           replica: int = 0) -> DecompositionReport:
    """Split ``I = E[log |dF_{w_{N+1}} u_{theta_N}|]`` into good and bad parts.

    ``samples`` are states ``(x0, y0, theta0)`` drawn from the empirical
    stationary measure.  One noise block ``w_1 .. w_{N+1}`` is drawn and
    shared by all samples; each sample is pushed N steps.  A sample is good
    when its start lies in the first-version ``G_N`` set (every shifted
    position keeps distance ``K1 L^(-1+beta)`` from C'), the final shifted
    position ``x_N + w_{N+1}`` keeps distance ``K1 m``, and the pushed
    direction has ``|tan theta_N| <= 1``.  On good samples the integrand
    should be at least ``log(m L / 4)``; everywhere at least
    ``-log(2 ||psi'|| L)``.
    """
    pars = proof_block_length(crit, alpha, beta, fmap.L)
    m = pars["m"]
    w = noise.draw(N + 1, replica)
    x, y, th = (np.array(samples[:, k], dtype=float) for k in range(3))
    cp = np.asarray(crit.cprime)
    thr = crit.k1 * fmap.L ** (-1.0 + beta)
    in_gn = np.ones(x.size, dtype=bool)
    for i in range(N):
        xs = mod1(x + w[i])
        d = np.min(np.abs((xs[:, None] - cp[None, :] + 0.5) % 1.0 - 0.5), axis=1)
        in_gn &= d >= thr
        dd = fmap.d1(xs)
        c = np.cos(th)
        th = fold_angle(dd * c - np.sin(th), c)
        x, y = mod1(fmap(xs) - y), xs
    xs = mod1(x + w[N])
    d_last = np.min(np.abs((xs[:, None] - cp[None, :] + 0.5) % 1.0 - 0.5), axis=1)
    in_gn &= d_last >= crit.k1 * m
    integrand = log_growth(fmap, (x, y, th), w[N])
    good = in_gn & (np.abs(np.tan(th)) <= 1.0)
    psi1 = fmap.base().sup_norm(1) / fmap.L
    good_floor = float(np.log(0.25 * m * fmap.L))
    global_floor = float(-np.log(2.0 * psi1 * fmap.L))
    bad_mass = 1.0 - good.mean()
    lower = good_floor - np.log(m * psi1 * fmap.L ** 2 / 2.0) * bad_mass
    return DecompositionReport(
        I=float(integrand.mean()), good_mass=float(good.mean()), bad_mass=float(bad_mass),
        lower_bound=float(lower), good_floor=good_floor, global_floor=global_floor,
        good_violations=int(np.sum(integrand[good] < good_floor)),
        global_violations=int(np.sum(integrand < global_floor)),
        n_samples=int(x.size), N=N, N_prescribed=pars["N"])
