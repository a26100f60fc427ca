"""Noise streams, orbits of the random maps and empirical stationary measures."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy import stats

from . import _kernels as K
from .scalar_maps import CircleMap
from .torus_dynamics import f_step, fhat_step

CHUNK = 2**16
DEFAULT_BURN_IN = 10_000


@dataclass(frozen=True)
class NoiseModel:
    """i.i.d. Uniform[-eps, eps] noise from a counter-based generator.

    Every ``(seed, stream_id, replica)`` triple names an independent Philox
    stream (via ``SeedSequence`` spawn keys), so parallel workers never
    overlap and any single stream can be regenerated bit for bit.
    """
    epsilon: float
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 0.5:
            raise ValueError(f"epsilon must lie in (0, 1/2], got {self.epsilon}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def generator(self, replica: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), int(replica)))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, stream_id: int) -> "NoiseModel":
        return NoiseModel(self.epsilon, self.seed, stream_id)

    def draw(self, n: int, replica: int = 0) -> np.ndarray:
        return self.generator(replica).uniform(-self.epsilon, self.epsilon, size=n)

    def chunks(self, n: int, replica: int = 0, chunk: int = CHUNK) -> Iterator[np.ndarray]:
        """The same values as ``draw(n, replica)``, delivered in pieces."""
        rng = self.generator(replica)
        done = 0
        while done < n:
            m = min(chunk, n - done)
            yield rng.uniform(-self.epsilon, self.epsilon, size=m)
            done += m


def draw_block(noise: NoiseModel, n_blocks: int, block: int, replica: int = 0) -> np.ndarray:
    """``(n_blocks, block)`` array of noise values for batch experiments."""
    return noise.draw(n_blocks * block, replica).reshape(n_blocks, block)


# ---------------------------------------------------------------------------
# orbits
# ---------------------------------------------------------------------------

def sample_orbit(fmap: CircleMap, noise: NoiseModel, q0, n: int, replica: int = 0):
    """Run the projective chain for ``n`` steps.

    Returns ``(states, omegas)`` where ``states[i]`` is the state after the
    ``(i+1)``-th step, produced with ``omegas[i]``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    args = fmap.kernel_args()
    state = np.array([q0[0], q0[1], q0[2]], dtype=float)
    states = np.empty((n, 3))
    omegas = np.empty(n)
    pos = 0
    for w in noise.chunks(n, replica):
        K.fhat_orbit(*args, state, w, states[pos:pos + w.size])
        omegas[pos:pos + w.size] = w
        pos += w.size
    return states, omegas


def torus_orbit(fmap: CircleMap, noise: NoiseModel, p0, n: int, replica: int = 0):
    """Positions ``(x_i, y_i)``, i = 1..n, of one random orbit, shape (n, 2)."""
    args = fmap.kernel_args()
    state = np.array([p0[0], p0[1]], dtype=float)
    out = np.empty((n, 2))
    pos = 0
    for w in noise.chunks(n, replica):
        m = w.size
        K.torus_orbit(*args, state, w, out[pos:pos + m, 0], out[pos:pos + m, 1])
        pos += m
    return out


@dataclass(frozen=True)
class ChiSquareReport:
    chi2: float
    p_value: float
    dof: int


def stationarity_test(fmap: CircleMap, noise: NoiseModel, n_samples: int = 10**6,
                      grid: tuple[int, int] = (32, 32), steps: int = 2,
                      replica: int = 0) -> ChiSquareReport:
    """Push uniform points through ``steps`` random maps and test for uniformity.

    ``steps=0`` is the null harness: the input sample itself is tested.
    """
    rng = noise.generator(replica)
    x = rng.random(n_samples)
    y = rng.random(n_samples)
    for _ in range(steps):
        w = rng.uniform(-noise.epsilon, noise.epsilon, size=n_samples)
        x, y = f_step(fmap, x, y, w)
    return uniformity_chi2(x, y, grid)


def uniformity_chi2(x, y, grid=(32, 32)) -> ChiSquareReport:
    nx, ny = grid
    ix = np.minimum((np.asarray(x) * nx).astype(np.int64), nx - 1)
    iy = np.minimum((np.asarray(y) * ny).astype(np.int64), ny - 1)
    counts = np.bincount(ix * ny + iy, minlength=nx * ny)
    res = stats.chisquare(counts)
    return ChiSquareReport(float(res.statistic), float(res.pvalue), nx * ny - 1)


def default_observable(x, y):
    """``cos^2(2 pi x) + sin(2 pi y) / 2``; its Lebesgue mean is 1/2."""
    return np.cos(2 * np.pi * x) ** 2 + 0.5 * np.sin(2 * np.pi * y)


@dataclass(frozen=True)
class ErgodicAverage:
    time_average: float
    space_average: float
    std_error: float
    n_steps: int
    n_batches: int

    @property
    def z_score(self) -> float:
        return (self.time_average - self.space_average) / self.std_error


def ergodic_average(fmap: CircleMap, noise: NoiseModel, n_steps: int = 10**7,
                    p0=(0.1234, 0.5678), n_batches: int = 100, replica: int = 0,
                    observable=default_observable, space_average: float = 0.5) -> ErgodicAverage:
    """Time average of ``observable`` along one orbit, with a batch-means error bar."""
    args = fmap.kernel_args()
    state = np.array(p0, dtype=float)
    batch = n_steps // n_batches
    sums = np.zeros(n_batches)
    buf_x = np.empty(CHUNK)
    buf_y = np.empty(CHUNK)
    pos = 0
    for w in noise.chunks(batch * n_batches, replica):
        m = w.size
        K.torus_orbit(*args, state, w, buf_x[:m], buf_y[:m])
        vals = observable(buf_x[:m], buf_y[:m])
        idx = (pos + np.arange(m)) // batch
        sums += np.bincount(idx, weights=vals, minlength=n_batches)
        pos += m
    means = sums / batch
    return ErgodicAverage(time_average=float(means.mean()), space_average=space_average,
                          std_error=float(means.std(ddof=1) / np.sqrt(n_batches)),
                          n_steps=batch * n_batches, n_batches=n_batches)


def autocorrelation(series: np.ndarray, max_lag: int = 50) -> np.ndarray:
    s = np.asarray(series, dtype=float) - np.mean(series)
    var = np.dot(s, s) / s.size
    return np.array([np.dot(s[:s.size - k], s[k:]) / (s.size * var) for k in range(max_lag + 1)])


# ---------------------------------------------------------------------------
# empirical stationary measure
# ---------------------------------------------------------------------------

@dataclass
class EmpiricalMeasure:
    """Histogram of the projective chain on ``T^2 x [0, pi)``.

    Bin ``(i, j, k)`` is ``[i/nx, (i+1)/nx) x [j/ny, (j+1)/ny) x [k pi/nt, (k+1) pi/nt)``.
    ``samples`` optionally keeps a thinned subset of raw states.
    """
    counts: np.ndarray
    samples: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    @property
    def grid(self) -> tuple[int, int, int]:
        return tuple(self.counts.shape)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def empty(cls, grid=(32, 32, 64)) -> "EmpiricalMeasure":
        return cls(np.zeros(grid, dtype=np.int64))

    def merge(self, other: "EmpiricalMeasure") -> "EmpiricalMeasure":
        if self.grid != other.grid:
            raise ValueError("cannot merge histograms on different grids")
        return EmpiricalMeasure(self.counts + other.counts,
                                np.concatenate([self.samples, other.samples]))

    __add__ = merge

    def xy_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=2)

    def theta_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=(0, 1))

    def theta_edges(self) -> np.ndarray:
        return np.linspace(0.0, np.pi, self.grid[2] + 1)

    def bin_mass(self, i: slice, j: slice, k: slice) -> float:
        return float(self.counts[i, j, k].sum()) / self.total

    def theta_mass(self, lo: float, hi: float) -> float:
        """Mass of bins lying entirely inside ``[lo, hi]`` in theta."""
        e = self.theta_edges()
        sel = (e[:-1] >= lo - 1e-12) & (e[1:] <= hi + 1e-12)
        return float(self.theta_marginal()[sel].sum()) / self.total

    def flat_tan_mass(self) -> float:
        """Mass with ``|tan theta| <= 1``, i.e. theta in [0, pi/4] or [3 pi/4, pi)."""
        return self.theta_mass(0.0, np.pi / 4) + self.theta_mass(3 * np.pi / 4, np.pi)

    def vertical_bin_mass(self) -> float:
        """Mass of the theta-bin containing pi/2."""
        k = min(int(0.5 * self.grid[2]), self.grid[2] - 1)
        return float(self.theta_marginal()[k]) / self.total

    def uniformity_test(self) -> ChiSquareReport:
        c = self.xy_marginal().ravel()
        res = stats.chisquare(c)
        return ChiSquareReport(float(res.statistic), float(res.pvalue), c.size - 1)

    def to_csv(self, path, header: str = "") -> None:
        nz = np.argwhere(self.counts)
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            fh.write("ix,iy,itheta,count\n")
            for i, j, k in nz:
                fh.write(f"{i},{j},{k},{self.counts[i, j, k]}\n")

    @classmethod
    def from_csv(cls, path, grid) -> "EmpiricalMeasure":
        counts = np.zeros(grid, dtype=np.int64)
        with open(path) as fh:
            rows = [ln for ln in fh if ln[:1].isdigit()]
        for ln in rows:
            i, j, k, c = map(int, ln.split(","))
            counts[i, j, k] = c
        return cls(counts)


def _chain_histogram(fmap, noise, q0, burn_in, n_samples, grid, thin, keep, replica):
    args = fmap.kernel_args()
    counts = np.zeros(grid, dtype=np.int64)
    kept = np.empty((keep, 3))
    keep_every = max(1, n_samples // keep) if keep else 1
    state = np.array([q0[0], q0[1], q0[2], 0.0, 0.0, 0.0])
    for w in noise.chunks(burn_in + n_samples * thin, replica):
        K.proj_hist_chunk(*args, state, w, counts, burn_in, thin, keep > 0, keep_every, kept)
    return EmpiricalMeasure(counts, kept[:int(state[5])].copy())


def empirical_proj_measure(fmap: CircleMap, noise: NoiseModel, burn_in: int = DEFAULT_BURN_IN,
                           n_samples: int = 10**6, grid=(32, 32, 64), q0=(0.1234, 0.5678, 1.0),
                           thin: int = 1, keep: int = 0, n_orbits: int | None = None,
                           replica: int = 0) -> EmpiricalMeasure:
    """Histogram of the projective chain after burn-in.

    By default one long orbit is used.  ``n_orbits`` switches to an ensemble
    of that many orbits (replicas ``replica .. replica + n_orbits - 1``),
    each contributing ``n_samples // n_orbits`` states; the histograms are
    merged by addition.
    """
    if burn_in < 1000:
        raise ValueError("burn_in must be at least 1000")
    if n_orbits is None:
        return _chain_histogram(fmap, noise, q0, burn_in, n_samples, grid, thin, keep, replica)
    per = n_samples // n_orbits
    total = EmpiricalMeasure.empty(grid)
    for r in range(n_orbits):
        rng = np.random.default_rng([int(noise.seed), int(noise.stream_id), replica + r])
        start = (rng.random(), rng.random(), rng.random() * np.pi)
        total = total + _chain_histogram(fmap, noise, start, burn_in, per, grid, thin,
                                         keep // n_orbits, replica + r)
    return total


@dataclass(frozen=True)
class ConcentrationReport:
    c_hat: float
    lhs: float
    rhs_shape: float
    band_mass: float
    worst_box: tuple


def concentration_check(measure: EmpiricalMeasure, L: float, eps: float,
                        min_count: int = 0) -> ConcentrationReport:
    """Fitted constant in ``mu(A) <= C L^(-1/4) (1 + Leb(A) / (eps^3 L^2))``.

    The family of sets ``A`` consists of dyadic boxes of the histogram grid
    inside the band ``theta in [pi/4, 3 pi/4]`` (xy-boxes of side ``2^-m``,
    theta-ranges of the band halved ``r`` times).  ``Leb`` is the product
    measure ``dx dy dtheta``.  Returns the maximising box and its ratio,
    which is the smallest constant consistent with the data.
    """
    nx, ny, nt = measure.grid
    if nt % 4:
        raise ValueError("n_theta must be a multiple of 4 so the band is a union of bins")
    if nx != ny or nx & (nx - 1):
        raise ValueError("xy grid must be square with a power-of-two side")
    tot = measure.total
    k0, k1 = nt // 4, 3 * nt // 4
    band = measure.counts[:, :, k0:k1]
    best = (0.0, 0.0, 0.0, None)
    side = 1
    while side <= nx:
        bx = nx // side
        tr_len = k1 - k0
        while tr_len >= 1:
            for t0 in range(0, k1 - k0, tr_len):
                blocks = band[:, :, t0:t0 + tr_len].sum(axis=2)
                blocks = blocks.reshape(side, bx, side, bx).sum(axis=(1, 3))
                i, j = np.unravel_index(np.argmax(blocks), blocks.shape)
                cnt = blocks[i, j]
                if cnt <= min_count:
                    continue
                leb = (1.0 / side) ** 2 * np.pi * tr_len / nt
                mu = cnt / tot
                shape = L ** -0.25 * (1.0 + leb / (eps ** 3 * L ** 2))
                if mu / shape > best[0]:
                    best = (mu / shape, mu, shape, (side, int(i), int(j), k0 + t0, tr_len))
            if tr_len % 2:
                break
            tr_len //= 2
        side *= 2
    band_mass = float(band.sum()) / tot
    return ConcentrationReport(c_hat=best[0], lhs=best[1], rhs_shape=best[2],
                               band_mass=band_mass, worst_box=best[3])


def theta_dependence_test(fmap: CircleMap, noise: NoiseModel, thetas=(0.0, np.pi / 2),
                          burn_in: int = DEFAULT_BURN_IN, n_samples: int = 10**6,
                          grid=(8, 8, 64)) -> ChiSquareReport:
    """Contingency test that the empirical measure does not depend on the start angle."""
    tabs = []
    for r, th in enumerate(thetas):
        m = empirical_proj_measure(fmap, noise, burn_in, n_samples, grid,
                                   q0=(0.1234, 0.5678, th), replica=1000 + r)
        tabs.append(m.theta_marginal())
    tab = np.array(tabs)
    tab = tab[:, tab.sum(axis=0) > 0]
    res = stats.chi2_contingency(tab)
    return ChiSquareReport(float(res.statistic), float(res.pvalue), int(res.dof))


def markov_test(fmap: CircleMap, noise: NoiseModel, n_steps: int = 10**6, bins: int = 8,
                replica: int = 0) -> ChiSquareReport:
    """Test that the step taken from a state does not depend on how it was reached.

    Along one orbit of the torus chain, the noise driving step ``n + 1`` is
    recovered from consecutive states (``w = y_{n+1} - x_n mod 1``), binned,
    and cross-tabulated against the x-bin of the previous state ``x_{n-1}``.
    A Markov chain driven by i.i.d. noise makes the two independent.
    """
    pts = torus_orbit(fmap, noise, (0.1234, 0.5678), n_steps, replica)
    x, y = pts[:, 0], pts[:, 1]
    w = (y[2:] - x[1:-1] + 0.5) % 1.0 - 0.5
    wb = np.minimum(((w + noise.epsilon) / (2 * noise.epsilon) * bins).astype(int), bins - 1)
    wb = np.clip(wb, 0, bins - 1)
    pb = np.minimum((x[:-2] * bins).astype(int), bins - 1)
    tab = np.zeros((bins, bins), dtype=np.int64)
    np.add.at(tab, (pb, wb), 1)
    res = stats.chi2_contingency(tab)
    return ChiSquareReport(float(res.statistic), float(res.pvalue), int(res.dof))


def fhat_orbit_python(fmap: CircleMap, q0, omegas) -> np.ndarray:
    """Reference (uncompiled) projective orbit, used to cross-check the kernels."""
    x, y, th = q0
    out = np.empty((len(omegas), 3))
    for i, w in enumerate(omegas):
        x, y, th = fhat_step(fmap, x, y, th, w)
        out[i] = (x, y, th)
    return out
