"""Compiled inner loops for long sequential orbits.

Every kernel takes the map as ``(A, B, a, drift)``: the Fourier amplitudes of
``f - a - drift*x`` and the two scalars (see ``CircleMap.kernel_args``).
Orbit state is threaded through small float arrays so that callers can feed
noise in fixed-size chunks without changing the result.
"""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
PI = math.pi


@njit(cache=True)
def mod1(z):
    r = z - math.floor(z)
    if r >= 1.0:
        r = 0.0
    return r


@njit(cache=True)
def f_val(x, A, B, a, drift):
    s = a + drift * x
    for k in range(A.size):
        t = TWO_PI * (k + 1) * x
        s += A[k] * math.cos(t) + B[k] * math.sin(t)
    return s


@njit(cache=True)
def f_d1(x, A, B, drift):
    s = drift
    for k in range(A.size):
        w = TWO_PI * (k + 1)
        t = w * x
        s += w * (B[k] * math.cos(t) - A[k] * math.sin(t))
    return s


@njit(cache=True)
def fold_angle(vx, vy):
    t = math.atan2(vy, vx)
    if t < 0.0:
        t += PI
    if t >= PI:
        t = 0.0
    return t


@njit(cache=True)
def torus_orbit(A, B, a, drift, state, omegas, out_x, out_y):
    """Advance (x, y) = state[0:2] through ``omegas``, recording positions."""
    x = state[0]
    y = state[1]
    for i in range(omegas.size):
        xs = mod1(x + omegas[i])
        x = mod1(f_val(xs, A, B, a, drift) - y)
        y = xs
        out_x[i] = x
        out_y[i] = y
    state[0] = x
    state[1] = y


@njit(cache=True)
def fhat_orbit(A, B, a, drift, state, omegas, out):
    """Projectivised orbit; state = [x, y, theta]; out has shape (n, 3)."""
    x = state[0]
    y = state[1]
    th = state[2]
    for i in range(omegas.size):
        xs = mod1(x + omegas[i])
        d = f_d1(xs, A, B, drift)
        c = math.cos(th)
        s = math.sin(th)
        th = fold_angle(d * c - s, c)
        x = mod1(f_val(xs, A, B, a, drift) - y)
        y = xs
        out[i, 0] = x
        out[i, 1] = y
        out[i, 2] = th
    state[0] = x
    state[1] = y
    state[2] = th


@njit(cache=True)
def le_norm_chunk(A, B, a, drift, state, omegas, renorm_every, inverse):
    """Accumulate the tangent-map product along a random orbit.

    state = [x, y, m00, m01, m10, m11, log_sum, count].  The product is
    rescaled by its max-abs entry every ``renorm_every`` steps and the log of
    each factor is added to ``log_sum``.  ``inverse`` iterates the inverse
    random maps (X, Y) -> (Y - w, f(Y) - X) with Jacobian [[0, 1], [-1, f'(Y)]].
    Returns False if a non-finite entry appeared.
    """
    x = state[0]
    y = state[1]
    m00 = state[2]
    m01 = state[3]
    m10 = state[4]
    m11 = state[5]
    log_sum = state[6]
    count = int(state[7])
    ok = True
    for i in range(omegas.size):
        w = omegas[i]
        if inverse:
            d = f_d1(y, A, B, drift)
            # J = [[0, 1], [-1, d]]
            n00 = m10
            n01 = m11
            n10 = -m00 + d * m10
            n11 = -m01 + d * m11
            xn = mod1(y - w)
            yn = mod1(f_val(y, A, B, a, drift) - x)
            x = xn
            y = yn
        else:
            xs = mod1(x + w)
            d = f_d1(xs, A, B, drift)
            # J = [[d, -1], [1, 0]]
            n00 = d * m00 - m10
            n01 = d * m01 - m11
            n10 = m00
            n11 = m01
            x = mod1(f_val(xs, A, B, a, drift) - y)
            y = xs
        m00 = n00
        m01 = n01
        m10 = n10
        m11 = n11
        count += 1
        if count % renorm_every == 0:
            s = max(max(abs(m00), abs(m01)), max(abs(m10), abs(m11)))
            if not (s > 0.0 and s < np.inf):
                ok = False
                break
            log_sum += math.log(s)
            m00 /= s
            m01 /= s
            m10 /= s
            m11 /= s
    state[0] = x
    state[1] = y
    state[2] = m00
    state[3] = m01
    state[4] = m10
    state[5] = m11
    state[6] = log_sum
    state[7] = count
    return ok


@njit(cache=True)
def furstenberg_chunk(A, B, a, drift, state, omegas, burn_in):
    """Time-sum of log|dF u_theta| along the projectivised chain.

    state = [x, y, theta, sum, count, n_used]; the first ``burn_in`` steps
    (counted over the whole run) advance the chain without contributing.
    """
    x = state[0]
    y = state[1]
    th = state[2]
    acc = state[3]
    count = int(state[4])
    used = int(state[5])
    for i in range(omegas.size):
        xs = mod1(x + omegas[i])
        d = f_d1(xs, A, B, drift)
        c = math.cos(th)
        s = math.sin(th)
        vx = d * c - s
        if count >= burn_in:
            acc += 0.5 * math.log(vx * vx + c * c)
            used += 1
        th = fold_angle(vx, c)
        x = mod1(f_val(xs, A, B, a, drift) - y)
        y = xs
        count += 1
    state[0] = x
    state[1] = y
    state[2] = th
    state[3] = acc
    state[4] = count
    state[5] = used


@njit(cache=True)
def proj_hist_chunk(A, B, a, drift, state, omegas, counts, burn_in, thin,
                    keep, keep_every, kept):
    """Histogram the projectivised chain on an (nx, ny, ntheta) grid.

    state = [x, y, theta, count, n_binned, n_kept].  Steps before ``burn_in``
    are skipped; afterwards every ``thin``-th state is binned, and every
    ``keep_every``-th binned state is copied into ``kept`` until it is full.
    """
    nx, ny, nt = counts.shape
    x = state[0]
    y = state[1]
    th = state[2]
    count = int(state[3])
    nb = int(state[4])
    nk = int(state[5])
    for i in range(omegas.size):
        xs = mod1(x + omegas[i])
        d = f_d1(xs, A, B, drift)
        c = math.cos(th)
        s = math.sin(th)
        th = fold_angle(d * c - s, c)
        x = mod1(f_val(xs, A, B, a, drift) - y)
        y = xs
        count += 1
        if count > burn_in and (count - burn_in) % thin == 0:
            ix = min(int(x * nx), nx - 1)
            iy = min(int(y * ny), ny - 1)
            it = min(int(th / PI * nt), nt - 1)
            counts[ix, iy, it] += 1
            if keep and nk < kept.shape[0] and nb % keep_every == 0:
                kept[nk, 0] = x
                kept[nk, 1] = y
                kept[nk, 2] = th
                nk += 1
            nb += 1
    state[0] = x
    state[1] = y
    state[2] = th
    state[3] = count
    state[4] = nb
    state[5] = nk
