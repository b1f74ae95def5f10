"""Hot inner loops.

Each kernel exists twice: a loop version compiled with numba and a
vectorised numpy version.  The public name points to the numba version
unless numba is unavailable or ``HEATSHEET_DISABLE_NUMBA`` is set.  Both
versions are importable directly (``*_loop`` / ``*_numpy``) so the
benchmark and the parity tests can compare them.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# sup of |bridge| between grid nodes


@njit(cache=True)
def bridge_sup_loop(values, u_max, u_min, var_rate, h):
    rows, n = values.shape
    out = np.empty(rows)
    scale = 2.0 * var_rate * h
    for r in range(rows):
        best = 0.0
        for j in range(n - 1):
            a = values[r, j]
            b = values[r, j + 1]
            diff2 = (b - a) * (b - a)
            top = 0.5 * (a + b + math.sqrt(diff2 - scale * math.log(u_max[r, j])))
            bot = 0.5 * (a + b - math.sqrt(diff2 - scale * math.log(u_min[r, j])))
            if top > best:
                best = top
            if -bot > best:
                best = -bot
        out[r] = best
    return out


def bridge_sup_numpy(values, u_max, u_min, var_rate, h):
    a = values[:, :-1]
    b = values[:, 1:]
    diff2 = (b - a) ** 2
    scale = 2.0 * var_rate * h
    top = 0.5 * (a + b + np.sqrt(diff2 - scale * np.log(u_max)))
    bot = 0.5 * (a + b - np.sqrt(diff2 - scale * np.log(u_min)))
    return np.maximum(top.max(axis=1), (-bot).max(axis=1)).clip(min=0.0)


# ---------------------------------------------------------------------------
# Riesz kernel matrix


@njit(cache=True)
def riesz_matrix_loop(points, beta, diag):
    m, d = points.shape
    out = np.empty((m, m))
    for i in range(m):
        out[i, i] = diag
        for j in range(i + 1, m):
            r2 = 0.0
            for c in range(d):
                delta = points[i, c] - points[j, c]
                r2 += delta * delta
            r = math.sqrt(r2)
            if beta > 0:
                val = r ** (-beta) if r > 0 else np.inf
            elif beta == 0:
                val = math.log(math.e / r) if r > 0 else np.inf
                if val < 0:
                    val = 0.0
            else:
                val = 1.0
            out[i, j] = val
            out[j, i] = val
    return out


def riesz_matrix_numpy(points, beta, diag):
    diff = points[:, None, :] - points[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    with np.errstate(divide="ignore"):
        if beta > 0:
            out = np.where(r > 0, r ** (-beta), np.inf)
        elif beta == 0:
            out = np.where(r > 0, np.maximum(np.log(np.e / np.where(r > 0, r, 1.0)), 0.0), np.inf)
        else:
            out = np.ones_like(r)
    np.fill_diagonal(out, diag)
    return out


# ---------------------------------------------------------------------------
# Frank-Wolfe with away steps for min w'Kw over the probability simplex


@njit(cache=True)
def frank_wolfe_loop(kmat, w0, max_iter, rel_tol, refresh):
    m = w0.shape[0]
    w = w0.copy()
    kw = kmat @ w
    energy = w @ kw
    history = np.empty(max_iter + 1)
    history[0] = energy
    gap = np.inf
    it = 0
    while it < max_iter:
        s = 0
        v = -1
        gmin = np.inf
        gmax = -np.inf
        for i in range(m):
            if kw[i] < gmin:
                gmin = kw[i]
                s = i
            if w[i] > 0.0 and kw[i] > gmax:
                gmax = kw[i]
                v = i
        # gradient is 2*kw
        gap = 2.0 * (energy - gmin)
        if gap <= rel_tol * energy:
            break
        gap_away = 2.0 * (gmax - energy)
        if gap >= gap_away:
            slope = -gap
            curv = kmat[s, s] - 2.0 * kw[s] + energy
            gmax_step = 1.0
        else:
            slope = -gap_away
            curv = energy - 2.0 * kw[v] + kmat[v, v]
            gmax_step = w[v] / (1.0 - w[v]) if w[v] < 1.0 else np.inf
        step = gmax_step
        if curv > 0:
            step = min(-slope / (2.0 * curv), gmax_step)
        if gap >= gap_away:
            for i in range(m):
                w[i] *= 1.0 - step
                kw[i] = (1.0 - step) * kw[i] + step * kmat[i, s]
            w[s] += step
        else:
            for i in range(m):
                w[i] *= 1.0 + step
                kw[i] = (1.0 + step) * kw[i] - step * kmat[i, v]
            w[v] -= step
            if step == gmax_step:
                w[v] = 0.0
        it += 1
        if it % refresh == 0:
            total = w.sum()
            w /= total
            kw = kmat @ w
        energy = w @ kw
        history[it] = energy
    return w, energy, gap, it, history[: it + 1]


def frank_wolfe_numpy(kmat, w0, max_iter, rel_tol, refresh):
    w = w0.copy()
    kw = kmat @ w
    energy = float(w @ kw)
    history = [energy]
    gap = np.inf
    it = 0
    while it < max_iter:
        s = int(np.argmin(kw))
        active = np.flatnonzero(w > 0.0)
        v = int(active[np.argmax(kw[active])])
        gap = 2.0 * (energy - kw[s])
        if gap <= rel_tol * energy:
            break
        gap_away = 2.0 * (kw[v] - energy)
        if gap >= gap_away:
            slope = -gap
            curv = kmat[s, s] - 2.0 * kw[s] + energy
            gmax_step = 1.0
        else:
            slope = -gap_away
            curv = energy - 2.0 * kw[v] + kmat[v, v]
            gmax_step = w[v] / (1.0 - w[v]) if w[v] < 1.0 else np.inf
        step = min(-slope / (2.0 * curv), gmax_step) if curv > 0 else gmax_step
        if gap >= gap_away:
            w *= 1.0 - step
            kw = (1.0 - step) * kw + step * kmat[:, s]
            w[s] += step
        else:
            w *= 1.0 + step
            kw = (1.0 + step) * kw - step * kmat[:, v]
            w[v] -= step
            if step == gmax_step:
                w[v] = 0.0
        it += 1
        if it % refresh == 0:
            w /= w.sum()
            kw = kmat @ w
        energy = float(w @ kw)
        history.append(energy)
    return w, energy, gap, it, np.asarray(history)


# ---------------------------------------------------------------------------
# distance from field values to a ball


@njit(cache=True)
def ball_distance_loop(values, center, radius):
    rows, n, d = values.shape
    out = np.empty(rows)
    for r in range(rows):
        best = np.inf
        for j in range(n):
            acc = 0.0
            for c in range(d):
                delta = values[r, j, c] - center[c]
                acc += delta * delta
            if acc < best:
                best = acc
        dist = math.sqrt(best) - radius
        out[r] = dist if dist > 0.0 else 0.0
    return out


def ball_distance_numpy(values, center, radius):
    dist = np.sqrt(np.min(np.sum((values - center) ** 2, axis=-1), axis=-1)) - radius
    return np.maximum(dist, 0.0)


if USE_NUMBA:
    bridge_sup = bridge_sup_loop
    riesz_matrix = riesz_matrix_loop
    frank_wolfe = frank_wolfe_loop
    ball_distance = ball_distance_loop
else:
    bridge_sup = bridge_sup_numpy
    riesz_matrix = riesz_matrix_numpy
    frank_wolfe = frank_wolfe_numpy
    ball_distance = ball_distance_numpy
