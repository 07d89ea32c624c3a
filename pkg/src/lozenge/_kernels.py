"""Event-loop kernels shared by the compiled and the pure-Python backends.

State arrays follow ``tiling.TilingState``: ``pos`` is ``(L, N)`` doubled
positions, ``right``/``left`` the interlacing offsets, ``mobile`` a 0/1 mask.
Particles are addressed by the flat index ``p = c * N + j``.
"""
import math

import numpy as np

from ._accel import jit

DYN_I = 0
DYN_II = 1
SINGLE_FLIP = 2
ASYMMETRIC = 3

STOP_UNIFORMS = 0
STOP_TIME = 1
STOP_EVENTS = 2
STOP_LOG_FULL = 3
STOP_OVERFLOW = 4
STOP_AUDIT = 5


@jit
def ext_pos(pos, L, N, c, j):
    t = c // L
    c0 = c - t * L
    q = j // N
    r = j - q * N
    return pos[c0, r] + 2 * L * q + L * t


@jit
def bounds(pos, right, left, L, N, c, j):
    dr = right[c]
    dl = left[c]
    ra = ext_pos(pos, L, N, c + 1, j - 1 + dr)
    rb = ext_pos(pos, L, N, c + 1, j + dr)
    la = ext_pos(pos, L, N, c - 1, j - 1 + dl)
    lb = ext_pos(pos, L, N, c - 1, j + dl)
    lo = max(ra, la) + 1
    hi = min(rb, lb) - 1
    return lo, hi


@jit
def _weight(kind, y, size, B):
    # rate of a jump by y (in units of n) for a particle whose range has `size` sites
    if kind == DYN_I:
        w = 1.0 / (2.0 * abs(y))
    elif kind == DYN_II:
        w = 1.0 / size
    elif kind == SINGLE_FLIP:
        w = 1.0 if abs(y) == 1 else 0.0
    else:
        w = 1.0 if y > 0 else 0.0
    if B != 0.0 and w != 0.0:
        w *= math.exp(0.5 * B * y)
    return w


@jit
def total_rate(kind, m, lo, hi, B):
    below = (m - lo) // 2
    above = (hi - m) // 2
    size = below + above + 1
    acc = 0.0
    for y in range(-below, above + 1):
        if y != 0:
            acc += _weight(kind, y, size, B)
    return acc


@jit
def choose_jump(kind, m, lo, hi, B, x):
    """Jump ``y`` selected by the cumulative weight ``x`` in ``[0, total)``."""
    below = (m - lo) // 2
    above = (hi - m) // 2
    size = below + above + 1
    last = 0
    for y in range(-below, above + 1):
        if y == 0:
            continue
        w = _weight(kind, y, size, B)
        if w == 0.0:
            continue
        last = y
        if x < w:
            return y
        x -= w
    return last


@jit
def tree_update(tree, size, p, value):
    i = size + p
    tree[i] = value
    i //= 2
    while i >= 1:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i //= 2


@jit
def tree_build(tree, size):
    for i in range(size - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@jit
def tree_sample(tree, size, x):
    """Leaf index whose cumulative slot contains ``x``; never returns an empty leaf."""
    i = 1
    while i < size:
        a = tree[2 * i]
        if (x < a and a > 0.0) or tree[2 * i + 1] <= 0.0:
            i = 2 * i
        else:
            x -= a
            i = 2 * i + 1
    return i - size


@jit
def particle_rate(kind, B, pos, right, left, mobile, L, N, c, j):
    if mobile[c, j] == 0:
        return 0.0
    lo, hi = bounds(pos, right, left, L, N, c, j)
    return total_rate(kind, pos[c, j], lo, hi, B)


@jit
def fill_rates(kind, B, pos, right, left, mobile, L, N, tree, size):
    tree[:] = 0.0
    for c in range(L):
        for j in range(N):
            tree[size + c * N + j] = particle_rate(kind, B, pos, right, left, mobile, L, N, c, j)
    tree_build(tree, size)


@jit
def _refresh(kind, B, pos, right, left, mobile, L, N, tree, size, c, j):
    tree_update(tree, size, c * N + j, particle_rate(kind, B, pos, right, left, mobile, L, N, c, j))


@jit
def refresh_around(kind, B, pos, right, left, mobile, L, N, tree, size, c, j):
    """Refresh the mover and the four particles that use it as an interlacing neighbour."""
    _refresh(kind, B, pos, right, left, mobile, L, N, tree, size, c, j)
    cr = (c + 1) % L
    cl = (c - 1) % L
    for jj in (j - left[cr], j + 1 - left[cr]):
        _refresh(kind, B, pos, right, left, mobile, L, N, tree, size, cr, jj % N)
    for jj in (j - right[cl], j + 1 - right[cl]):
        _refresh(kind, B, pos, right, left, mobile, L, N, tree, size, cl, jj % N)


@jit
def audit_rates(kind, B, pos, right, left, mobile, L, N, tree, size):
    """Largest relative mismatch between stored and recomputed leaf rates."""
    worst = 0.0
    for c in range(L):
        for j in range(N):
            r = particle_rate(kind, B, pos, right, left, mobile, L, N, c, j)
            d = abs(r - tree[size + c * N + j]) / max(1.0, r)
            if d > worst:
                worst = d
    return worst


@jit
def advance(
    kind, B, pos, right, left, mobile, L, N, tree, size, uniforms, start, t, t_end, max_events,
    log_t, log_p, log_y, log_start, audit_every, audit_tol,
):
    """Run events until a stop condition; three uniforms are consumed per event.

    Returns ``(t, events, next_uniform, next_log, status)``.  When the next
    clock ring would pass ``t_end`` the time is set to ``t_end`` and the
    pending event discarded along with its uniforms, which is exact by
    memorylessness.
    """
    events = 0
    k = start
    n_log = log_start
    cap = log_t.shape[0]
    while True:
        if events >= max_events:
            return t, events, k, n_log, STOP_EVENTS
        if k + 3 > uniforms.shape[0]:
            return t, events, k, n_log, STOP_UNIFORMS
        if cap > 0 and n_log >= cap:
            return t, events, k, n_log, STOP_LOG_FULL
        total = tree[1]
        if not (total < 1e300):
            return t, events, k, n_log, STOP_OVERFLOW
        if total <= 0.0:
            return t_end, events, k, n_log, STOP_TIME
        dt = -math.log(1.0 - uniforms[k]) / total
        if t + dt > t_end:
            # the pending event's draws are spent; reusing them would bias the next wait
            return t_end, events, k + 3, n_log, STOP_TIME
        t += dt
        p = tree_sample(tree, size, uniforms[k + 1] * total)
        c = p // N
        j = p - c * N
        m = pos[c, j]
        lo, hi = bounds(pos, right, left, L, N, c, j)
        rate = tree[size + p]
        y = choose_jump(kind, m, lo, hi, B, uniforms[k + 2] * rate)
        k += 3
        pos[c, j] = m + 2 * y
        refresh_around(kind, B, pos, right, left, mobile, L, N, tree, size, c, j)
        if cap > 0:
            log_t[n_log] = t
            log_p[n_log] = p
            log_y[n_log] = y
            n_log += 1
        events += 1
        if audit_every > 0 and events % audit_every == 0:
            if audit_rates(kind, B, pos, right, left, mobile, L, N, tree, size) > audit_tol:
                return t, events, k, n_log, STOP_AUDIT


@jit
def heat_bath_pair(pos_a, pos_b, right, left, mobile, L, N, picks, us):
    """Random-scan heat-bath updates applied to two states with a shared stream.

    Each update resamples particle ``picks[i]`` uniformly on its range using
    the quantile ``lo + 2 floor(u |I|)``, which preserves componentwise order.
    """
    for i in range(picks.shape[0]):
        p = picks[i]
        c = p // N
        j = p - c * N
        if mobile[c, j] == 0:
            continue
        for pos in (pos_a, pos_b):
            lo, hi = bounds(pos, right, left, L, N, c, j)
            size = (hi - lo) // 2 + 1
            pos[c, j] = lo + 2 * min(int(us[i] * size), size - 1)


@jit
def range_arrays(pos, right, left, L, N, lo_out, hi_out):
    for c in range(L):
        for j in range(N):
            lo, hi = bounds(pos, right, left, L, N, c, j)
            lo_out[c, j] = lo
            hi_out[c, j] = hi


def tree_size(n):
    size = 1
    while size < n:
        size *= 2
    return size


def new_tree(n):
    size = tree_size(n)
    return np.zeros(2 * size, dtype=np.float64), size
