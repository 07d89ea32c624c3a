"""Lozenge tilings of the torus as interlaced columns of particles.

A particle is a horizontal lozenge.  Its column is ``c = u1 - u2`` and its
vertical position ``n = (u1 + u2) / 2`` for the top corner ``u``; positions
are stored doubled (``m = 2 n``) so that they are integers with ``m = c (mod 2)``.
Larger ``m`` is lower on the page: the vertical direction is ``e1 + e2``.

The torus of side ``L`` is the quotient by ``L e1`` and ``L e2``.  Columns
``0 .. L-1`` are stored; shifting by ``L e1`` maps column ``c`` to ``c + L``
and adds ``L`` to every doubled position.  Inside a column the ``N`` stored
positions are increasing and span less than one vertical period ``2 L``;
the particle with label ``j`` outside ``0 .. N-1`` is the periodic image
``pos[c, j mod N] + 2 L floor(j / N)``.  Labels never change under legal
moves, so positions are never renormalized and the height function can be
read off directly.

Between two consecutive particles of a column there is exactly one particle
of each adjacent column.  ``right[c]`` is the label of the particle of column
``c + 1`` lying between labels 0 and 1 of column ``c``; ``left[c]`` is the
same for column ``c - 1``.  These offsets are fixed at construction.
"""
import json
from dataclasses import dataclass

import numpy as np

from .geometry import check_slope

SNAPSHOT_FORMAT = "lozenge-tiling"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class ParticleRef:
    column: int
    rank: int


@dataclass(frozen=True)
class DomainSpec:
    """Torus of side ``L``; a box additionally freezes particles outside a window.

    ``window = (c_lo, c_hi, m_lo, m_hi)`` keeps particles with
    ``c_lo <= c < c_hi`` and ``m_lo <= m <= m_hi`` mobile.
    """

    kind: str
    L: int
    window: tuple = None

    def to_dict(self):
        return {"kind": self.kind, "L": self.L, "window": list(self.window) if self.window else None}

    @classmethod
    def from_dict(cls, d):
        win = d.get("window")
        return cls(d["kind"], int(d["L"]), tuple(int(x) for x in win) if win else None)


@dataclass
class ValidationReport:
    ok: bool
    kind: str = ""
    message: str = ""
    refs: tuple = ()

    def __bool__(self):
        return self.ok


class InvalidTiling(ValueError):
    pass


class TilingState:
    """Particle configuration on the torus (optionally with frozen particles)."""

    def __init__(self, domain, pos, right, left, mobile, anchor):
        self.domain = domain
        self.L = domain.L
        self.pos = pos
        self.N = pos.shape[1]
        self.right = right
        self.left = left
        self.mobile = mobile
        self.anchor = int(anchor)

    # construction -----------------------------------------------------------------

    @classmethod
    def from_columns(cls, L, columns, mobile=None, anchor=None, domain=None, anchor_height=0):
        """Build a state from per-column doubled positions.

        ``anchor`` fixes the height constant directly; otherwise it is chosen
        so that the vertex ``(0, 0)`` has height ``anchor_height``.
        """
        pos = np.array(columns, dtype=np.int64)
        if pos.ndim != 2 or pos.shape[0] != L or pos.shape[1] < 1:
            raise InvalidTiling(f"expected {L} columns with the same positive particle count")
        domain = domain or DomainSpec("torus", L)
        report = validate_positions(L, pos)
        if not report:
            raise InvalidTiling(f"{report.kind}: {report.message}")
        right = _offsets(L, pos, +1)
        left = _offsets(L, pos, -1)
        if mobile is None:
            mobile = np.ones(pos.shape, dtype=bool)
        state = cls(domain, pos, right, left, np.asarray(mobile, dtype=bool), 0)
        if anchor is None:
            anchor = 2 * anchor_height + 2 * int(state.label_at_or_below(0, 0))
        state.anchor = int(anchor)
        return state

    def copy(self):
        return TilingState(
            self.domain, self.pos.copy(), self.right.copy(), self.left.copy(), self.mobile.copy(), self.anchor
        )

    # periodic images ----------------------------------------------------------------

    def ext_pos(self, c, j):
        """Doubled position of label ``j`` in (unwrapped) column ``c``."""
        L, N = self.L, self.N
        t, c0 = np.divmod(np.asarray(c), L)
        q, r = np.divmod(np.asarray(j), N)
        return self.pos[c0, r] + 2 * L * q + L * t

    def label_at_or_below(self, c, m):
        """Smallest label whose position in column ``c`` is ``>= m`` (vectorized)."""
        L, N = self.L, self.N
        c = np.asarray(c)
        m = np.asarray(m)
        t, c0 = np.divmod(c, L)
        m0 = m - L * t
        q = np.floor_divide(m0 - self.pos[c0, 0], 2 * L)
        red = m0 - 2 * L * q
        if np.ndim(c0) == 0:
            r = np.searchsorted(self.pos[int(c0)], red, side="left")
        else:
            c0b, redb = np.broadcast_arrays(c0, red)
            r = np.empty(c0b.shape, dtype=np.int64)
            for col in np.unique(c0b):
                sel = c0b == col
                r[sel] = np.searchsorted(self.pos[col], redb[sel], side="left")
        return q * N + r

    # counts ---------------------------------------------------------------------------

    @property
    def winding(self):
        """Height gained along ``L e1``; equals the number of type-1 lozenges per row."""
        return int(np.sum(self.right))

    def slope(self):
        """Exact lozenge densities ``(rho1, rho2)`` of this torus."""
        h1 = self.winding
        h2 = self.L - self.N - h1
        return np.array([h1 / self.L, h2 / self.L])

    def particles(self):
        return [ParticleRef(c, j) for c in range(self.L) for j in range(self.N)]

    def n(self, ref):
        return self.pos[ref.column, ref.rank] / 2.0

    def column_constant(self, c):
        """Doubled height constant of column ``c`` (``0 <= c < L``)."""
        c = np.asarray(c)
        csum = np.concatenate([[0], np.cumsum(2 * self.right - 1)])
        return self.anchor + csum[c]

    def __eq__(self, other):
        return (
            isinstance(other, TilingState)
            and self.domain == other.domain
            and np.array_equal(self.pos, other.pos)
            and np.array_equal(self.mobile, other.mobile)
            and self.anchor == other.anchor
        )

    # snapshots -----------------------------------------------------------------------

    def to_dict(self):
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "domain": self.domain.to_dict(),
            "columns": self.pos.tolist(),
            "mobile": None if self.mobile.all() else self.mobile.astype(int).tolist(),
            "anchor": self.anchor,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != SNAPSHOT_FORMAT or d.get("version") != SNAPSHOT_VERSION:
            raise ValueError("unrecognized snapshot format")
        domain = DomainSpec.from_dict(d["domain"])
        mobile = None if d.get("mobile") is None else np.array(d["mobile"], dtype=bool)
        return cls.from_columns(domain.L, d["columns"], mobile=mobile, anchor=d["anchor"], domain=domain)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


# validation ----------------------------------------------------------------------------


def _ext_raw(L, pos, c, j):
    N = pos.shape[1]
    t, c0 = np.divmod(np.asarray(c), L)
    q, r = np.divmod(np.asarray(j), N)
    return pos[c0, r] + 2 * L * q + L * t


def validate_positions(L, pos):
    """Check parity, ordering and strip-by-strip interlacing of raw positions."""
    if L % 2:
        return ValidationReport(False, "domain", f"torus side {L} must be even")
    L, N = pos.shape[0], pos.shape[1]
    cols = np.arange(L)[:, None]
    bad = (pos - cols) % 2 != 0
    if bad.any():
        c, j = np.argwhere(bad)[0]
        return ValidationReport(False, "parity", f"column {c} label {j} has doubled position {pos[c, j]}", (ParticleRef(int(c), int(j)),))
    gaps = np.diff(pos, axis=1)
    if (gaps <= 0).any():
        c, j = np.argwhere(gaps <= 0)[0]
        return ValidationReport(
            False, "strictly increasing", f"column {c}: labels {j} and {j + 1} out of order", (ParticleRef(int(c), int(j)), ParticleRef(int(c), int(j + 1)))
        )
    wrap = pos[:, 0] + 2 * L - pos[:, -1]
    if (wrap <= 0).any():
        c = int(np.argmax(wrap <= 0))
        return ValidationReport(False, "strictly increasing", f"column {c} spans more than one period", (ParticleRef(c, N - 1),))
    own = np.arange(-N, 2 * N + 1)
    other = np.arange(-3 * N, 4 * N + 1)
    for c in range(L):
        a = _ext_raw(L, pos, c, own)
        b = _ext_raw(L, pos, c + 1, other)
        inside = np.searchsorted(b, a[1:], side="left") - np.searchsorted(b, a[:-1], side="right")
        if (inside != 1).any():
            k = int(np.argmax(inside != 1))
            j = (own[k]) % N
            return ValidationReport(
                False,
                "interlacement",
                f"{inside[k]} particles of column {(c + 1) % L} between labels {own[k]} and {own[k] + 1} of column {c}",
                (ParticleRef(c, int(j)), ParticleRef(c, int((j + 1) % N))),
            )
    return ValidationReport(True)


def validate(state):
    """Check every structural invariant of ``state``; returns a ``ValidationReport``."""
    rep = validate_positions(state.L, state.pos)
    if not rep:
        return rep
    try:
        right = _offsets(state.L, state.pos, +1)
        left = _offsets(state.L, state.pos, -1)
    except InvalidTiling as exc:
        return ValidationReport(False, "interlacement", str(exc))
    if not np.array_equal(right, state.right) or not np.array_equal(left, state.left):
        return ValidationReport(False, "labels", "neighbour offsets changed; a particle crossed a period boundary")
    return ValidationReport(True)


def _offsets(L, pos, side):
    N = pos.shape[1]
    out = np.empty(L, dtype=np.int64)
    cand = np.arange(-3 * N, 4 * N + 1)
    for c in range(L):
        lo, hi = _ext_raw(L, pos, c, 0), _ext_raw(L, pos, c, 1)
        b = _ext_raw(L, pos, c + side, cand)
        hit = cand[(b > lo) & (b < hi)]
        if hit.size != 1:
            raise InvalidTiling(f"column {c} does not interlace with column {c + side}")
        out[c] = hit[0]
    return out


# local structure ----------------------------------------------------------------------


def neighbour_positions(state, c, j):
    """Doubled positions of the interlacing neighbours: (right above, right below, left above, left below)."""
    c = np.asarray(c)
    j = np.asarray(j)
    dr = state.right[c % state.L]
    dl = state.left[c % state.L]
    return (
        state.ext_pos(c + 1, j - 1 + dr),
        state.ext_pos(c + 1, j + dr),
        state.ext_pos(c - 1, j - 1 + dl),
        state.ext_pos(c - 1, j + dl),
    )


def all_ranges(state):
    """Doubled bounds ``(m_minus, m_plus)`` of every particle as ``(L, N)`` arrays."""
    c = np.arange(state.L)[:, None]
    j = np.arange(state.N)[None, :]
    ra, rb, la, lb = neighbour_positions(state, c, j)
    return np.maximum(ra, la) + 1, np.minimum(rb, lb) - 1


def particle_range_doubled(state, ref):
    ra, rb, la, lb = neighbour_positions(state, ref.column, ref.rank)
    return int(max(ra, la) + 1), int(min(rb, lb) - 1)


def particle_range(state, ref):
    """``(n_minus, n_plus)``: the extreme positions ``ref`` can take with all else frozen."""
    lo, hi = particle_range_doubled(state, ref)
    return lo / 2.0, hi / 2.0


def particle_range_bruteforce(state, ref):
    """Oracle for ``particle_range``: move the particle outward until the tiling breaks."""
    c, j = ref.column, ref.rank
    m = int(state.pos[c, j])

    def legal(k):
        trial = state.copy()
        trial.pos[c, j] = k
        try:
            return bool(validate(trial))
        except InvalidTiling:
            return False

    hi = m
    while legal(hi + 2):
        hi += 2
    lo = m
    while legal(lo - 2):
        lo -= 2
    return lo / 2.0, hi / 2.0


def _site(state, u):
    c = int(u[0]) - int(u[1])
    m = int(u[0]) + int(u[1])
    t, c0 = divmod(c, state.L)
    return c0, m - state.L * t


def event_X(state, u):
    """The particle ``b`` of ``u``'s column whose range contains ``u``'s height, or ``None``."""
    c, m = _site(state, u)
    below = int(state.label_at_or_below(c, m))
    for lab in (below, below - 1):
        q, r = divmod(lab, state.N)
        lo, hi = particle_range_doubled(state, ParticleRef(c, r))
        shift = 2 * state.L * q
        if lo + shift <= m <= hi + shift:
            return ParticleRef(c, r)
    return None


def _nearest_above(state, c, m):
    # doubled position of the closest particle of column c strictly above height m
    lab = state.label_at_or_below(c, m)
    return int(state.ext_pos(c, lab - 1))


def adjacent_lozenge_types(state, u):
    """Types of the lozenges left and right of the vertical edge below ``u``.

    Returns ``(3, 3)`` when the edge crosses a horizontal lozenge.  Within a
    strip between columns ``c`` and ``c + 1`` the vertical lozenges between a
    column-``c`` particle above and a column-``c+1`` particle below are of
    type 1 (they cross ``e1`` edges), the others of type 2.
    """
    c, m = _site(state, u)
    lab = int(state.label_at_or_below(c, m))
    if int(state.ext_pos(c, lab)) == m:
        return 3, 3
    own = _nearest_above(state, c, m)
    right_type = 1 if own > _nearest_above(state, c + 1, m) else 2
    left_type = 2 if own > _nearest_above(state, c - 1, m) else 1
    return left_type, right_type


def event_X_edge_type(state, u):
    """Edge-type characterization of the same event: mixed type-1/type-2 sides or a type-3 crossing."""
    left_type, right_type = adjacent_lozenge_types(state, u)
    if left_type == 3 or left_type != right_type:
        c, m = _site(state, u)
        lab = int(state.label_at_or_below(c, m))
        for cand in (lab, lab - 1):
            q, r = divmod(cand, state.N)
            lo, hi = particle_range_doubled(state, ParticleRef(c, r))
            if lo + 2 * state.L * q <= m <= hi + 2 * state.L * q:
                return ParticleRef(c, r)
        raise AssertionError("edge event realized but no particle can reach it")
    return None


def lozenge_counts(state):
    """Numbers of type-1, type-2 and type-3 lozenges on the torus, strip by strip."""
    L, N = state.L, state.N
    c = np.arange(L)[:, None]
    j = np.arange(N)[None, :]
    own = state.ext_pos(c, j)
    nxt = state.ext_pos(c, j + 1)
    mid = state.ext_pos(c + 1, j + state.right[:, None])
    n1 = int(np.sum(mid - own - 1) // 2)
    n2 = int(np.sum(nxt - mid - 1) // 2)
    return n1, n2, L * N


def slope_asymmetry_estimate(state):
    """Mean offset of each particle from the midpoint of its right-column neighbours' gap, per unit height."""
    L, N = state.L, state.N
    c = np.arange(L)[:, None]
    j = np.arange(N)[None, :]
    own = state.ext_pos(c, j)
    nxt = state.ext_pos(c, j + 1)
    mid = state.ext_pos(c + 1, j + state.right[:, None])
    return float(np.sum(2 * mid - own - nxt) / 4.0) / float(np.sum(nxt - own) / 2.0)


# constructors -------------------------------------------------------------------------


def _torus_counts(L, rho):
    if L % 2 or L < 4:
        raise ValueError(f"torus side must be an even integer >= 4, got {L}")
    rho = check_slope(rho)
    n3 = int(round((1.0 - rho[0] - rho[1]) * L))
    if n3 < 1 or n3 >= L:
        raise ValueError(f"slope {tuple(rho)} leaves {n3} particles per column at L={L}")
    h1 = int(min(max(round(rho[0] * L), 0), L - n3))
    return n3, h1, L - n3 - h1


def from_height_function(L, height, anchor_height=None):
    """Read particles off an integer height function ``height(u1, u2)`` given as a vectorized callable.

    Particles sit on vertical edges along which the height does not change.
    The height must be quasi-periodic under ``L e1`` and ``L e2``.
    """
    cols = []
    for c in range(L):
        m = c + 2 * np.arange(L)
        u1, u2 = (m + c) // 2, (m - c) // 2
        flat = height(u1 + 1, u2 + 1) == height(u1, u2)
        cols.append(m[flat])
    sizes = {len(x) for x in cols}
    if len(sizes) != 1:
        raise InvalidTiling(f"height function gives unequal particle counts per column: {sorted(sizes)}")
    h00 = int(height(np.array([0]), np.array([0]))[0]) if anchor_height is None else anchor_height
    return TilingState.from_columns(L, cols, anchor_height=h00)


def new_torus(L, rho):
    """Deterministic staircase state with densities as close to ``rho`` as ``L`` allows."""
    n3, h1, h2 = _torus_counts(L, rho)
    return from_height_function(L, lambda u1, u2: np.floor_divide(h1 * u1 + h2 * u2, L), anchor_height=0)


def new_box(L, rho, window):
    """Torus state whose particles outside ``window`` are frozen."""
    base = new_torus(L, rho)
    c_lo, c_hi, m_lo, m_hi = window
    c = np.arange(L)[:, None]
    mobile = (c >= c_lo) & (c < c_hi) & (base.pos >= m_lo) & (base.pos <= m_hi)
    domain = DomainSpec("box", L, tuple(int(x) for x in window))
    return TilingState.from_columns(L, base.pos, mobile=mobile, anchor=base.anchor, domain=domain)


# height and level-set fields -------------------------------------------------------------


def height_at(state, u1, u2):
    """Height ``h(u)`` at arbitrary lattice vertices (vectorized, unwrapped)."""
    u1 = np.asarray(u1, dtype=np.int64)
    u2 = np.asarray(u2, dtype=np.int64)
    c = u1 - u2
    m = u1 + u2
    t, c0 = np.divmod(c, state.L)
    m0 = m - state.L * t
    lab = state.label_at_or_below(c0, m0)
    return (m0 - 2 * lab + state.column_constant(c0)) // 2 + t * state.winding


@dataclass
class HeightField:
    """Heights on the fundamental domain ``0 <= u1, u2 < L``, indexed ``values[u1, u2]``."""

    L: int
    values: np.ndarray
    period_e1: int
    period_e2: int

    def at(self, u1, u2):
        u1 = np.asarray(u1)
        u2 = np.asarray(u2)
        q1, r1 = np.divmod(u1, self.L)
        q2, r2 = np.divmod(u2, self.L)
        return self.values[r1, r2] + q1 * self.period_e1 + q2 * self.period_e2


def height_field(state):
    L = state.L
    u1, u2 = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    h1 = state.winding
    return HeightField(L, height_at(state, u1, u2), h1, L - state.N - h1)


def particles_from_height(field, N=None):
    """Rebuild per-column doubled positions from a height field (one vertical period each)."""
    L = field.L
    cols = []
    for c in range(L):
        m = c + 2 * np.arange(L)
        u1, u2 = (m + c) // 2, (m - c) // 2
        cols.append(m[field.at(u1 + 1, u2 + 1) == field.at(u1, u2)])
    return cols


@dataclass
class LevelSetField:
    """Level lines ``S(v1, lam)`` with ``v1 = -c`` and half-integer level ``v2 = lam + 1/2``.

    ``base[c, k]`` holds ``S(-c, first[c] + k)`` for ``k < P = L - N``; other
    levels and columns follow from the two lattice periods.
    """

    L: int
    N: int
    winding: int
    first: np.ndarray
    base: np.ndarray

    @property
    def period(self):
        return self.L - self.N

    def value(self, v1, lam):
        v1 = np.asarray(v1, dtype=np.int64)
        lam = np.asarray(lam, dtype=np.int64)
        c = -v1
        t, c0 = np.divmod(c, self.L)
        # shifting the column by L moves levels by the winding and S by 2 winding - L
        lam0 = lam + t * self.winding
        q, k = np.divmod(lam0 - self.first[c0], self.period)
        return self.base[c0, k] + 2 * self.N * q + t * (2 * self.winding - self.L)

    def grid(self, lam_lo, count):
        """``S`` on columns ``0..L-1`` (rows, ``v1 = -c``) and levels ``lam_lo .. lam_lo+count-1``."""
        c = np.arange(self.L)[:, None]
        lam = lam_lo + np.arange(count)[None, :]
        return self.value(-c, lam)


def levelset_field(state):
    L, N = state.L, state.N
    P = L - N
    first = np.empty(L, dtype=np.int64)
    base = np.empty((L, P), dtype=np.int64)
    for c in range(L):
        m = state.pos[c, 0] + 2 * np.arange(L)
        free = m[~np.isin(m, state.pos[c])]
        u1, u2 = (free + c) // 2, (free - c) // 2
        h0 = height_at(state, u1, u2)
        lam = -h0 - 1
        shat = 2 * h0 - free
        order = np.argsort(lam)
        first[c] = lam[order[0]]
        base[c] = shat[order]
    return LevelSetField(L, N, state.winding, first, base)


def particles_from_levelset(field):
    """Rebuild per-column doubled positions from level lines."""
    cols = []
    for c in range(field.L):
        lam = field.first[c] + np.arange(field.period)
        free = 2 * (-lam - 1) - field.value(-c, lam)
        start = free.min()
        start = start - ((start - c) % 2)
        m = start + 2 * np.arange(field.L)
        cols.append(np.sort(m[~np.isin(m, free)]))
    return cols


def extremum_stats(field, v1, lam):
    """Local-extremum indicator, orientation and depth of the level line at ``(v1, lam)``.

    ``eps`` is +1 at a local minimum of ``v1 -> S(v1, lam)`` and -1 at a
    maximum; ``k`` is the number of levels, stepping in the direction ``eps``,
    until ``S`` at ``v1`` changes.
    """
    here = int(field.value(v1, lam))
    lap = int(field.value(v1 + 1, lam)) + int(field.value(v1 - 1, lam)) - 2 * here
    if lap == 0:
        return 0, 0, 0
    eps = lap // 2
    k = 1
    while int(field.value(v1, lam + eps * k)) == here:
        k += 1
    return 1, eps, k


def levelset_site(state, u):
    """Level-set coordinates ``(v1, lam)`` of the vertical edge below vertex ``u``."""
    c = int(u[0]) - int(u[1])
    return -c, int(-height_at(state, u[0], u[1]) - 1)


def from_levelset_function(L, N, winding, surface):
    """Torus state whose level lines follow ``surface(v1, v2)`` as closely as parity allows.

    ``surface`` is evaluated at ``(v1, lam + 1/2)`` in lattice units and must
    be quasi-periodic: ``+2N`` under ``lam -> lam + (L - N)`` and
    ``+ (L - 2 winding)`` under ``(v1, lam) -> (v1 + L, lam + winding)``.
    Level values are ``v1 + 2 floor((surface - v1) / 2 + 1/2)``, the nearest
    integer of the right parity; no repair pass is needed when the surface's
    ``v1``-slope lies in ``(-1, 1)`` and its level slope is positive.
    """
    P = L - N
    lam = np.arange(P)
    cols = []
    free_ref = None
    for c in range(L):
        v1 = -c
        s = np.asarray(surface(np.full(P, float(v1)), lam + 0.5), dtype=float)
        level = v1 + 2 * np.floor((s - v1) / 2.0 + 0.5).astype(np.int64)
        free = -2 * lam - 2 - level
        base = free.min()
        m = base + 2 * np.arange(L)
        taken = np.isin(m, free)
        if taken.sum() != P:
            raise InvalidTiling(f"level lines collide in column {c}")
        cols.append(m[~taken])
        if c == 0:
            free_ref = (int(free[0]), int(lam[0]))
    state = TilingState.from_columns(L, cols, anchor=0)
    if state.winding != winding:
        raise InvalidTiling(f"surface realizes winding {state.winding}, expected {winding}")
    # fix the height constant so that the free edge below (column 0, free_ref[0]) sits at level free_ref[1]
    m0, lam0 = free_ref
    h_target = -lam0 - 1
    u1, u2 = m0 // 2, m0 // 2
    h_now = int(height_at(state, u1, u2))
    state.anchor += 2 * (h_target - h_now)
    return state
