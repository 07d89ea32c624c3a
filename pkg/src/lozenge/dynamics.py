"""Continuous-time particle dynamics on lozenge tilings.

Four move rules are supported, each optionally tilted by ``exp(B y / 2)``
for a jump of ``y`` (positive ``y`` moves a particle to larger ``n``, which
raises the height function):

* ``DynI``: every other position ``k`` of the range at rate ``1 / (2 |y|)``;
* ``DynII``: every other position of the range at rate ``1 / |I|``;
* ``SingleFlip``: the two nearest positions at rate 1;
* ``Asymmetric``: every position below the particle at rate 1.

The engine is a Gillespie loop over a partial-sum tree of per-particle exit
rates.  Randomness comes from a Philox stream drawn in blocks, so a run is
reproducible from ``(seed, events)`` and identical for both kernel backends.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .tiling import ParticleRef, TilingState, all_ranges, height_at, validate

_KIND_CODES = {"DynI": K.DYN_I, "DynII": K.DYN_II, "SingleFlip": K.SINGLE_FLIP, "Asymmetric": K.ASYMMETRIC}


class RateOverflow(FloatingPointError):
    """The total event rate is not finite (field strength too large)."""


class AuditFailure(AssertionError):
    """Incrementally maintained rates disagree with a full recomputation."""


@dataclass(frozen=True)
class DynamicsKind:
    tag: str
    B: float = 0.0

    def __post_init__(self):
        base = self.tag[len("Tilted"):] if self.tag.startswith("Tilted") else self.tag
        if base not in _KIND_CODES:
            raise ValueError(f"unknown dynamics {self.tag!r}")
        if not np.isfinite(self.B):
            raise ValueError("field strength must be finite")
        if not self.tag.startswith("Tilted") and self.B != 0.0:
            object.__setattr__(self, "tag", "Tilted" + base)

    @property
    def base(self):
        return self.tag[len("Tilted"):] if self.tag.startswith("Tilted") else self.tag

    @property
    def code(self):
        return _KIND_CODES[self.base]

    @classmethod
    def parse(cls, text, B=0.0):
        text = text.strip()
        aliases = {"i": "DynI", "dyni": "DynI", "ii": "DynII", "dynii": "DynII", "singleflip": "SingleFlip",
                   "single": "SingleFlip", "asymmetric": "Asymmetric", "tasep": "Asymmetric"}
        return cls(aliases.get(text.lower(), text), float(B))


DYN_I = DynamicsKind("DynI")
DYN_II = DynamicsKind("DynII")
SINGLE_FLIP = DynamicsKind("SingleFlip")
ASYMMETRIC = DynamicsKind("Asymmetric")


def rate_table(state, b, kind):
    """List of ``(k, rate)`` with ``k`` the target vertical position (half-integers allowed)."""
    lo, hi = K.bounds(state.pos, state.right, state.left, state.L, state.N, b.column, b.rank)
    if not state.mobile[b.column, b.rank]:
        return []
    m = int(state.pos[b.column, b.rank])
    size = (hi - lo) // 2 + 1
    out = []
    for k in range(lo, hi + 1, 2):
        y = (k - m) // 2
        if y == 0:
            continue
        w = K._weight(kind.code, y, size, kind.B)
        if w > 0.0:
            out.append((k / 2.0, w))
    return out


def drift_sum(state, kind):
    """``sum_b sum_y c_{b,y} y`` over mobile particles, as an exact ``Fraction``.

    With ``a`` free sites above and ``c`` below a particle, DynI contributes
    ``(c - a) / 2`` and DynII ``(c(c+1) - a(a+1)) / (2 |I|)``, which is the
    same number because ``|I| = a + c + 1``.
    """
    from fractions import Fraction

    if kind.B != 0.0 or kind.base not in ("DynI", "DynII"):
        raise ValueError("drift_sum is defined for the untilted DynI and DynII")
    lo, hi = all_ranges(state)
    below = ((state.pos - lo) // 2)[state.mobile]
    above = ((hi - state.pos) // 2)[state.mobile]
    return Fraction(int(np.sum(above - below)), 2)


@dataclass
class EventLog:
    """Accepted moves in time order: time, particle column and label, displacement ``y``."""

    t: np.ndarray = field(default_factory=lambda: np.empty(0))
    column: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    rank: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    y: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    currents: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "column", "rank", "y"])
            for row in zip(self.t.tolist(), self.column.tolist(), self.rank.tolist(), self.y.tolist()):
                w.writerow([repr(row[0]), row[1], row[2], row[3]])


class Engine:
    """Incremental Gillespie simulator bound to one ``TilingState``.

    The state is mutated in place.  ``audit_every > 0`` recomputes every
    rate after that many events and raises ``AuditFailure`` on mismatch.
    """

    BLOCK = 1 << 16

    def __init__(self, state, kind, seed=0, audit_every=0, backend=None):
        self.state = state
        self.kind = kind
        self.seed = seed
        self.audit_every = int(audit_every)
        self.t = 0.0
        self.events = 0
        self._gen = np.random.Generator(np.random.Philox(seed))
        self._uniforms = np.empty(0)
        self._next = 0
        self._fns = _backend(backend)
        self.tree, self.size = K.new_tree(state.L * state.N)
        self._mobile = state.mobile.astype(np.uint8)
        self.refresh()

    def refresh(self):
        """Rebuild every rate (after external edits to ``state.pos``)."""
        s = self.state
        self._mobile = s.mobile.astype(np.uint8)
        self._fns["fill_rates"](self.kind.code, self.kind.B, s.pos, s.right, s.left, self._mobile, s.L, s.N, self.tree, self.size)
        if not np.isfinite(self.tree[1]):
            raise RateOverflow(f"total rate {self.tree[1]} at B={self.kind.B}")

    @property
    def total_rate(self):
        return float(self.tree[1])

    def _ensure_uniforms(self):
        if self._next + 3 > len(self._uniforms):
            rest = self._uniforms[self._next:]
            self._uniforms = np.concatenate([rest, self._gen.random(3 * self.BLOCK)])
            self._next = 0

    def _run(self, t_end, max_events, log):
        s = self.state
        cap = 0 if log is None else 1 << 16
        buf_t = np.empty(cap)
        buf_p = np.empty(cap, dtype=np.int64)
        buf_y = np.empty(cap, dtype=np.int64)
        chunks = []
        remaining = max_events
        while True:
            self._ensure_uniforms()
            t, ev, nxt, n_log, status = self._fns["advance"](
                self.kind.code, self.kind.B, s.pos, s.right, s.left, self._mobile, s.L, s.N, self.tree, self.size,
                self._uniforms, self._next, self.t, t_end, remaining, buf_t, buf_p, buf_y, 0,
                self.audit_every, 1e-9,
            )
            self.t = t
            self.events += ev
            remaining -= ev
            self._next = nxt
            if n_log:
                chunks.append((buf_t[:n_log].copy(), buf_p[:n_log].copy(), buf_y[:n_log].copy()))
            if status == K.STOP_OVERFLOW:
                raise RateOverflow(f"total rate {self.tree[1]} at B={self.kind.B}")
            if status == K.STOP_AUDIT:
                raise AuditFailure(f"rate audit failed after {self.events} events")
            if status in (K.STOP_TIME, K.STOP_EVENTS):
                break
        if log is not None and chunks:
            tt, pp, yy = (np.concatenate(x) for x in zip(*chunks))
            log.t = np.concatenate([log.t, tt])
            log.column = np.concatenate([log.column, pp // s.N])
            log.rank = np.concatenate([log.rank, pp % s.N])
            log.y = np.concatenate([log.y, yy])

    def run_until(self, t_end, log=None):
        if t_end < self.t:
            raise ValueError("cannot run backwards in time")
        self._run(float(t_end), np.iinfo(np.int64).max, log)
        return self

    def run_events(self, n, log=None):
        self._run(np.inf, int(n), log)
        return self

    def run_per_particle(self, moves, log=None):
        """Run ``moves`` events per particle on average."""
        return self.run_events(int(round(moves * self.state.L * self.state.N)), log)

    def audit(self):
        s = self.state
        return float(K.audit_rates(self.kind.code, self.kind.B, s.pos, s.right, s.left, self._mobile, s.L, s.N, self.tree, self.size))


def _backend(name):
    from ._accel import python_version_of

    names = ("fill_rates", "advance")
    if name == "python":
        return {n: python_version_of(getattr(K, n)) for n in names}
    return {n: getattr(K, n) for n in names}


def run(state, kind, t_end, rng=0, audit_every=0, record=True):
    """Evolve a copy of ``state`` to time ``t_end``; returns ``(final_state, EventLog)``."""
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    eng = Engine(state.copy(), kind, seed=rng, audit_every=audit_every)
    log = EventLog() if record else None
    eng.run_until(t_end, log)
    rep = validate(eng.state)
    if not rep:
        raise AssertionError(f"engine produced an invalid state: {rep.message}")
    return eng.state, log if log is not None else EventLog()


def asymmetric_current(state, t_end, tracked, rng=0):
    """Integrated current ``J(u, t_end) = h_t(u) - h_0(u)`` at each tracked vertex."""
    tracked = np.asarray(tracked, dtype=np.int64).reshape(-1, 2)
    h0 = height_at(state, tracked[:, 0], tracked[:, 1])
    eng = Engine(state.copy(), ASYMMETRIC, seed=rng)
    eng.run_until(t_end)
    return height_at(eng.state, tracked[:, 0], tracked[:, 1]) - h0


def coupled_heat_bath(upper, lower, updates, seed=0, backend=None):
    """Evolve two states with one shared random stream under random-scan heat-bath.

    The heat-bath step is the jump chain of ``DynII`` (resample the chosen
    particle uniformly on its range).  Order ``upper >= lower`` in height is
    preserved.  Returns the evolved copies.
    """
    from ._accel import python_version_of

    if upper.L != lower.L or upper.N != lower.N or not np.array_equal(upper.right, lower.right):
        raise ValueError("coupled states must share the domain and interlacing offsets")
    a, b = upper.copy(), lower.copy()
    gen = np.random.Generator(np.random.Philox(seed))
    picks = gen.integers(0, a.L * a.N, size=updates)
    us = gen.random(updates)
    fn = python_version_of(K.heat_bath_pair) if backend == "python" else K.heat_bath_pair
    fn(a.pos, b.pos, a.right, a.left, a.mobile.astype(np.uint8), a.L, a.N, picks, us)
    return a, b


def height_ordered(upper, lower):
    """True when ``h_upper >= h_lower`` at every vertex (same labels and anchor)."""
    return upper.anchor == lower.anchor and bool(np.all(upper.pos >= lower.pos))


def replica_seeds(seed, n):
    """Independent child seeds for ``n`` replicas (Philox keys)."""
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def particle_at(state, c, j):
    return ParticleRef(int(c) % state.L, int(j) % state.N)
